#include "ftobs/fusion.hpp"

#include <cmath>

namespace ftobs::fusion {

namespace {

std::size_t stacked_rows(const topology::NodePlan& plan) {
  return static_cast<std::size_t>(plan.fusion_matrix.rows());
}

Vector stack_inputs(const topology::NodePlan& plan, const Vector& own,
                    std::span<const Vector> neighbours) {
  if (neighbours.size() != plan.cn_set.size()) {
    throw Error(ErrorCode::DimensionMismatch, "fusion: one input per CN-set member is required");
  }
  Vector s(static_cast<Eigen::Index>(stacked_rows(plan)));
  Eigen::Index at = 0;
  auto put = [&](const Vector& v, std::size_t expected) {
    if (static_cast<std::size_t>(v.size()) != expected || at + v.size() > s.size()) {
      throw Error(ErrorCode::DimensionMismatch, "fusion: input slice has the wrong length");
    }
    s.segment(at, v.size()) = v;
    at += v.size();
  };
  put(own, stacked_rows(plan) - plan.retained_row_count());
  for (std::size_t k = 0; k < neighbours.size(); ++k) put(neighbours[k], plan.rows[k].size());
  return s;
}

}  // namespace

std::optional<Vector> fuse_delay_free(const topology::NodePlan& plan,
                                      const std::optional<Vector>& own,
                                      std::span<const std::optional<Vector>> neighbours) {
  if (!own) return std::nullopt;
  std::vector<Vector> parts;
  parts.reserve(neighbours.size());
  for (const auto& z : neighbours) {
    if (!z) return std::nullopt;
    parts.push_back(*z);
  }
  return Vector(plan.fusion_matrix * stack_inputs(plan, *own, parts));
}

DelayWindow make_delay_window(const Matrix& a, double tau_bar, double grid_step) {
  if (!(tau_bar >= 0.0) || !(grid_step > 0.0)) {
    throw Error(ErrorCode::DomainError, "delay window needs tau_bar >= 0 and a positive step");
  }
  const Eigen::Index n = a.rows();
  DelayWindow w;
  w.tau_bar = tau_bar;
  w.propagator = numkit::matrix_exponential(a, tau_bar);
  w.peak = Matrix::Identity(n, n);
  w.integral = Vector::Zero(n);
  if (tau_bar == 0.0) return w;

  const auto steps = static_cast<long long>(std::ceil(tau_bar / grid_step - 1e-9));
  const double h = tau_bar / static_cast<double>(steps);
  // On [s_k, s_k + h], |e^{As}| <= |e^{A s_k}| e^{|A| h} entrywise.
  const Matrix slack = numkit::matrix_exponential(a.cwiseAbs(), h);
  const Matrix step = numkit::matrix_exponential(a, h);
  Matrix e = Matrix::Identity(n, n);
  Matrix area = Matrix::Zero(n, n);
  for (long long k = 0; k < steps; ++k) {
    area += h * (e.cwiseAbs() * slack);
    e = (k + 1 == steps) ? w.propagator : Matrix(e * step);
    w.peak = w.peak.cwiseMax(e.cwiseAbs());
  }
  w.integral = area * Vector::Ones(n);
  return w;
}

std::optional<Vector> fuse_delayed(const topology::NodePlan& plan, const DelayWindow& window,
                                   const std::optional<Vector>& own_delayed,
                                   std::span<const std::optional<Vector>> neighbours_delayed) {
  auto x = fuse_delay_free(plan, own_delayed, neighbours_delayed);
  if (!x) return std::nullopt;
  if (window.tau_bar == 0.0) return x;
  return Vector(window.propagator * *x);
}

Vector global_error_bound(const topology::NodePlan& plan, const DelayWindow& window,
                          const Vector& own_bound, std::span<const Vector> neighbour_bounds,
                          double disturbance_bound) {
  const Vector eps = stack_inputs(plan, own_bound, neighbour_bounds);
  Vector b = window.peak * (plan.fusion_matrix.cwiseAbs() * eps.cwiseAbs());
  if (disturbance_bound != 0.0) b += disturbance_bound * window.integral;
  return b;
}

}  // namespace ftobs::fusion
