#include "ftobs/observer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ftobs::observer {

namespace {

constexpr double sign_pow(Eigen::Index k) { return (k % 2 == 0) ? 1.0 : -1.0; }

Matrix inverse_or_throw(const Matrix& gamma) {
  const Eigen::FullPivLU<Matrix> lu(gamma);
  if (lu.rank() < gamma.rows()) {
    throw Error(ErrorCode::SingularRegressor,
                "Gamma is singular (repeated kernel rates or t = 0)");
  }
  return lu.inverse();
}

}  // namespace

FilterBank::FilterBank(int node, std::vector<kernel::KernelParams> params, Vector coefficients)
    : node_(node), params_(std::move(params)), a_(std::move(coefficients)) {
  const auto n = static_cast<Eigen::Index>(params_.size());
  if (n == 0 || a_.size() != n) {
    std::ostringstream os;
    os << "filter bank for node " << node << " needs one kernel per coefficient (got "
       << n << " kernels, " << a_.size() << " coefficients)";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  derivs_.reserve(params_.size());
  for (const auto& p : params_) {
    if (p.delta() < n) {
      throw Error(ErrorCode::DomainError, "kernel order delta must be >= the bank order");
    }
    derivs_.emplace_back(p, static_cast<int>(n));
  }
  xi_ = Matrix::Zero(n, n + 1);
  sup_ = Matrix::Zero(n, n + 1);
  gain_begin_ = Matrix::Zero(n, n + 1);
  gain_mid_ = gain_begin_;
  gain_end_ = gain_begin_;
}

void FilterBank::gains_at(double t, Matrix& out) const {
  for (Eigen::Index h = 0; h < xi_.rows(); ++h) {
    const auto& kd = derivs_[static_cast<std::size_t>(h)];
    const double u = kd.u_of(t);
    for (Eigen::Index p = 0; p < xi_.cols(); ++p) {
      out(h, p) = kd.diagonal_at_u(static_cast<int>(p), u);
    }
  }
}

void FilterBank::step(const OutputSample& y, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::DomainError, "filter step needs dt > 0");
  }
  if (!std::isfinite(y.begin) || !std::isfinite(y.mid) || !std::isfinite(y.end)) {
    std::ostringstream os;
    os << "node " << node_ << " received a non-finite output sample at t = " << t_;
    throw Error(ErrorCode::InvalidSample, os.str());
  }
  if (gain_begin_time_ != t_) {
    gains_at(t_, gain_begin_);
    gain_begin_time_ = t_;
    sup_ = sup_.cwiseMax(gain_begin_.cwiseAbs());
  }
  gains_at(t_ + 0.5 * dt, gain_mid_);
  gains_at(t_ + dt, gain_end_);

  const double half = 0.5 * dt;
  for (Eigen::Index h = 0; h < xi_.rows(); ++h) {
    const double w = params_[static_cast<std::size_t>(h)].omega_h();
    for (Eigen::Index p = 0; p < xi_.cols(); ++p) {
      const double x = xi_(h, p);
      const double f0 = gain_begin_(h, p) * y.begin;
      const double fm = gain_mid_(h, p) * y.mid;
      const double f1 = gain_end_(h, p) * y.end;
      const double k1 = -w * x + f0;
      const double k2 = -w * (x + half * k1) + fm;
      const double k3 = -w * (x + half * k2) + fm;
      const double k4 = -w * (x + dt * k3) + f1;
      xi_(h, p) = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  sup_ = sup_.cwiseMax(gain_mid_.cwiseAbs()).cwiseMax(gain_end_.cwiseAbs());

  if (dt != step_dt_) {
    origin_ = t_;
    steps_ = 0;
    step_dt_ = dt;
  }
  ++steps_;
  t_ = origin_ + static_cast<double>(steps_) * step_dt_;
  std::swap(gain_begin_, gain_end_);
  gain_begin_time_ = t_;
}

Matrix FilterBank::gamma_at(double t) const {
  const Eigen::Index n = order();
  Matrix gamma(n, n);
  for (Eigen::Index h = 0; h < n; ++h) {
    const auto& kd = derivs_[static_cast<std::size_t>(h)];
    const double u = kd.u_of(t);
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index order_r = n - 1 - r;
      gamma(h, r) = sign_pow(order_r) * kd.diagonal_at_u(static_cast<int>(order_r), u);
    }
  }
  return gamma;
}

FilterBank filter_step(FilterBank bank, const OutputSample& y, double dt) {
  bank.step(y, dt);
  return bank;
}

Regressor assemble(const FilterBank& bank) {
  const Eigen::Index n = bank.order();
  const Matrix& xi = bank.xi();
  const Vector& a = bank.coefficients();
  Regressor reg;
  reg.t = bank.time();
  reg.lambda = sign_pow(n - 1) * xi.col(n);
  for (Eigen::Index p = 0; p < n; ++p) reg.lambda += (a(p) * sign_pow(p)) * xi.col(p);
  reg.gamma = bank.gamma_at(reg.t);
  return reg;
}

std::optional<Vector> estimate_z(const Regressor& reg, double t_delta, double cond_max) {
  if (reg.t < t_delta - 1e-9 * std::max(1.0, std::abs(t_delta))) return std::nullopt;
  const Eigen::FullPivLU<Matrix> lu(reg.gamma);
  if (lu.rank() < reg.gamma.rows()) {
    std::ostringstream os;
    os << "Gamma is rank deficient at t = " << reg.t << " (repeated kernel rates?)";
    throw Error(ErrorCode::SingularRegressor, os.str());
  }
  const double rcond = lu.rcond();
  if (!(rcond > 0.0) || 1.0 / rcond > cond_max) return std::nullopt;
  return Vector(lu.solve(reg.lambda));
}

Matrix diagonal_sup_on_grid(std::span<const kernel::KernelParams> params, double t,
                            double spacing) {
  const auto n = static_cast<Eigen::Index>(params.size());
  Matrix sup = Matrix::Zero(n, n + 1);
  for (Eigen::Index h = 0; h < n; ++h) {
    const kernel::KernelDerivatives kd(params[static_cast<std::size_t>(h)], static_cast<int>(n));
    auto visit = [&](double tau) {
      const double u = kd.u_of(tau);
      for (Eigen::Index p = 0; p <= n; ++p) {
        sup(h, p) = std::max(sup(h, p), std::abs(kd.diagonal_at_u(static_cast<int>(p), u)));
      }
    };
    for (double tau = 0.0; tau < t; tau += spacing) visit(tau);
    visit(t);
  }
  return sup;
}

Vector local_error_bound(std::span<const kernel::KernelParams> params, const Vector& coefficients,
                         const NoiseLevels& noise, double t_alpha_norm, const Matrix& gamma,
                         const Matrix& diagonal_sup) {
  const auto n = static_cast<Eigen::Index>(params.size());
  if (coefficients.size() != n || gamma.rows() != n || gamma.cols() != n ||
      diagonal_sup.rows() != n || diagonal_sup.cols() != n + 1) {
    throw Error(ErrorCode::DimensionMismatch, "local error bound: inconsistent sizes");
  }
  if (noise.measurement == 0.0 && noise.disturbance == 0.0) return Vector::Zero(n);

  Vector lambda_bound(n);
  for (Eigen::Index h = 0; h < n; ++h) {
    const double inv_w = 1.0 / params[static_cast<std::size_t>(h)].omega_h();
    auto dy = [&](Eigen::Index p) { return inv_w * noise.measurement * diagonal_sup(h, p); };
    auto dz = [&](Eigen::Index p) {
      return t_alpha_norm * inv_w * noise.disturbance * diagonal_sup(h, p);
    };
    double acc = dy(n);
    for (Eigen::Index p = 0; p < n; ++p) acc += std::abs(coefficients(p)) * dy(p) + dz(p);
    lambda_bound(h) = acc;
  }
  return inverse_or_throw(gamma).cwiseAbs() * lambda_bound;
}

Vector local_error_bound(std::span<const kernel::KernelParams> params, const Vector& coefficients,
                         const NoiseLevels& noise, double t_alpha_norm, const Matrix& gamma,
                         double t) {
  return local_error_bound(params, coefficients, noise, t_alpha_norm, gamma,
                           diagonal_sup_on_grid(params, t));
}

// NodeObserver ----------------------------------------------------------------

NodeObserver::NodeObserver(int node, const Matrix& a, const Matrix& c_i,
                           const kernel::BankSpec& kernels, numkit::RankTolerance tol)
    : node_(node), outputs_(c_i.rows()) {
  auto add_channel = [&](const decomp::ObservabilityDecomposition& dec,
                         const Eigen::RowVectorXd& weights, const Eigen::RowVectorXd& c_row) {
    const auto order = static_cast<int>(dec.observable_dim);
    auto canonical = decomp::canonical_form(dec, c_row);
    auto bank_params = kernel::make_bank(order, kernels);
    FilterBank bank(node, std::move(bank_params), canonical.coefficients);
    channels_.push_back(Channel{dec, std::move(canonical), weights, std::move(bank)});
  };

  const auto dec = decomp::decompose(a, c_i, tol);
  if (dec.observable_dim == 0) {
    local_map_ = Matrix(0, a.cols());
    return;
  }
  const auto scalar = decomp::scalarize_output(dec, tol);
  if (const auto* s = std::get_if<decomp::ScalarOutput>(&scalar)) {
    add_channel(dec, s->weights, s->c_row);
  } else {
    split_ = true;
    for (Eigen::Index r = 0; r < c_i.rows(); ++r) {
      const auto row_dec = decomp::decompose(a, c_i.row(r), tol);
      if (row_dec.observable_dim == 0) continue;
      Eigen::RowVectorXd weights = Eigen::RowVectorXd::Zero(c_i.rows());
      weights(r) = 1.0;
      add_channel(row_dec, weights, row_dec.c_o.row(0));
    }
  }

  std::vector<Matrix> maps;
  for (const auto& ch : channels_) maps.push_back(ch.canonical.t_alpha);
  const Matrix stacked = numkit::vstack(maps, a.cols());
  if (static_cast<std::size_t>(stacked.rows()) == dec.observable_dim) {
    for (Eigen::Index r = 0; r < stacked.rows(); ++r) selected_rows_.push_back(static_cast<std::size_t>(r));
  } else {
    selected_rows_ = numkit::greedy_row_select(stacked, Matrix(0, a.cols()), dec.observable_dim);
    std::sort(selected_rows_.begin(), selected_rows_.end());
  }
  local_map_ = numkit::take_rows(stacked, selected_rows_);
  if (numkit::numerical_rank(numkit::normalize_rows(local_map_), tol) != dec.observable_dim) {
    throw Error(ErrorCode::InsufficientRank, "node local map lost rank after channel split");
  }
}

double NodeObserver::time() const {
  return channels_.empty() ? 0.0 : channels_.front().bank.time();
}

void NodeObserver::step(std::span<const OutputSample> y, double dt) {
  if (static_cast<Eigen::Index>(y.size()) != outputs_) {
    throw Error(ErrorCode::DimensionMismatch, "node observer: wrong number of output rows");
  }
  for (auto& ch : channels_) {
    OutputSample s;
    for (Eigen::Index r = 0; r < outputs_; ++r) {
      const double w = ch.output_weights(r);
      if (w == 0.0) continue;
      s.begin += w * y[static_cast<std::size_t>(r)].begin;
      s.mid += w * y[static_cast<std::size_t>(r)].mid;
      s.end += w * y[static_cast<std::size_t>(r)].end;
    }
    ch.bank.step(s, dt);
  }
}

std::optional<Vector> NodeObserver::estimate(double t_delta, double cond_max) const {
  if (channels_.empty()) return Vector(0);
  std::vector<Vector> parts;
  Eigen::Index total = 0;
  for (const auto& ch : channels_) {
    auto z = estimate_z(assemble(ch.bank), t_delta, cond_max);
    if (!z) return std::nullopt;
    total += z->size();
    parts.push_back(std::move(*z));
  }
  Vector stacked(total);
  Eigen::Index at = 0;
  for (const auto& z : parts) {
    stacked.segment(at, z.size()) = z;
    at += z.size();
  }
  Vector out(static_cast<Eigen::Index>(selected_rows_.size()));
  for (std::size_t i = 0; i < selected_rows_.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = stacked(static_cast<Eigen::Index>(selected_rows_[i]));
  }
  return out;
}

Vector NodeObserver::error_bound(const NoiseLevels& noise) const {
  std::vector<Vector> parts;
  Eigen::Index total = 0;
  for (const auto& ch : channels_) {
    const NoiseLevels scaled{noise.measurement * ch.output_weights.cwiseAbs().sum(),
                             noise.disturbance};
    const double t_norm = ch.canonical.t_alpha.cwiseAbs().rowwise().sum().maxCoeff();
    const Regressor reg = assemble(ch.bank);
    parts.push_back(local_error_bound(ch.bank.params(), ch.bank.coefficients(), scaled, t_norm,
                                      reg.gamma, ch.bank.diagonal_sup()));
    total += parts.back().size();
  }
  Vector stacked(total);
  Eigen::Index at = 0;
  for (const auto& b : parts) {
    stacked.segment(at, b.size()) = b;
    at += b.size();
  }
  Vector out(static_cast<Eigen::Index>(selected_rows_.size()));
  for (std::size_t i = 0; i < selected_rows_.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = stacked(static_cast<Eigen::Index>(selected_rows_[i]));
  }
  return out;
}

}  // namespace ftobs::observer
