#include "ftobs/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ftobs::kernel {

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double horner(const std::vector<double>& c, double u) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * u + *it;
  return acc;
}

void check_times(double t, double tau) {
  if (!(tau >= 0.0) || !(t >= tau) || !std::isfinite(t)) {
    std::ostringstream os;
    os << "kernel needs 0 <= tau <= t, got t = " << t << ", tau = " << tau;
    throw Error(ErrorCode::DomainError, os.str());
  }
}

}  // namespace

KernelParams::KernelParams(double omega_h, double omega_bar, int delta)
    : omega_h_(omega_h), omega_bar_(omega_bar), delta_(delta) {
  if (!(omega_h > 0.0) || !(omega_bar > 0.0) || delta < 1 || !std::isfinite(omega_h) ||
      !std::isfinite(omega_bar)) {
    std::ostringstream os;
    os << "kernel parameters need omega_h > 0, omega_bar > 0, delta >= 1; got ("
       << omega_h << ", " << omega_bar << ", " << delta << ")";
    throw Error(ErrorCode::DomainError, os.str());
  }
}

KernelDerivatives::KernelDerivatives(const KernelParams& params, int max_order)
    : params_(params) {
  const int delta = params.delta();
  const double wb = params.omega_bar();
  const double wh = params.omega_h();

  // q-th tau-derivative of u^delta as a polynomial in u.
  std::vector<std::vector<double>> g(static_cast<std::size_t>(max_order) + 1,
                                     std::vector<double>(static_cast<std::size_t>(delta) + 1, 0.0));
  g[0][static_cast<std::size_t>(delta)] = 1.0;
  for (int q = 1; q <= max_order; ++q) {
    const auto& prev = g[static_cast<std::size_t>(q) - 1];
    auto& cur = g[static_cast<std::size_t>(q)];
    // d/dtau P(u) = omega_bar (1 - u) P'(u)
    for (int k = 1; k <= delta; ++k) {
      const double dk = k * prev[static_cast<std::size_t>(k)];
      cur[static_cast<std::size_t>(k) - 1] += wb * dk;
      cur[static_cast<std::size_t>(k)] -= wb * dk;
    }
  }

  diag_.assign(static_cast<std::size_t>(max_order) + 1,
               std::vector<double>(static_cast<std::size_t>(delta) + 1, 0.0));
  for (int p = 0; p <= max_order; ++p) {
    auto& r = diag_[static_cast<std::size_t>(p)];
    for (int q = 0; q <= p; ++q) {
      const double w = binomial(p, q) * std::pow(wh, p - q);
      const auto& gq = g[static_cast<std::size_t>(q)];
      for (int k = 0; k <= delta; ++k) r[static_cast<std::size_t>(k)] += w * gq[static_cast<std::size_t>(k)];
    }
  }
}

double KernelDerivatives::u_of(double tau) const {
  return -std::expm1(-params_.omega_bar() * tau);
}

double KernelDerivatives::diagonal_at_u(int order, double u) const {
  return horner(diag_.at(static_cast<std::size_t>(order)), u);
}

double KernelDerivatives::diagonal(int order, double t) const {
  return diagonal_at_u(order, u_of(t));
}

double KernelDerivatives::derivative(int order, double t, double tau) const {
  check_times(t, tau);
  return std::exp(-params_.omega_h() * (t - tau)) * diagonal(order, tau);
}

double KernelDerivatives::diagonal_magnitude(int order, double t) const {
  const double u = u_of(t);
  double acc = 0.0;
  double power = 1.0;
  for (double c : diag_.at(static_cast<std::size_t>(order))) {
    acc += std::abs(c) * power;
    power *= u;
  }
  return acc;
}

double eval_kernel(const KernelParams& p, double t, double tau) {
  check_times(t, tau);
  const double u = -std::expm1(-p.omega_bar() * tau);
  return std::exp(-p.omega_h() * (t - tau)) * std::pow(u, p.delta());
}

double eval_derivative(const KernelParams& p, int order, double t, double tau) {
  if (order < 0) throw Error(ErrorCode::DomainError, "negative derivative order");
  return KernelDerivatives(p, order).derivative(order, t, tau);
}

double eval_diag_derivative(const KernelParams& p, int order, double t) {
  if (order < 0) throw Error(ErrorCode::DomainError, "negative derivative order");
  if (order > p.delta()) {
    std::ostringstream os;
    os << "derivative order " << order << " exceeds delta = " << p.delta();
    throw Error(ErrorCode::OutOfValidatedRange, os.str());
  }
  check_times(t, t);
  return KernelDerivatives(p, order).diagonal(order, t);
}

double origin_value_at_delta(const KernelParams& p, double t) {
  return eval_derivative(p, p.delta(), t, 0.0);
}

bool KernelConditionReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const KernelConditionCheck& c) {
    return c.vanishes_at_origin && c.nonzero_on_diagonal;
  });
}

KernelConditionReport validate_kernel_conditions(const KernelParams& p, std::span<const double> t_grid) {
  const KernelDerivatives kd(p, p.delta());
  KernelConditionReport report;
  for (int j = 0; j < p.delta(); ++j) {
    KernelConditionCheck check;
    check.order = j;
    check.smallest_diagonal_magnitude = std::numeric_limits<double>::infinity();
    for (double t : t_grid) {
      check.worst_origin_residual =
          std::max(check.worst_origin_residual, std::abs(kd.derivative(j, t, 0.0)));
      check.smallest_diagonal_magnitude =
          std::min(check.smallest_diagonal_magnitude, std::abs(kd.diagonal(j, t)));
    }
    check.vanishes_at_origin = check.worst_origin_residual == 0.0;
    check.nonzero_on_diagonal = check.smallest_diagonal_magnitude > 0.0;
    // Sign changes between grid points also count as a diagonal zero.
    for (std::size_t g = 1; g < t_grid.size(); ++g) {
      if (kd.diagonal(j, t_grid[g - 1]) * kd.diagonal(j, t_grid[g]) < 0.0) {
        check.nonzero_on_diagonal = false;
        check.smallest_diagonal_magnitude = 0.0;
      }
    }
    report.checks.push_back(check);
  }
  return report;
}

std::vector<KernelParams> make_bank(int order, const BankSpec& spec) {
  if (order < 1) throw Error(ErrorCode::DomainError, "kernel bank order must be >= 1");
  if (spec.delta_extra < 0) throw Error(ErrorCode::DomainError, "delta_extra must be >= 0");
  std::vector<KernelParams> bank;
  bank.reserve(static_cast<std::size_t>(order));
  const int delta = order + spec.delta_extra;
  for (int h = 0; h < order; ++h) {
    double omega = spec.omega0 + h * spec.omega_step;
    if (!spec.omegas.empty()) {
      if (spec.omegas.size() != static_cast<std::size_t>(order)) {
        std::ostringstream os;
        os << "kernel bank needs " << order << " rates, got " << spec.omegas.size();
        throw Error(ErrorCode::DomainError, os.str());
      }
      omega = spec.omegas[static_cast<std::size_t>(h)];
    }
    bank.emplace_back(omega, spec.omega_bar, delta);
  }
  return bank;
}

void check_bank(std::span<const KernelParams> bank) {
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (bank[i].omega_bar() != bank[0].omega_bar()) {
      throw Error(ErrorCode::DomainError, "kernel bank must share one omega_bar");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (bank[i].omega_h() == bank[j].omega_h()) {
        throw Error(ErrorCode::DomainError, "kernel bank rates omega_h must be distinct");
      }
    }
  }
}

}  // namespace ftobs::kernel
