#pragma once

#include <span>
#include <vector>

#include "ftobs/error.hpp"

namespace ftobs::kernel {

/// K_h(t, tau) = exp(-omega_h (t - tau)) * (1 - exp(-omega_bar tau))^delta
class KernelParams {
 public:
  KernelParams(double omega_h, double omega_bar, int delta);

  double omega_h() const noexcept { return omega_h_; }
  double omega_bar() const noexcept { return omega_bar_; }
  int delta() const noexcept { return delta_; }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;

 private:
  double omega_h_;
  double omega_bar_;
  int delta_;
};

/// Precomputed closed form of the tau-derivatives of one kernel.
///
/// With u = 1 - exp(-omega_bar tau) we have du/dtau = omega_bar (1 - u), so
/// every derivative of (1 - exp(-omega_bar tau))^delta is a polynomial in u
/// of degree <= delta whose lowest nonzero power is u^{delta - q}. Combining
/// with the exp(omega_h tau) factor by Leibniz gives
///   K^(p)(t, tau) = exp(-omega_h (t - tau)) * R_p(u(tau)).
/// Evaluating R_p near tau = 0 involves no cancellation, unlike the expanded
/// sum of exponentials.
class KernelDerivatives {
 public:
  KernelDerivatives(const KernelParams& params, int max_order);

  const KernelParams& params() const noexcept { return params_; }
  int max_order() const noexcept { return static_cast<int>(diag_.size()) - 1; }

  /// K^(order)(t, tau).
  double derivative(int order, double t, double tau) const;
  /// K^(order)(t, t).
  double diagonal(int order, double t) const;
  /// Same as diagonal(), but with u already computed for time t.
  double diagonal_at_u(int order, double u) const;
  /// sum of |terms| of R_order(u); the natural scale for relative errors.
  double diagonal_magnitude(int order, double t) const;

  double u_of(double tau) const;

 private:
  KernelParams params_;
  std::vector<std::vector<double>> diag_;  // R_p coefficients by power of u
};

double eval_kernel(const KernelParams& p, double t, double tau);

/// K^(order)(t, tau) for any order >= 0. Orders above delta are mathematically
/// fine but outside the range where the kernel's zero conditions hold.
double eval_derivative(const KernelParams& p, int order, double t, double tau);

/// K^(order)(t, t). Throws OutOfValidatedRange when order > delta.
double eval_diag_derivative(const KernelParams& p, int order, double t);

struct KernelConditionCheck {
  int order = 0;
  bool vanishes_at_origin = false;   // K^(j)(t, 0) == 0 on the grid
  bool nonzero_on_diagonal = false;  // K^(j)(t, t) != 0 on the grid
  double worst_origin_residual = 0.0;
  double smallest_diagonal_magnitude = 0.0;
};

struct KernelConditionReport {
  std::vector<KernelConditionCheck> checks;  // one per j in 0..delta-1
  bool passed() const;
};

/// Checks the zero-at-origin and feedthrough conditions for j < delta.
KernelConditionReport validate_kernel_conditions(const KernelParams& p, std::span<const double> t_grid);

/// K^(j)(t, 0) for j = delta, which is the first order allowed to be nonzero.
double origin_value_at_delta(const KernelParams& p, double t);

struct BankSpec {
  double omega0 = 1.0;
  double omega_step = 1.0;
  double omega_bar = 1.0;
  int delta_extra = 0;  // delta = order + delta_extra
  std::vector<double> omegas;  // explicit rates override omega0/omega_step
};

/// n kernels with pairwise-distinct omega_h and one shared omega_bar.
std::vector<KernelParams> make_bank(int order, const BankSpec& spec = {});

/// Throws DomainError unless rates are distinct and omega_bar is shared.
void check_bank(std::span<const KernelParams> bank);

}  // namespace ftobs::kernel
