#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ftobs/decomp.hpp"
#include "ftobs/kernel.hpp"
#include "ftobs/numkit.hpp"

namespace ftobs::observer {

/// Output values at the three Runge-Kutta stage times of one step:
/// t, t + dt/2 and t + dt.
struct OutputSample {
  double begin = 0.0;
  double mid = 0.0;
  double end = 0.0;

  static OutputSample constant(double y) { return {y, y, y}; }
};

/// Lambda = Gamma * z at time t.
struct Regressor {
  Vector lambda;
  Matrix gamma;
  double t = 0.0;
};

/// Volterra images xi(h, p) = [V_{K_h^(p)} y](t) for h < n and p <= n, each
/// realised by the scalar LTV filter xi' = -omega_h xi + K_h^(p)(t, t) y.
class FilterBank {
 public:
  FilterBank(int node, std::vector<kernel::KernelParams> params, Vector coefficients);

  int node() const noexcept { return node_; }
  Eigen::Index order() const noexcept { return xi_.rows(); }
  double time() const noexcept { return t_; }
  const Matrix& xi() const noexcept { return xi_; }
  const Vector& coefficients() const noexcept { return a_; }
  const std::vector<kernel::KernelParams>& params() const noexcept { return params_; }
  const std::vector<kernel::KernelDerivatives>& derivatives() const noexcept { return derivs_; }

  /// sup of |K_h^(p)(tau, tau)| over every stage time visited so far.
  const Matrix& diagonal_sup() const noexcept { return sup_; }

  /// One RK4 step with the time-varying gains evaluated at the stage times.
  void step(const OutputSample& y, double dt);

  /// Gamma(t) for this bank at an arbitrary time.
  Matrix gamma_at(double t) const;

 private:
  void gains_at(double t, Matrix& out) const;

  int node_;
  std::vector<kernel::KernelParams> params_;
  std::vector<kernel::KernelDerivatives> derivs_;
  Vector a_;
  Matrix xi_;
  Matrix sup_;
  Matrix gain_begin_;
  Matrix gain_mid_;
  Matrix gain_end_;
  double gain_begin_time_ = -1.0;
  double t_ = 0.0;
  double origin_ = 0.0;
  double step_dt_ = 0.0;
  long long steps_ = 0;
};

FilterBank filter_step(FilterBank bank, const OutputSample& y, double dt);

Regressor assemble(const FilterBank& bank);

inline constexpr double kDefaultActivationTime = 1.0;
inline constexpr double kDefaultConditionLimit = 1e8;

/// Gamma^{-1} Lambda once t >= t_delta; nullopt while not yet activated or
/// while Gamma is too ill-conditioned. Throws SingularRegressor if Gamma is
/// exactly rank deficient after activation.
std::optional<Vector> estimate_z(const Regressor& reg, double t_delta,
                                 double cond_max = kDefaultConditionLimit);

struct NoiseLevels {
  double measurement = 0.0;   // |d_y| <= measurement on the scalar fed to the bank
  double disturbance = 0.0;   // every component of d_x bounded by this
};

/// Componentwise bound on z - z_hat given sup_h,p |K_h^(p)(tau,tau)| over (0,t].
Vector local_error_bound(std::span<const kernel::KernelParams> params, const Vector& coefficients,
                         const NoiseLevels& noise, double t_alpha_norm, const Matrix& gamma,
                         const Matrix& diagonal_sup);

/// Same, with the diagonal sup taken on a 1e-3 grid over [0, t] plus t.
Vector local_error_bound(std::span<const kernel::KernelParams> params, const Vector& coefficients,
                         const NoiseLevels& noise, double t_alpha_norm, const Matrix& gamma,
                         double t);

Matrix diagonal_sup_on_grid(std::span<const kernel::KernelParams> params, double t,
                            double spacing = 1e-3);

/// One scalar-output local observer: decomposition, canonical form, filters.
struct Channel {
  decomp::ObservabilityDecomposition decomposition;
  decomp::CanonicalForm canonical;
  Eigen::RowVectorXd output_weights;  // scalar fed to the bank = weights * y_i
  FilterBank bank;
};

/// Everything node i runs locally. Usually one channel; nodes whose outputs
/// cannot be scalarised run one channel per output row.
class NodeObserver {
 public:
  NodeObserver(int node, const Matrix& a, const Matrix& c_i, const kernel::BankSpec& kernels = {},
               numkit::RankTolerance tol = {});

  int node() const noexcept { return node_; }
  std::size_t observable_dim() const noexcept { return static_cast<std::size_t>(local_map_.rows()); }
  std::size_t output_count() const noexcept { return static_cast<std::size_t>(outputs_); }
  bool split_per_row() const noexcept { return split_; }

  /// T_i_alpha: z_i = local_map * x.
  const Matrix& local_map() const noexcept { return local_map_; }
  const std::vector<Channel>& channels() const noexcept { return channels_; }
  double time() const;

  /// Advance every channel by dt. `y` holds one OutputSample per output row.
  void step(std::span<const OutputSample> y, double dt);

  std::optional<Vector> estimate(double t_delta, double cond_max = kDefaultConditionLimit) const;

  /// Bound on |z_i - z_hat_i| at the current time (t >= t_delta).
  Vector error_bound(const NoiseLevels& noise) const;

 private:
  int node_;
  Eigen::Index outputs_;
  bool split_ = false;
  std::vector<Channel> channels_;
  std::vector<std::size_t> selected_rows_;  // rows of the stacked channel maps
  Matrix local_map_;
};

}  // namespace ftobs::observer
