#pragma once

#include <optional>
#include <span>

#include "ftobs/numkit.hpp"
#include "ftobs/topology.hpp"

namespace ftobs::fusion {

enum class Status { Active, NotReady };

struct FusedEstimate {
  int node = 0;
  double t = 0.0;
  Status status = Status::NotReady;
  Vector x_hat;                // empty unless Active
  std::optional<Vector> bound; // componentwise bound on |x_hat - x|
};

/// Apply the node's fusion matrix to [z_i; z*_j ...]. Any missing input
/// (NotReady) makes the whole result NotReady.
std::optional<Vector> fuse_delay_free(const topology::NodePlan& plan,
                                      const std::optional<Vector>& own,
                                      std::span<const std::optional<Vector>> neighbours);

/// Precomputed quantities for a fixed delay window tau_bar.
struct DelayWindow {
  double tau_bar = 0.0;
  Matrix propagator;   // e^{A tau_bar}
  Matrix peak;         // entrywise max over the grid on [0, tau_bar] of |e^{A s}|
  Vector integral;     // upper bound on entrywise int_0^tau_bar |e^{A s}| ds, times ones
};

/// `grid_step` is the plant step; tau_bar should be a whole number of steps.
DelayWindow make_delay_window(const Matrix& a, double tau_bar, double grid_step);

/// e^{A tau_bar} * fuse_delay_free(delayed inputs).
std::optional<Vector> fuse_delayed(const topology::NodePlan& plan, const DelayWindow& window,
                                   const std::optional<Vector>& own_delayed,
                                   std::span<const std::optional<Vector>> neighbours_delayed);

/// Componentwise bound on |x_hat_i - x|:
///   peak * |F^{-1}| * [eps_i; eps_j ...] + d_x_bar * integral.
Vector global_error_bound(const topology::NodePlan& plan, const DelayWindow& window,
                          const Vector& own_bound, std::span<const Vector> neighbour_bounds,
                          double disturbance_bound);

}  // namespace ftobs::fusion
