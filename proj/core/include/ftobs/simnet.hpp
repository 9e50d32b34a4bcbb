#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ftobs/fusion.hpp"
#include "ftobs/kernel.hpp"
#include "ftobs/numkit.hpp"
#include "ftobs/observer.hpp"
#include "ftobs/topology.hpp"

namespace ftobs::simnet {

enum class DelayModel { None, Constant, Uniform };

/// Delay of one directed edge; overrides the scenario-wide model.
struct EdgeDelay {
  int from = 0;  // 0-based
  int to = 0;
  DelayModel model = DelayModel::Constant;
  double lo = 0.0;  // constant value when model == Constant
  double hi = 0.0;
};

struct DelaySpec {
  DelayModel model = DelayModel::None;
  double lo = 0.0;
  double hi = 0.0;
  double tau_bar = 0.0;
  std::vector<EdgeDelay> edges;

  /// Delay model of edge from -> to after applying overrides.
  EdgeDelay edge(int from, int to) const;
};

enum class Waveform { None, Sinusoid };

/// Process disturbance d_x(t) = amplitude * sin(angular_frequency * t) on the
/// listed components (all of them when `components` is empty).
struct DisturbanceSpec {
  Waveform waveform = Waveform::None;
  double amplitude = 0.0;
  double angular_frequency = 0.0;
  std::vector<int> components;

  /// Per-component bound on |d_x|.
  double bound() const;
  Vector at(double t, Eigen::Index n) const;
};

struct NoiseSpec {
  double measurement = 0.0;  // |d_y| <= measurement on every output row
  DisturbanceSpec disturbance;
};

struct RunSpec {
  double dt = 1e-4;
  double t_end = 10.0;
  double t_delta = observer::kDefaultActivationTime;
  Vector x0;
  std::uint64_t seed = 42;
  double output_interval = 1e-3;
  double cond_max = observer::kDefaultConditionLimit;
  bool bounds = false;
  double rank_tol = numkit::RankTolerance::kDefault;
};

struct Scenario {
  std::string name;
  Matrix a;
  Matrix c;
  std::vector<int> partition;       // output rows owned by each node
  topology::IntMatrix adjacency;
  kernel::BankSpec kernels;
  std::vector<kernel::BankSpec> node_kernels;  // optional per-node overrides
  DelaySpec delays;
  NoiseSpec noise;
  RunSpec run;

  int node_count() const { return static_cast<int>(partition.size()); }
  Matrix output_block(int node) const;
  const kernel::BankSpec& kernels_of(int node) const;
};

/// Static checks on shapes and ranges. Throws InvalidScenario naming the field.
void validate_scenario(const Scenario& s);

/// Number of plant steps in tau_bar, rounded up.
long long delay_steps(double tau_bar, double dt);

/// (A, C) jointly observable.
bool jointly_observable(const Scenario& s);

/// Delay bound on a plan: worst-case accumulated delay along each relay
/// path is at most tau_bar. Returns a description of each violation.
std::vector<std::string> delay_violations(const Scenario& s, const topology::CommunicationPlan& plan);

std::vector<Matrix> local_maps(const Scenario& s);
topology::CommunicationPlan build_plan(const Scenario& s);

Vector step_plant(const Matrix& a, const Vector& x, double t, double dt,
                  const DisturbanceSpec& disturbance);

/// Noise streams are seeded per (seed, node, purpose) so runs are reproducible
/// and independent of iteration order.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, int node, int stream);
  /// Uniform on [-1, 1], identical on every platform.
  double symmetric();
  /// Uniform on [lo, hi].
  double uniform(double lo, double hi);

 private:
  std::mt19937_64 rng_;
};

Vector sense(const Matrix& c_i, const Vector& x, double amplitude, NoiseSource& noise);

/// Estimate (and optional bound) published by a node at one step.
struct Payload {
  std::optional<Vector> z;      // nullopt = NotReady
  std::optional<Vector> bound;
};

struct Message {
  int origin = 0;
  int destination = 0;
  std::size_t slot = 0;        // index of origin in destination's CN set
  long long stamp = 0;         // step index
  long long arrival = 0;       // step index
  double delay = 0.0;          // accumulated seconds
  Payload payload;
};

/// Samples keyed by step index, oldest dropped beyond `capacity`.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity);

  /// Steps must be strictly increasing.
  void push(long long step, Payload value);
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  /// Zero-order hold: most recent sample at or before `step`; nullopt before
  /// the first sample or once the sample has fallen out of the horizon.
  std::optional<Payload> lookup(long long step) const;
  /// Exactly the sample stamped `step`, if held.
  std::optional<Payload> exact(long long step) const;

 private:
  std::size_t capacity_;
  std::deque<std::pair<long long, Payload>> items_;
};

struct RunOptions {
  bool noise = true;
  bool delay = true;
  std::optional<bool> bounds;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> t_end;
};

/// Scenario with the run flags applied (and tau_bar snapped to the grid).
Scenario effective_scenario(const Scenario& s, const RunOptions& opts);

struct NodeTrace {
  // Sampled at the output interval for CSV export.
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<Vector> x_hat;  // NaN-filled while NotReady
  std::vector<double> error;  // NaN while NotReady
  std::vector<double> bound;  // NaN while NotReady or bounds disabled

  // Every step, for metrics.
  std::vector<double> step_error;  // NaN while NotReady
  std::vector<double> step_bound;

  std::optional<double> activation_time;
  double max_error_after_activation = 0.0;
  long long bound_violations = 0;
  long long delivered = 0;
  double delay_min = 0.0;
  double delay_max = 0.0;
  double delay_mean = 0.0;
};

struct RunRecord {
  Scenario scenario;  // effective
  topology::CommunicationPlan plan;
  long long steps = 0;
  long long delay_steps = 0;
  double tau_bar = 0.0;           // snapped
  double guaranteed_activation = 0.0;  // t_delta + tau_bar
  std::vector<double> step_times;
  std::vector<NodeTrace> nodes;
  std::vector<std::vector<long long>> edge_messages;  // hop counts per edge
};

/// Deterministic fixed-step run: sense -> filter -> publish -> deliver -> fuse.
/// Throws DelayBoundViolated / AssumptionViolated with the step number.
RunRecord run(const Scenario& s, const RunOptions& opts = {});

}  // namespace ftobs::simnet
