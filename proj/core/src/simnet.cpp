#include "ftobs/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include "ftobs/decomp.hpp"

namespace ftobs::simnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kDelayRedraws = 16;

[[noreturn]] void bad_field(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::InvalidScenario, field + ": " + what);
}

void check_finite(const Matrix& m, const std::string& field) {
  if (!m.allFinite()) bad_field(field, "entries must be finite");
}

void check_bank_spec(const kernel::BankSpec& k, const std::string& field) {
  if (!(k.omega0 > 0.0) || !std::isfinite(k.omega0)) bad_field(field + ".omega0", "must be > 0");
  if (!(k.omega_step > 0.0) || !std::isfinite(k.omega_step)) {
    bad_field(field + ".omega_step", "must be > 0");
  }
  if (!(k.omega_bar > 0.0) || !std::isfinite(k.omega_bar)) {
    bad_field(field + ".omega_bar", "must be > 0");
  }
  if (k.delta_extra < 0) bad_field(field + ".delta_extra", "must be >= 0");
  for (double w : k.omegas) {
    if (!(w > 0.0) || !std::isfinite(w)) bad_field(field + ".omegas", "rates must be > 0");
  }
}

long long steps_for(double seconds, double dt) {
  return static_cast<long long>(std::ceil(seconds / dt - 1e-9));
}

double worst_case(const EdgeDelay& e) {
  switch (e.model) {
    case DelayModel::None: return 0.0;
    case DelayModel::Constant: return e.lo;
    case DelayModel::Uniform: return e.hi;
  }
  return 0.0;
}

double draw(const EdgeDelay& e, NoiseSource& rng) {
  switch (e.model) {
    case DelayModel::None: return 0.0;
    case DelayModel::Constant: return e.lo;
    case DelayModel::Uniform: return rng.uniform(e.lo, e.hi);
  }
  return 0.0;
}

Payload slice(const Payload& p, const std::vector<std::size_t>& rows) {
  Payload out;
  auto take = [&](const Vector& v) {
    Vector s(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) s(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(rows[k]));
    return s;
  };
  if (p.z) out.z = take(*p.z);
  if (p.bound) out.bound = take(*p.bound);
  return out;
}

struct Queued {
  Message msg;
  long long seq = 0;
};

struct LaterFirst {
  bool operator()(const Queued& a, const Queued& b) const {
    if (a.msg.arrival != b.msg.arrival) return a.msg.arrival > b.msg.arrival;
    return a.seq > b.seq;
  }
};

struct Route {
  int consumer = 0;
  std::size_t slot = 0;
  std::vector<std::size_t> rows;
  std::vector<int> path;
};

}  // namespace

EdgeDelay DelaySpec::edge(int from, int to) const {
  for (const auto& e : edges) {
    if (e.from == from && e.to == to) return e;
  }
  EdgeDelay e{from, to, model, lo, hi};
  if (model == DelayModel::Constant) e.hi = lo;
  return e;
}

double DisturbanceSpec::bound() const {
  return waveform == Waveform::Sinusoid ? std::abs(amplitude) : 0.0;
}

Vector DisturbanceSpec::at(double t, Eigen::Index n) const {
  Vector d = Vector::Zero(n);
  if (waveform != Waveform::Sinusoid || amplitude == 0.0) return d;
  const double v = amplitude * std::sin(angular_frequency * t);
  if (components.empty()) {
    d.setConstant(v);
  } else {
    for (int c : components) d(c) = v;
  }
  return d;
}

Matrix Scenario::output_block(int node) const {
  int start = 0;
  for (int i = 0; i < node; ++i) start += partition[static_cast<std::size_t>(i)];
  return c.middleRows(start, partition[static_cast<std::size_t>(node)]);
}

const kernel::BankSpec& Scenario::kernels_of(int node) const {
  return node_kernels.empty() ? kernels : node_kernels[static_cast<std::size_t>(node)];
}

void validate_scenario(const Scenario& s) {
  const Eigen::Index n = s.a.rows();
  if (n == 0 || s.a.cols() != n) bad_field("plant.A", "must be a non-empty square matrix");
  check_finite(s.a, "plant.A");
  if (s.c.cols() != n) bad_field("plant.C", "must have as many columns as A");
  check_finite(s.c, "plant.C");
  if (s.partition.empty()) bad_field("partition", "needs at least one node");
  long long rows = 0;
  for (int m : s.partition) {
    if (m < 0) bad_field("partition", "row counts must be >= 0");
    rows += m;
  }
  if (rows != s.c.rows()) {
    std::ostringstream os;
    os << "row counts sum to " << rows << " but C has " << s.c.rows() << " rows";
    bad_field("partition", os.str());
  }
  const auto nodes = static_cast<Eigen::Index>(s.partition.size());
  if (s.adjacency.rows() != nodes || s.adjacency.cols() != nodes) {
    bad_field("graph.adjacency", "must be N x N with N = number of partition entries");
  }
  for (Eigen::Index i = 0; i < nodes; ++i) {
    for (Eigen::Index j = 0; j < nodes; ++j) {
      const auto v = s.adjacency(i, j);
      if (v != 0 && v != 1) bad_field("graph.adjacency", "entries must be 0 or 1");
      if (i == j && v != 0) bad_field("graph.adjacency", "diagonal must be zero");
    }
  }
  check_bank_spec(s.kernels, "kernels");
  if (!s.node_kernels.empty()) {
    if (static_cast<Eigen::Index>(s.node_kernels.size()) != nodes) {
      bad_field("kernels.nodes", "needs one entry per node");
    }
    for (std::size_t i = 0; i < s.node_kernels.size(); ++i) {
      check_bank_spec(s.node_kernels[i], "kernels.nodes[" + std::to_string(i) + "]");
    }
  }

  const auto& d = s.delays;
  if (!(d.tau_bar >= 0.0) || !std::isfinite(d.tau_bar)) bad_field("delays.tau_bar", "must be >= 0");
  auto check_range = [&](DelayModel model, double lo, double hi, const std::string& field) {
    if (model == DelayModel::None) return;
    if (!(lo >= 0.0) || !std::isfinite(lo)) bad_field(field, "delays must be >= 0");
    if (model == DelayModel::Uniform && (!(hi >= lo) || !std::isfinite(hi))) {
      bad_field(field, "uniform delay needs 0 <= lo <= hi");
    }
  };
  check_range(d.model, d.lo, d.hi, "delays");
  for (const auto& e : d.edges) {
    const std::string field = "delays.edges";
    if (e.from < 0 || e.to < 0 || e.from >= nodes || e.to >= nodes) bad_field(field, "node out of range");
    if (s.adjacency(e.from, e.to) == 0) {
      bad_field(field, "edge " + std::to_string(e.from + 1) + " -> " + std::to_string(e.to + 1) +
                           " is not in the graph");
    }
    check_range(e.model, e.lo, e.hi, field);
  }

  if (!(s.noise.measurement >= 0.0) || !std::isfinite(s.noise.measurement)) {
    bad_field("noise.measurement", "must be >= 0");
  }
  const auto& w = s.noise.disturbance;
  if (!std::isfinite(w.amplitude) || !std::isfinite(w.angular_frequency)) {
    bad_field("noise.disturbance", "amplitude and frequency must be finite");
  }
  for (int c : w.components) {
    if (c < 0 || c >= n) bad_field("noise.disturbance.components", "component out of range");
  }

  const auto& r = s.run;
  if (!(r.dt > 0.0) || !std::isfinite(r.dt)) bad_field("run.dt", "must be > 0");
  if (!(r.t_end > 0.0) || !std::isfinite(r.t_end)) bad_field("run.t_end", "must be > 0");
  if (!(r.t_delta > 0.0) || !std::isfinite(r.t_delta)) bad_field("run.t_delta", "must be > 0");
  if (r.x0.size() != n) bad_field("run.x0", "must have n entries");
  if (!r.x0.allFinite()) bad_field("run.x0", "entries must be finite");
  if (!(r.output_interval > 0.0)) bad_field("run.output_interval", "must be > 0");
  if (!(r.cond_max > 1.0)) bad_field("run.cond_max", "must be > 1");
  if (!(r.rank_tol > 0.0 && r.rank_tol < 1.0)) bad_field("run.rank_tol", "must be in (0, 1)");
}

long long delay_steps(double tau_bar, double dt) { return steps_for(tau_bar, dt); }

bool jointly_observable(const Scenario& s) {
  const numkit::RankTolerance tol(s.run.rank_tol);
  return numkit::numerical_rank(decomp::observability_matrix(s.a, s.c), tol) ==
         static_cast<std::size_t>(s.a.rows());
}

std::vector<std::string> delay_violations(const Scenario& s,
                                          const topology::CommunicationPlan& plan) {
  std::vector<std::string> out;
  const double limit = s.delays.tau_bar * (1.0 + 1e-12);
  for (const auto& np : plan.nodes) {
    for (const auto& path : np.relay_paths) {
      double total = 0.0;
      for (std::size_t h = 0; h + 1 < path.size(); ++h) {
        total += worst_case(s.delays.edge(path[h], path[h + 1]));
      }
      if (total > limit) {
        std::ostringstream os;
        os << "relay path ";
        for (std::size_t h = 0; h < path.size(); ++h) os << (h ? " -> " : "") << path[h] + 1;
        os << " can accumulate " << total << " s of delay, above tau_bar = " << s.delays.tau_bar;
        out.push_back(os.str());
      }
    }
  }
  return out;
}

std::vector<Matrix> local_maps(const Scenario& s) {
  const numkit::RankTolerance tol(s.run.rank_tol);
  std::vector<Matrix> maps;
  for (int i = 0; i < s.node_count(); ++i) {
    maps.push_back(observer::NodeObserver(i, s.a, s.output_block(i), s.kernels_of(i), tol).local_map());
  }
  return maps;
}

topology::CommunicationPlan build_plan(const Scenario& s) {
  const auto maps = local_maps(s);
  return topology::optimize_cn_sets(topology::Digraph(s.adjacency), maps,
                                    numkit::RankTolerance(s.run.rank_tol));
}

Vector step_plant(const Matrix& a, const Vector& x, double t, double dt,
                  const DisturbanceSpec& disturbance) {
  const Eigen::Index n = x.size();
  return numkit::rk4_step(x, t, dt, [&](double tau, const Vector& v) -> Vector {
    return a * v + disturbance.at(tau, n);
  });
}

NoiseSource::NoiseSource(std::uint64_t seed, int node, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(node),
                    static_cast<std::uint32_t>(stream)};
  rng_.seed(seq);
}

double NoiseSource::symmetric() {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

double NoiseSource::uniform(double lo, double hi) {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Vector sense(const Matrix& c_i, const Vector& x, double amplitude, NoiseSource& noise) {
  Vector y = c_i * x;
  if (amplitude != 0.0) {
    for (Eigen::Index r = 0; r < y.size(); ++r) y(r) += amplitude * noise.symmetric();
  }
  return y;
}

HistoryBuffer::HistoryBuffer(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

void HistoryBuffer::push(long long step, Payload value) {
  if (!items_.empty() && step <= items_.back().first) {
    throw Error(ErrorCode::DomainError, "history buffer steps must be strictly increasing");
  }
  items_.emplace_back(step, std::move(value));
  while (items_.size() > capacity_) items_.pop_front();
}

std::optional<Payload> HistoryBuffer::lookup(long long step) const {
  if (items_.empty() || step < items_.front().first) return std::nullopt;
  auto it = std::upper_bound(items_.begin(), items_.end(), step,
                             [](long long s, const auto& item) { return s < item.first; });
  return std::prev(it)->second;
}

std::optional<Payload> HistoryBuffer::exact(long long step) const {
  auto it = std::lower_bound(items_.begin(), items_.end(), step,
                             [](const auto& item, long long s) { return item.first < s; });
  if (it == items_.end() || it->first != step) return std::nullopt;
  return it->second;
}

Scenario effective_scenario(const Scenario& s, const RunOptions& opts) {
  Scenario e = s;
  if (!opts.noise) {
    e.noise.measurement = 0.0;
    e.noise.disturbance = DisturbanceSpec{};
  }
  if (!opts.delay) e.delays = DelaySpec{};
  if (opts.bounds) e.run.bounds = *opts.bounds;
  if (opts.seed) e.run.seed = *opts.seed;
  if (opts.dt) e.run.dt = *opts.dt;
  if (opts.t_end) e.run.t_end = *opts.t_end;
  if (e.run.dt > 0.0 && e.delays.tau_bar > 0.0) {
    e.delays.tau_bar = static_cast<double>(delay_steps(e.delays.tau_bar, e.run.dt)) * e.run.dt;
  }
  return e;
}

RunRecord run(const Scenario& input, const RunOptions& opts) {
  RunRecord rec;
  rec.scenario = effective_scenario(input, opts);
  const Scenario& s = rec.scenario;
  validate_scenario(s);
  if (!jointly_observable(s)) {
    throw Error(ErrorCode::NotObservable, "(A, C) is not jointly observable");
  }

  const numkit::RankTolerance tol(s.run.rank_tol);
  const int nodes = s.node_count();
  const Eigen::Index n = s.a.rows();
  const double dt = s.run.dt;

  std::vector<observer::NodeObserver> obs;
  std::vector<Matrix> blocks;
  std::vector<Matrix> maps;
  for (int i = 0; i < nodes; ++i) {
    blocks.push_back(s.output_block(i));
    obs.emplace_back(i, s.a, blocks.back(), s.kernels_of(i), tol);
    maps.push_back(obs.back().local_map());
  }
  const topology::Digraph graph(s.adjacency);
  rec.plan = topology::optimize_cn_sets(graph, maps, tol);
  if (const auto v = delay_violations(s, rec.plan); !v.empty()) {
    throw Error(ErrorCode::DelayBoundViolated, v.front());
  }

  const long long D = s.delays.tau_bar > 0.0 ? delay_steps(s.delays.tau_bar, dt) : 0;
  rec.delay_steps = D;
  rec.tau_bar = static_cast<double>(D) * dt;
  const auto window = fusion::make_delay_window(s.a, rec.tau_bar, dt);
  const long long total_steps = std::max<long long>(1, std::llround(s.run.t_end / dt));
  const long long out_every = std::max<long long>(1, std::llround(s.run.output_interval / dt));
  rec.steps = total_steps;
  const long long first_guaranteed = steps_for(s.run.t_delta, dt) + D;
  rec.guaranteed_activation = static_cast<double>(first_guaranteed) * dt;

  std::vector<std::vector<Route>> routes(static_cast<std::size_t>(nodes));
  for (const auto& np : rec.plan.nodes) {
    for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
      routes[static_cast<std::size_t>(np.cn_set[k])].push_back(
          {np.node, k, np.rows[k], np.relay_paths[k]});
    }
  }

  const observer::NoiseLevels levels{s.noise.measurement, s.noise.disturbance.bound()};
  const bool bounds = s.run.bounds;
  std::vector<NoiseSource> meas_noise;
  std::vector<NoiseSource> delay_noise;
  for (int i = 0; i < nodes; ++i) {
    meas_noise.emplace_back(s.run.seed, i, 0);
    delay_noise.emplace_back(s.run.seed, i, 1);
  }

  std::vector<HistoryBuffer> own(static_cast<std::size_t>(nodes), HistoryBuffer(static_cast<std::size_t>(D) + 2));
  std::vector<std::vector<std::map<long long, Payload>>> inbox(static_cast<std::size_t>(nodes));
  for (const auto& np : rec.plan.nodes) inbox[static_cast<std::size_t>(np.node)].resize(np.cn_set.size());
  std::priority_queue<Queued, std::vector<Queued>, LaterFirst> bus;
  long long seq = 0;
  rec.edge_messages.assign(static_cast<std::size_t>(nodes), std::vector<long long>(static_cast<std::size_t>(nodes), 0));
  std::vector<double> delay_sum(static_cast<std::size_t>(nodes), 0.0);

  rec.nodes.resize(static_cast<std::size_t>(nodes));
  for (auto& tr : rec.nodes) {
    tr.step_error.reserve(static_cast<std::size_t>(total_steps + 1));
    tr.step_bound.reserve(static_cast<std::size_t>(total_steps + 1));
    tr.delay_min = std::numeric_limits<double>::infinity();
  }
  rec.step_times.reserve(static_cast<std::size_t>(total_steps + 1));

  Vector x = s.run.x0;
  std::vector<Vector> y_prev;
  for (int i = 0; i < nodes; ++i) {
    y_prev.push_back(sense(blocks[static_cast<std::size_t>(i)], x, levels.measurement,
                           meas_noise[static_cast<std::size_t>(i)]));
  }

  auto record = [&](long long k, const std::vector<std::optional<Vector>>& fused,
                    const std::vector<double>& fused_bound) {
    const double t = static_cast<double>(k) * dt;
    rec.step_times.push_back(t);
    const bool sample = (k % out_every == 0);
    for (int i = 0; i < nodes; ++i) {
      auto& tr = rec.nodes[static_cast<std::size_t>(i)];
      const auto& xh = fused[static_cast<std::size_t>(i)];
      const double err = xh ? (*xh - x).norm() : kNaN;
      const double b = fused_bound[static_cast<std::size_t>(i)];
      tr.step_error.push_back(err);
      tr.step_bound.push_back(b);
      if (xh) {
        if (!tr.activation_time) tr.activation_time = t;
        if (k >= first_guaranteed) tr.max_error_after_activation = std::max(tr.max_error_after_activation, err);
        if (bounds && !(err <= b)) ++tr.bound_violations;
      }
      if (sample) {
        tr.t.push_back(t);
        tr.x.push_back(x);
        tr.x_hat.push_back(xh ? *xh : Vector::Constant(n, kNaN));
        tr.error.push_back(err);
        tr.bound.push_back(b);
      }
    }
  };

  std::vector<std::optional<Vector>> fused(static_cast<std::size_t>(nodes));
  std::vector<double> fused_bound(static_cast<std::size_t>(nodes), kNaN);
  for (int i = 0; i < nodes; ++i) own[static_cast<std::size_t>(i)].push(0, Payload{});
  record(0, fused, fused_bound);

  std::vector<observer::OutputSample> samples;
  for (long long k = 0; k < total_steps; ++k) {
    const long long k1 = k + 1;
    const double t = static_cast<double>(k) * dt;
    try {
      // sense
      const Vector x_mid = step_plant(s.a, x, t, 0.5 * dt, s.noise.disturbance);
      const Vector x_end = step_plant(s.a, x_mid, t + 0.5 * dt, 0.5 * dt, s.noise.disturbance);
      std::vector<Vector> y_mid;
      std::vector<Vector> y_end;
      for (int i = 0; i < nodes; ++i) {
        auto& rng = meas_noise[static_cast<std::size_t>(i)];
        y_mid.push_back(sense(blocks[static_cast<std::size_t>(i)], x_mid, levels.measurement, rng));
        y_end.push_back(sense(blocks[static_cast<std::size_t>(i)], x_end, levels.measurement, rng));
      }
      // filter
      for (int i = 0; i < nodes; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        samples.resize(static_cast<std::size_t>(blocks[ui].rows()));
        for (Eigen::Index r = 0; r < blocks[ui].rows(); ++r) {
          samples[static_cast<std::size_t>(r)] = {y_prev[ui](r), y_mid[ui](r), y_end[ui](r)};
        }
        obs[ui].step(samples, dt);
      }
      x = x_end;
      y_prev = std::move(y_end);

      // publish
      for (int j = 0; j < nodes; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        Payload p;
        p.z = obs[uj].estimate(s.run.t_delta, s.run.cond_max);
        if (p.z && bounds) p.bound = obs[uj].error_bound(levels);
        for (const auto& route : routes[uj]) {
          std::vector<EdgeDelay> hops;
          for (std::size_t h = 0; h + 1 < route.path.size(); ++h) {
            hops.push_back(s.delays.edge(route.path[h], route.path[h + 1]));
            if (s.adjacency(route.path[h], route.path[h + 1]) == 0) {
              throw Error(ErrorCode::PlanInconsistent, "relay path uses a missing edge");
            }
          }
          auto& rng = delay_noise[uj];
          double total = 0.0;
          for (int attempt = 0; attempt <= kDelayRedraws; ++attempt) {
            total = 0.0;
            for (const auto& e : hops) total += draw(e, rng);
            if (total <= rec.tau_bar) break;
          }
          if (total > rec.tau_bar) total = rec.tau_bar;
          Message m;
          m.origin = j;
          m.destination = route.consumer;
          m.slot = route.slot;
          m.stamp = k1;
          m.delay = total;
          m.arrival = k1 + (total > 0.0 ? steps_for(total, dt) : 0);
          if (m.arrival - m.stamp > D) {
            std::ostringstream os;
            os << "message " << j + 1 << " -> " << route.consumer + 1 << " needs "
               << m.arrival - m.stamp << " steps, above the " << D << "-step delay bound";
            throw Error(ErrorCode::DelayBoundViolated, os.str());
          }
          m.payload = slice(p, route.rows);
          for (std::size_t h = 0; h + 1 < route.path.size(); ++h) {
            ++rec.edge_messages[static_cast<std::size_t>(route.path[h])][static_cast<std::size_t>(route.path[h + 1])];
          }
          bus.push({std::move(m), seq++});
        }
        own[uj].push(k1, std::move(p));
      }

      // deliver
      while (!bus.empty() && bus.top().msg.arrival <= k1) {
        const Message& m = bus.top().msg;
        auto& tr = rec.nodes[static_cast<std::size_t>(m.destination)];
        tr.delay_min = std::min(tr.delay_min, m.delay);
        tr.delay_max = std::max(tr.delay_max, m.delay);
        delay_sum[static_cast<std::size_t>(m.destination)] += m.delay;
        ++tr.delivered;
        inbox[static_cast<std::size_t>(m.destination)][m.slot][m.stamp] = m.payload;
        bus.pop();
      }

      // fuse
      const long long q = k1 - D;
      for (int i = 0; i < nodes; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        fused[ui].reset();
        fused_bound[ui] = kNaN;
        if (q < 0) continue;
        const auto& np = rec.plan.nodes[ui];
        const auto own_p = own[ui].exact(q);
        if (!own_p) continue;
        std::vector<std::optional<Vector>> zs;
        std::vector<Vector> bs;
        bool have_bounds = bounds && own_p->bound.has_value();
        for (std::size_t slot = 0; slot < np.cn_set.size(); ++slot) {
          auto& box = inbox[ui][slot];
          auto it = box.find(q);
          if (it == box.end()) {
            zs.emplace_back();
            have_bounds = false;
            continue;
          }
          zs.push_back(it->second.z);
          if (it->second.bound) {
            bs.push_back(*it->second.bound);
          } else {
            have_bounds = false;
          }
          box.erase(box.begin(), it);
        }
        fused[ui] = fusion::fuse_delayed(np, window, own_p->z, zs);
        if (fused[ui] && have_bounds) {
          fused_bound[ui] = fusion::global_error_bound(np, window, *own_p->bound, bs,
                                                       levels.disturbance)
                                .norm();
        }
      }
    } catch (const Error& e) {
      std::ostringstream os;
      os << "step " << k1 << " (t = " << static_cast<double>(k1) * dt << " s): " << e.detail();
      throw Error(e.code(), os.str());
    }
    record(k1, fused, fused_bound);
  }

  for (int i = 0; i < nodes; ++i) {
    auto& tr = rec.nodes[static_cast<std::size_t>(i)];
    if (tr.delivered == 0) {
      tr.delay_min = 0.0;
    } else {
      tr.delay_mean = delay_sum[static_cast<std::size_t>(i)] / static_cast<double>(tr.delivered);
    }
  }
  return rec;
}

}  // namespace ftobs::simnet
