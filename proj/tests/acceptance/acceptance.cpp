// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftobs/decomp.hpp"
#include "ftobs/kernel.hpp"
#include "ftobs/observer.hpp"
#include "ftobs/presets.hpp"
#include "ftobs/simnet.hpp"
#include "ftobs/topology.hpp"
#include "ftobs_cli/cli.hpp"
#include "kernel_grid.hpp"
#include "oracles.hpp"
#include "signals.hpp"

using namespace ftobs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string measured;
};

struct Criterion {
  int id;
  const char* title;
  double runtime_limit;  // seconds
  std::function<Outcome()> check;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::vector<Matrix> blocks_of(const simnet::Scenario& s) {
  std::vector<Matrix> b;
  for (int i = 0; i < s.node_count(); ++i) b.push_back(s.output_block(i));
  return b;
}

std::vector<Matrix> maps_of(const Matrix& a, const std::vector<Matrix>& blocks) {
  std::vector<Matrix> m;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    m.push_back(observer::NodeObserver(static_cast<int>(i), a, blocks[i]).local_map());
  }
  return m;
}

double window_stat(const simnet::RunRecord& rec, std::size_t node, double lo, double hi,
                   const std::function<double(std::vector<double>&)>& reduce) {
  std::vector<double> v;
  const auto& e = rec.nodes[node].step_error;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double t = rec.step_times[k];
    if (t >= lo - 1e-9 && t <= hi + 1e-9 && !std::isnan(e[k])) v.push_back(e[k]);
  }
  if (v.empty()) return std::nan("");
  return reduce(v);
}

double vmax(std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
double vmin(std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }
double vmedian(std::vector<double>& v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

// 1
Outcome ranks() {
  const auto s = presets::reference();
  std::ostringstream os;
  const std::vector<std::size_t> expect{2, 5, 1, 5};
  bool ok = true;
  os << "ranks (";
  for (int i = 0; i < 4; ++i) {
    const auto r = numkit::numerical_rank(decomp::observability_matrix(s.a, s.output_block(i)));
    ok = ok && r == expect[static_cast<std::size_t>(i)];
    os << (i ? "," : "") << r;
  }
  const auto full = numkit::numerical_rank(decomp::observability_matrix(s.a, s.c));
  ok = ok && full == 6;
  os << "), global " << full << "; expected (2,5,1,5), 6 exactly";
  return {ok, os.str()};
}

// 2
Outcome plan() {
  const auto dir = fs::temp_directory_path() / "ftobs_acceptance_plan";
  fs::remove_all(dir);
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_cli({"plan", "--preset", "reference", "--out", dir.string()}, out, err);
  if (code != 0) return {false, "plan command exited with " + std::to_string(code) + ": " + err.str()};
  std::ifstream in(dir / "plan.json");
  const auto doc = nlohmann::json::parse(in);
  const std::vector<std::vector<int>> expect{{2}, {3}, {2}, {1}};
  bool ok = true;
  std::ostringstream os;
  os << "CN sets";
  for (std::size_t i = 0; i < 4; ++i) {
    const auto got = doc["plan"]["nodes"][i]["cn_set"].get<std::vector<int>>();
    ok = ok && got == expect[i];
    os << " {";
    for (std::size_t k = 0; k < got.size(); ++k) os << (k ? "," : "") << got[k];
    os << "}";
    if (i == 0) ok = ok && std::find(got.begin(), got.end(), 4) == got.end();
    if (i == 1) ok = ok && std::find(got.begin(), got.end(), 1) == got.end();
  }
  os << "; expected {2} {3} {2} {1} without 4 in CN_1 and 1 in CN_2";
  fs::remove_all(dir);
  return {ok, os.str()};
}

// 3
Outcome delay_free() {
  simnet::RunOptions o;
  o.noise = false;
  o.delay = false;
  const auto rec = simnet::run(presets::reference(), o);
  double worst = 0.0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < rec.nodes.size(); ++i) {
    worst = std::max(worst, window_stat(rec, i, 1.0, rec.scenario.run.t_end, vmax));
    const double mx = window_stat(rec, i, 1.0, 5.0, vmax);
    const double mn = window_stat(rec, i, 1.0, 5.0, vmin);
    worst_ratio = std::max(worst_ratio, mn > 0.0 ? mx / mn : INFINITY);
  }
  const bool ok = worst <= 1e-4 && worst_ratio <= 10.0;
  return {ok, "max error after 1 s " + fmt(worst) + " (<= 1e-4), max/min on [1, 5] s " + fmt(worst_ratio) +
                  " (<= 10)"};
}

// 4
Outcome delayed() {
  simnet::RunOptions o;
  o.noise = false;
  o.delay = true;
  const auto rec = simnet::run(presets::reference(), o);
  double worst = 0.0;
  long long early = 0;
  bool all_active = true;
  for (std::size_t i = 0; i < rec.nodes.size(); ++i) {
    const auto& e = rec.nodes[i].step_error;
    for (std::size_t k = 0; k < e.size(); ++k) {
      const double t = rec.step_times[k];
      if (t < 1.27 - 1e-9) {
        early += !std::isnan(e[k]);
      } else if (std::isnan(e[k])) {
        all_active = false;
      } else {
        worst = std::max(worst, e[k]);
      }
    }
  }
  const bool ok = worst <= 1e-4 && early == 0 && all_active;
  return {ok, "max error after 1.27 s " + fmt(worst) + " (<= 1e-4), active samples before 1.27 s " +
                  std::to_string(early) + " (0)" + (all_active ? "" : ", gaps after 1.27 s")};
}

// 5
Outcome noisy() {
  double worst_ratio = 0.0;
  long long violations = 0;
  long long missing = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    simnet::RunOptions o;
    o.bounds = true;
    o.seed = seed;
    const auto rec = simnet::run(presets::reference(), o);
    for (std::size_t i = 0; i < rec.nodes.size(); ++i) {
      const double mx = window_stat(rec, i, 1.27, rec.scenario.run.t_end, vmax);
      const double med = window_stat(rec, i, 1.27, 2.27, vmedian);
      worst_ratio = std::max(worst_ratio, mx / med);
      const auto& tr = rec.nodes[i];
      for (std::size_t k = 0; k < tr.step_error.size(); ++k) {
        if (rec.step_times[k] < 1.27 - 1e-9) continue;
        if (std::isnan(tr.step_bound[k])) {
          ++missing;
        } else if (!(tr.step_error[k] <= tr.step_bound[k])) {
          ++violations;
        }
      }
    }
  }
  const bool ok = worst_ratio <= 5.0 && violations == 0 && missing == 0;
  return {ok, "(a) worst max over [1.27, 10] s / median over [1.27, 2.27] s " + fmt(worst_ratio) +
                  " (<= 5); (b) bound violations " + std::to_string(violations) + " (0), steps without bound " +
                  std::to_string(missing) + " (0); 20 seeds"};
}

// 6
Outcome kernel_suite() {
  const auto grid = kgrid::full_grid();
  const auto times = kgrid::time_grid();
  int conditions_pass = 0;
  for (const auto& p : grid) conditions_pass += kernel::validate_kernel_conditions(p, times).passed();

  double fd_worst = 0.0;
  for (const auto& p : grid) {
    const kernel::KernelDerivatives kd(p, p.delta());
    for (int order = 1; order <= p.delta(); ++order) {
      for (double t : {0.01, 0.5, 2.0, 10.0}) {
        const double h = 1e-5 * std::min(1.0, t);
        for (double tau : {0.5 * t, t - h}) {
          fd_worst = std::max(fd_worst, kgrid::fd_relative_error(kd, order, t, tau, h));
        }
      }
    }
  }

  auto dsin = [](int k, double t) {
    switch (k % 4) {
      case 0: return std::sin(t);
      case 1: return std::cos(t);
      case 2: return -std::sin(t);
      default: return -std::cos(t);
    }
  };
  double ibp_worst = 0.0;
  for (int p = 1; p <= 4; ++p) {
    const kernel::KernelParams kp(1.5, 1.0, p);
    for (double t : {0.5, 1.0, 3.0, 8.0}) {
      const double lhs = oracle::volterra(kp, 0, [&](double tau) { return dsin(p, tau); }, t);
      double rhs = 0.0;
      for (int k = 0; k < p; ++k) {
        rhs += ((k % 2) ? -1.0 : 1.0) * kernel::eval_diag_derivative(kp, k, t) * dsin(p - 1 - k, t);
      }
      rhs += ((p % 2) ? -1.0 : 1.0) * oracle::volterra(kp, p, [](double tau) { return std::sin(tau); }, t);
      ibp_worst = std::max(ibp_worst, std::abs(lhs - rhs));
    }
  }
  const bool ok = conditions_pass == static_cast<int>(grid.size()) && fd_worst <= 1e-6 && ibp_worst <= 1e-6;
  return {ok, "kernel conditions hold on " + std::to_string(conditions_pass) + "/" + std::to_string(grid.size()) +
                  " grid points (all); finite-difference rel. error " + fmt(fd_worst) +
                  " (<= 1e-6); integration by parts " + fmt(ibp_worst) + " (<= 1e-6)"};
}

// 7
Outcome proposition() {
  int mismatches = 0;
  int subsets = 0;
  auto check_system = [&](const Matrix& a, const std::vector<Matrix>& blocks) {
    const auto maps = maps_of(a, blocks);
    const auto nodes = static_cast<int>(blocks.size());
    for (unsigned mask = 1; mask < (1u << nodes); ++mask) {
      std::vector<Matrix> t;
      std::vector<Matrix> c;
      for (int i = 0; i < nodes; ++i) {
        if (mask & (1u << i)) {
          t.push_back(maps[static_cast<std::size_t>(i)]);
          c.push_back(blocks[static_cast<std::size_t>(i)]);
        }
      }
      const auto lhs = numkit::numerical_rank(numkit::normalize_rows(numkit::vstack(t, a.rows())));
      const auto rhs = numkit::numerical_rank(oracle::obsv(a, numkit::vstack(c, a.rows())));
      mismatches += lhs != rhs;
      ++subsets;
    }
  };
  const auto s = presets::reference();
  check_system(s.a, blocks_of(s));
  const int reference_subsets = subsets;

  std::mt19937_64 rng(1234);
  int systems = 0;
  for (int trial = 0; trial < 1000 && systems < 100; ++trial) {
    const int n = 2 + trial % 5;
    const auto net = oracle::random_network(rng, 2 + trial % 3, n);
    if (numkit::numerical_rank(oracle::obsv(net.a, numkit::vstack(net.c_blocks, n))) != static_cast<std::size_t>(n)) continue;
    try {
      check_system(net.a, net.c_blocks);
    } catch (const Error&) {
      continue;
    }
    ++systems;
  }
  const bool ok = mismatches == 0 && reference_subsets == 15 && systems == 100;
  return {ok, std::to_string(mismatches) + " rank mismatches over " + std::to_string(reference_subsets) +
                  " reference subsets and " + std::to_string(systems) + " random systems (" +
                  std::to_string(subsets) + " subsets); exact match at 1e-9"};
}

// 8
Outcome cn_oracle() {
  std::mt19937_64 rng(97);
  int matched = 0;
  int mismatched = 0;
  for (int trial = 0; trial < 400 && matched + mismatched < 50; ++trial) {
    const int nodes = 2 + trial % 4;
    const int n = 2 + (trial / 4) % 4;
    const auto net = oracle::random_network(rng, nodes, n);
    std::vector<Matrix> maps;
    try {
      maps = maps_of(net.a, net.c_blocks);
    } catch (const Error&) {
      continue;
    }
    std::vector<oracle::CnOracle> expect;
    bool feasible = true;
    for (int i = 0; i < nodes; ++i) {
      expect.push_back(oracle::brute_force_cn(net.adjacency, net.a, net.c_blocks, i));
      feasible = feasible && expect.back().step >= 0;
    }
    if (!feasible) continue;
    bool same = true;
    try {
      const auto plan = topology::optimize_cn_sets(topology::Digraph(net.adjacency), maps);
      for (int i = 0; i < nodes; ++i) {
        same = same && plan.nodes[static_cast<std::size_t>(i)].cn_set.size() ==
                           expect[static_cast<std::size_t>(i)].set.size();
      }
    } catch (const Error&) {
      same = false;
    }
    (same ? matched : mismatched) += 1;
  }
  const bool ok = matched == 50 && mismatched == 0;
  return {ok, std::to_string(matched) + "/" + std::to_string(matched + mismatched) +
                  " systems with matching CN-set sizes (need 50/50)"};
}

// 9
Outcome volterra_filters() {
  const auto params = kernel::make_bank(3);
  const double dt = 1e-3;
  double worst = 0.0;
  int signals = 0;
  for (const auto& [name, w] : sig::test_signals()) {
    observer::FilterBank bank(0, params, Vector::Zero(3));
    for (int k = 0; k < 2000; ++k) {
      const double t = bank.time();
      bank.step({w(t), w(t + 0.5 * dt), w(t + dt)}, dt);
    }
    for (int h = 0; h < 3; ++h) {
      for (int p = 0; p <= 3; ++p) {
        const double ref = oracle::volterra(params[static_cast<std::size_t>(h)], p, w, bank.time());
        worst = std::max(worst, std::abs(bank.xi()(h, p) - ref) / std::max(1.0, std::abs(ref)));
      }
    }
    ++signals;
  }
  return {worst <= 1e-8 && signals == 10,
          "worst scaled deviation from quadrature " + fmt(worst) + " (<= 1e-8) on " + std::to_string(signals) +
              " signals"};
}

// 10
Outcome determinism() {
  const auto base = fs::temp_directory_path() / "ftobs_acceptance_det";
  fs::remove_all(base);
  std::vector<fs::path> dirs{base / "a", base / "b"};
  for (const auto& d : dirs) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run_cli({"run", "--preset", "reference", "--bounds", "--out", d.string()}, out, err);
    if (code != 0) return {false, "run command exited with " + std::to_string(code) + ": " + err.str()};
  }
  int identical = 0;
  for (int i = 1; i <= 4; ++i) {
    const auto name = "node_" + std::to_string(i) + ".csv";
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const auto a = slurp(dirs[0] / name);
    identical += !a.empty() && a == slurp(dirs[1] / name);
  }
  fs::remove_all(base);
  return {identical == 4, std::to_string(identical) + "/4 node CSVs byte-identical across two runs"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "rank reproduction", 1.0, ranks},
      {2, "plan reproduction", 1.0, plan},
      {3, "delay-free fixed-time convergence", 60.0, delay_free},
      {4, "delayed convergence", 60.0, delayed},
      {5, "noisy robustness", 900.0, noisy},
      {6, "kernel identity suite", 30.0, kernel_suite},
      {7, "rank identity property suite", 30.0, proposition},
      {8, "CN-oracle equivalence", 120.0, cn_oracle},
      {9, "Volterra filter oracle", 30.0, volterra_filters},
      {10, "determinism", 120.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.check();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.runtime_limit;
    const bool pass = r.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  AC" << c.id << " " << c.title << ": " << r.measured << "; "
              << fmt(secs) << " s (< " << fmt(c.runtime_limit) << " s)" << (in_time ? "" : " TOO SLOW")
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " acceptance criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
