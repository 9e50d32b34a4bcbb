#include "ftobs_cli/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ftobs/decomp.hpp"
#include "ftobs/presets.hpp"
#include "ftobs/scenario_io.hpp"
#include "ftobs/version.hpp"

namespace ftobs::cli {

namespace {

using json = nlohmann::ordered_json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json one_based(const std::vector<int>& v) {
  json out = json::array();
  for (int x : v) out.push_back(x + 1);
  return out;
}

json one_based(const std::vector<std::size_t>& v) {
  json out = json::array();
  for (std::size_t x : v) out.push_back(x + 1);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << content;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory " + dir.string() + ": " + ec.message());
}

struct Source {
  std::string path;
  std::string preset;
};

simnet::Scenario load(const Source& src) {
  if (!src.preset.empty()) {
    auto s = presets::by_name(src.preset);
    if (!s) throw Error(ErrorCode::ParseError, "unknown preset '" + src.preset + "'");
    return *s;
  }
  if (src.path.empty()) throw Error(ErrorCode::ParseError, "give a scenario file or --preset <name>");
  return scenario_io::load_scenario(src.path);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::IoError: return kIoOrParse;
    case ErrorCode::InvalidScenario: return kValidationFailed;
    default: return kRuntimeFailure;
  }
}

void print_checks(const std::vector<Check>& checks, std::ostream& out) {
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << ": " << c.detail;
    out << "\n";
  }
}

bool all_passed(const std::vector<Check>& checks) {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

int cmd_validate(const Source& src, std::ostream& out) {
  const auto s = load(src);
  const auto checks = validate_assumptions(s);
  out << "scenario " << (s.name.empty() ? "(unnamed)" : s.name) << "  digest " << scenario_digest(s) << "\n";
  print_checks(checks, out);
  return all_passed(checks) ? kSuccess : kValidationFailed;
}

int cmd_plan(const Source& src, const std::filesystem::path& out_dir, std::ostream& out,
             std::ostream& err) {
  const auto s = load(src);
  simnet::validate_scenario(s);
  topology::CommunicationPlan plan;
  try {
    plan = simnet::build_plan(s);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AssumptionViolated) throw;
    err << "error: " << e.what() << "\n";
    return kValidationFailed;
  }
  out << topology::format_plan(plan);
  ensure_dir(out_dir);
  json doc;
  doc["scenario"] = s.name;
  doc["digest"] = scenario_digest(s);
  doc["plan"] = plan_json(plan);
  write_file(out_dir / "plan.json", doc.dump(2) + "\n");
  out << "wrote " << (out_dir / "plan.json").string() << "\n";
  return kSuccess;
}

int cmd_run(const Source& src, const simnet::RunOptions& opts, const RunFlags& flags,
            const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto input = load(src);
  simnet::Scenario eff;
  try {
    eff = simnet::effective_scenario(input, opts);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailed;
  }
  const auto checks = validate_assumptions(eff);
  if (!all_passed(checks)) {
    print_checks(checks, err);
    return kValidationFailed;
  }
  simnet::RunRecord rec;
  try {
    rec = simnet::run(input, opts);
  } catch (const Error& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  const auto written = write_run(rec, flags, out_dir);
  out << "digest " << written.digest << "\n";
  out << "t_delta + tau_bar = " << rec.guaranteed_activation << " s\n";
  for (std::size_t i = 0; i < rec.nodes.size(); ++i) {
    const auto& tr = rec.nodes[i];
    out << "node " << i + 1 << ": active from ";
    if (tr.activation_time) {
      out << *tr.activation_time << " s";
    } else {
      out << "never";
    }
    out << ", max error after activation " << std::setprecision(6) << tr.max_error_after_activation;
    if (flags.bounds) out << ", bound violations " << tr.bound_violations;
    out << "\n";
  }
  out << "wrote " << written.csv_files.size() << " CSV files, " << written.metrics_file << " and "
      << written.plan_file << " to " << out_dir.string() << "\n";
  return kSuccess;
}

}  // namespace

std::vector<Check> validate_assumptions(const simnet::Scenario& s) {
  std::vector<Check> checks;
  try {
    simnet::validate_scenario(s);
    checks.push_back({"scenario", true, "fields and shapes are consistent"});
  } catch (const Error& e) {
    checks.push_back({"scenario", false, e.detail()});
    return checks;
  }

  const numkit::RankTolerance tol(s.run.rank_tol);
  const auto rank = numkit::numerical_rank(decomp::observability_matrix(s.a, s.c), tol);
  const auto n = static_cast<std::size_t>(s.a.rows());
  checks.push_back({"joint observability", rank == n,
                    "rank of the global observability matrix is " + std::to_string(rank) +
                        " of " + std::to_string(n)});

  std::optional<topology::CommunicationPlan> plan;
  try {
    plan = simnet::build_plan(s);
    std::ostringstream os;
    for (const auto& np : plan->nodes) {
      os << (np.node ? ", " : "") << "node " << np.node + 1 << " {";
      for (std::size_t k = 0; k < np.cn_set.size(); ++k) os << (k ? ", " : "") << np.cn_set[k] + 1;
      os << "}";
    }
    checks.push_back({"complementary-neighbour sets", true, os.str()});
  } catch (const Error& e) {
    checks.push_back({"complementary-neighbour sets", false, e.detail()});
  }

  checks.push_back({"uniform edge cost", true, "every edge has unit cost"});

  if (!plan) {
    checks.push_back({"bounded delay", false, "not checked: no communication plan"});
  } else {
    const auto v = simnet::delay_violations(s, *plan);
    if (v.empty()) {
      std::ostringstream os;
      os << "every relay path stays within tau_bar = " << s.delays.tau_bar << " s";
      checks.push_back({"bounded delay", true, os.str()});
    } else {
      std::string all;
      for (const auto& line : v) all += (all.empty() ? "" : "; ") + line;
      checks.push_back({"bounded delay", false, all});
    }
  }
  return checks;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 computation failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(md[i]);
  return os.str();
}

std::string scenario_digest(const simnet::Scenario& s) {
  return sha256_hex(scenario_io::write_scenario(s));
}

json plan_json(const topology::CommunicationPlan& plan) {
  json doc;
  doc["state_dim"] = plan.state_dim;
  json nodes = json::array();
  for (const auto& np : plan.nodes) {
    json node;
    node["node"] = np.node + 1;
    node["cn_set"] = one_based(np.cn_set);
    node["step_bound"] = np.step_bound;
    node["exhaustive_search"] = np.exhaustive;
    json sources = json::array();
    for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
      json src;
      src["from"] = np.cn_set[k] + 1;
      src["rows"] = one_based(np.rows[k]);
      src["relay_path"] = one_based(np.relay_paths[k]);
      sources.push_back(std::move(src));
    }
    node["sources"] = std::move(sources);
    node["fusion_condition"] = np.fusion_condition;
    node["fusion_matrix"] = matrix_json(np.fusion_matrix);
    nodes.push_back(std::move(node));
  }
  doc["nodes"] = std::move(nodes);
  doc["warnings"] = plan.warnings;
  return doc;
}

std::string node_csv(const simnet::RunRecord& rec, int node) {
  const auto& tr = rec.nodes.at(static_cast<std::size_t>(node));
  const Eigen::Index n = rec.scenario.a.rows();
  const bool bounds = rec.scenario.run.bounds;
  std::string out = "t";
  for (Eigen::Index c = 0; c < n; ++c) out += ",x" + std::to_string(c + 1);
  for (Eigen::Index c = 0; c < n; ++c) out += ",xhat" + std::to_string(c + 1);
  out += ",err";
  if (bounds) out += ",bound";
  out += "\n";
  out.reserve(tr.t.size() * static_cast<std::size_t>(2 * n + 3) * 22);
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    out += scenario_io::format_number(tr.t[k]);
    for (Eigen::Index c = 0; c < n; ++c) (out += ',') += scenario_io::format_number(tr.x[k](c));
    for (Eigen::Index c = 0; c < n; ++c) (out += ',') += scenario_io::format_number(tr.x_hat[k](c));
    (out += ',') += scenario_io::format_number(tr.error[k]);
    if (bounds) (out += ',') += scenario_io::format_number(tr.bound[k]);
    out += '\n';
  }
  return out;
}

json metrics_json(const simnet::RunRecord& rec, const std::string& digest, const RunFlags& flags,
                  const std::vector<std::string>& csv_files) {
  const auto& s = rec.scenario;
  json doc;
  doc["tool"] = "ftobs";
  doc["version"] = std::string(kVersion);
  doc["scenario"] = s.name;
  doc["digest"] = digest;
  doc["flags"] = {{"noise", flags.noise}, {"delay", flags.delay}, {"bounds", flags.bounds}};

  json defaults;
  std::vector<double> x0(s.run.x0.data(), s.run.x0.data() + s.run.x0.size());
  defaults["x0"] = x0;
  defaults["seed"] = s.run.seed;
  if (s.noise.disturbance.components.empty()) {
    defaults["disturbance_components"] = "all";
  } else {
    defaults["disturbance_components"] = one_based(s.noise.disturbance.components);
  }
  defaults["delay_draws"] = "once per message, per hop, capped at tau_bar";
  doc["defaults"] = std::move(defaults);

  doc["dt"] = s.run.dt;
  doc["t_end"] = s.run.t_end;
  doc["t_delta"] = s.run.t_delta;
  doc["tau_bar"] = rec.tau_bar;
  doc["delay_steps"] = rec.delay_steps;
  doc["guaranteed_activation"] = rec.guaranteed_activation;
  doc["steps"] = rec.steps;

  long long violations = 0;
  json nodes = json::array();
  for (std::size_t i = 0; i < rec.nodes.size(); ++i) {
    const auto& tr = rec.nodes[i];
    json node;
    node["node"] = i + 1;
    node["csv"] = i < csv_files.size() ? csv_files[i] : "";
    node["activation_time"] = tr.activation_time ? json(*tr.activation_time) : json(nullptr);
    node["max_error_after_activation"] = number_or_null(tr.max_error_after_activation);
    if (flags.bounds) node["bound_violations"] = tr.bound_violations;
    node["messages_received"] = tr.delivered;
    node["delay"] = {{"min", tr.delay_min}, {"mean", tr.delay_mean}, {"max", tr.delay_max}};
    violations += tr.bound_violations;
    nodes.push_back(std::move(node));
  }
  doc["nodes"] = std::move(nodes);
  doc["bound_violations"] = flags.bounds ? json(violations) : json(nullptr);

  json loads = json::array();
  for (std::size_t a = 0; a < rec.edge_messages.size(); ++a) {
    for (std::size_t b = 0; b < rec.edge_messages[a].size(); ++b) {
      if (rec.edge_messages[a][b] == 0) continue;
      loads.push_back({{"from", a + 1}, {"to", b + 1}, {"messages", rec.edge_messages[a][b]}});
    }
  }
  doc["edge_loads"] = std::move(loads);
  doc["plan"] = plan_json(rec.plan);
  doc["plan_report"] = topology::format_plan(rec.plan);
  return doc;
}

RunOutputs write_run(const simnet::RunRecord& rec, const RunFlags& flags,
                     const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  RunOutputs outs;
  outs.digest = scenario_digest(rec.scenario);
  for (std::size_t i = 0; i < rec.nodes.size(); ++i) {
    const std::string name = "node_" + std::to_string(i + 1) + ".csv";
    write_file(out_dir / name, node_csv(rec, static_cast<int>(i)));
    outs.csv_files.push_back(name);
  }
  outs.metrics_file = "metrics.json";
  write_file(out_dir / outs.metrics_file,
             metrics_json(rec, outs.digest, flags, outs.csv_files).dump(2) + "\n");
  outs.plan_file = "plan.json";
  json plan;
  plan["scenario"] = rec.scenario.name;
  plan["digest"] = outs.digest;
  plan["plan"] = plan_json(rec.plan);
  write_file(out_dir / outs.plan_file, plan.dump(2) + "\n");
  write_file(out_dir / "scenario.yaml", scenario_io::write_scenario(rec.scenario));
  return outs;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fixed-time distributed observer: validate, plan and simulate sensor networks",
               "ftobs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Source src;
  std::string out_dir = "ftobs-out";
  auto add_source = [&](CLI::App* cmd) {
    cmd->add_option("scenario", src.path, "Scenario file (YAML)");
    cmd->add_option("--preset", src.preset, "Built-in scenario instead of a file (reference)");
  };

  auto* validate = app.add_subcommand("validate", "Check the scenario and the standing assumptions");
  add_source(validate);

  auto* plan = app.add_subcommand("plan", "Compute and export the communication plan");
  add_source(plan);
  plan->add_option("--out", out_dir, "Output directory for plan.json");

  simnet::RunOptions opts;
  RunFlags flags;
  bool no_noise = false;
  bool no_delay = false;
  bool bounds = false;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double t_end = 0.0;
  auto* run = app.add_subcommand("run", "Simulate and write per-node CSVs and metrics");
  add_source(run);
  run->add_flag("--no-noise", no_noise, "Disable measurement noise and disturbance");
  run->add_flag("--no-delay", no_delay, "Deliver messages instantly (tau_bar = 0)");
  run->add_flag("--bounds", bounds, "Compute robustness bounds and count violations");
  auto* seed_opt = run->add_option("--seed", seed, "Noise seed");
  auto* dt_opt = run->add_option("--dt", dt, "Step size in seconds")->check(CLI::PositiveNumber);
  auto* t_end_opt = run->add_option("--t-end", t_end, "End time in seconds")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'ftobs --help' for usage\n";
    return kIoOrParse;
  }

  try {
    if (validate->parsed()) return cmd_validate(src, out);
    if (plan->parsed()) return cmd_plan(src, out_dir, out, err);
    flags.noise = !no_noise;
    flags.delay = !no_delay;
    opts.noise = flags.noise;
    opts.delay = flags.delay;
    if (*seed_opt) opts.seed = seed;
    if (*dt_opt) opts.dt = dt;
    if (*t_end_opt) opts.t_end = t_end;
    if (bounds) opts.bounds = true;
    const auto s = load(src);
    flags.bounds = bounds || s.run.bounds;
    return cmd_run(src, opts, flags, out_dir, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace ftobs::cli
