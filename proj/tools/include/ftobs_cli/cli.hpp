#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ftobs/simnet.hpp"
#include "ftobs/topology.hpp"

namespace ftobs::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidationFailed = 2,
  kRuntimeFailure = 3,
  kIoOrParse = 4,
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Static scenario checks, then joint observability, complementary-neighbour
/// sets, uniform edge cost and the relay delay bound.
std::vector<Check> validate_assumptions(const simnet::Scenario& s);

std::string sha256_hex(std::string_view data);

/// Hash of the canonical scenario text.
std::string scenario_digest(const simnet::Scenario& s);

nlohmann::ordered_json plan_json(const topology::CommunicationPlan& plan);

/// t, x1..xn, xhat1..xhatn, err[, bound]
std::string node_csv(const simnet::RunRecord& rec, int node);

struct RunFlags {
  bool noise = true;
  bool delay = true;
  bool bounds = false;
};

nlohmann::ordered_json metrics_json(const simnet::RunRecord& rec, const std::string& digest,
                                    const RunFlags& flags,
                                    const std::vector<std::string>& csv_files);

/// Files written by a run, relative to the output directory.
struct RunOutputs {
  std::vector<std::string> csv_files;
  std::string metrics_file;
  std::string plan_file;
  std::string digest;
};

RunOutputs write_run(const simnet::RunRecord& rec, const RunFlags& flags,
                     const std::filesystem::path& out_dir);

/// Full command line, excluding argv[0]. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ftobs::cli
