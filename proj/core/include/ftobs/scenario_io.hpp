#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ftobs/simnet.hpp"

namespace ftobs::scenario_io {

/// Parse a scenario document. Syntax and schema problems raise ParseError
/// with "source:line:column: field: message"; nothing is range-checked here
/// (see simnet::validate_scenario).
simnet::Scenario parse_scenario(std::string_view text, const std::string& source = "<scenario>");

/// Throws IoError if the file cannot be read.
simnet::Scenario load_scenario(const std::filesystem::path& path);

/// Deterministic YAML rendering of every field, in a fixed order and with
/// shortest round-trip numbers. parse_scenario(write_scenario(s)) == s.
std::string write_scenario(const simnet::Scenario& s);

/// Shortest decimal string that reads back to exactly `v`; "nan"/"inf" for
/// non-finite values.
std::string format_number(double v);

}  // namespace ftobs::scenario_io
