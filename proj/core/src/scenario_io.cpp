#include "ftobs/scenario_io.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ftobs::scenario_io {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field,
                         const std::string& what) const {
    std::ostringstream os;
    os << source_;
    if (at.IsDefined() && at.Mark().line >= 0) {
      os << ":" << at.Mark().line + 1 << ":" << at.Mark().column + 1;
    }
    os << ": " << field << ": " << what;
    throw Error(ErrorCode::ParseError, os.str());
  }

  void only_keys(const YAML::Node& map, const std::string& field,
                 std::initializer_list<const char*> keys) const {
    if (!map.IsMap()) fail(map, field, "expected a mapping");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        fail(kv.first, field.empty() ? key : field + "." + key, "unknown key");
      }
    }
  }

  YAML::Node require(const YAML::Node& map, const char* key, const std::string& field) const {
    YAML::Node v = map[key];
    if (!v.IsDefined() || v.IsNull()) fail(map, join(field, key), "missing required field");
    return v;
  }

  double number(const YAML::Node& v, const std::string& field) const {
    if (!v.IsScalar()) fail(v, field, "expected a number");
    const auto text = v.Scalar();
    if (text == "nan" || text == ".nan" || text == "inf" || text == ".inf" || text == "-.inf") {
      fail(v, field, "expected a finite number");
    }
    try {
      return v.as<double>();
    } catch (const YAML::Exception&) {
      fail(v, field, "expected a number, got '" + text + "'");
    }
  }

  long long integer(const YAML::Node& v, const std::string& field) const {
    if (!v.IsScalar()) fail(v, field, "expected an integer");
    try {
      return v.as<long long>();
    } catch (const YAML::Exception&) {
      fail(v, field, "expected an integer, got '" + v.Scalar() + "'");
    }
  }

  std::uint64_t unsigned_integer(const YAML::Node& v, const std::string& field) const {
    if (!v.IsScalar()) fail(v, field, "expected a non-negative integer");
    try {
      return v.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      fail(v, field, "expected a non-negative integer, got '" + v.Scalar() + "'");
    }
  }

  bool boolean(const YAML::Node& v, const std::string& field) const {
    try {
      return v.as<bool>();
    } catch (const YAML::Exception&) {
      fail(v, field, "expected true or false");
    }
  }

  std::string text(const YAML::Node& v, const std::string& field) const {
    if (!v.IsScalar()) fail(v, field, "expected a string");
    return v.Scalar();
  }

  std::vector<double> numbers(const YAML::Node& v, const std::string& field) const {
    if (!v.IsSequence()) fail(v, field, "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(number(v[i], field + "[" + std::to_string(i + 1) + "]"));
    }
    return out;
  }

  Matrix matrix(const YAML::Node& v, const std::string& field) const {
    if (!v.IsSequence() || v.size() == 0) fail(v, field, "expected a non-empty list of rows");
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < v.size(); ++r) {
      rows.push_back(numbers(v[r], field + " row " + std::to_string(r + 1)));
      if (rows.back().size() != rows.front().size()) {
        fail(v[r], field, "row " + std::to_string(r + 1) + " has " +
                              std::to_string(rows.back().size()) + " entries, expected " +
                              std::to_string(rows.front().size()));
      }
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    return m;
  }

  static std::string join(const std::string& field, const char* key) {
    return field.empty() ? std::string(key) : field + "." + key;
  }

 private:
  std::string source_;
};

template <class F>
void optional(const YAML::Node& map, const char* key, F&& f) {
  const YAML::Node v = map[key];
  if (v.IsDefined() && !v.IsNull()) f(v);
}

simnet::DelayModel delay_model(const Reader& rd, const YAML::Node& v, const std::string& field) {
  const auto name = rd.text(v, field);
  if (name == "none") return simnet::DelayModel::None;
  if (name == "constant") return simnet::DelayModel::Constant;
  if (name == "uniform") return simnet::DelayModel::Uniform;
  rd.fail(v, field, "expected none, constant or uniform, got '" + name + "'");
}

const char* delay_model_name(simnet::DelayModel m) {
  switch (m) {
    case simnet::DelayModel::None: return "none";
    case simnet::DelayModel::Constant: return "constant";
    case simnet::DelayModel::Uniform: return "uniform";
  }
  return "none";
}

kernel::BankSpec bank_spec(const Reader& rd, const YAML::Node& v, const std::string& field,
                           bool allow_nodes) {
  if (allow_nodes) {
    rd.only_keys(v, field, {"omega0", "omega_step", "omega_bar", "delta_extra", "omegas", "nodes"});
  } else {
    rd.only_keys(v, field, {"omega0", "omega_step", "omega_bar", "delta_extra", "omegas"});
  }
  kernel::BankSpec k;
  optional(v, "omega0", [&](const YAML::Node& x) { k.omega0 = rd.number(x, field + ".omega0"); });
  optional(v, "omega_step", [&](const YAML::Node& x) { k.omega_step = rd.number(x, field + ".omega_step"); });
  optional(v, "omega_bar", [&](const YAML::Node& x) { k.omega_bar = rd.number(x, field + ".omega_bar"); });
  optional(v, "delta_extra", [&](const YAML::Node& x) {
    k.delta_extra = static_cast<int>(rd.integer(x, field + ".delta_extra"));
  });
  optional(v, "omegas", [&](const YAML::Node& x) { k.omegas = rd.numbers(x, field + ".omegas"); });
  return k;
}

simnet::EdgeDelay edge_delay(const Reader& rd, const YAML::Node& v, const std::string& field) {
  rd.only_keys(v, field, {"from", "to", "model", "value", "lo", "hi"});
  simnet::EdgeDelay e;
  e.from = static_cast<int>(rd.integer(rd.require(v, "from", field), field + ".from")) - 1;
  e.to = static_cast<int>(rd.integer(rd.require(v, "to", field), field + ".to")) - 1;
  e.model = delay_model(rd, rd.require(v, "model", field), field + ".model");
  optional(v, "value", [&](const YAML::Node& x) { e.lo = e.hi = rd.number(x, field + ".value"); });
  optional(v, "lo", [&](const YAML::Node& x) { e.lo = rd.number(x, field + ".lo"); });
  optional(v, "hi", [&](const YAML::Node& x) { e.hi = rd.number(x, field + ".hi"); });
  if (e.model == simnet::DelayModel::Constant) e.hi = e.lo;
  return e;
}

simnet::Scenario from_yaml(const YAML::Node& root, const Reader& rd) {
  simnet::Scenario s;
  rd.only_keys(root, "", {"name", "plant", "partition", "graph", "kernels", "delays", "noise", "run"});
  optional(root, "name", [&](const YAML::Node& x) { s.name = rd.text(x, "name"); });

  const YAML::Node plant = rd.require(root, "plant", "");
  rd.only_keys(plant, "plant", {"A", "C"});
  s.a = rd.matrix(rd.require(plant, "A", "plant"), "plant.A");
  s.c = rd.matrix(rd.require(plant, "C", "plant"), "plant.C");

  const YAML::Node part = rd.require(root, "partition", "");
  if (!part.IsSequence()) rd.fail(part, "partition", "expected a list of row counts");
  for (std::size_t i = 0; i < part.size(); ++i) {
    s.partition.push_back(static_cast<int>(rd.integer(part[i], "partition[" + std::to_string(i + 1) + "]")));
  }

  const YAML::Node graph = rd.require(root, "graph", "");
  rd.only_keys(graph, "graph", {"adjacency"});
  const YAML::Node adj = rd.require(graph, "adjacency", "graph");
  const Matrix am = rd.matrix(adj, "graph.adjacency");
  s.adjacency = topology::IntMatrix(am.rows(), am.cols());
  for (Eigen::Index i = 0; i < am.rows(); ++i) {
    for (Eigen::Index j = 0; j < am.cols(); ++j) {
      const double v = am(i, j);
      if (v != std::floor(v)) rd.fail(adj, "graph.adjacency", "entries must be integers");
      s.adjacency(i, j) = static_cast<long long>(v);
    }
  }

  optional(root, "kernels", [&](const YAML::Node& k) {
    s.kernels = bank_spec(rd, k, "kernels", true);
    optional(k, "nodes", [&](const YAML::Node& nodes) {
      if (!nodes.IsSequence()) rd.fail(nodes, "kernels.nodes", "expected a list");
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        s.node_kernels.push_back(
            bank_spec(rd, nodes[i], "kernels.nodes[" + std::to_string(i + 1) + "]", false));
      }
    });
  });

  optional(root, "delays", [&](const YAML::Node& d) {
    rd.only_keys(d, "delays", {"model", "value", "lo", "hi", "tau_bar", "edges"});
    optional(d, "model", [&](const YAML::Node& x) { s.delays.model = delay_model(rd, x, "delays.model"); });
    optional(d, "value", [&](const YAML::Node& x) { s.delays.lo = s.delays.hi = rd.number(x, "delays.value"); });
    optional(d, "lo", [&](const YAML::Node& x) { s.delays.lo = rd.number(x, "delays.lo"); });
    optional(d, "hi", [&](const YAML::Node& x) { s.delays.hi = rd.number(x, "delays.hi"); });
    optional(d, "tau_bar", [&](const YAML::Node& x) { s.delays.tau_bar = rd.number(x, "delays.tau_bar"); });
    optional(d, "edges", [&](const YAML::Node& edges) {
      if (!edges.IsSequence()) rd.fail(edges, "delays.edges", "expected a list");
      for (std::size_t i = 0; i < edges.size(); ++i) {
        s.delays.edges.push_back(edge_delay(rd, edges[i], "delays.edges[" + std::to_string(i + 1) + "]"));
      }
    });
    if (s.delays.model == simnet::DelayModel::Constant) s.delays.hi = s.delays.lo;
    if (s.delays.model == simnet::DelayModel::None) s.delays.lo = s.delays.hi = 0.0;
  });

  optional(root, "noise", [&](const YAML::Node& nz) {
    rd.only_keys(nz, "noise", {"measurement", "disturbance"});
    optional(nz, "measurement", [&](const YAML::Node& x) { s.noise.measurement = rd.number(x, "noise.measurement"); });
    optional(nz, "disturbance", [&](const YAML::Node& d) {
      const std::string f = "noise.disturbance";
      rd.only_keys(d, f, {"waveform", "amplitude", "angular_frequency", "components"});
      auto& dist = s.noise.disturbance;
      optional(d, "waveform", [&](const YAML::Node& x) {
        const auto w = rd.text(x, f + ".waveform");
        if (w == "none") {
          dist.waveform = simnet::Waveform::None;
        } else if (w == "sinusoid") {
          dist.waveform = simnet::Waveform::Sinusoid;
        } else {
          rd.fail(x, f + ".waveform", "expected none or sinusoid, got '" + w + "'");
        }
      });
      optional(d, "amplitude", [&](const YAML::Node& x) { dist.amplitude = rd.number(x, f + ".amplitude"); });
      optional(d, "angular_frequency", [&](const YAML::Node& x) {
        dist.angular_frequency = rd.number(x, f + ".angular_frequency");
      });
      optional(d, "components", [&](const YAML::Node& x) {
        if (!x.IsSequence()) rd.fail(x, f + ".components", "expected a list of 1-based indices");
        for (std::size_t i = 0; i < x.size(); ++i) {
          dist.components.push_back(static_cast<int>(rd.integer(x[i], f + ".components")) - 1);
        }
      });
    });
  });

  s.run.x0 = Vector::Ones(s.a.rows());
  optional(root, "run", [&](const YAML::Node& r) {
    rd.only_keys(r, "run", {"dt", "t_end", "t_delta", "x0", "seed", "output_interval", "cond_max",
                            "bounds", "rank_tol"});
    optional(r, "dt", [&](const YAML::Node& x) { s.run.dt = rd.number(x, "run.dt"); });
    optional(r, "t_end", [&](const YAML::Node& x) { s.run.t_end = rd.number(x, "run.t_end"); });
    optional(r, "t_delta", [&](const YAML::Node& x) { s.run.t_delta = rd.number(x, "run.t_delta"); });
    optional(r, "x0", [&](const YAML::Node& x) {
      const auto v = rd.numbers(x, "run.x0");
      s.run.x0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    });
    optional(r, "seed", [&](const YAML::Node& x) { s.run.seed = rd.unsigned_integer(x, "run.seed"); });
    optional(r, "output_interval", [&](const YAML::Node& x) {
      s.run.output_interval = rd.number(x, "run.output_interval");
    });
    optional(r, "cond_max", [&](const YAML::Node& x) { s.run.cond_max = rd.number(x, "run.cond_max"); });
    optional(r, "bounds", [&](const YAML::Node& x) { s.run.bounds = rd.boolean(x, "run.bounds"); });
    optional(r, "rank_tol", [&](const YAML::Node& x) { s.run.rank_tol = rd.number(x, "run.rank_tol"); });
  });
  return s;
}

// Writer --------------------------------------------------------------------

std::string row(const auto& values) {
  std::string out = "[";
  bool first = true;
  for (const auto& v : values) {
    if (!first) out += ", ";
    first = false;
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      out += format_number(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out + "]";
}

std::vector<double> row_of(const Matrix& m, Eigen::Index r) {
  std::vector<double> v;
  for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return v;
}

void write_matrix(std::ostringstream& os, const char* indent, const char* key, const Matrix& m) {
  os << indent << key << ":\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) os << indent << "  - " << row(row_of(m, r)) << "\n";
}

void write_bank(std::ostringstream& os, const std::string& indent, const kernel::BankSpec& k) {
  os << indent << "omega0: " << format_number(k.omega0) << "\n";
  os << indent << "omega_step: " << format_number(k.omega_step) << "\n";
  os << indent << "omega_bar: " << format_number(k.omega_bar) << "\n";
  os << indent << "delta_extra: " << k.delta_extra << "\n";
  os << indent << "omegas: " << row(k.omegas) << "\n";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

simnet::Scenario parse_scenario(std::string_view text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ":" << e.mark.line + 1 << ":" << e.mark.column + 1 << ": " << e.msg;
    throw Error(ErrorCode::ParseError, os.str());
  }
  const Reader rd(source);
  if (!root.IsMap()) rd.fail(root, "document", "expected a mapping at the top level");
  return from_yaml(root, rd);
}

simnet::Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

std::string write_scenario(const simnet::Scenario& s) {
  std::ostringstream os;
  os << "name: " << quoted(s.name) << "\n";
  os << "plant:\n";
  write_matrix(os, "  ", "A", s.a);
  write_matrix(os, "  ", "C", s.c);
  os << "partition: " << row(s.partition) << "\n";
  os << "graph:\n  adjacency:\n";
  for (Eigen::Index r = 0; r < s.adjacency.rows(); ++r) {
    std::vector<long long> v;
    for (Eigen::Index c = 0; c < s.adjacency.cols(); ++c) v.push_back(s.adjacency(r, c));
    os << "    - " << row(v) << "\n";
  }
  os << "kernels:\n";
  write_bank(os, "  ", s.kernels);
  if (!s.node_kernels.empty()) {
    os << "  nodes:\n";
    for (const auto& k : s.node_kernels) {
      std::ostringstream item;
      write_bank(item, "    ", k);
      std::string block = item.str();
      block.replace(0, 4, "  - ");
      os << block;
    }
  }
  os << "delays:\n";
  os << "  model: " << delay_model_name(s.delays.model) << "\n";
  os << "  lo: " << format_number(s.delays.lo) << "\n";
  os << "  hi: " << format_number(s.delays.hi) << "\n";
  os << "  tau_bar: " << format_number(s.delays.tau_bar) << "\n";
  if (!s.delays.edges.empty()) {
    os << "  edges:\n";
    for (const auto& e : s.delays.edges) {
      os << "    - {from: " << e.from + 1 << ", to: " << e.to + 1
         << ", model: " << delay_model_name(e.model) << ", lo: " << format_number(e.lo)
         << ", hi: " << format_number(e.hi) << "}\n";
    }
  }
  const auto& d = s.noise.disturbance;
  os << "noise:\n";
  os << "  measurement: " << format_number(s.noise.measurement) << "\n";
  os << "  disturbance:\n";
  os << "    waveform: " << (d.waveform == simnet::Waveform::Sinusoid ? "sinusoid" : "none") << "\n";
  os << "    amplitude: " << format_number(d.amplitude) << "\n";
  os << "    angular_frequency: " << format_number(d.angular_frequency) << "\n";
  std::vector<int> comps;
  for (int c : d.components) comps.push_back(c + 1);
  os << "    components: " << row(comps) << "\n";
  os << "run:\n";
  os << "  dt: " << format_number(s.run.dt) << "\n";
  os << "  t_end: " << format_number(s.run.t_end) << "\n";
  os << "  t_delta: " << format_number(s.run.t_delta) << "\n";
  std::vector<double> x0(s.run.x0.data(), s.run.x0.data() + s.run.x0.size());
  os << "  x0: " << row(x0) << "\n";
  os << "  seed: " << s.run.seed << "\n";
  os << "  output_interval: " << format_number(s.run.output_interval) << "\n";
  os << "  cond_max: " << format_number(s.run.cond_max) << "\n";
  os << "  bounds: " << (s.run.bounds ? "true" : "false") << "\n";
  os << "  rank_tol: " << format_number(s.run.rank_tol) << "\n";
  return os.str();
}

}  // namespace ftobs::scenario_io
