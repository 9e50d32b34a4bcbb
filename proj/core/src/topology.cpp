#include "ftobs/topology.hpp"

#include <algorithm>
#include <deque>
#include <iomanip>
#include <sstream>

namespace ftobs::topology {

namespace {

Matrix stack_maps(std::span<const Matrix> maps, int self, const NodeSet& others,
                  Eigen::Index n) {
  std::vector<Matrix> blocks{maps[static_cast<std::size_t>(self)]};
  for (int j : others) blocks.push_back(maps[static_cast<std::size_t>(j)]);
  return numkit::vstack(blocks, n);
}

bool reaches_full_rank(std::span<const Matrix> maps, int self, const NodeSet& others,
                       Eigen::Index n, numkit::RankTolerance tol) {
  const Matrix s = stack_maps(maps, self, others, n);
  if (s.rows() < n) return false;
  return numkit::numerical_rank(numkit::normalize_rows(s), tol) == static_cast<std::size_t>(n);
}

// Calls visit(subset) for subsets of `pool` of size k in lexicographic order
// until it returns true.
template <class Visit>
bool for_each_combination(const NodeSet& pool, std::size_t k, Visit&& visit) {
  if (k > pool.size()) return false;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  NodeSet subset(k);
  while (true) {
    for (std::size_t i = 0; i < k; ++i) subset[i] = pool[idx[i]];
    if (visit(subset)) return true;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == pool.size() - k + (i - 1)) --i;
    if (i == 0) return false;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::string label(const NodeSet& s) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i] + 1;
  os << "}";
  return os.str();
}

}  // namespace

Digraph::Digraph(IntMatrix adjacency) : adj_(std::move(adjacency)) {
  if (adj_.rows() != adj_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "adjacency matrix must be square");
  }
  for (Eigen::Index i = 0; i < adj_.rows(); ++i) {
    for (Eigen::Index j = 0; j < adj_.cols(); ++j) {
      const auto v = adj_(i, j);
      if (v != 0 && v != 1) {
        throw Error(ErrorCode::InvalidMatrix, "adjacency entries must be 0 or 1");
      }
      if (i == j && v != 0) {
        throw Error(ErrorCode::InvalidMatrix, "adjacency diagonal must be zero");
      }
    }
  }
}

IntMatrix adjacency_power(const Digraph& g, int length) {
  const auto n = static_cast<Eigen::Index>(g.size());
  IntMatrix p = IntMatrix::Identity(n, n);
  for (int k = 0; k < length; ++k) p = p * g.adjacency();
  return p;
}

IntMatrix data_flow_matrix(const Digraph& g, int length) {
  if (length < 1) throw Error(ErrorCode::DomainError, "data-flow matrix needs L >= 1");
  const auto n = static_cast<Eigen::Index>(g.size());
  IntMatrix sum = IntMatrix::Zero(n, n);
  IntMatrix p = IntMatrix::Identity(n, n);
  for (int k = 0; k < length; ++k) {
    // Booleanise as we go; only reachability matters and counts would overflow.
    p = (p * g.adjacency()).unaryExpr([](long long v) { return v != 0 ? 1LL : 0LL; });
    sum += p;
  }
  return sum.unaryExpr([](long long v) { return v != 0 ? 1LL : 0LL; });
}

NodeSet reachable_set(const Digraph& g, int node, int length) {
  if (node < 0 || node >= g.size()) throw Error(ErrorCode::DomainError, "node index out of range");
  NodeSet out;
  if (length <= 0) return out;
  const IntMatrix d = data_flow_matrix(g, length);
  for (int j = 0; j < g.size(); ++j) {
    if (j != node && d(j, node) != 0) out.push_back(j);
  }
  return out;
}

std::vector<int> shortest_path(const Digraph& g, int from, int to) {
  const int n = g.size();
  // Hop distance of every node to `to`, by BFS on reversed edges.
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::deque<int> queue{to};
  dist[static_cast<std::size_t>(to)] = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int u = 0; u < n; ++u) {
      if (g.edge(u, v) && dist[static_cast<std::size_t>(u)] < 0) {
        dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
        queue.push_back(u);
      }
    }
  }
  if (dist[static_cast<std::size_t>(from)] < 0) return {};
  std::vector<int> path{from};
  int at = from;
  while (at != to) {
    for (int k = 0; k < n; ++k) {
      if (g.edge(at, k) && dist[static_cast<std::size_t>(k)] == dist[static_cast<std::size_t>(at)] - 1) {
        at = k;
        break;
      }
    }
    path.push_back(at);
  }
  return path;
}

std::size_t NodePlan::retained_row_count() const {
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  return total;
}

std::vector<Subscription> CommunicationPlan::subscriptions_of(int publisher) const {
  std::vector<Subscription> out;
  for (const auto& np : nodes) {
    for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
      if (np.cn_set[k] == publisher) out.push_back({np.node, np.rows[k], np.relay_paths[k]});
    }
  }
  return out;
}

CommunicationPlan optimize_cn_sets(const Digraph& g, std::span<const Matrix> maps,
                                   numkit::RankTolerance tol) {
  const int count = g.size();
  if (static_cast<int>(maps.size()) != count || count == 0) {
    throw Error(ErrorCode::DimensionMismatch, "one local map per graph node is required");
  }
  const Eigen::Index n = maps[0].cols();
  for (const auto& m : maps) {
    if (m.cols() != n) throw Error(ErrorCode::DimensionMismatch, "local maps disagree on n");
  }

  CommunicationPlan plan;
  plan.state_dim = static_cast<std::size_t>(n);
  for (int i = 0; i < count; ++i) {
    NodePlan np;
    np.node = i;
    const Matrix& own = maps[static_cast<std::size_t>(i)];
    const auto own_rank = static_cast<Eigen::Index>(own.rows());

    if (!reaches_full_rank(maps, i, {}, n, tol)) {
      int step = 0;
      NodeSet pool;
      for (int l = 1; l < std::max(count, 2); ++l) {
        pool = reachable_set(g, i, l);
        if (reaches_full_rank(maps, i, pool, n, tol)) {
          step = l;
          break;
        }
      }
      if (step == 0) {
        std::ostringstream os;
        os << "node " << i + 1 << " has no complementary-neighbour set";
        throw Error(ErrorCode::AssumptionViolated, os.str());
      }
      np.step_bound = step;

      if (pool.size() <= kExhaustiveSearchLimit) {
        for (std::size_t k = 1; k <= pool.size(); ++k) {
          const bool found = for_each_combination(pool, k, [&](const NodeSet& subset) {
            if (!reaches_full_rank(maps, i, subset, n, tol)) return false;
            np.cn_set = subset;
            return true;
          });
          if (found) break;
        }
      } else {
        np.exhaustive = false;
        plan.warnings.push_back("node " + std::to_string(i + 1) + ": reachable set of size " +
                                std::to_string(pool.size()) +
                                " exceeds the exhaustive limit; using greedy rank augmentation");
        NodeSet chosen;
        auto rank_of = [&](const NodeSet& s) {
          return numkit::numerical_rank(numkit::normalize_rows(stack_maps(maps, i, s, n)), tol);
        };
        while (!reaches_full_rank(maps, i, chosen, n, tol)) {
          std::size_t best_rank = rank_of(chosen);
          int best = -1;
          for (int j : pool) {
            if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
            NodeSet trial = chosen;
            trial.push_back(j);
            std::sort(trial.begin(), trial.end());
            const auto r = rank_of(trial);
            if (r > best_rank) {
              best_rank = r;
              best = j;
            }
          }
          if (best < 0) break;
          chosen.push_back(best);
          std::sort(chosen.begin(), chosen.end());
        }
        np.cn_set = chosen;
      }
    }

    // Keep exactly n - n_i rows out of the chosen neighbours' maps.
    std::vector<Matrix> blocks;
    std::vector<std::pair<std::size_t, std::size_t>> origin;  // (cn index, row)
    for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
      const Matrix& mj = maps[static_cast<std::size_t>(np.cn_set[k])];
      blocks.push_back(mj);
      for (Eigen::Index r = 0; r < mj.rows(); ++r) origin.emplace_back(k, static_cast<std::size_t>(r));
    }
    const Matrix candidates = numkit::vstack(blocks, n);
    const auto needed = static_cast<std::size_t>(n - own_rank);
    np.rows.assign(np.cn_set.size(), {});
    if (needed > 0) {
      for (std::size_t idx : numkit::pivoted_row_select(candidates, own, needed, tol)) {
        np.rows[origin[idx].first].push_back(origin[idx].second);
      }
    }
    for (auto& r : np.rows) std::sort(r.begin(), r.end());

    std::vector<Matrix> parts{own};
    for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
      parts.push_back(numkit::take_rows(maps[static_cast<std::size_t>(np.cn_set[k])], np.rows[k]));
      auto path = shortest_path(g, np.cn_set[k], i);
      if (path.empty()) {
        throw Error(ErrorCode::PlanInconsistent, "no relay path for a chosen neighbour");
      }
      np.relay_paths.push_back(std::move(path));
    }
    np.stacked = numkit::vstack(parts, n);
    if (np.stacked.rows() != n) {
      throw Error(ErrorCode::PlanInconsistent, "fusion stack of node " + std::to_string(i + 1) +
                                                   " is not square");
    }
    np.fusion_matrix = np.stacked.inverse();
    np.fusion_condition = numkit::condition_number(np.stacked);
    if (np.fusion_condition > kFusionConditionLimit) {
      std::ostringstream os;
      os << "node " << i + 1 << ": fusion matrix condition " << np.fusion_condition
         << " exceeds " << kFusionConditionLimit;
      plan.warnings.push_back(os.str());
    }
    plan.nodes.push_back(std::move(np));
  }
  return plan;
}

std::string format_plan(const CommunicationPlan& plan) {
  std::ostringstream os;
  os << "communication plan (n = " << plan.state_dim << ")\n";
  for (const auto& np : plan.nodes) {
    os << "node " << np.node + 1 << ": CN = " << label(np.cn_set) << ", P = " << np.step_bound
       << ", fusion cond = " << std::setprecision(6) << np.fusion_condition
       << (np.exhaustive ? "" : " (greedy)") << "\n";
    for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
      os << "  from " << np.cn_set[k] + 1 << ": rows [";
      for (std::size_t r = 0; r < np.rows[k].size(); ++r) os << (r ? ", " : "") << np.rows[k][r] + 1;
      os << "] via ";
      for (std::size_t h = 0; h < np.relay_paths[k].size(); ++h) {
        os << (h ? " -> " : "") << np.relay_paths[k][h] + 1;
      }
      os << "\n";
    }
  }
  for (const auto& w : plan.warnings) os << "warning: " << w << "\n";
  return os.str();
}

}  // namespace ftobs::topology
