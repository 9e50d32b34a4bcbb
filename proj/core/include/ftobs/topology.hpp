#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ftobs/numkit.hpp"

namespace ftobs::topology {

using IntMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;
using NodeSet = std::vector<int>;  // sorted, 0-based node indices

/// Directed communication graph; adjacency(i, j) = 1 iff i can send to j.
class Digraph {
 public:
  explicit Digraph(IntMatrix adjacency);

  int size() const noexcept { return static_cast<int>(adj_.rows()); }
  bool edge(int from, int to) const { return adj_(from, to) != 0; }
  const IntMatrix& adjacency() const noexcept { return adj_; }

 private:
  IntMatrix adj_;
};

/// A^L with exact integer arithmetic; entry (i, j) counts i -> j walks of length L.
IntMatrix adjacency_power(const Digraph& g, int length);

/// bool(A + A^2 + ... + A^L).
IntMatrix data_flow_matrix(const Digraph& g, int length);

/// Nodes j != i with a directed walk j -> i of length <= L. Empty for L = 0.
NodeSet reachable_set(const Digraph& g, int node, int length);

/// Fewest-hop path from -> to (inclusive), ties going to the smallest next hop.
/// Empty if `to` is unreachable.
std::vector<int> shortest_path(const Digraph& g, int from, int to);

struct NodePlan {
  int node = 0;
  int step_bound = 0;                              // P_i
  NodeSet cn_set;                                  // CN_i^opt
  std::vector<std::vector<std::size_t>> rows;      // retained rows of T_j_alpha, per cn_set entry
  std::vector<std::vector<int>> relay_paths;       // j -> ... -> i, per cn_set entry
  Matrix stacked;                                  // [T_i_alpha; col T*_j_alpha], n x n
  Matrix fusion_matrix;                            // stacked^{-1}
  double fusion_condition = 1.0;
  bool exhaustive = true;

  std::size_t retained_row_count() const;
};

/// What node j sends to one consumer.
struct Subscription {
  int consumer = 0;
  std::vector<std::size_t> rows;
  std::vector<int> path;
};

struct CommunicationPlan {
  std::size_t state_dim = 0;
  std::vector<NodePlan> nodes;
  std::vector<std::string> warnings;

  /// Everyone who needs a slice of node j's estimate.
  std::vector<Subscription> subscriptions_of(int publisher) const;
};

inline constexpr std::size_t kExhaustiveSearchLimit = 12;
inline constexpr double kFusionConditionLimit = 1e8;

/// Offline choice of complementary-neighbour sets and retained rows.
///
/// For each node: find the smallest step P with rank([T_i; T_j, j in N_i^P]) = n,
/// take the smallest subset of N_i^P (then lexicographically smallest) that
/// still reaches rank n, and keep exactly n - n_i of its rows.
/// Throws AssumptionViolated when some node has no such set.
CommunicationPlan optimize_cn_sets(const Digraph& g, std::span<const Matrix> maps,
                                   numkit::RankTolerance tol = {});

/// Human-readable summary, 1-based node labels.
std::string format_plan(const CommunicationPlan& plan);

}  // namespace ftobs::topology
