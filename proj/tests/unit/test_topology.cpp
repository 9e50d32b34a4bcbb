#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ftobs/observer.hpp"
#include "ftobs/topology.hpp"
#include "oracles.hpp"
#include "reference_system.hpp"

using namespace ftobs;
using namespace ftobs::topology;

namespace {

std::vector<Matrix> maps_for(const Matrix& a, const std::vector<Matrix>& blocks) {
  std::vector<Matrix> maps;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    maps.push_back(observer::NodeObserver(static_cast<int>(i), a, blocks[i]).local_map());
  }
  return maps;
}

Matrix stack(const std::vector<Matrix>& maps, const std::vector<int>& nodes, Eigen::Index n) {
  std::vector<Matrix> picked;
  for (int j : nodes) picked.push_back(maps[static_cast<std::size_t>(j)]);
  return numkit::vstack(picked, n);
}

IntMatrix random_graph(std::mt19937_64& rng, int n, double p) {
  std::bernoulli_distribution edge(p);
  IntMatrix a = IntMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = (i != j && edge(rng)) ? 1 : 0;
  }
  return a;
}

Digraph reference_graph() { return Digraph(refsys::scenario().adjacency); }

}  // namespace

TEST(Digraph, Validation) {
  IntMatrix bad = IntMatrix::Zero(2, 2);
  bad(0, 0) = 1;
  EXPECT_THROW(Digraph{bad}, Error);
  bad(0, 0) = 0;
  bad(0, 1) = 2;
  EXPECT_THROW(Digraph{bad}, Error);
  EXPECT_THROW(Digraph(IntMatrix::Zero(2, 3)), Error);
}

TEST(DataFlow, LengthOneIsAdjacency) {
  const auto g = reference_graph();
  EXPECT_EQ(data_flow_matrix(g, 1), g.adjacency());
  EXPECT_THROW(data_flow_matrix(g, 0), Error);
}

TEST(DataFlow, TwoStepPathOnReferenceGraph) {
  // 3 -> 2 -> 1 is the only two-hop route into node 1 from node 3.
  const auto g = reference_graph();
  EXPECT_EQ(g.adjacency()(2, 0), 0);
  EXPECT_EQ(data_flow_matrix(g, 2)(2, 0), 1);
}

TEST(DataFlow, CompleteGraph) {
  IntMatrix a = IntMatrix::Ones(4, 4);
  a.diagonal().setZero();
  const Digraph g(a);
  for (int L = 1; L <= 3; ++L) {
    const IntMatrix d = data_flow_matrix(g, L);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i != j) {
          EXPECT_EQ(d(i, j), 1);
        }
      }
    }
  }
}

TEST(ReachableSet, Basics) {
  const auto g = reference_graph();
  EXPECT_TRUE(reachable_set(g, 0, 0).empty());
  EXPECT_EQ(reachable_set(g, 0, 1), (NodeSet{1, 3}));
  IntMatrix iso = IntMatrix::Zero(3, 3);
  iso(0, 1) = 1;
  iso(1, 0) = 1;
  for (int L = 0; L <= 3; ++L) EXPECT_TRUE(reachable_set(Digraph(iso), 2, L).empty());
}

TEST(ReachableSet, MonotoneInLength) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Digraph g(random_graph(rng, 2 + trial % 5, 0.35));
    for (int i = 0; i < g.size(); ++i) {
      for (int L = 0; L < 5; ++L) {
        const auto a = reachable_set(g, i, L);
        const auto b = reachable_set(g, i, L + 1);
        EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
      }
    }
  }
}

TEST(ReachableSet, MatchesHopDistance) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    const Digraph g(random_graph(rng, 2 + trial % 5, 0.3));
    for (int i = 0; i < g.size(); ++i) {
      const auto dist = oracle::hop_distance_to(g.adjacency(), i);
      for (int L = 1; L <= 4; ++L) {
        NodeSet expect;
        for (int j = 0; j < g.size(); ++j) {
          if (j != i && dist[static_cast<std::size_t>(j)] > 0 && dist[static_cast<std::size_t>(j)] <= L) expect.push_back(j);
        }
        EXPECT_EQ(reachable_set(g, i, L), expect);
      }
    }
  }
}

TEST(AdjacencyPower, CountsWalks) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const Digraph g(random_graph(rng, 2 + trial % 4, 0.5));
    for (int L = 0; L <= 4; ++L) {
      const IntMatrix p = adjacency_power(g, L);
      for (int i = 0; i < g.size(); ++i) {
        for (int j = 0; j < g.size(); ++j) {
          EXPECT_EQ(p(i, j), oracle::count_walks(g.adjacency(), i, j, L)) << i << "->" << j << " L=" << L;
        }
      }
    }
  }
}

TEST(ShortestPath, HopCountAndTieBreak) {
  // 0 -> {1, 2} -> 3: two shortest routes, the lower next hop wins.
  IntMatrix a = IntMatrix::Zero(4, 4);
  a(0, 2) = a(0, 1) = a(1, 3) = a(2, 3) = 1;
  const Digraph g(a);
  EXPECT_EQ(shortest_path(g, 0, 3), (std::vector<int>{0, 1, 3}));
  EXPECT_TRUE(shortest_path(g, 3, 0).empty());
  EXPECT_EQ(shortest_path(g, 2, 2), (std::vector<int>{2}));
}

TEST(ShortestPath, LengthMatchesOracle) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 40; ++trial) {
    const Digraph g(random_graph(rng, 3 + trial % 4, 0.35));
    for (int to = 0; to < g.size(); ++to) {
      const auto dist = oracle::hop_distance_to(g.adjacency(), to);
      for (int from = 0; from < g.size(); ++from) {
        const auto path = shortest_path(g, from, to);
        if (dist[static_cast<std::size_t>(from)] < 0) {
          EXPECT_TRUE(path.empty());
          continue;
        }
        ASSERT_EQ(static_cast<int>(path.size()), dist[static_cast<std::size_t>(from)] + 1);
        for (std::size_t h = 0; h + 1 < path.size(); ++h) EXPECT_TRUE(g.edge(path[h], path[h + 1]));
      }
    }
  }
}

TEST(OptimizeCnSets, ReferencePlan) {
  const auto s = refsys::scenario();
  const auto maps = maps_for(s.a, refsys::output_blocks());
  const auto plan = optimize_cn_sets(reference_graph(), maps);
  ASSERT_EQ(plan.nodes.size(), 4u);
  const std::vector<NodeSet> expect{{1}, {2}, {1}, {0}};
  const std::vector<std::size_t> local{2, 5, 1, 5};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& np = plan.nodes[i];
    EXPECT_EQ(np.cn_set, expect[i]) << "node " << i + 1;
    EXPECT_EQ(np.step_bound, 1);
    EXPECT_EQ(np.retained_row_count(), 6 - local[i]);
    EXPECT_LE(np.fusion_condition, kFusionConditionLimit);
    EXPECT_LT((np.fusion_matrix * np.stacked - Matrix::Identity(6, 6)).norm(), 1e-9);
  }
  // Node 1 drops the link from 4, node 2 the link from 1.
  EXPECT_EQ(std::count(plan.nodes[0].cn_set.begin(), plan.nodes[0].cn_set.end(), 3), 0);
  EXPECT_EQ(std::count(plan.nodes[1].cn_set.begin(), plan.nodes[1].cn_set.end(), 0), 0);
  EXPECT_EQ(plan.nodes[0].rows[0].size(), 4u);
  EXPECT_EQ(plan.nodes[2].rows[0].size(), 5u);
  EXPECT_TRUE(plan.warnings.empty());
  EXPECT_NE(format_plan(plan).find("node 1: CN = {2}"), std::string::npos);
}

TEST(OptimizeCnSets, MinimalityAndInvariantsOnRandomSystems) {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 30; ++trial) {
    const auto net = oracle::random_network(rng, 2 + trial % 4, 2 + trial % 4);
    std::vector<Matrix> maps;
    try {
      maps = maps_for(net.a, net.c_blocks);
    } catch (const Error&) {
      continue;
    }
    CommunicationPlan plan;
    try {
      plan = optimize_cn_sets(Digraph(net.adjacency), maps);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::AssumptionViolated);
      continue;
    }
    ++checked;
    const Digraph g(net.adjacency);
    const auto n = net.a.rows();
    for (const auto& np : plan.nodes) {
      EXPECT_EQ(np.stacked.rows(), n);
      EXPECT_EQ(np.retained_row_count() + static_cast<std::size_t>(maps[static_cast<std::size_t>(np.node)].rows()),
                static_cast<std::size_t>(n));
      const auto pool = reachable_set(g, np.node, np.step_bound);
      for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
        EXPECT_TRUE(std::binary_search(pool.begin(), pool.end(), np.cn_set[k]));
        EXPECT_LE(static_cast<int>(np.relay_paths[k].size()) - 1, np.step_bound);
        EXPECT_EQ(np.relay_paths[k].front(), np.cn_set[k]);
        EXPECT_EQ(np.relay_paths[k].back(), np.node);
      }
      // Dropping any member breaks the rank condition.
      for (std::size_t drop = 0; drop < np.cn_set.size(); ++drop) {
        std::vector<int> rest{np.node};
        for (std::size_t k = 0; k < np.cn_set.size(); ++k) {
          if (k != drop) rest.push_back(np.cn_set[k]);
        }
        EXPECT_LT(numkit::numerical_rank(numkit::normalize_rows(stack(maps, rest, n))), static_cast<std::size_t>(n));
      }
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(OptimizeCnSets, FullyObservableNodeNeedsNobody) {
  const auto s = refsys::scenario();
  std::vector<Matrix> maps{Matrix::Identity(6, 6), Matrix::Identity(6, 6)};
  IntMatrix a = IntMatrix::Zero(2, 2);
  a(0, 1) = a(1, 0) = 1;
  const auto plan = optimize_cn_sets(Digraph(a), maps);
  EXPECT_TRUE(plan.nodes[0].cn_set.empty());
  EXPECT_EQ(plan.nodes[0].step_bound, 0);
  EXPECT_LT((plan.nodes[0].fusion_matrix - Matrix::Identity(6, 6)).norm(), 1e-15);
  (void)s;
}

TEST(OptimizeCnSets, MissingCnSetReported) {
  const auto s = refsys::scenario();
  const auto maps = maps_for(s.a, refsys::output_blocks());
  IntMatrix a = refsys::scenario().adjacency;
  a.col(2).setZero();  // nobody sends to node 3
  try {
    optimize_cn_sets(Digraph(a), maps);
    ADD_FAILURE() << "expected AssumptionViolated";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AssumptionViolated);
    EXPECT_NE(std::string(e.what()).find("node 3"), std::string::npos);
  }
}

TEST(OptimizeCnSets, LargeNeighbourhoodFallsBackToGreedy) {
  // Node 0 sees nothing; 13 neighbours each see one coordinate of a 3-state plant.
  const int count = 14;
  std::vector<Matrix> maps{Matrix(0, 3)};
  for (int j = 1; j < count; ++j) {
    Matrix m = Matrix::Zero(1, 3);
    m(0, j % 3) = 1.0 + j;
    maps.push_back(m);
  }
  IntMatrix a = IntMatrix::Zero(count, count);
  for (int j = 1; j < count; ++j) a(j, 0) = a(0, j) = 1;
  const auto plan = optimize_cn_sets(Digraph(a), maps);
  const auto& np = plan.nodes[0];
  EXPECT_FALSE(np.exhaustive);
  EXPECT_EQ(np.cn_set, (NodeSet{1, 2, 3}));
  EXPECT_FALSE(plan.warnings.empty());
}

TEST(OptimizeCnSets, AgreesWithBruteForceOracle) {
  std::mt19937_64 rng(97);
  int matched = 0;
  for (int trial = 0; trial < 400 && matched < 50; ++trial) {
    const int nodes = 2 + trial % 4;
    const int n = 2 + (trial / 4) % 4;
    const auto net = oracle::random_network(rng, nodes, n);
    std::vector<Matrix> maps;
    try {
      maps = maps_for(net.a, net.c_blocks);
    } catch (const Error&) {
      continue;
    }
    std::vector<oracle::CnOracle> expect;
    bool feasible = true;
    for (int i = 0; i < nodes; ++i) {
      expect.push_back(oracle::brute_force_cn(net.adjacency, net.a, net.c_blocks, i));
      feasible = feasible && expect.back().step >= 0;
    }
    if (!feasible) {
      EXPECT_THROW(optimize_cn_sets(Digraph(net.adjacency), maps), Error);
      continue;
    }
    const auto plan = optimize_cn_sets(Digraph(net.adjacency), maps);
    for (int i = 0; i < nodes; ++i) {
      const auto& np = plan.nodes[static_cast<std::size_t>(i)];
      EXPECT_EQ(np.cn_set.size(), expect[static_cast<std::size_t>(i)].set.size()) << "trial " << trial << " node " << i;
      EXPECT_EQ(np.cn_set, expect[static_cast<std::size_t>(i)].set) << "trial " << trial << " node " << i;
      EXPECT_EQ(np.step_bound, expect[static_cast<std::size_t>(i)].step) << "trial " << trial << " node " << i;
    }
    ++matched;
  }
  EXPECT_EQ(matched, 50);
}

TEST(RankIdentity, ReferenceSubsets) {
  // rank([T_i_alpha, i in S]) = rank(obsv(A, C_S)) for every non-empty S.
  const auto s = refsys::scenario();
  const auto blocks = refsys::output_blocks();
  const auto maps = maps_for(s.a, blocks);
  for (unsigned mask = 1; mask < 16; ++mask) {
    std::vector<int> nodes;
    std::vector<Matrix> cs;
    for (int i = 0; i < 4; ++i) {
      if (mask & (1u << i)) {
        nodes.push_back(i);
        cs.push_back(blocks[static_cast<std::size_t>(i)]);
      }
    }
    const auto lhs = numkit::numerical_rank(numkit::normalize_rows(stack(maps, nodes, 6)));
    const auto rhs = numkit::numerical_rank(oracle::obsv(s.a, numkit::vstack(cs, 6)));
    EXPECT_EQ(lhs, rhs) << "mask " << mask;
  }
}

TEST(RankIdentity, RandomObservableSystems) {
  std::mt19937_64 rng(1234);
  int done = 0;
  for (int trial = 0; trial < 1000 && done < 100; ++trial) {
    const int n = 2 + trial % 5;
    const int nodes = 2 + trial % 3;
    const auto net = oracle::random_network(rng, nodes, n);
    const Matrix c_all = numkit::vstack(net.c_blocks, n);
    if (numkit::numerical_rank(oracle::obsv(net.a, c_all)) != static_cast<std::size_t>(n)) continue;
    std::vector<Matrix> maps;
    try {
      maps = maps_for(net.a, net.c_blocks);
    } catch (const Error&) {
      continue;
    }
    for (unsigned mask = 1; mask < (1u << nodes); ++mask) {
      std::vector<int> picked;
      std::vector<Matrix> cs;
      for (int i = 0; i < nodes; ++i) {
        if (mask & (1u << i)) {
          picked.push_back(i);
          cs.push_back(net.c_blocks[static_cast<std::size_t>(i)]);
        }
      }
      EXPECT_EQ(numkit::numerical_rank(numkit::normalize_rows(stack(maps, picked, n))),
                numkit::numerical_rank(oracle::obsv(net.a, numkit::vstack(cs, n))))
          << "trial " << trial << " mask " << mask;
    }
    ++done;
  }
  EXPECT_EQ(done, 100);
}
