#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "datasp/engine.hpp"
#include "datasp/inference.hpp"
#include "datasp/oracle.hpp"
#include "datasp/shortest_paths.hpp"
#include "fixtures.hpp"

using namespace datasp;
using datasp::testing::four_node_fixture;
using datasp::testing::random_connected_matrix;

namespace {

// The 20 walks 0 -> 3 tabulated for the |i-j| fixture, with their costs.
const std::vector<std::pair<Path, double>> kTabulated{
    {{0, 3}, 3},
    {{0, 1, 3}, 3},
    {{0, 2, 3}, 3},
    {{0, 1, 2, 3}, 3},
    {{0, 1, 0, 2, 3}, 5},
    {{0, 1, 2, 1, 3}, 5},
    {{0, 2, 1, 3}, 5},
    {{0, 1, 0, 3}, 5},
    {{0, 1, 2, 0, 1, 3}, 7},
    {{0, 1, 0, 2, 1, 3}, 7},
    {{0, 2, 0, 3}, 7},
    {{0, 1, 2, 1, 0, 3}, 7},
    {{0, 2, 1, 0, 3}, 7},
    {{0, 2, 0, 1, 3}, 7},
    {{0, 1, 2, 0, 3}, 7},
    {{0, 1, 0, 2, 0, 1, 3}, 9},
    {{0, 2, 0, 1, 0, 3}, 9},
    {{0, 1, 2, 0, 1, 0, 3}, 9},
    {{0, 1, 0, 2, 0, 3}, 9},
    {{0, 1, 0, 2, 1, 0, 3}, 9},
};

// Independent support check: does the recursion of the sampler reach `w`?
// Tries every split at an occurrence of the highest interior node.
bool visitable(const Path& w, std::size_t lo, std::size_t hi, std::size_t bound) {
  if (hi == lo + 1) return true;
  Node h = 0;
  for (std::size_t t = lo + 1; t < hi; ++t) h = std::max(h, w[t]);
  if (h >= bound || h == w[lo] || h == w[hi]) return false;
  for (std::size_t t = lo + 1; t < hi; ++t)
    if (w[t] == h && visitable(w, lo, t, h) && visitable(w, t, hi, h)) return true;
  return false;
}

CostMatrix fixture_matrix_with_inf_pair() {
  CostMatrix m = four_node_fixture();
  m(0, 3) = kInf;
  m(3, 0) = kInf;
  return m;
}

}  // namespace

TEST(Oracle, FixtureWalkSpace) {
  const auto walks = enumerate_visitable_walks(four_node_fixture(), 0, 3, 2);
  std::map<Path, double> got;
  for (const auto& w : walks) got[w.nodes] = w.cost;
  for (const auto& [path, cost] : kTabulated) {
    ASSERT_TRUE(got.contains(path));
    EXPECT_EQ(got[path], cost);
  }
  // One walk beyond the table: cost 11, probability about 7e-5.
  EXPECT_EQ(walks.size(), 21u);
  EXPECT_TRUE(got.contains(Path{0, 1, 0, 2, 0, 1, 0, 3}));
  EXPECT_EQ((got[Path{0, 1, 0, 2, 0, 1, 0, 3}]), 11.0);
  EXPECT_FALSE(got.contains(Path{0, 2, 0, 2, 3}));
}

TEST(Oracle, WalksCarryTheirCostAndHighestNode) {
  const auto m = random_connected_matrix(5, 0.5, 8);
  for (const auto& w : enumerate_visitable_walks(m, 1, 3, 4)) {
    EXPECT_EQ(w.cost, path_cost(m, w.nodes));
    if (w.direct()) {
      EXPECT_EQ(w.nodes.size(), 2u);
    } else {
      EXPECT_EQ(w.highest, *std::max_element(w.nodes.begin() + 1, w.nodes.end() - 1));
    }
    EXPECT_TRUE(visitable(w.nodes, 0, w.nodes.size() - 1, 5));
  }
}

TEST(Oracle, TwoNodeGraph) {
  CostMatrix m(2);
  m(0, 1) = 1.5;
  const auto walks = enumerate_visitable_walks(m, 0, 1, 1);
  ASSERT_EQ(walks.size(), 1u);
  EXPECT_EQ(walks[0].nodes, (Path{0, 1}));
  EXPECT_TRUE(enumerate_visitable_walks(m, 1, 0, 1).empty());
}

TEST(Oracle, Guards) {
  EXPECT_THROW(enumerate_visitable_walks(CostMatrix(11), 0, 1, 10), OracleRefusal);
  CostMatrix dense(10);
  for (Node i = 0; i < 10; ++i)
    for (Node j = 0; j < 10; ++j)
      if (i != j) dense(i, j) = 1.0;
  EXPECT_THROW(enumerate_visitable_walks(dense, 0, 9, 9), OracleRefusal);
}

TEST(Oracle, MaxentDistribution) {
  const auto walks = enumerate_visitable_walks(four_node_fixture(), 0, 3, 3);
  const auto p = maxent_distribution(walks, Beta(1.0));
  EXPECT_NEAR(p.at(Path{0, 3}), 0.2136, 5e-5);
  EXPECT_NEAR(p.at(Path{0, 1, 0, 3}), 0.0289, 5e-5);
  const std::vector<VisitableWalk> one{{{0, 1}, 2.0, kNoNode}};
  EXPECT_EQ(maxent_distribution(one, Beta(1.0)).at(Path{0, 1}), 1.0);
  const std::vector<VisitableWalk> two{{{0, 1}, 2.0, kNoNode}, {{0, 2, 1}, 2.0, 2}};
  EXPECT_DOUBLE_EQ(maxent_distribution(two, Beta(3.0)).at(Path{0, 2, 1}), 0.5);
}

TEST(Oracle, WalkIdentitiesOnFixture) {
  EXPECT_LE(verify_distance_identity(four_node_fixture(), Beta(1.0)), 1e-9);
  EXPECT_LE(verify_shortcut_identity(four_node_fixture(), Beta(1.0)), 1e-9);
  const auto fwd = datasp_forward(four_node_fixture(), Beta(1.0));
  const double z = [] {
    double s = 0.0;
    for (const auto& w : enumerate_visitable_walks(four_node_fixture(), 0, 3, 3)) s += std::exp(-w.cost);
    return s;
  }();
  EXPECT_NEAR(fwd.shortcuts(0, 3, 1), (std::exp(-3.0) + std::exp(-5.0)) / z, 1e-12);
}

TEST(Oracle, WalkIdentitiesOnRandomGraphs) {
  // Densities kept low enough for the 10^6-walk enumeration cap.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 4 + seed % 5;
    const auto m = random_connected_matrix(n, n <= 5 ? 0.3 : (n == 6 ? 0.2 : 0.1), seed);
    for (double b : {0.5, 1.0, 2.0}) {
      EXPECT_LE(verify_distance_identity(m, Beta(b)), 1e-9) << "seed " << seed;
      EXPECT_LE(verify_shortcut_identity(m, Beta(b)), 1e-9) << "seed " << seed;
      EXPECT_LE(verify_shortcut_identity(m, Beta(b), ForwardVariant::efficient), 1e-9) << "seed " << seed;
    }
  }
}

TEST(Oracle, WalkIdentitiesWithUnreachablePairs) {
  CostMatrix m(4);
  m(0, 1) = 1.0;
  m(1, 2) = 2.0;
  m(0, 2) = 2.5;
  m(2, 3) = 0.5;
  EXPECT_LE(verify_distance_identity(m, Beta(1.0)), 1e-12);
  EXPECT_LE(verify_shortcut_identity(m, Beta(1.0)), 1e-12);
  EXPECT_LE(verify_distance_identity(fixture_matrix_with_inf_pair(), Beta(0.7)), 1e-9);
}

TEST(Oracle, SamplerMatchesMaxEntOnFixture) {
  const auto fwd = datasp_forward_efficient(four_node_fixture(), Beta(1.0));
  std::mt19937_64 rng(1);
  EXPECT_LE(verify_sampler_distribution(fwd.shortcuts, four_node_fixture(), Beta(1.0), 0, 3, 100000, rng), 0.01);
}

TEST(Oracle, SamplerSingleWalk) {
  CostMatrix m(2);
  m(0, 1) = 1.0;
  const auto fwd = datasp_forward_efficient(m, Beta(1.0));
  std::mt19937_64 rng(1);
  EXPECT_EQ(verify_sampler_distribution(fwd.shortcuts, m, Beta(1.0), 0, 1, 1000, rng), 0.0);
}

TEST(Oracle, SamplerHardLimit) {
  CostMatrix m = four_node_fixture();
  // 0-2-3 (cost 3) becomes the unique optimum, second best 3.5
  m(0, 3) = 3.5;
  m(0, 1) = 1.6;
  m(1, 3) = 2.5;
  const auto fwd = datasp_forward_efficient(m, Beta(1000.0));
  std::mt19937_64 rng(2);
  EXPECT_LE(verify_sampler_distribution(fwd.shortcuts, m, Beta(1000.0), 0, 3, 20000, rng), 0.002);
}

TEST(GradCheck, SoftminValue) {
  const std::vector<double> x{0.3, 1.1, 0.7, 2.0};
  const auto b = Beta(1.7);
  const auto w = softmin_weights(x, b);
  const auto r = finite_difference_gradcheck([&](std::span<const double> v) { return softmin_value(v, b); },
                                             x, w, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(GradCheck, ConstantFunction) {
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> zero{0.0, 0.0};
  const auto r = finite_difference_gradcheck([](std::span<const double>) { return 4.0; }, x, zero, 1e-5);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(Sampler, DirectOnlyTensor) {
  CostMatrix m(3);
  m(0, 2) = 1.0;
  const auto fwd = datasp_forward_efficient(m, Beta(1.0));
  std::mt19937_64 rng(0);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(sample_path(fwd.shortcuts, 0, 2, rng), (Path{0, 2}));
  EXPECT_THROW(sample_path(fwd.shortcuts, 2, 0, rng), ValidationError);
  EXPECT_THROW(sample_path(fwd.shortcuts, 1, 1, rng), ValidationError);
}

TEST(Sampler, FixtureFrequencies) {
  const auto fwd = datasp_forward_efficient(four_node_fixture(), Beta(1.0));
  std::mt19937_64 rng(7);
  const auto est = monte_carlo_path_distribution(fwd.shortcuts, 0, 3, 10000, rng, false);
  EXPECT_EQ(est.sample_count, 10000u);
  EXPECT_EQ(est.rejected_count, 0u);
  for (const auto& p : {Path{0, 3}, Path{0, 1, 3}, Path{0, 2, 3}, Path{0, 1, 2, 3}})
    EXPECT_NEAR(est.frequency(p), 0.2136, 0.02);
  for (const auto& p : {Path{0, 1, 0, 2, 3}, Path{0, 1, 2, 1, 3}, Path{0, 2, 1, 3}, Path{0, 1, 0, 3}})
    EXPECT_NEAR(est.frequency(p), 0.0289, 0.01);
  EXPECT_EQ(est.frequency(Path{0, 2, 0, 2, 3}), 0.0);
}

// The acyclic support is the four cost-3 paths plus 0-2-1-3 (cost 5).
TEST(Sampler, RejectingCyclesKeepsSimplePaths) {
  const auto m = four_node_fixture();
  const auto fwd = datasp_forward_efficient(m, Beta(1.0));
  std::mt19937_64 rng(7);
  const auto est = monte_carlo_path_distribution(fwd.shortcuts, 0, 3, 10000, rng, true);
  EXPECT_GT(est.rejected_count, 0u);
  std::map<Path, double> want;
  double z = 0.0;
  for (const auto& w : enumerate_visitable_walks(m, 0, 3, 3))
    if (!has_repeated_node(w.nodes)) {
      want[w.nodes] = std::exp(-w.cost);
      z += std::exp(-w.cost);
    }
  ASSERT_EQ(want.size(), 5u);
  EXPECT_TRUE(want.contains(Path{0, 2, 1, 3}));
  EXPECT_EQ(est.counts.size(), 5u);
  for (const auto& [p, q] : want) EXPECT_NEAR(est.frequency(p), q / z, 0.02);
  EXPECT_NEAR(want.at(Path{0, 3}) / z, 1.0 / (4.0 + std::exp(-2.0)), 1e-12);
}

TEST(Sampler, SupportEqualsOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_connected_matrix(5, 0.3, seed, 0.5, 1.0);
    const auto fwd = datasp_forward_efficient(m, Beta(0.5));
    const auto walks = enumerate_visitable_walks(m, 0, 4, 4);
    std::set<Path> oracle;
    for (const auto& w : walks) oracle.insert(w.nodes);
    std::mt19937_64 rng(seed);
    const auto est = monte_carlo_path_distribution(fwd.shortcuts, 0, 4, 100000, rng, false);
    for (const auto& [p, c] : est.counts) EXPECT_TRUE(oracle.contains(p)) << "seed " << seed;
    // Every oracle walk with probability above 1e-3 must appear.
    const auto target = maxent_distribution(walks, Beta(0.5));
    for (const auto& [p, q] : target)
      if (q > 1e-3) {
        EXPECT_TRUE(est.counts.contains(p)) << "seed " << seed;
      }
  }
}

TEST(Sampler, WalksAreEdgeFeasible) {
  const auto m = random_connected_matrix(9, 0.2, 4);
  const auto fwd = datasp_forward_efficient(m, Beta(1.0));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 2000; ++t) {
    const auto w = sample_path(fwd.shortcuts, t % 9, (t + 4) % 9, rng);
    EXPECT_EQ(w.front(), Node(t % 9));
    EXPECT_EQ(w.back(), Node((t + 4) % 9));
    EXPECT_TRUE(std::isfinite(path_cost(m, w)));
  }
}

TEST(Sampler, HardLimitReturnsDijkstraPath) {
  const auto m = random_connected_matrix(8, 0.4, 12);
  const auto sp = dijkstra(m, 0, 7);
  ASSERT_TRUE(sp.has_value());
  const auto fwd = datasp_forward_efficient(m, Beta(1000.0));
  std::mt19937_64 rng(3);
  const auto est = monte_carlo_path_distribution(fwd.shortcuts, 0, 7, 10000, rng, false);
  EXPECT_GE(est.frequency(sp->nodes), 0.999);
}

TEST(Sampler, Deterministic) {
  const auto fwd = datasp_forward_efficient(four_node_fixture(), Beta(1.0));
  std::mt19937_64 a(11), b(11);
  const auto x = monte_carlo_path_distribution(fwd.shortcuts, 0, 3, 500, a, false);
  const auto y = monte_carlo_path_distribution(fwd.shortcuts, 0, 3, 500, b, false);
  EXPECT_EQ(x.counts, y.counts);
}

TEST(Destination, MatchesBruteForceBayes) {
  const auto m = four_node_fixture();
  const Path partial{0, 3};
  const auto probs = destination_likelihood(m, Beta(1.0), partial, DestinationPrior::uniform(4));
  // Pr(x) proportional to the share of walks 0 -> x whose highest interior node is 3.
  std::vector<double> want(4, 0.0);
  for (Node x : {1, 2}) {
    const auto walks = enumerate_visitable_walks(m, 0, x, 3);
    double z = 0.0, hit = 0.0;
    for (const auto& w : walks) {
      z += std::exp(-w.cost);
      if (!w.direct() && w.highest == 3) hit += std::exp(-w.cost);
    }
    want[x] = hit / z;
  }
  const double total = want[1] + want[2];
  EXPECT_EQ(probs[0], 0.0);
  EXPECT_EQ(probs[3], 0.0);
  EXPECT_NEAR(probs[1], want[1] / total, 1e-12);
  EXPECT_NEAR(probs[2], want[2] / total, 1e-12);
}

TEST(Destination, SwapMatchesBruteForceBayes) {
  // n_K = 1 is relabelled as the highest node before the forward pass.
  const auto m = random_connected_matrix(5, 0.5, 17);
  const auto sp = dijkstra(m, 3, 1);
  ASSERT_TRUE(sp.has_value());
  const Path partial = sp->nodes;
  const auto probs = destination_likelihood(m, Beta(1.0), partial, DestinationPrior::uniform(5));
  const auto swapped = swap_nodes(m, 1, 4);
  auto relabel = [](Node v) { return v == 1 ? Node{4} : (v == 4 ? Node{1} : v); };
  std::vector<double> want(5, 0.0);
  double total = 0.0;
  for (Node x = 0; x < 5; ++x) {
    if (std::find(partial.begin(), partial.end(), x) != partial.end()) continue;
    const auto walks = enumerate_visitable_walks(swapped, relabel(3), relabel(x), 4);
    double z = 0.0, hit = 0.0;
    for (const auto& w : walks) {
      z += std::exp(-w.cost);
      if (!w.direct() && w.highest == 4) hit += std::exp(-w.cost);
    }
    want[x] = z > 0.0 ? hit / z : 0.0;
    total += want[x];
  }
  for (Node x = 0; x < 5; ++x) EXPECT_NEAR(probs[x], want[x] / total, 1e-12);
}

TEST(Destination, PriorMaskSelectsNode) {
  const auto m = four_node_fixture();
  const auto probs =
      destination_likelihood(m, Beta(1.0), {0, 3}, DestinationPrior::custom_mask({0.0, 0.0, 1.0, 0.0}));
  EXPECT_EQ(probs, (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
  EXPECT_THROW(destination_likelihood(m, Beta(1.0), {0, 3}, DestinationPrior::custom_mask({1.0, 0.0, 0.0, 0.0})),
               ValidationError);
  EXPECT_THROW(destination_likelihood(m, Beta(1.0), {0, 3}, DestinationPrior::custom_mask({0, 0, 0, 0})),
               ValidationError);
}

TEST(Destination, ExpNegativeDistancePrior) {
  const auto prior = DestinationPrior::exp_negative_distance(four_node_fixture(), 3);
  EXPECT_NEAR(prior.weights[0], std::exp(-3.0), 1e-15);
  EXPECT_NEAR(prior.weights[2], std::exp(-1.0), 1e-15);
  EXPECT_EQ(prior.weights[3], 1.0);
}

TEST(Metrics, Jaccard) {
  EXPECT_EQ(jaccard_edges({0, 1, 2}, {0, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard_edges({0, 1, 2}, {0, 1, 3}), 1.0 / 3.0);
  EXPECT_EQ(jaccard_edges({0, 1}, {2, 3}), 0.0);
  EXPECT_THROW(jaccard_edges({0}, {0, 1}), ValidationError);
}

TEST(Metrics, MatchRate) {
  const std::vector<Path> obs{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  EXPECT_EQ(match_rate(obs, obs), 1.0);
  const std::vector<Path> none{{0, 2}, {1, 3}, {2, 4}, {3, 5}};
  EXPECT_EQ(match_rate(none, obs), 0.0);
  const std::vector<Path> one{{0, 1}, {1, 3}, {2, 4}, {3, 5}};
  EXPECT_EQ(match_rate(one, obs), 0.25);
}

TEST(Metrics, OptimalCostRate) {
  const auto m = random_connected_matrix(7, 0.4, 2);
  std::vector<Path> preds, obs;
  std::vector<CostMatrix> truth;
  for (Node j = 1; j < 7; ++j) {
    const auto sp = dijkstra(m, 0, j);
    preds.push_back(sp->nodes);
    obs.push_back(sp->nodes);
    truth.push_back(m);
  }
  EXPECT_EQ(optimal_cost_rate(preds, obs, truth), 1.0);
  EXPECT_THROW(optimal_cost_rate(std::vector<Path>{}, std::vector<Path>{}, std::vector<CostMatrix>{}),
               ValidationError);
}

// Random walk predictions on the fixture against a brute-force count.
TEST(Metrics, OptimalCostRateOfSampledWalks) {
  const auto m = four_node_fixture();
  const auto fwd = datasp_forward_efficient(m, Beta(1.0));
  std::mt19937_64 rng(4);
  std::vector<Path> preds, obs;
  std::vector<CostMatrix> truth;
  std::size_t optimal = 0;
  for (int t = 0; t < 200; ++t) {
    preds.push_back(sample_path(fwd.shortcuts, 0, 3, rng));
    obs.push_back({0, 3});
    truth.push_back(m);
    double c = 0.0;
    for (std::size_t s = 1; s < preds.back().size(); ++s)
      c += std::abs(double(preds.back()[s]) - double(preds.back()[s - 1]));
    optimal += c == 3.0 ? 1 : 0;
  }
  EXPECT_DOUBLE_EQ(optimal_cost_rate(preds, obs, truth), double(optimal) / 200.0);
}

TEST(Inference, ExpectedOptimalPathUsesDijkstra) {
  const Graph g = Graph::undirected(4, std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  const std::vector<double> costs{1, 1, 1, 1, 1, 1, 5, 5};
  EXPECT_EQ(expected_optimal_path(costs, g, 0, 3), (Path{0, 1, 2, 3}));
  const std::vector<double> uniform(8, 1.0);
  EXPECT_EQ(expected_optimal_path(uniform, g, 0, 3), (Path{0, 3}));
}
