#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "datasp/cost_model.hpp"
#include "datasp/oracle.hpp"
#include "datasp/synthetic.hpp"

using namespace datasp;

namespace {

GeneratorConfig small_generator(std::uint64_t seed) {
  GeneratorConfig c;
  c.num_nodes = 12;
  c.neighbours = 4;
  c.num_samples = 60;
  c.val_count = 10;
  c.test_count = 10;
  c.pair_pool_size = 5;
  c.seed = seed;
  return c;
}

std::vector<double> random_params(const CostModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<double> p(model.architecture().parameter_count());
  for (double& x : p) x = g(rng);
  return p;
}

}  // namespace

TEST(Generator, Deterministic) {
  const auto a = generate_synthetic_dataset(small_generator(4));
  const auto b = generate_synthetic_dataset(small_generator(4));
  EXPECT_EQ(a.graph.edges(), b.graph.edges());
  EXPECT_EQ(a.prior, b.prior);
  ASSERT_EQ(a.dataset.records.size(), b.dataset.records.size());
  for (std::size_t r = 0; r < a.dataset.records.size(); ++r) {
    EXPECT_EQ(a.dataset.records[r].context.features, b.dataset.records[r].context.features);
    EXPECT_EQ(a.dataset.records[r].paths, b.dataset.records[r].paths);
    EXPECT_EQ(a.dataset.records[r].true_costs, b.dataset.records[r].true_costs);
  }
}

TEST(Generator, RecordsAreConsistent) {
  const auto d = generate_synthetic_dataset(small_generator(9));
  EXPECT_TRUE(d.graph.strongly_connected());
  EXPECT_NO_THROW(validate_dataset(d.dataset, d.graph));
  EXPECT_EQ(d.dataset.indices(Split::train).size(), 40u);
  EXPECT_EQ(d.dataset.indices(Split::val).size(), 10u);
  EXPECT_EQ(d.dataset.indices(Split::test).size(), 10u);
  for (const auto& rec : d.dataset.records) {
    ASSERT_EQ(rec.paths.size(), 1u);
    const auto m = build_cost_matrix(rec.true_costs, d.graph);
    const auto sp = dijkstra(m, rec.paths[0].front(), rec.paths[0].back());
    EXPECT_EQ(sp->nodes, rec.paths[0]);
    for (std::size_t e = 0; e < rec.true_costs.size(); ++e) EXPECT_GE(rec.true_costs[e], 0.05 * d.prior[e]);
    const auto pair = std::pair{rec.paths[0].front(), rec.paths[0].back()};
    EXPECT_NE(std::find(d.pair_pool.begin(), d.pair_pool.end(), pair), d.pair_pool.end());
  }
}

TEST(Generator, FullCandidateSetGivesCompleteGraph) {
  GeneratorConfig c = small_generator(1);
  c.num_nodes = 7;
  c.neighbours = 6;
  c.sparsity = 1.0;
  c.num_samples = 0;
  c.val_count = c.test_count = 0;
  const auto d = generate_synthetic_dataset(c);
  EXPECT_EQ(d.graph.edge_count(), 42u);
  EXPECT_TRUE(d.dataset.records.empty());
}

TEST(Generator, NoiseFreeCostsDependOnlyOnContext) {
  GeneratorConfig c = small_generator(2);
  c.noise_scale = 0.0;
  std::mt19937_64 rng(1);
  const std::vector<double> prior(20, 0.3);
  const LatentCostFunction f(prior, c, rng);
  const std::vector<double> x{0.1, -0.4, 1.2, 0.0};
  std::mt19937_64 r1(5), r2(77);
  EXPECT_EQ(f(x, r1), f(x, r2));
}

// Candidate count 10 and sparsity 0.7 put |V|=30 graphs at ~270 directed edges.
TEST(Generator, EdgeCountCalibration) {
  GeneratorConfig c;
  c.num_samples = 0;
  c.val_count = c.test_count = 0;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    c.seed = seed;
    std::mt19937_64 rng(seed);
    const auto g = generate_graph(c, rng).first;
    EXPECT_GE(g.edge_count(), 200u);
    EXPECT_LE(g.edge_count(), 340u);
    total += static_cast<double>(g.edge_count());
  }
  EXPECT_NEAR(total / 100.0, 270.0, 25.0);
}

TEST(Generator, DisconnectedAfterRetries) {
  GeneratorConfig c = small_generator(3);
  c.num_nodes = 30;
  c.neighbours = 1;
  c.sparsity = 0.05;
  EXPECT_THROW(generate_synthetic_dataset(c), GenerationError);
}

TEST(CostModel, UntrainedModelPredictsPrior) {
  const std::vector<double> prior{0.2, 1.5, 0.01, 3.0, 0.0};
  const CostModel model({3, {8, 8}, prior.size(), 1e-3}, prior);
  const auto p = model.init_params(1);
  const auto costs = model.predict(p, std::vector<double>{0.3, -1.0, 2.0});
  for (std::size_t e = 0; e < prior.size(); ++e) EXPECT_NEAR(costs[e], std::max(prior[e], 1e-3 + 1e-6), 1e-12);
}

TEST(CostModel, CostsStayAboveFloor) {
  const std::vector<double> prior(6, 0.5);
  const CostModel model({2, {4}, prior.size(), 1e-3}, prior);
  auto p = random_params(model, 3);
  for (double& x : p) x *= 40.0;
  for (double c : model.predict(p, std::vector<double>{1.0, -1.0})) EXPECT_GT(c, 1e-3);
}

TEST(CostModel, BackwardMatchesFiniteDifferences) {
  const std::vector<double> prior{0.2, 0.5, 0.7, 1.1};
  const CostModel model({3, {6, 5}, prior.size(), 1e-3}, prior);
  const auto p = random_params(model, 11);
  const std::vector<double> x{0.4, -0.3, 0.9};
  const std::vector<double> upstream{0.3, -1.2, 0.8, 0.5};
  CostModel::Cache cache;
  model.predict(p, x, &cache);
  const auto g = model.backward(p, cache, upstream);
  auto f = [&](std::span<const double> q) {
    const auto c = model.predict(q, x);
    double s = 0.0;
    for (std::size_t e = 0; e < c.size(); ++e) s += upstream[e] * c[e];
    return s;
  };
  EXPECT_LE(finite_difference_gradcheck(f, p, g, 1e-6).max_rel_error, 1e-5);
}

TEST(CostModel, ArchitectureValidation) {
  EXPECT_THROW(CostModel({0, {4}, 2, 1e-3}, {1.0, 1.0}), ValidationError);
  EXPECT_THROW(CostModel({2, {4}, 3, 1e-3}, {1.0, 1.0}), ValidationError);
  EXPECT_THROW(CostModel({2, {0}, 2, 1e-3}, {1.0, 1.0}), ValidationError);
  const CostModel m({2, {4}, 2, 1e-3}, {1.0, 1.0});
  EXPECT_THROW(m.predict(std::vector<double>(3), std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 0.0};
  AdamState st;
  adam_update(p, g, 0.01, {}, st);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, ZeroLearningRateLeavesParams) {
  std::vector<double> p{1.0, 2.0};
  AdamState st;
  adam_update(p, std::vector<double>{5.0, -1.0}, 0.0, {}, st);
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
}

TEST(Softplus, InverseRoundTrip) {
  for (double y : {1e-6, 0.01, 0.5, 3.0, 40.0}) EXPECT_NEAR(softplus(inverse_softplus(y)), y, 1e-12 * std::max(1.0, y));
  EXPECT_THROW(inverse_softplus(0.0), ValidationError);
}
