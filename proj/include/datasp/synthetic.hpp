#pragma once

// Synthetic routing data: a random planar-ish graph, a context-dependent
// latent cost function, and shortest-path trajectories under it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "datasp/error.hpp"
#include "datasp/graph.hpp"
#include "datasp/shortest_paths.hpp"
#include "datasp/trajectory.hpp"

namespace datasp {

struct GeneratorConfig {
  std::size_t num_nodes = 30;
  double sparsity = 0.7;           // keep probability of a candidate pair
  std::size_t neighbours = 10;     // nearest-neighbour candidates per node
  std::size_t feature_dim = 4;
  std::size_t latent_dim = 4;      // rows of W
  double weight_scale = 2.0;       // std of the per-edge weights w_e
  std::size_t num_samples = 2500;
  std::size_t val_count = 250;     // records after the training block
  std::size_t test_count = 250;
  std::size_t pair_pool_size = 50;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
  std::size_t max_retries = 10;
};

struct SyntheticData {
  Graph graph;
  std::vector<std::pair<double, double>> positions;
  std::vector<double> prior;
  Dataset dataset;
  std::vector<std::pair<Node, Node>> pair_pool;
};

/// 64-bit mix used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto step = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Undirected random graph on uniform points in the unit square: each node
/// proposes its `neighbours` nearest nodes, each candidate pair is kept with
/// probability `sparsity`, and both directions become edges.
inline std::pair<Graph, std::vector<std::pair<double, double>>> generate_graph(const GeneratorConfig& cfg,
                                                                               std::mt19937_64& rng) {
  const std::size_t n = cfg.num_nodes;
  require(n >= 2, "generator: need at least two nodes");
  require(cfg.sparsity > 0.0 && cfg.sparsity <= 1.0, "generator: sparsity must be in (0, 1]");
  require(cfg.neighbours >= 1, "generator: neighbours must be >= 1");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    std::vector<std::pair<double, double>> pos(n);
    for (auto& p : pos) p = {u01(rng), u01(rng)};
    std::set<std::pair<Node, Node>> candidates;
    for (Node u = 0; u < n; ++u) {
      std::vector<std::pair<double, Node>> by_dist;
      for (Node v = 0; v < n; ++v)
        if (v != u) by_dist.push_back({std::hypot(pos[u].first - pos[v].first, pos[u].second - pos[v].second), v});
      std::sort(by_dist.begin(), by_dist.end());
      for (std::size_t t = 0; t < std::min(cfg.neighbours, by_dist.size()); ++t)
        candidates.insert({std::min(u, by_dist[t].second), std::max(u, by_dist[t].second)});
    }
    std::vector<Edge> pairs;
    for (const auto& [u, v] : candidates)
      if (u01(rng) < cfg.sparsity) pairs.push_back({u, v});
    Graph g = Graph::undirected(n, pairs);
    if (g.strongly_connected()) return {std::move(g), std::move(pos)};
  }
  throw GenerationError("generator: graph still disconnected after " + std::to_string(cfg.max_retries) +
                        " attempts");
}

/// Latent costs y_e(x) = prior_e (1 + softplus(w_e . tanh(W x))) (1 + noise eps),
/// eps from the equal mixture of N(-1,1) and N(1,1), clipped at 0.05 prior_e.
class LatentCostFunction {
 public:
  LatentCostFunction() = default;
  LatentCostFunction(std::vector<double> prior, const GeneratorConfig& cfg, std::mt19937_64& rng)
      : prior_(std::move(prior)), d_(cfg.feature_dim), h_(cfg.latent_dim), noise_(cfg.noise_scale) {
    std::normal_distribution<double> w_big(0.0, 1.0 / std::sqrt(static_cast<double>(d_)));
    std::normal_distribution<double> w_edge(0.0, cfg.weight_scale / std::sqrt(static_cast<double>(h_)));
    w_.resize(h_ * d_);
    for (auto& x : w_) x = w_big(rng);
    we_.resize(prior_.size() * h_);
    for (auto& x : we_) x = w_edge(rng);
  }

  std::vector<double> operator()(std::span<const double> x, std::mt19937_64& rng) const {
    require(x.size() == d_, "latent cost: feature length mismatch");
    std::vector<double> hidden(h_);
    for (std::size_t r = 0; r < h_; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d_; ++c) s += w_[r * d_ + c] * x[c];
      hidden[r] = std::tanh(s);
    }
    std::normal_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> y(prior_.size());
    for (std::size_t e = 0; e < y.size(); ++e) {
      double s = 0.0;
      for (std::size_t r = 0; r < h_; ++r) s += we_[e * h_ + r] * hidden[r];
      const double eps = (sign(rng) ? 1.0 : -1.0) + unit(rng);
      y[e] = std::max(prior_[e] * (1.0 + softplus(s)) * (1.0 + noise_ * eps), 0.05 * prior_[e]);
    }
    return y;
  }

 private:
  std::vector<double> prior_;
  std::size_t d_ = 0, h_ = 0;
  double noise_ = 0.0;
  std::vector<double> w_, we_;
};

inline SyntheticData generate_synthetic_dataset(const GeneratorConfig& cfg) {
  require(cfg.feature_dim >= 1 && cfg.latent_dim >= 1, "generator: dimensions must be positive");
  require(cfg.pair_pool_size >= 1, "generator: pair pool must be nonempty");
  require(cfg.noise_scale >= 0.0, "generator: noise_scale must be >= 0");
  require(cfg.val_count + cfg.test_count <= cfg.num_samples, "generator: val_count + test_count exceeds num_samples");
  std::mt19937_64 rng(cfg.seed);
  auto [graph, pos] = generate_graph(cfg, rng);
  SyntheticData out{std::move(graph), std::move(pos), {}, {}, {}};
  out.prior = euclidean_priors(out.graph, out.positions);
  const LatentCostFunction latent(out.prior, cfg, rng);

  const std::size_t n = cfg.num_nodes;
  std::uniform_int_distribution<Node> node(0, n - 1);
  for (std::size_t t = 0; t < cfg.pair_pool_size; ++t) {
    Node s = node(rng), d = node(rng);
    while (d == s) d = node(rng);
    out.pair_pool.push_back({s, d});
  }

  const std::size_t n_train = cfg.num_samples - cfg.val_count - cfg.test_count;
  const std::size_t n_val = cfg.val_count;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, out.pair_pool.size() - 1);
  for (std::size_t r = 0; r < cfg.num_samples; ++r) {
    Record rec;
    rec.context.features.resize(cfg.feature_dim);
    for (auto& f : rec.context.features) f = gauss(rng);
    const auto [s, d] = out.pair_pool[pick(rng)];
    rec.true_costs = latent(rec.context.features, rng);
    const auto sp = dijkstra(build_cost_matrix(rec.true_costs, out.graph), s, d);
    if (!sp) throw GenerationError("generator: sampled pair is unreachable");
    rec.paths.push_back(sp->nodes);
    rec.split = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
    out.dataset.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace datasp
