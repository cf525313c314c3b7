#pragma once

// Inference from a shortcut tensor: path sampling, destination likelihood,
// expected optimal paths and evaluation metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "datasp/engine.hpp"
#include "datasp/error.hpp"
#include "datasp/graph.hpp"
#include "datasp/shortest_paths.hpp"
#include "datasp/trajectory.hpp"

namespace datasp {

/// Draws walks from P by recursive highest-intermediate splitting.
///
/// Pair (a,b) under bound B may pick k < B, or k = a which means the direct
/// edge a -> b. Splitting at H continues with (i,H) and (H,j) both bounded by
/// H. Equivalent to masking the left and right shortcut rows, applied lazily
/// to the one row being drawn from.
template <class Rng>
class PathSampler {
 public:
  PathSampler(const ShortcutTensor& p, Rng& rng) : p_(p), rng_(rng) {}

  Path sample(Node i, Node j) {
    const std::size_t n = p_.size();
    require(i < n && j < n, "sample_path: node out of range");
    require(i != j && p_.reachable(i, j), "sample_path: pair is not reachable");
    Path out{i};
    for (int attempt = 0;; ++attempt) {
      try {
        walk(i, j, n, out);
        return out;
      } catch (const ResampleRequired&) {
        ++resample_events_;
        if (attempt >= kMaxRetries) throw;
        out.assign(1, i);
      }
    }
  }

  /// Times a masked row was empty and a parent draw was redone.
  std::size_t resample_events() const { return resample_events_; }

 private:
  static constexpr int kMaxRetries = 100;

  Node draw(Node a, Node b, std::size_t bound) {
    const auto row = p_.row(a, b);
    double total = 0.0;
    for (std::size_t k = 0; k < bound; ++k) total += row[k];
    if (a >= bound) total += row[a];
    if (!(total > 0.0)) throw ResampleRequired();
    const double r = std::uniform_real_distribution<double>(0.0, total)(rng_);
    double acc = 0.0;
    Node last = kNoNode;
    for (std::size_t k = 0; k < bound; ++k) {
      if (row[k] <= 0.0) continue;
      acc += row[k];
      last = k;
      if (r < acc) return k;
    }
    if (a >= bound && row[a] > 0.0) return a;
    return last;
  }

  // Appends the nodes after a, up to and including b.
  void walk(Node a, Node b, std::size_t bound, Path& out) {
    for (int attempt = 0;; ++attempt) {
      const Node h = draw(a, b, bound);
      if (h == a) {
        out.push_back(b);
        return;
      }
      const std::size_t mark = out.size();
      try {
        walk(a, h, h, out);
        walk(h, b, h, out);
        return;
      } catch (const ResampleRequired&) {
        ++resample_events_;
        out.resize(mark);
        if (attempt >= kMaxRetries) throw;
      }
    }
  }

  const ShortcutTensor& p_;
  Rng& rng_;
  std::size_t resample_events_ = 0;
};

template <class Rng>
Path sample_path(const ShortcutTensor& p, Node i, Node j, Rng& rng) {
  return PathSampler<Rng>(p, rng).sample(i, j);
}

struct PathDistributionEstimate {
  std::map<Path, std::size_t> counts;  // accepted walks only
  std::size_t sample_count = 0;        // accepted
  std::size_t rejected_count = 0;      // cyclic walks discarded
  std::size_t attempts = 0;
  std::size_t resample_events = 0;

  double frequency(const Path& p) const {
    const auto it = counts.find(p);
    return it == counts.end() || sample_count == 0
               ? 0.0
               : static_cast<double>(it->second) / static_cast<double>(sample_count);
  }
};

/// Monte Carlo estimate of the walk distribution between i and j. With
/// reject_cycles, cyclic walks are discarded; at most 100 * num_samples
/// draws are attempted.
template <class Rng>
PathDistributionEstimate monte_carlo_path_distribution(const ShortcutTensor& p, Node i, Node j,
                                                       std::size_t num_samples, Rng& rng,
                                                       bool reject_cycles) {
  require(num_samples >= 1, "monte_carlo_path_distribution: num_samples must be >= 1");
  PathSampler<Rng> sampler(p, rng);
  PathDistributionEstimate est;
  const std::size_t cap = 100 * num_samples;
  while (est.sample_count < num_samples && est.attempts < cap) {
    ++est.attempts;
    Path w = sampler.sample(i, j);
    if (reject_cycles && has_repeated_node(w)) {
      ++est.rejected_count;
      continue;
    }
    ++est.counts[std::move(w)];
    ++est.sample_count;
  }
  est.resample_events = sampler.resample_events();
  if (est.sample_count == 0)
    throw NumericalError("monte_carlo_path_distribution: all " + std::to_string(est.attempts) +
                         " draws were rejected as cyclic");
  return est;
}

struct DestinationPrior {
  enum class Kind : std::uint8_t { uniform, exp_negative_distance, custom_mask };
  Kind kind = Kind::uniform;
  std::vector<double> weights;

  static DestinationPrior uniform(std::size_t n) { return {Kind::uniform, std::vector<double>(n, 1.0)}; }

  /// exp(-d(from, x)) with d the shortest distance under `costs`; 0 if unreachable.
  static DestinationPrior exp_negative_distance(const CostMatrix& costs, Node from) {
    const auto fw = classical_floyd_warshall(costs);
    std::vector<double> w(costs.size(), 0.0);
    for (Node x = 0; x < costs.size(); ++x) {
      const double d = x == from ? 0.0 : fw.distances(from, x);
      w[x] = is_inf(d) ? 0.0 : std::exp(-d);
    }
    return {Kind::exp_negative_distance, std::move(w)};
  }

  static DestinationPrior custom_mask(std::vector<double> weights) {
    return {Kind::custom_mask, std::move(weights)};
  }

  void validate(std::size_t n) const {
    require(weights.size() == n, "destination prior needs one weight per node");
    bool positive = false;
    for (double w : weights) {
      require(std::isfinite(w) && w >= 0.0, "destination prior weights must be finite and >= 0");
      positive = positive || w > 0.0;
    }
    require(positive, "destination prior has no positive weight");
  }
};

inline const char* prior_kind_name(DestinationPrior::Kind k) {
  switch (k) {
    case DestinationPrior::Kind::uniform: return "uniform";
    case DestinationPrior::Kind::exp_negative_distance: return "expneg";
    case DestinationPrior::Kind::custom_mask: return "custom";
  }
  return "uniform";
}

/// Exchanges node labels a and b (rows and columns).
inline CostMatrix swap_nodes(const CostMatrix& m, Node a, Node b) {
  const std::size_t n = m.size();
  auto relabel = [a, b](Node v) { return v == a ? b : (v == b ? a : v); };
  CostMatrix out(n);
  for (Node i = 0; i < n; ++i)
    for (Node j = 0; j < n; ++j) out(relabel(i), relabel(j)) = m(i, j);
  return out;
}

/// Pr(destination = x | partial path) proportional to P'[n1, x, |V|-1] * prior(x),
/// where P' is DataSP run on `m` with n_K relabelled as |V|-1. Nodes on the
/// partial path (n_K included) get probability 0. Result in original labels.
inline std::vector<double> destination_likelihood(const CostMatrix& m, Beta beta,
                                                  const Path& partial,
                                                  const DestinationPrior& prior) {
  const std::size_t n = m.size();
  require(partial.size() >= 2, "destination_likelihood: partial path needs at least two nodes");
  for (Node v : partial) require(v < n, "destination_likelihood: node out of range");
  for (std::size_t t = 1; t < partial.size(); ++t)
    require(!is_inf(m(partial[t - 1], partial[t])), "destination_likelihood: partial path is not feasible");
  prior.validate(n);

  const Node last = n - 1;
  const Node nk = partial.back();
  auto relabel = [nk, last](Node v) { return v == nk ? last : (v == last ? nk : v); };
  const auto fwd = datasp_forward_efficient(swap_nodes(m, nk, last), beta);

  std::vector<bool> on_path(n, false);
  for (Node v : partial) on_path[v] = true;
  std::vector<double> score(n, 0.0);
  double total = 0.0;
  const Node n1 = relabel(partial.front());
  for (Node x = 0; x < n; ++x) {
    if (on_path[x]) continue;
    score[x] = fwd.shortcuts(n1, relabel(x), last) * prior.weights[x];
    total += score[x];
  }
  if (!(total > 0.0))
    throw ValidationError("destination_likelihood: no reachable destination has prior mass");
  for (double& s : score) s /= total;
  return score;
}

/// Dijkstra under the given (predicted) edge costs; empty when unreachable.
inline Path expected_optimal_path(std::span<const double> costs, const Graph& graph, Node i, Node j) {
  const auto sp = dijkstra(build_cost_matrix(costs, graph), i, j);
  return sp ? sp->nodes : Path{};
}

inline double jaccard_edges(const Path& pred, const Path& obs) {
  require(pred.size() >= 2 && obs.size() >= 2, "jaccard_edges: paths need at least two nodes");
  auto edges = [](const Path& p) {
    std::set<std::pair<Node, Node>> s;
    for (std::size_t t = 1; t < p.size(); ++t) s.insert({p[t - 1], p[t]});
    return s;
  };
  const auto a = edges(pred);
  const auto b = edges(obs);
  std::size_t inter = 0;
  for (const auto& e : a) inter += b.count(e);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline double match_rate(std::span<const Path> preds, std::span<const Path> obs) {
  require(!preds.empty() && preds.size() == obs.size(), "match_rate: need equally many, nonzero paths");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < preds.size(); ++t) hits += preds[t] == obs[t] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Share of predicted paths whose true cost equals the true optimum between
/// the same endpoints (relative 1e-9). Paths that are empty or infeasible
/// under the true costs count as misses.
inline double optimal_cost_rate(std::span<const Path> preds, std::span<const Path> obs,
                                std::span<const CostMatrix> true_costs) {
  require(!preds.empty(), "optimal_cost_rate: empty prediction set");
  require(preds.size() == obs.size() && preds.size() == true_costs.size(),
          "optimal_cost_rate: inputs must be aligned");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    if (preds[t].size() < 2) continue;
    const auto best = dijkstra(true_costs[t], obs[t].front(), obs[t].back());
    if (!best || preds[t].front() != obs[t].front() || preds[t].back() != obs[t].back()) continue;
    const double c = path_cost(true_costs[t], preds[t]);
    if (std::abs(c - best->cost) <= 1e-9 * std::max(1.0, std::abs(best->cost))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace datasp
