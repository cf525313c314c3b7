#pragma once

// Graph compression by node elimination. Removing node k reconnects every
// in-neighbour i of k to every out-neighbour j through a local smooth min
//   new(i,j) = min_beta(old(i,j), old(i,k) + old(k,j)),
// so the compressed cost matrix keeps (in the hard limit) the shortest
// distances among the surviving nodes.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "datasp/graph.hpp"
#include "datasp/smooth_ops.hpp"

namespace datasp {

/// Everything needed to back-propagate through one exclude_node call.
struct ExclusionStep {
  std::size_t removed = 0;   // index in the matrix before removal
  std::size_t n_before = 0;
  double beta = 1.0;
  struct Update {
    std::size_t i, j;  // indices before removal
    double w_via;
    double w_direct;
  };
  std::vector<Update> updates;
};

struct ExclusionResult {
  CostMatrix matrix;
  /// remap[old] = new index, kNoNode for the removed node.
  std::vector<std::size_t> remap;
  ExclusionStep step;
};

inline ExclusionResult exclude_node(const CostMatrix& m, std::size_t k, Beta beta) {
  const std::size_t n = m.size();
  require(k < n, "exclude_node: node out of range");

  ExclusionResult out{CostMatrix(n - 1), std::vector<std::size_t>(n), {k, n, beta.value(), {}}};
  for (std::size_t v = 0; v < n; ++v) out.remap[v] = v < k ? v : (v == k ? kNoNode : v - 1);

  for (std::size_t i = 0; i < n; ++i) {
    if (i == k) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (j != k) out.matrix(out.remap[i], out.remap[j]) = m(i, j);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (i == k || is_inf(m(i, k))) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == k || j == i || is_inf(m(k, j))) continue;
      const auto r = softmin_pair(m(i, k) + m(k, j), m(i, j), beta.value());
      out.matrix(out.remap[i], out.remap[j]) = r.value;
      out.step.updates.push_back({i, j, r.w_via, r.w_direct});
    }
  }
  return out;
}

/// Maps dL/d(compressed) (size (n-1)^2) to dL/d(original) (size n^2).
inline std::vector<double> exclude_node_backward(const ExclusionStep& step,
                                                 std::span<const double> grad_new) {
  const std::size_t n = step.n_before;
  const std::size_t k = step.removed;
  require(grad_new.size() == (n - 1) * (n - 1), "exclude_node_backward: gradient shape mismatch");
  auto shrink = [k](std::size_t v) { return v < k ? v : v - 1; };

  std::vector<double> g(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == k) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (j != k) g[i * n + j] = grad_new[shrink(i) * (n - 1) + shrink(j)];
  }
  for (const auto& u : step.updates) {
    const double up = grad_new[shrink(u.i) * (n - 1) + shrink(u.j)];
    g[u.i * n + u.j] = up * u.w_direct;
    g[u.i * n + k] += up * u.w_via;
    g[k * n + u.j] += up * u.w_via;
  }
  return g;
}

/// A sequence of exclusions applied in order.
struct ExclusionChain {
  std::vector<ExclusionStep> steps;

  std::vector<double> backward(std::span<const double> grad_final) const {
    std::vector<double> g(grad_final.begin(), grad_final.end());
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) g = exclude_node_backward(*it, g);
    return g;
  }
};

/// Removes `removed` (original ids) one at a time, ascending.
struct CompressedGraph {
  CostMatrix matrix;
  std::vector<Node> kept;            // original ids, ascending
  std::vector<std::size_t> remap;    // original id -> compressed index or kNoNode
  ExclusionChain chain;
};

inline CompressedGraph exclude_nodes(const CostMatrix& m, std::vector<Node> removed, Beta beta) {
  const std::size_t n = m.size();
  std::sort(removed.begin(), removed.end());
  removed.erase(std::unique(removed.begin(), removed.end()), removed.end());
  for (Node r : removed) require(r < n, "exclude_nodes: node out of range");

  CompressedGraph out{m, {}, std::vector<std::size_t>(n), {}};
  std::vector<Node> current(n);  // current index -> original id
  std::iota(current.begin(), current.end(), Node{0});
  for (Node r : removed) {
    const auto pos = static_cast<std::size_t>(
        std::lower_bound(current.begin(), current.end(), r) - current.begin());
    auto res = exclude_node(out.matrix, pos, beta);
    out.matrix = std::move(res.matrix);
    out.chain.steps.push_back(std::move(res.step));
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  out.kept = current;
  std::fill(out.remap.begin(), out.remap.end(), kNoNode);
  for (std::size_t idx = 0; idx < current.size(); ++idx) out.remap[current[idx]] = idx;
  return out;
}

namespace detail {

/// Draws an index with probability proportional to weights (uniform if all zero).
template <class Rng>
std::size_t weighted_pick(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (total <= 0.0) {
    return std::min(weights.size() - 1, static_cast<std::size_t>(u01(rng) * static_cast<double>(weights.size())));
  }
  const double r = u01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (r < acc) return i;
  }
  return last_positive;
}

}  // namespace detail

/// Picks `keep_count` nodes to keep and compresses everything else away.
///
/// Half the kept nodes (rounded up) form a connected patch grown by random
/// breadth-first expansion from a frequency-weighted seed; the rest are drawn
/// without replacement proportionally to `node_frequencies`.
inline CompressedGraph sample_subgraph(const Graph& graph, const CostMatrix& m,
                                       std::size_t keep_count,
                                       std::span<const double> node_frequencies,
                                       std::uint64_t seed, Beta beta) {
  const std::size_t n = graph.node_count();
  require(keep_count >= 2, "sample_subgraph: keep_count must be at least 2");
  require(keep_count <= n, "sample_subgraph: keep_count exceeds node count");
  require(m.size() == n, "sample_subgraph: cost matrix does not match graph");
  require(node_frequencies.size() == n, "sample_subgraph: one frequency per node required");
  if (keep_count == n) return exclude_nodes(m, {}, beta);

  std::mt19937_64 rng(seed);
  std::vector<bool> kept(n, false);
  std::size_t kept_count = 0;
  auto keep = [&](Node v) {
    kept[v] = true;
    ++kept_count;
  };

  const std::size_t patch = (keep_count + 1) / 2;
  keep(detail::weighted_pick(node_frequencies, rng));
  std::vector<Node> frontier;
  auto refresh_frontier = [&] {
    frontier.clear();
    for (Node u = 0; u < n; ++u) {
      if (kept[u]) continue;
      for (Node v = 0; v < n; ++v)
        if (kept[v] && (graph.has_edge(u, v) || graph.has_edge(v, u))) {
          frontier.push_back(u);
          break;
        }
    }
  };
  while (kept_count < patch) {
    refresh_frontier();
    if (frontier.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    keep(frontier[pick(rng)]);
  }

  std::vector<double> w(n);
  while (kept_count < keep_count) {
    bool any_positive = false;
    for (Node v = 0; v < n; ++v) {
      w[v] = kept[v] ? 0.0 : std::max(0.0, node_frequencies[v]);
      any_positive = any_positive || w[v] > 0.0;
    }
    if (!any_positive)
      for (Node v = 0; v < n; ++v) w[v] = kept[v] ? 0.0 : 1.0;
    keep(detail::weighted_pick(std::span<const double>(w), rng));
  }

  std::vector<Node> removed;
  for (Node v = 0; v < n; ++v)
    if (!kept[v]) removed.push_back(v);
  return exclude_nodes(m, std::move(removed), beta);
}

}  // namespace datasp
