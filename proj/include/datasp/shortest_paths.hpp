#pragma once

// Exact shortest-path references: Floyd-Warshall (the beta -> inf limit of
// the smoothed recursion) and a deterministic Dijkstra.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "datasp/graph.hpp"

namespace datasp {

struct AllPairs {
  CostMatrix distances;
  /// predecessors[i*n + j] is the node before j on a shortest i -> j path.
  std::vector<Node> predecessors;
};

/// Classical Floyd-Warshall. Self pairs are never relaxed, so the diagonal
/// keeps its +inf convention; unreachable pairs stay +inf.
inline AllPairs classical_floyd_warshall(const CostMatrix& m) {
  const std::size_t n = m.size();
  AllPairs out{m, std::vector<Node>(n * n, kNoNode)};
  auto& d = out.distances;
  auto& r = out.predecessors;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && !is_inf(m(i, j))) r[i * n + j] = i;

  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k || is_inf(d(i, k))) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || j == k) continue;
        const double via = d(i, k) + d(k, j);
        if (via < d(i, j)) {
          d(i, j) = via;
          r[i * n + j] = r[k * n + j];
        }
      }
    }
  return out;
}

/// Follows predecessor links; empty when j is unreachable from i.
inline Path reconstruct_path(const AllPairs& ap, Node i, Node j) {
  const std::size_t n = ap.distances.size();
  if (i == j) return {i};
  if (ap.predecessors[i * n + j] == kNoNode) return {};
  Path rev{j};
  for (Node v = j; v != i;) {
    v = ap.predecessors[i * n + v];
    rev.push_back(v);
    require(rev.size() <= n, "predecessor table contains a cycle");
  }
  std::reverse(rev.begin(), rev.end());
  return rev;
}

struct ShortestPath {
  Path nodes;
  double cost = 0.0;
};

/// Dijkstra from `source` to `target`. Among minimum-cost paths the
/// lexicographically smallest node sequence is returned. Costs within a
/// relative 1e-12 are treated as ties. std::nullopt means no path.
inline std::optional<ShortestPath> dijkstra(const CostMatrix& m, Node source, Node target) {
  const std::size_t n = m.size();
  require(source < n && target < n, "dijkstra: node out of range");
  if (source == target) return ShortestPath{{source}, 0.0};

  // Distances to the target over reversed edges.
  std::vector<double> to_target(n, kInf);
  std::vector<bool> done(n, false);
  using Item = std::pair<double, Node>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  to_target[target] = 0.0;
  queue.push({0.0, target});
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (done[v]) continue;
    done[v] = true;
    for (Node u = 0; u < n; ++u) {
      const double w = m(u, v);
      if (u == v || is_inf(w)) continue;
      require(w > 0.0, "dijkstra requires positive costs");
      if (d + w < to_target[u]) {
        to_target[u] = d + w;
        queue.push({to_target[u], u});
      }
    }
  }
  if (is_inf(to_target[source])) return std::nullopt;

  // Greedy walk: the smallest successor that stays on some optimal path.
  ShortestPath best{{source}, 0.0};
  for (Node u = source; u != target;) {
    const double tol = 1e-12 * std::max(1.0, to_target[u]);
    Node next = kNoNode;
    for (Node v = 0; v < n; ++v) {
      const double w = m(u, v);
      if (v == u || is_inf(w) || is_inf(to_target[v])) continue;
      if (std::abs(w + to_target[v] - to_target[u]) <= tol) {
        next = v;
        break;
      }
    }
    require(next != kNoNode, "dijkstra: inconsistent distance labels");
    best.cost += m(u, next);
    best.nodes.push_back(next);
    u = next;
  }
  return best;
}

/// Sum of m over consecutive pairs; +inf if some hop is not an edge.
inline double path_cost(const CostMatrix& m, const Path& path) {
  double c = 0.0;
  for (std::size_t t = 1; t < path.size(); ++t) c += m(path[t - 1], path[t]);
  return c;
}

}  // namespace datasp
