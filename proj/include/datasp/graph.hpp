#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "datasp/error.hpp"
#include "datasp/smooth_ops.hpp"

namespace datasp {

using Node = std::size_t;

/// Ordered node sequence.
using Path = std::vector<Node>;

inline constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

struct Edge {
  Node from;
  Node to;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed simple graph over nodes 0..n-1. Edge order is significant: every
/// per-edge vector (priors, predicted costs) is aligned with it.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t node_count, std::vector<Edge> edges)
      : n_(node_count), edges_(std::move(edges)), index_(n_ * n_, -1) {
    require(n_ > 0, "graph must have at least one node");
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto [u, v] = edges_[e];
      require(u < n_ && v < n_, "edge endpoint out of range");
      require(u != v, "self-loop edges are not allowed");
      auto& slot = index_[u * n_ + v];
      require(slot < 0, "duplicate edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
      slot = static_cast<std::int64_t>(e);
    }
  }

  /// Each undirected pair {u,v} becomes (u,v) followed by (v,u).
  static Graph undirected(std::size_t node_count, std::span<const Edge> pairs) {
    std::vector<Edge> directed;
    directed.reserve(2 * pairs.size());
    for (const auto& [u, v] : pairs) {
      directed.push_back({u, v});
      directed.push_back({v, u});
    }
    return Graph(node_count, std::move(directed));
  }

  std::size_t node_count() const { return n_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }

  bool has_edge(Node u, Node v) const { return u < n_ && v < n_ && index_[u * n_ + v] >= 0; }

  std::optional<std::size_t> edge_index(Node u, Node v) const {
    if (!has_edge(u, v)) return std::nullopt;
    return static_cast<std::size_t>(index_[u * n_ + v]);
  }

  /// Out-neighbours in ascending order.
  std::vector<Node> successors(Node u) const {
    std::vector<Node> out;
    for (Node v = 0; v < n_; ++v)
      if (index_[u * n_ + v] >= 0) out.push_back(v);
    return out;
  }

  /// True if every node reaches every other one following edge directions.
  bool strongly_connected() const;

  /// True if the graph is connected when edge directions are ignored.
  bool weakly_connected() const;

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::int64_t> index_;
};

/// Dense n x n matrix of extended-real costs, +inf where no edge exists.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(std::size_t n, double fill = kInf) : n_(n), values_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_, n_}; }

  friend bool operator==(const CostMatrix&, const CostMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

/// Finite entries strictly positive, diagonal +inf.
inline void validate_cost_matrix(const CostMatrix& m) {
  require(m.size() > 0, "cost matrix is empty");
  for (std::size_t i = 0; i < m.size(); ++i) {
    require(is_inf(m(i, i)), "cost matrix diagonal must be +inf");
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double x = m(i, j);
      require(is_inf(x) || (std::isfinite(x) && x > 0.0),
              "cost matrix entries must be positive or +inf");
    }
  }
}

inline CostMatrix build_cost_matrix(std::span<const double> edge_costs, const Graph& graph) {
  require(edge_costs.size() == graph.edge_count(), "edge cost vector does not match edge count");
  CostMatrix m(graph.node_count());
  for (std::size_t e = 0; e < edge_costs.size(); ++e) {
    const double c = edge_costs[e];
    require(std::isfinite(c) && c > 0.0, "edge costs must be positive and finite");
    m(graph.edge(e).from, graph.edge(e).to) = c;
  }
  return m;
}

/// Gathers a dense n x n gradient back onto the graph's edge ordering.
inline std::vector<double> gather_edge_gradient(std::span<const double> matrix_grad,
                                                const Graph& graph) {
  const std::size_t n = graph.node_count();
  require(matrix_grad.size() == n * n, "matrix gradient shape mismatch");
  std::vector<double> g(graph.edge_count());
  for (std::size_t e = 0; e < g.size(); ++e)
    g[e] = matrix_grad[graph.edge(e).from * n + graph.edge(e).to];
  return g;
}

/// Euclidean edge lengths from 2-D node positions.
inline std::vector<double> euclidean_priors(const Graph& graph,
                                            std::span<const std::pair<double, double>> positions) {
  require(positions.size() == graph.node_count(), "one position per node required");
  std::vector<double> prior;
  prior.reserve(graph.edge_count());
  for (const auto& [u, v] : graph.edges()) {
    const double dx = positions[u].first - positions[v].first;
    const double dy = positions[u].second - positions[v].second;
    prior.push_back(std::hypot(dx, dy));
  }
  return prior;
}

inline void validate_priors(std::span<const double> prior, const Graph& graph) {
  require(prior.size() == graph.edge_count(), "prior cost vector does not match edge count");
  for (double p : prior) require(std::isfinite(p) && p >= 0.0, "prior costs must be finite and >= 0");
}

namespace detail {

inline std::vector<bool> reach_from(const Graph& g, Node s, bool ignore_direction) {
  const std::size_t n = g.node_count();
  std::vector<bool> seen(n, false);
  std::vector<Node> stack{s};
  seen[s] = true;
  while (!stack.empty()) {
    const Node u = stack.back();
    stack.pop_back();
    for (Node v = 0; v < n; ++v) {
      const bool linked = g.has_edge(u, v) || (ignore_direction && g.has_edge(v, u));
      if (linked && !seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

inline bool all_true(const std::vector<bool>& v) {
  for (bool b : v)
    if (!b) return false;
  return true;
}

}  // namespace detail

inline bool Graph::strongly_connected() const {
  for (Node s = 0; s < n_; ++s)
    if (!detail::all_true(detail::reach_from(*this, s, false))) return false;
  return true;
}

inline bool Graph::weakly_connected() const {
  return detail::all_true(detail::reach_from(*this, 0, true));
}

}  // namespace datasp
