#pragma once

// Observed trajectories and their encoding into shortcut frequencies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "datasp/error.hpp"
#include "datasp/graph.hpp"

namespace datasp {

struct ContextSample {
  std::vector<double> features;
  std::vector<std::int64_t> discrete;  // optional; compared by Hamming distance
};

enum class Split : std::uint8_t { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

struct Record {
  ContextSample context;
  std::vector<Path> paths;
  Split split = Split::train;
  std::vector<double> true_costs;  // per edge, empty when unknown
};

struct Dataset {
  std::vector<Record> records;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < records.size(); ++r)
      if (records[r].split == s) out.push_back(r);
    return out;
  }
};

inline bool has_repeated_node(const Path& p) {
  Path sorted = p;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

/// Length >= 2 and every hop an edge of the graph.
inline void validate_trajectory(const Path& p, const Graph& g) {
  require(p.size() >= 2, "trajectory needs at least two nodes");
  for (Node v : p) require(v < g.node_count(), "trajectory node out of range");
  for (std::size_t t = 1; t < p.size(); ++t)
    require(g.has_edge(p[t - 1], p[t]),
            "trajectory hop (" + std::to_string(p[t - 1]) + "," + std::to_string(p[t]) +
                ") is not an edge");
}

inline void validate_dataset(const Dataset& ds, const Graph& g) {
  std::size_t dim = 0;
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const auto& rec = ds.records[r];
    if (r == 0) dim = rec.context.features.size();
    require(rec.context.features.size() == dim, "context length differs across the dataset");
    for (const auto& p : rec.paths) validate_trajectory(p, g);
    require(rec.true_costs.empty() || rec.true_costs.size() == g.edge_count(),
            "true_costs does not match edge count");
  }
}

struct ShortcutTriple {
  Node i, j, k;
  friend bool operator==(const ShortcutTriple&, const ShortcutTriple&) = default;
  friend auto operator<=>(const ShortcutTriple&, const ShortcutTriple&) = default;
};

/// One triple per subpath (positions a < b): k is the largest node strictly
/// between them, or i itself for a single hop.
inline std::vector<ShortcutTriple> highest_intermediate_decomposition(const Path& traj) {
  require(!has_repeated_node(traj), "trajectory contains a cycle; remove cycles first");
  std::vector<ShortcutTriple> out;
  const std::size_t len = traj.size();
  out.reserve(len * (len - 1) / 2);
  for (std::size_t a = 0; a + 1 < len; ++a) {
    out.push_back({traj[a], traj[a + 1], traj[a]});
    Node highest = traj[a + 1];
    for (std::size_t b = a + 2; b < len; ++b) {
      out.push_back({traj[a], traj[b], highest});
      highest = std::max(highest, traj[b]);
    }
  }
  return out;
}

/// Empirical distribution of the highest intermediate node per observed pair.
class FrequencyTensor {
 public:
  struct Pair {
    Node i, j;
    std::vector<std::pair<Node, double>> shortcuts;  // (k, F[i,j,k]), k ascending
  };

  FrequencyTensor() = default;
  FrequencyTensor(std::size_t n, std::vector<Pair> pairs) : n_(n), pairs_(std::move(pairs)) {}

  std::size_t node_count() const { return n_; }
  /// The observed pair set D, sorted by (i, j).
  const std::vector<Pair>& pairs() const { return pairs_; }
  bool empty() const { return pairs_.empty(); }

  double operator()(Node i, Node j, Node k) const {
    const auto it = std::lower_bound(pairs_.begin(), pairs_.end(), std::pair{i, j},
                                     [](const Pair& p, const std::pair<Node, Node>& key) {
                                       return std::pair{p.i, p.j} < key;
                                     });
    if (it == pairs_.end() || it->i != i || it->j != j) return 0.0;
    for (const auto& [kk, f] : it->shortcuts)
      if (kk == k) return f;
    return 0.0;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Pair> pairs_;
};

inline FrequencyTensor build_frequency_tensor(std::span<const Path> trajs, std::size_t node_count) {
  require(!trajs.empty(), "build_frequency_tensor: no trajectories");
  std::map<std::pair<Node, Node>, std::map<Node, double>> counts;
  for (const auto& t : trajs) {
    for (Node v : t) require(v < node_count, "build_frequency_tensor: node out of range");
    for (const auto& [i, j, k] : highest_intermediate_decomposition(t)) counts[{i, j}][k] += 1.0;
  }
  std::vector<FrequencyTensor::Pair> pairs;
  pairs.reserve(counts.size());
  for (auto& [ij, ks] : counts) {
    double total = 0.0;
    for (const auto& kv : ks) total += kv.second;
    FrequencyTensor::Pair p{ij.first, ij.second, {}};
    for (const auto& [k, c] : ks) p.shortcuts.emplace_back(k, c / total);
    pairs.push_back(std::move(p));
  }
  return FrequencyTensor(node_count, std::move(pairs));
}

/// Drops removed nodes (remap[v] == kNoNode) and renumbers the rest.
/// std::nullopt when fewer than two nodes survive.
inline std::optional<Path> apply_node_exclusion_to_path(const Path& traj,
                                                        std::span<const std::size_t> remap) {
  Path out;
  for (Node v : traj) {
    require(v < remap.size(), "apply_node_exclusion_to_path: node out of range");
    if (remap[v] != kNoNode) out.push_back(remap[v]);
  }
  if (out.size() < 2) return std::nullopt;
  return out;
}

/// Rejects any walk that revisits a node; accepted walks are returned unchanged.
inline std::optional<Path> remove_cycles(const Path& walk) {
  if (walk.size() < 2 || has_repeated_node(walk)) return std::nullopt;
  return walk;
}

/// Euclidean distance over continuous features plus Hamming distance over
/// discrete ones, unit weights.
inline double context_distance(const ContextSample& a, const ContextSample& b) {
  require(a.features.size() == b.features.size(), "context lengths differ");
  double sq = 0.0;
  for (std::size_t d = 0; d < a.features.size(); ++d) {
    const double diff = a.features[d] - b.features[d];
    sq += diff * diff;
  }
  double hamming = 0.0;
  const std::size_t nd = std::max(a.discrete.size(), b.discrete.size());
  for (std::size_t d = 0; d < nd; ++d) {
    const bool same = d < a.discrete.size() && d < b.discrete.size() && a.discrete[d] == b.discrete[d];
    hamming += same ? 0.0 : 1.0;
  }
  return std::sqrt(sq) + hamming;
}

/// The ceil(fraction * |pool|) records of `pool` closest to the anchor's
/// context, anchor first, ties by record index.
inline std::vector<std::size_t> batch_by_context_similarity(const Dataset& ds,
                                                            std::span<const std::size_t> pool,
                                                            std::size_t anchor, double fraction) {
  require(!pool.empty(), "batch_by_context_similarity: empty dataset");
  require(fraction > 0.0 && fraction <= 1.0, "similarity fraction must be in (0, 1]");
  require(anchor < ds.records.size(), "anchor out of range");
  const auto want = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(pool.size()) - 1e-9));
  const std::size_t count = std::clamp<std::size_t>(want, 1, pool.size());

  struct Item {
    double dist;
    bool not_anchor;
    std::size_t index;
    auto operator<=>(const Item&) const = default;
  };
  std::vector<Item> items;
  items.reserve(pool.size() + 1);
  bool anchor_in_pool = false;
  for (std::size_t r : pool) {
    anchor_in_pool = anchor_in_pool || r == anchor;
    items.push_back({context_distance(ds.records[anchor].context, ds.records[r].context), r != anchor, r});
  }
  if (!anchor_in_pool) items.push_back({0.0, false, anchor});
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(count), items.end());
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t t = 0; t < count; ++t) out.push_back(items[t].index);
  return out;
}

/// How often each node appears on the given records' paths.
inline std::vector<double> node_frequencies(const Dataset& ds, std::span<const std::size_t> records,
                                            std::size_t node_count) {
  std::vector<double> f(node_count, 0.0);
  for (std::size_t r : records)
    for (const auto& p : ds.records[r].paths)
      for (Node v : p) f[v] += 1.0;
  return f;
}

}  // namespace datasp
