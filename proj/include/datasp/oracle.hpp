#pragma once

// Brute-force references for tests and the verify command: explicit
// enumeration of the walks DataSP can produce, their max-entropy
// distribution, and checks of the engine and sampler against them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "datasp/engine.hpp"
#include "datasp/error.hpp"
#include "datasp/graph.hpp"
#include "datasp/inference.hpp"

namespace datasp {

struct VisitableWalk {
  Path nodes;
  double cost = 0.0;
  Node highest = kNoNode;  // kNoNode for the direct edge

  bool direct() const { return highest == kNoNode; }
};

inline constexpr std::size_t kOracleMaxNodes = 10;
inline constexpr double kOracleMaxWalks = 1e6;

namespace detail {

class WalkEnumerator {
 public:
  explicit WalkEnumerator(const CostMatrix& m) : m_(m) {}

  // Walks a -> b whose interior nodes are all <= bound (bound = -1: none).
  double count(Node a, Node b, long bound) {
    const auto key = std::tuple{a, b, bound};
    if (const auto it = counts_.find(key); it != counts_.end()) return it->second;
    double c = is_inf(m_(a, b)) ? 0.0 : 1.0;
    for (long h = 0; h <= bound; ++h) {
      const auto hn = static_cast<Node>(h);
      if (hn == a || hn == b) continue;
      c += count(a, hn, h - 1) * count(hn, b, h - 1);
      if (c > kOracleMaxWalks) break;
    }
    counts_[key] = c;
    return c;
  }

  const std::vector<VisitableWalk>& walks(Node a, Node b, long bound) {
    const auto key = std::tuple{a, b, bound};
    if (const auto it = walks_.find(key); it != walks_.end()) return it->second;
    std::vector<VisitableWalk> out;
    if (!is_inf(m_(a, b))) out.push_back({{a, b}, m_(a, b), kNoNode});
    for (long h = 0; h <= bound; ++h) {
      const auto hn = static_cast<Node>(h);
      if (hn == a || hn == b) continue;
      const auto& left = walks(a, hn, h - 1);
      const auto& right = walks(hn, b, h - 1);
      for (const auto& l : left)
        for (const auto& r : right) {
          VisitableWalk w{l.nodes, l.cost + r.cost, hn};
          w.nodes.insert(w.nodes.end(), r.nodes.begin() + 1, r.nodes.end());
          out.push_back(std::move(w));
        }
    }
    return walks_[key] = std::move(out);
  }

 private:
  const CostMatrix& m_;
  std::map<std::tuple<Node, Node, long>, double> counts_;
  std::map<std::tuple<Node, Node, long>, std::vector<VisitableWalk>> walks_;
};

}  // namespace detail

/// Every walk i -> j generated by the highest-intermediate recursion with all
/// interior nodes <= max_node_bound: the direct edge, or some h not in {i,j}
/// joined with a walk i -> h and a walk h -> j whose interiors are < h.
/// Refuses graphs above 10 nodes and outputs above 10^6 walks.
inline std::vector<VisitableWalk> enumerate_visitable_walks(const CostMatrix& m, Node i, Node j,
                                                            std::size_t max_node_bound) {
  const std::size_t n = m.size();
  if (n > kOracleMaxNodes)
    throw OracleRefusal("walk enumeration is limited to " + std::to_string(kOracleMaxNodes) + " nodes");
  require(i < n && j < n && i != j, "enumerate_visitable_walks: need distinct nodes in range");
  const long bound = static_cast<long>(std::min(max_node_bound, n - 1));
  detail::WalkEnumerator en(m);
  if (en.count(i, j, bound) > kOracleMaxWalks)
    throw OracleRefusal("walk enumeration would exceed 10^6 walks");
  auto walks = en.walks(i, j, bound);
  std::sort(walks.begin(), walks.end(),
            [](const VisitableWalk& a, const VisitableWalk& b) { return a.nodes < b.nodes; });
  walks.erase(std::unique(walks.begin(), walks.end(),
                          [](const VisitableWalk& a, const VisitableWalk& b) { return a.nodes == b.nodes; }),
              walks.end());
  return walks;
}

/// exp(-beta cost) / Z over the given walks.
inline std::map<Path, double> maxent_distribution(std::span<const VisitableWalk> walks, Beta beta) {
  require(!walks.empty(), "maxent_distribution: no walks");
  double lo = kInf;
  for (const auto& w : walks) lo = std::min(lo, w.cost);
  double z = 0.0;
  for (const auto& w : walks) z += std::exp(-beta.value() * (w.cost - lo));
  std::map<Path, double> out;
  for (const auto& w : walks) out[w.nodes] += std::exp(-beta.value() * (w.cost - lo)) / z;
  return out;
}

/// Worst |M[i,j] - min_beta(walk costs)| over all pairs (inf if the
/// reachability patterns disagree).
inline double verify_distance_identity(const CostMatrix& m, Beta beta,
                              ForwardVariant variant = ForwardVariant::reference) {
  const auto fwd = variant == ForwardVariant::reference ? datasp_forward(m, beta)
                                                        : datasp_forward_efficient(m, beta);
  const std::size_t n = m.size();
  double worst = 0.0;
  for (Node i = 0; i < n; ++i)
    for (Node j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto walks = enumerate_visitable_walks(m, i, j, n - 1);
      const double got = fwd.distances(i, j);
      if (walks.empty()) {
        worst = std::max(worst, is_inf(got) ? 0.0 : kInf);
        continue;
      }
      std::vector<double> costs;
      for (const auto& w : walks) costs.push_back(w.cost);
      const double want = softmin_value(costs, beta);
      worst = std::max(worst, is_inf(got) ? kInf : std::abs(got - want));
    }
  return worst;
}

/// Worst |P[i,j,k] - (sum of exp(-beta c) over walks with highest node k) / Z|
/// with the direct edge in slot i.
inline double verify_shortcut_identity(const CostMatrix& m, Beta beta,
                              ForwardVariant variant = ForwardVariant::reference) {
  const auto fwd = variant == ForwardVariant::reference ? datasp_forward(m, beta)
                                                        : datasp_forward_efficient(m, beta);
  const std::size_t n = m.size();
  double worst = 0.0;
  std::vector<double> want(n);
  for (Node i = 0; i < n; ++i)
    for (Node j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto walks = enumerate_visitable_walks(m, i, j, n - 1);
      std::fill(want.begin(), want.end(), 0.0);
      if (!walks.empty()) {
        double lo = kInf;
        for (const auto& w : walks) lo = std::min(lo, w.cost);
        double z = 0.0;
        for (const auto& w : walks) {
          const double e = std::exp(-beta.value() * (w.cost - lo));
          want[w.direct() ? i : w.highest] += e;
          z += e;
        }
        for (double& v : want) v /= z;
      }
      for (Node k = 0; k < n; ++k) worst = std::max(worst, std::abs(fwd.shortcuts(i, j, k) - want[k]));
    }
  return worst;
}

/// Total-variation distance between sample_path frequencies (num_samples
/// draws, cycles kept) and the max-entropy distribution over the oracle walks.
template <class Rng>
double verify_sampler_distribution(const ShortcutTensor& p, const CostMatrix& m, Beta beta, Node i, Node j,
                       std::size_t num_samples, Rng& rng) {
  const auto walks = enumerate_visitable_walks(m, i, j, m.size() - 1);
  const auto target = maxent_distribution(walks, beta);
  const auto est = monte_carlo_path_distribution(p, i, j, num_samples, rng, false);
  double tv = 0.0;
  for (const auto& [path, q] : target) tv += std::abs(est.frequency(path) - q);
  for (const auto& [path, c] : est.counts)
    if (!target.contains(path)) tv += est.frequency(path);
  return 0.5 * tv;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> numeric;
};

/// Central differences of f at x (finite coordinates only) against
/// `analytic`. Relative error is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult finite_difference_gradcheck(const std::function<double(std::span<const double>)>& f,
                                                   std::span<const double> x,
                                                   std::span<const double> analytic, double step) {
  require(x.size() == analytic.size(), "finite_difference_gradcheck: gradient size mismatch");
  require(step > 0.0, "finite_difference_gradcheck: step must be positive");
  GradCheckResult out;
  out.numeric.assign(x.size(), 0.0);
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (!std::isfinite(x[t])) continue;
    probe[t] = x[t] + step;
    const double up = f(probe);
    probe[t] = x[t] - step;
    const double down = f(probe);
    probe[t] = x[t];
    out.numeric[t] = (up - down) / (2.0 * step);
    const double a = analytic[t];
    const double err = std::abs(a - out.numeric[t]) /
                       std::max({std::abs(a), std::abs(out.numeric[t]), 1e-8});
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst_index = t;
    }
  }
  return out;
}

}  // namespace datasp
