#pragma once

// Shared test fixtures and brute-force helpers.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "datasp/graph.hpp"

namespace datasp::testing {

/// Complete 4-node graph with M_ij = |i - j|.
inline CostMatrix four_node_fixture() {
  CostMatrix m(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) m(i, j) = std::abs(static_cast<double>(i) - static_cast<double>(j));
  return m;
}

/// Random directed graph: a random Hamiltonian cycle (so strongly connected)
/// plus extra arcs with probability `density`; costs uniform in [lo, hi].
inline CostMatrix random_connected_matrix(std::size_t n, double density, std::uint64_t seed,
                                          double lo = 0.5, double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> cost(lo, hi);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  CostMatrix m(n);
  if (n == 1) return m;
  for (std::size_t t = 0; t < n; ++t) m(order[t], order[(t + 1) % n]) = cost(rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && is_inf(m(i, j)) && u01(rng) < density) m(i, j) = cost(rng);
  return m;
}

}  // namespace datasp::testing
