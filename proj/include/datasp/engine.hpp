#pragma once

// Smoothed Floyd-Warshall ("DataSP").
//
// For k = 0..n-1 and every pair (i,j) with a finite shortcut through k:
//   (p_s, p_d) = Phi_beta(M[i,k] + M[k,j], M[i,j])
//   P[i,j,k]   = p_s
//   P[i,j,c]  *= p_d            for c < k and c = i
//   M[i,j]     = min_beta(M[i,k] + M[k,j], M[i,j])
// P[i,j,.] is the distribution of the highest intermediate node on an i -> j
// walk (slot i meaning "direct"), M the smoothed distance. Pairs with i = j,
// k in {i,j}, or an infinite leg are skipped; none of them can change M or P.
//
// Two forward routes are provided. datasp_forward is the literal triple loop
// with the per-update rescaling of the whole P row (O(n^4)).
// datasp_forward_efficient processes each k as a batch against a snapshot of
// row k (row and column k are invariant during iteration k) with a
// branch-free kernel, and assembles P at the end from suffix products of the
// recorded p_d, which is O(n^3).

#include <array>
#include <utility>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "datasp/graph.hpp"
#include "datasp/smooth_ops.hpp"

namespace datasp {

class ShortcutTensor {
 public:
  ShortcutTensor() = default;
  explicit ShortcutTensor(std::size_t n) : n_(n), values_(n * n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values_[(i * n_ + j) * n_ + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * n_ + j) * n_ + k];
  }
  std::span<const double> row(std::size_t i, std::size_t j) const {
    return {values_.data() + (i * n_ + j) * n_, n_};
  }
  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }

  /// True when P[i,j,.] carries any mass, i.e. j is reachable from i.
  bool reachable(std::size_t i, std::size_t j) const {
    for (double p : row(i, j))
      if (p > 0.0) return true;
    return false;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

enum class ForwardVariant : std::uint8_t { reference, efficient };

/// Everything the backward pass needs. Update (k,i,j) is stored at slot
/// (k*n + i)*n + j. Skipped updates hold
/// (p_via, p_direct) = (0, 1), which is an exact no-op in both the suffix
/// products and the adjoint.
struct DataspTape {
  ForwardVariant variant = ForwardVariant::efficient;
  double beta = 1.0;
  CostMatrix initial;
  CostMatrix final_distances;
  std::vector<double> p_via;
  std::vector<double> p_direct;
};

struct DataspResult {
  ShortcutTensor shortcuts;  // P
  CostMatrix distances;      // smoothed M
  DataspTape tape;
};

namespace detail {

inline ShortcutTensor init_shortcuts(const CostMatrix& m) {
  const std::size_t n = m.size();
  ShortcutTensor p(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && !is_inf(m(i, j))) p(i, j, i) = 1.0;
  return p;
}

inline DataspTape empty_tape(ForwardVariant v, double beta, const CostMatrix& m) {
  const std::size_t n3 = m.size() * m.size() * m.size();
  return {v, beta, m, {}, std::vector<double>(n3, 0.0), std::vector<double>(n3, 1.0)};
}

// Literal row update: P[i,j,k] = p_s, P[i,j,c] *= p_d for c < k and c = i.
inline void apply_update_in_place(double* row, std::size_t i, std::size_t k, double p_via,
                                  double p_direct) {
  row[k] = p_via;
  for (std::size_t c = 0; c < k; ++c) row[c] *= p_direct;
  if (i > k) row[i] *= p_direct;
}

// P[i,j,k] = p_s(k) * prod_{k' > k} p_d(k');  P[i,j,i] = [M0(i,j) < inf] * prod_k p_d(k).
inline ShortcutTensor assemble_from_suffix(const DataspTape& tape) {
  const std::size_t n = tape.initial.size();
  const std::size_t n2 = n * n;
  ShortcutTensor p(n);
  auto out = p.data();
  std::vector<double> suffix(n2, 1.0);
  for (std::size_t k = n; k-- > 0;) {
    const double* pv = tape.p_via.data() + k * n2;
    const double* pd = tape.p_direct.data() + k * n2;
    for (std::size_t ij = 0; ij < n2; ++ij) {
      out[ij * n + k] = pv[ij] * suffix[ij];
      suffix[ij] *= pd[ij];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[(i * n + j) * n + i] = (i != j && !is_inf(tape.initial(i, j))) ? suffix[i * n + j] : 0.0;
  return p;
}

// Reference replay: the literal in-place updates in (k, i, j) order.
inline ShortcutTensor assemble_in_place(const DataspTape& tape) {
  const std::size_t n = tape.initial.size();
  ShortcutTensor p = init_shortcuts(tape.initial);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || i == k || j == k) continue;
        const std::size_t slot = (k * n + i) * n + j;
        if (tape.p_via[slot] == 0.0 && tape.p_direct[slot] == 1.0) continue;
        apply_update_in_place(&p(i, j, 0), i, k, tape.p_via[slot], tape.p_direct[slot]);
      }
  return p;
}

}  // namespace detail

/// Reference forward: the literal triple loop.
inline DataspResult datasp_forward(const CostMatrix& m, Beta beta) {
  validate_cost_matrix(m);
  const std::size_t n = m.size();
  DataspResult out{detail::init_shortcuts(m), m,
                   detail::empty_tape(ForwardVariant::reference, beta.value(), m)};
  CostMatrix& dist = out.distances;

  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || i == k || j == k) continue;
        if (is_inf(dist(i, k)) || is_inf(dist(k, j))) continue;
        const std::array<double, 2> branches{dist(i, k) + dist(k, j), dist(i, j)};
        const auto w = softmin_weights(branches, beta);
        detail::apply_update_in_place(&out.shortcuts(i, j, 0), i, k, w[0], w[1]);
        dist(i, j) = softmin_value(branches, beta);
        const std::size_t slot = (k * n + i) * n + j;
        out.tape.p_via[slot] = w[0];
        out.tape.p_direct[slot] = w[1];
      }
  out.tape.final_distances = dist;
  return out;
}

/// Batched forward; equal to datasp_forward up to rounding.
inline DataspResult datasp_forward_efficient(const CostMatrix& m, Beta beta) {
  validate_cost_matrix(m);
  const std::size_t n = m.size();
  const double b = beta.value();
  const double inv_b = 1.0 / b;
  DataspResult out{{}, m, detail::empty_tape(ForwardVariant::efficient, b, m)};
  CostMatrix& dist = out.distances;
  double* pv = out.tape.p_via.data();
  double* pd = out.tape.p_direct.data();

  std::vector<double> via_row(n);  // M[k, .] at the start of iteration k
  for (std::size_t k = 0; k < n; ++k) {
    const auto row_k = dist.row(k);
    std::copy(row_k.begin(), row_k.end(), via_row.begin());
    for (std::size_t i = 0; i < n; ++i) {
      const double to_k = dist(i, k);
      if (i == k || is_inf(to_k)) continue;
      double* row_i = &dist(i, 0);
      double* pv_i = pv + (k * n + i) * n;
      double* pd_i = pd + (k * n + i) * n;
      const double saved = via_row[i];
      via_row[i] = kInf;  // j == i is never updated; via_row[k] is the diagonal, already +inf
      for (std::size_t j = 0; j < n; ++j) {
        const auto r = softmin_pair_branchless(to_k + via_row[j], row_i[j], b, inv_b);
        row_i[j] = r.value;
        pv_i[j] = r.w_via;
        pd_i[j] = r.w_direct;
      }
      via_row[i] = saved;
    }
  }
  out.tape.final_distances = dist;
  out.shortcuts = detail::assemble_from_suffix(out.tape);
  return out;
}

/// Rebuilds (P, M) from a tape alone, with the arithmetic of the variant
/// that recorded it.
inline std::pair<ShortcutTensor, CostMatrix> replay_tape(const DataspTape& tape) {
  if (tape.variant == ForwardVariant::efficient)
    return {detail::assemble_from_suffix(tape), tape.final_distances};
  return {detail::assemble_in_place(tape), tape.final_distances};
}

/// Reverse-mode adjoint of the recorded forward pass.
///
/// grad_shortcuts is dL/dP (n^3, layout of ShortcutTensor), grad_distances is
/// dL/dM_final (n^2). Returns dL/dM_initial (n^2), exactly zero wherever the
/// input cost was +inf.
inline std::vector<double> datasp_backward(const DataspTape& tape,
                                           std::span<const double> grad_shortcuts,
                                           std::span<const double> grad_distances) {
  const std::size_t n = tape.initial.size();
  require(grad_shortcuts.size() == n * n * n, "datasp_backward: grad_P shape mismatch");
  require(grad_distances.size() == n * n, "datasp_backward: grad_M shape mismatch");
  const double* pv = tape.p_via.data();
  const double* pd = tape.p_direct.data();
  const double* gp = grad_shortcuts.data();

  // before[slot(k,i,j)] = sum_c dL/dP[i,j,c] * P[i,j,c] just before update
  // k, over the slots already set. dL/dp_d(k) is before times the product of
  // p_d over the later updates of the same pair; dL/dp_s(k) is
  // dL/dP[i,j,k] times that same product.
  const std::size_t n2 = n * n;
  std::vector<double> before(n2 * n);
  std::vector<double> acc(n2, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && !is_inf(tape.initial(i, j))) acc[i * n + j] = gp[(i * n + j) * n + i];
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t ij = 0; ij < n2; ++ij) {
      const std::size_t slot = k * n2 + ij;
      before[slot] = acc[ij];
      acc[ij] = acc[ij] * pd[slot] + gp[ij * n + k] * pv[slot];
    }

  std::vector<double> suffix(n2, 1.0);
  std::vector<double> grad(grad_distances.begin(), grad_distances.end());
  for (std::size_t k = n; k-- > 0;)
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      double via_total = 0.0;  // into M[i,k]
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || j == k) continue;
        const std::size_t ij = i * n + j;
        const std::size_t slot = k * n2 + ij;
        const double s = suffix[ij];
        suffix[ij] = s * pd[slot];
        if (pv[slot] == 0.0 && pd[slot] == 1.0) continue;
        const auto g = softmin_pair_vjp(pv[slot], pd[slot], tape.beta, grad[ij],
                                        gp[ij * n + k] * s, before[slot] * s);
        grad[ij] = g.direct;
        via_total += g.via;
        grad[k * n + j] += g.via;
      }
      grad[i * n + k] += via_total;
    }
  for (std::size_t ij = 0; ij < n * n; ++ij)
    if (is_inf(tape.initial.data()[ij])) grad[ij] = 0.0;
  return grad;
}

}  // namespace datasp
