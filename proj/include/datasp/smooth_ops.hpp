#pragma once

// Smooth min / argmin over extended reals.
//
//   min_beta(v)  = -(1/beta) log sum_i exp(-beta v_i)
//   Phi_beta(v)  = exp(-beta v) / sum_i exp(-beta v_i)
//
// +inf entries are categorical: they carry zero mass and receive zero
// gradient. Every reduction shifts by the finite minimum before
// exponentiating, so large beta never overflows.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "datasp/error.hpp"

namespace datasp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool is_inf(double x) { return x == kInf; }

/// Inverse temperature of the smoothing.
class Beta {
 public:
  explicit Beta(double value) : value_(value) {
    require(value > 0.0 && std::isfinite(value), "beta must be positive and finite");
  }
  double value() const { return value_; }

 private:
  double value_;
};

namespace detail {

inline double finite_min(std::span<const double> v) {
  double m = kInf;
  for (double x : v)
    if (x < m) m = x;
  return m;
}

}  // namespace detail

inline double softmin_value(std::span<const double> v, Beta beta) {
  require(!v.empty(), "softmin_value: empty input");
  const double m = detail::finite_min(v);
  if (is_inf(m)) return kInf;
  const double b = beta.value();
  double sum = 0.0;
  for (double x : v)
    if (!is_inf(x)) sum += std::exp(-b * (x - m));
  return m - std::log(sum) / b;
}

inline std::vector<double> softmin_weights(std::span<const double> v, Beta beta) {
  require(!v.empty(), "softmin_weights: empty input");
  const double m = detail::finite_min(v);
  if (is_inf(m)) throw NoFiniteBranchError();
  const double b = beta.value();
  std::vector<double> w(v.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (is_inf(v[i])) continue;
    w[i] = std::exp(-b * (v[i] - m));
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

/// Adjoint of (softmin_value, softmin_weights) at v.
///
/// Given dL/dvalue and dL/dweights returns dL/dv, using
/// d value / d v_b = w_b and d w_a / d v_b = beta * w_a * (w_b - delta_ab).
inline std::vector<double> softmin_vjp(std::span<const double> v, Beta beta,
                                       double value_grad,
                                       std::span<const double> weight_grads) {
  require(weight_grads.size() == v.size(), "softmin_vjp: weight gradient size mismatch");
  require(std::isfinite(value_grad), "softmin_vjp: non-finite upstream gradient");
  for (double g : weight_grads) require(std::isfinite(g), "softmin_vjp: non-finite upstream gradient");

  const std::vector<double> w = softmin_weights(v, beta);
  double dot = 0.0;
  for (std::size_t a = 0; a < v.size(); ++a) dot += weight_grads[a] * w[a];

  std::vector<double> grad(v.size(), 0.0);
  for (std::size_t b = 0; b < v.size(); ++b) {
    if (is_inf(v[b])) continue;
    grad[b] = value_grad * w[b] + beta.value() * w[b] * (dot - weight_grads[b]);
  }
  return grad;
}

/// Two-branch kernel used by the shortest-path recursions:
/// value = min_beta(via, direct), weights = Phi_beta(via, direct).
/// `via` is finite; `direct` may be +inf.
struct SoftminPair {
  double value;
  double w_via;
  double w_direct;
};

inline SoftminPair softmin_pair(double via, double direct, double beta) {
  if (is_inf(direct)) return {via, 1.0, 0.0};
  const double lo = std::min(via, direct);
  const double e = std::exp(-beta * std::abs(via - direct));
  const double norm = 1.0 + e;
  const double value = lo - std::log1p(e) / beta;
  if (via <= direct) return {value, 1.0 / norm, e / norm};
  return {value, e / norm, 1.0 / norm};
}

namespace detail {

// exp(-x) for x >= 0 (x = +inf gives 0), straight-line code that compilers
// can vectorize. x = k ln2 + r with |r| <= ln2/2, then a degree-13 Taylor
// polynomial for exp(-r). Results below exp(-700) ~ 1e-304 flush to 0, so
// nothing downstream (weights, log1p) goes subnormal.
inline double exp_neg(double x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52
  const bool in_range = x < 700.0;
  const double xc = in_range ? x : 700.0;
  const double t = xc * kLog2e + kShift;
  const double kd = t - kShift;
  const double r = -(xc - kd * kLn2Hi - kd * kLn2Lo);
  double p = 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const std::uint64_t k = std::bit_cast<std::uint64_t>(t) & 0xFFFFFFFFull;  // 0 <= k <= 1010
  const double y = p * std::bit_cast<double>((1023ull - k) << 52);
  return in_range ? y : 0.0;
}

// log(1 + e) for e in [0, 1] as 2 atanh(s), s = e / (2 + e) <= 1/3.
inline double log1p_unit(double e) {
  const double s = e / (2.0 + e);
  // The shift is below half an ulp of any s where s^2 matters, and keeps s^2
  // out of the subnormal range without a select the compiler could hoist.
  const double sc = s + 1e-100;
  const double s2 = sc * sc;
  double p = 1.0 / 35.0;
  p = p * s2 + 1.0 / 33.0;
  p = p * s2 + 1.0 / 31.0;
  p = p * s2 + 1.0 / 29.0;
  p = p * s2 + 1.0 / 27.0;
  p = p * s2 + 1.0 / 25.0;
  p = p * s2 + 1.0 / 23.0;
  p = p * s2 + 1.0 / 21.0;
  p = p * s2 + 1.0 / 19.0;
  p = p * s2 + 1.0 / 17.0;
  p = p * s2 + 1.0 / 15.0;
  p = p * s2 + 1.0 / 13.0;
  p = p * s2 + 1.0 / 11.0;
  p = p * s2 + 1.0 / 9.0;
  p = p * s2 + 1.0 / 7.0;
  p = p * s2 + 1.0 / 5.0;
  p = p * s2 + 1.0 / 3.0;
  p = p * s2 + 1.0;
  return 2.0 * s * p;
}

}  // namespace detail

/// softmin_pair without branches, also accepting via = +inf. Skipped
/// branches come out as (value = direct, w_via = 0, w_direct = 1).
inline SoftminPair softmin_pair_branchless(double via, double direct, double beta,
                                           double inv_beta) {
  const double lo = via < direct ? via : direct;
  double gap = std::abs(via - direct);
  gap = gap == gap ? gap : kInf;  // inf - inf
  const double e = detail::exp_neg(beta * gap);
  const double inv_norm = 1.0 / (1.0 + e);
  const double value = lo - detail::log1p_unit(e) * inv_beta;
  const bool via_wins = (via <= direct) & (via != kInf);
  return {value, via_wins ? inv_norm : e * inv_norm, via_wins ? e * inv_norm : inv_norm};
}

/// Backward of softmin_pair. Returns (d/d via, d/d direct).
struct PairGrad {
  double via;
  double direct;
};

inline PairGrad softmin_pair_vjp(double w_via, double w_direct, double beta,
                                 double value_grad, double w_via_grad,
                                 double w_direct_grad) {
  const double dot = w_via_grad * w_via + w_direct_grad * w_direct;
  return {value_grad * w_via + beta * w_via * (dot - w_via_grad),
          value_grad * w_direct + beta * w_direct * (dot - w_direct_grad)};
}

}  // namespace datasp
