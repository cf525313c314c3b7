#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "datasp/smooth_ops.hpp"

namespace datasp {
namespace {

TEST(SoftminValue, InfiniteBranchCarriesNoMass) {
  const std::array<double, 2> v{3.0, kInf};
  EXPECT_DOUBLE_EQ(softmin_value(v, Beta(1.0)), 3.0);
}

TEST(SoftminValue, TwoZeros) {
  const std::array<double, 2> v{0.0, 0.0};
  EXPECT_NEAR(softmin_value(v, Beta(1.0)), -std::log(2.0), 1e-15);
}

TEST(SoftminValue, FixtureWalkCosts) {
  // Costs of the walks listed for the 4-node |i-j| fixture, pair (0,3).
  const std::vector<double> v{3, 3, 3, 3, 5, 5, 5, 5, 7, 7, 7, 7, 7, 7, 7, 9, 9, 9, 9, 9};
  double z = 0.0;
  for (double c : v) z += std::exp(-c);
  EXPECT_NEAR(z, 0.23310, 5e-5);
  EXPECT_NEAR(softmin_value(v, Beta(1.0)), -std::log(z), 1e-14);
  EXPECT_NEAR(softmin_value(v, Beta(1.0)), 1.4562, 1e-4);  // 1.45629 shown truncated
}

TEST(SoftminValue, AllInfiniteIsInfinite) {
  const std::array<double, 3> v{kInf, kInf, kInf};
  EXPECT_TRUE(is_inf(softmin_value(v, Beta(2.0))));
}

TEST(SoftminValue, EmptyIsAnError) {
  EXPECT_THROW(softmin_value(std::span<const double>{}, Beta(1.0)), ValidationError);
}

TEST(SoftminValue, BoundsAndLargeBeta) {
  const std::array<double, 4> v{1000.0, 1001.0, 1002.0, kInf};
  for (double b : {0.1, 1.0, 100.0, 1e6}) {
    const double s = softmin_value(v, Beta(b));
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_LE(s, 1000.0);
    EXPECT_GE(s, 1000.0 - std::log(4.0) / b);
  }
}

TEST(Beta, RejectsNonPositive) {
  EXPECT_THROW(Beta(0.0), ValidationError);
  EXPECT_THROW(Beta(-1.0), ValidationError);
  EXPECT_THROW(Beta{kInf}, ValidationError);
}

TEST(SoftminWeights, SymmetricPairIsHalf) {
  for (double a : {-3.0, 0.0, 7.5})
    for (double b : {0.5, 1.0, 40.0}) {
      const std::array<double, 2> v{a, a};
      const auto w = softmin_weights(v, Beta(b));
      EXPECT_DOUBLE_EQ(w[0], 0.5);
      EXPECT_DOUBLE_EQ(w[1], 0.5);
    }
}

TEST(SoftminWeights, InfiniteEntryIsExactlyZero) {
  const std::array<double, 2> v{3.0, kInf};
  const auto w = softmin_weights(v, Beta(1.0));
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 0.0);
}

TEST(SoftminWeights, DirectEvaluation) {
  const std::array<double, 2> v{3.0, 5.0};
  const auto w = softmin_weights(v, Beta(1.0));
  const double e = std::exp(-2.0);
  EXPECT_NEAR(w[0], 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(w[1], e / (1.0 + e), 1e-15);
  EXPECT_NEAR(w[0], 0.8808, 1e-4);
  EXPECT_NEAR(w[1], 0.1192, 1e-4);
}

TEST(SoftminWeights, NoFiniteBranch) {
  const std::array<double, 2> v{kInf, kInf};
  EXPECT_THROW(softmin_weights(v, Beta(1.0)), NoFiniteBranchError);
}

TEST(SoftminVjp, ValueGradientEqualsWeights) {
  const std::array<double, 2> v{3.0, 5.0};
  const std::array<double, 2> zero{0.0, 0.0};
  const auto g = softmin_vjp(v, Beta(1.0), 1.0, zero);
  EXPECT_NEAR(g[0], 0.8808, 1e-4);
  EXPECT_NEAR(g[1], 0.1192, 1e-4);
}

TEST(SoftminVjp, ZeroUpstreamGivesZero) {
  const std::array<double, 3> v{1.0, kInf, 2.0};
  const std::array<double, 3> zero{0.0, 0.0, 0.0};
  for (double g : softmin_vjp(v, Beta(3.0), 0.0, zero)) EXPECT_EQ(g, 0.0);
}

// Finite-difference oracle on L(v) = a*softmin_value(v) + <c, softmin_weights(v)>.
TEST(SoftminVjp, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Beta beta(2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(5), c(5);
    for (auto& x : v) x = u(rng);
    for (auto& x : c) x = u(rng);
    const double a = u(rng);
    auto loss = [&](const std::vector<double>& x) {
      const auto w = softmin_weights(x, beta);
      double l = a * softmin_value(x, beta);
      for (std::size_t i = 0; i < x.size(); ++i) l += c[i] * w[i];
      return l;
    };
    const auto g = softmin_vjp(v, beta, a, c);
    const double h = 1e-5;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto vp = v, vm = v;
      vp[i] += h;
      vm[i] -= h;
      const double fd = (loss(vp) - loss(vm)) / (2 * h);
      EXPECT_LE(std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-8}), 1e-6);
    }
  }
}

TEST(SoftminVjp, InfiniteEntryGetsZeroGradient) {
  const std::array<double, 3> v{1.0, kInf, 2.0};
  const std::array<double, 3> up{0.3, -2.0, 0.7};
  EXPECT_EQ(softmin_vjp(v, Beta(1.5), 1.0, up)[1], 0.0);
}

// Property checks over random vectors.
TEST(SoftminProperties, MonotoneShiftCovariantAndHardLimit) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 7);
    for (auto& x : v) x = u(rng);
    if (trial % 3 == 0) v.push_back(kInf);
    const Beta beta(0.1 + std::abs(u(rng)));

    const double base = softmin_value(v, beta);
    auto bumped = v;
    bumped[0] += std::abs(u(rng));
    EXPECT_GE(softmin_value(bumped, beta), base - 1e-12);

    const double c = u(rng);
    auto shifted = v;
    for (auto& x : shifted) x += c;
    EXPECT_NEAR(softmin_value(shifted, beta), base + c, 1e-12);
    const auto w0 = softmin_weights(v, beta);
    const auto w1 = softmin_weights(shifted, beta);
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_NEAR(w0[i], w1[i], 1e-12);
      total += w0[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SoftminProperties, HardLimitSeparatedEntries) {
  const std::array<double, 4> v{2.0, 1.0, 3.0, kInf};
  const Beta beta(1e4);
  EXPECT_NEAR(softmin_value(v, beta), 1.0, 1e-3);
  const auto w = softmin_weights(v, beta);
  EXPECT_NEAR(w[1], 1.0, 1e-3);
  EXPECT_NEAR(w[0] + w[2] + w[3], 0.0, 1e-3);

  const std::array<double, 3> tie{1.0, 1.0, 5.0};
  const auto wt = softmin_weights(tie, beta);
  EXPECT_NEAR(wt[0], 0.5, 1e-3);
  EXPECT_NEAR(wt[1], 0.5, 1e-3);
}

TEST(SoftminPair, AgreesWithGenericOperators) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), b = u(rng), beta = u(rng);
    const std::array<double, 2> v{a, b};
    const auto r = softmin_pair(a, b, beta);
    const auto w = softmin_weights(v, Beta(beta));
    EXPECT_NEAR(r.value, softmin_value(v, Beta(beta)), 1e-13);
    EXPECT_NEAR(r.w_via, w[0], 1e-15);
    EXPECT_NEAR(r.w_direct, w[1], 1e-15);
  }
  const auto r = softmin_pair(2.0, kInf, 1.0);
  EXPECT_EQ(r.value, 2.0);
  EXPECT_EQ(r.w_via, 1.0);
  EXPECT_EQ(r.w_direct, 0.0);
}

TEST(Kernels, ExpNegMatchesLibm) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  for (int t = 0; t < 100000; ++t) {
    const double x = t % 2 ? u(rng) : u(rng) * u(rng) / 6.0;
    EXPECT_NEAR(detail::exp_neg(x), std::exp(-x), 4e-16 * std::exp(-x));
  }
  EXPECT_EQ(detail::exp_neg(0.0), 1.0);
  EXPECT_EQ(detail::exp_neg(kInf), 0.0);
  EXPECT_EQ(detail::exp_neg(750.0), 0.0);
}

TEST(Kernels, Log1pUnitMatchesLibm) {
  for (int t = 0; t <= 20000; ++t) {
    const double e = std::exp(-t / 500.0);
    EXPECT_NEAR(detail::log1p_unit(e), std::log1p(e), 6e-16 * std::log1p(e));
  }
  EXPECT_EQ(detail::log1p_unit(0.0), 0.0);
}

TEST(Kernels, BranchlessPairAgreesWithPair) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int t = 0; t < 20000; ++t) {
    const double beta = t % 3 == 0 ? 30.0 : 1.0;
    const double via = u(rng), direct = t % 7 == 0 ? kInf : u(rng);
    const auto a = softmin_pair(via, direct, beta);
    const auto b = softmin_pair_branchless(via, direct, beta, 1.0 / beta);
    EXPECT_NEAR(a.value, b.value, 1e-14);
    EXPECT_NEAR(a.w_via, b.w_via, 1e-15);
    EXPECT_NEAR(a.w_direct, b.w_direct, 1e-15);
  }
  // Infinite via (a skipped update) and both infinite.
  const auto s = softmin_pair_branchless(kInf, 2.0, 1.0, 1.0);
  EXPECT_EQ(s.value, 2.0);
  EXPECT_EQ(s.w_via, 0.0);
  EXPECT_EQ(s.w_direct, 1.0);
  const auto z = softmin_pair_branchless(kInf, kInf, 1.0, 1.0);
  EXPECT_TRUE(is_inf(z.value));
  EXPECT_EQ(z.w_via, 0.0);
  EXPECT_EQ(z.w_direct, 1.0);
}

}  // namespace
}  // namespace datasp
