#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "seg/errors.hpp"
#include "seg/rng.hpp"
#include "seg/schedule.hpp"
#include "test_util.hpp"

using namespace seg;
using namespace seg::testing;

TEST(Beta, Constant) {
  const auto p = StepsizePolicy::constant(0.1);
  for (std::int64_t k : {0, 1, 10, 1000000}) EXPECT_EQ(beta(p, k), 1.0);
}

TEST(Beta, DecreasingExamples) {
  const auto p = StepsizePolicy::decreasing(1.0, 50, 0.1);
  EXPECT_EQ(beta(p, 10), 1.0);
  EXPECT_DOUBLE_EQ(beta(p, 30), 0.8);
  EXPECT_EQ(beta(p, 24), 1.0);  // k0 = ceil(50 / 2) = 25
  EXPECT_EQ(beta(p, 25), 1.0);
  const auto q = StepsizePolicy::decreasing(1.0, 5, 0.1);
  EXPECT_EQ(beta(q, 4), 1.0);
  EXPECT_THROW(beta(p, 51), std::out_of_range);
  EXPECT_THROW(beta(p, -1), std::out_of_range);
}

TEST(Beta, OddBudgetUsesCeilingMidpoint) {
  const auto p = StepsizePolicy::decreasing(1.0, 51, 0.1);
  EXPECT_EQ(beta(p, 25), 1.0);
  EXPECT_DOUBLE_EQ(beta(p, 27), 2.0 / 2.1);
}

TEST(Beta, NonIncreasingAndInUnitInterval) {
  CounterRng rng = CounterRng::stream(3, 0, 0);
  for (int t = 0; t < 50; ++t) {
    const std::int64_t K = 1 + static_cast<std::int64_t>(rng.index(5000));
    const double rt = std::pow(10.0, rng.uniform(-4, 0));
    const auto p = StepsizePolicy::decreasing(1.0, K, rt);
    double prev = 1.0;
    for (std::int64_t k = 0; k <= K; ++k) {
      const double b = beta(p, k);
      ASSERT_GT(b, 0.0);
      ASSERT_LE(b, prev);
      prev = b;
    }
    if (static_cast<double>(K) * rt <= 1.0) EXPECT_EQ(prev, 1.0);
  }
}

TEST(Policy, Validation) {
  EXPECT_THROW(StepsizePolicy::constant(0.0), ValidationError);
  EXPECT_THROW(StepsizePolicy::constant(0.1, 0.0), ValidationError);
  EXPECT_THROW(StepsizePolicy::constant(0.1, 1.5), ValidationError);
  EXPECT_THROW(StepsizePolicy::decreasing(0.1, -1, 0.1), ValidationError);
  EXPECT_THROW(StepsizePolicy::decreasing(0.1, 10, -0.1), ValidationError);
}

TEST(StepSizes, ExtrapolationAndUpdate) {
  const auto p = StepsizePolicy::decreasing(0.2, 50, 0.1, 0.25);
  const auto s = step_sizes(p, 30);
  EXPECT_DOUBLE_EQ(s.gamma1, 0.8 * 0.2);
  EXPECT_DOUBLE_EQ(s.gamma2, 0.25 * 0.8 * 0.2);
  const auto h = StepsizePolicy::hsieh(0.3, 0.5);
  const auto t = step_sizes(h, 7);
  EXPECT_NEAR(t.gamma1, 0.3 * std::pow(8.0, -2.0 / 3.0), 1e-15);
  EXPECT_NEAR(t.gamma2, 0.5 * 0.3 * std::pow(8.0, -1.0 / 3.0), 1e-15);
}

TEST(RhoTilde, Sseg) {
  const auto op = scalar_op({{0.3, 1}, {0.3, -1}});
  EXPECT_NEAR(rho_tilde_sseg(SamplingScheme::uniform(2), op, 1.0 / 6.0), 0.00625, 1e-15);

  std::vector<Comp> zero;
  DenseMatrix<double> R(2, 2);
  R << 0, 1, -1, 0;
  zero.push_back(Comp::affine(R, vec({1, 0})));
  zero.push_back(Comp::affine(R, vec({0, 1})));
  EXPECT_EQ(rho_tilde_sseg(SamplingScheme::uniform(2), Op(std::move(zero)), 0.1), 0.0);

  // Importance sampling with L = (1, 3) and mu = (0.5, 0.5).
  auto comp = [](double L) {
    DenseMatrix<double> M(2, 2);
    const double b = std::sqrt(L * L - 0.25);
    M << 0.5, b, -b, 0.5;
    return Comp::affine(M, vec({0, 0}));
  };
  const Op is_op({comp(1.0), comp(3.0)});
  const double gamma = 1.0 / 12.0;
  // Two-term enumeration: p_i = L_i / 4, multiplier Lbar / L_i = 2 / L_i.
  const double oracle = (0.25 * 2.0 * 0.5 + 0.75 * (2.0 / 3.0) * 0.5) * gamma / 8.0;
  EXPECT_NEAR(rho_tilde_sseg(SamplingScheme::importance({1.0, 3.0}), is_op, gamma), oracle, 1e-15);
  EXPECT_NEAR(oracle, 0.5 / 96.0, 1e-15);

  const auto neg = scalar_op({{2, 1}, {-1, 1}});
  EXPECT_THROW(rho_tilde_sseg(SamplingScheme::uniform(2), neg, 0.1), ValidationError);
}

TEST(RhoTilde, Iseg) {
  EXPECT_NEAR(rho_tilde_iseg(0.1, 0.32), 0.001, 1e-15);
  EXPECT_EQ(rho_tilde_iseg(0.0, 0.32), 0.0);
  const double g = 1.0 / (4.0 + std::sqrt(6.0));
  EXPECT_NEAR(rho_tilde_iseg(1.0, g), (1.0 / 32.0) / (4.0 + std::sqrt(6.0)), 1e-16);
}

// With a = rho_tilde the decreasing policy drives the
// scalar recursion below 32 r0/a exp(-aK/2) + 36 c/(a^2 K).
TEST(DecreasingPolicy, BoundsScalarRecursion) {
  CounterRng rng = CounterRng::stream(2024, 0, 0);
  for (int t = 0; t < 100; ++t) {
    const double a = std::pow(10.0, rng.uniform(-4, -1));
    const double c = std::pow(10.0, rng.uniform(-6, 0));
    const double r0 = std::pow(10.0, rng.uniform(-2, 3));
    const auto K = static_cast<std::int64_t>(std::pow(10.0, rng.uniform(0, 5)));
    const auto p = StepsizePolicy::decreasing(1.0, K, a);
    double r = r0;
    for (std::int64_t k = 0; k < K; ++k) {
      const double b = beta(p, k);
      r = (1.0 - a * b) * r + c * b * b;
    }
    const double bound = 32.0 * r0 / a * std::exp(-a * K / 2.0) + 36.0 * c / (a * a * K);
    EXPECT_LE(r, bound) << "a=" << a << " c=" << c << " r0=" << r0 << " K=" << K;
  }
}
