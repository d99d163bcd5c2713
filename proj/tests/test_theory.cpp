#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "seg/errors.hpp"
#include "seg/theory.hpp"
#include "test_util.hpp"

using namespace seg;
using namespace seg::testing;

namespace {

double max_L(const Op& op) {
  double L = 0.0;
  for (const auto& c : all_component_constants(op)) L = std::max(L, c.L);
  return L;
}

double sigma_us(const Op& op, const Point<double>& xs) {
  return sigma_star_sq(SamplingScheme::uniform(op.size()), op, xs).value;
}

}  // namespace

TEST(SsegParams, Examples) {
  const auto op = scalar_op({{0.3, 1}, {0.3, -1}});
  const auto xs = solve_root(op);
  const auto p = sseg_params(SamplingScheme::uniform(2), op, xs, 1.0 / 6.0, 0.25);
  EXPECT_EQ(p.A, 0.5);
  EXPECT_EQ(p.B, 0.5);
  EXPECT_EQ(p.C, 0.0);
  EXPECT_NEAR(p.rho, 0.00625, 1e-15);
  // sigma_AS^2 = gamma^2 * 1.
  const double sas = 1.0 / 36.0;
  EXPECT_NEAR(p.D1, 6.0 / 16.0 * sas, 1e-15);
  EXPECT_NEAR(p.D2, 1.5 * 0.25 * sas, 1e-15);

  const auto interp = scalar_op({{0.3, 0}, {0.5, 0}});
  const auto q = sseg_params(SamplingScheme::uniform(2), interp, vec({0}), 0.1, 0.25);
  EXPECT_EQ(q.D1, 0.0);
  EXPECT_EQ(q.D2, 0.0);
}

TEST(SsegParams, Errors) {
  const auto op = scalar_op({{1, 1}, {1, -1}});
  EXPECT_THROW(sseg_params(SamplingScheme::uniform(2), op, vec({0}), 10.0, 0.25), ValidationError);
  EXPECT_THROW(sseg_params(SamplingScheme::uniform(2), op, vec({0}), 0.1, 1.0), ValidationError);
  const auto neg = scalar_op({{1, 1}, {-3, 1}});
  EXPECT_THROW(sseg_params(SamplingScheme::uniform(2), neg, solve_root(neg), 0.01, 0.25), ValidationError);
}

TEST(SsegParams, ValidConfigurationsGiveDecreasingEnvelopes) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto op = small_game_op(6, 2, seed);
    const auto xs = solve_root(op);
    std::vector<double> L;
    for (const auto& c : all_component_constants(op)) L.push_back(c.L);
    for (const auto& s : {SamplingScheme::uniform(6), SamplingScheme::importance(L), SamplingScheme::bnice(6, 3)}) {
      for (double alpha : {0.05, 0.25}) {
        const auto p = sseg_params(s, op, xs, stepsize_cap(s, op), alpha);
        EXPECT_LE(p.A, 0.5);
        const auto env = envelope(p, 10.0);
        double prev = env(0);
        for (int k = 1; k < 5000; k += 97) {
          const double v = env(k);
          EXPECT_TRUE(std::isfinite(v));
          EXPECT_LE(v, prev);
          EXPECT_GE(v, env.plateau);
          prev = v;
        }
      }
    }
  }
}

TEST(IsegParams, Examples) {
  EXPECT_NEAR(iseg_stepsize_cap(0.1, 1.0, 0.0, 1), 1.0 / (0.4 + std::sqrt(6.0)), 1e-15);
  EXPECT_NEAR(iseg_stepsize_cap(0.1, 1.0, 0.0, 1), 0.35094, 1e-5);
  EXPECT_NEAR(iseg_stepsize_cap(0.1, 1.0, 1.8, 1), 1.0 / 324.0, 1e-15);
  const auto p = iseg_params(0.1, 1.0, 0.0, 1.0, 4, 0.3, 0.25);
  EXPECT_EQ(p.C, 0.0);
  EXPECT_EQ(p.A, 0.5);
  EXPECT_NEAR(p.rho, 0.25 * 0.3 * 0.1 / 4.0, 1e-16);
  EXPECT_THROW(iseg_params(0.1, 1.0, 0.0, 1.0, 4, 0.4, 0.25), ValidationError);
  const auto q = iseg_params(0.1, 1.0, 1.8, 1.0, 2, 1.0 / 648.0, 0.25);
  EXPECT_NEAR(q.C, 9.0 * 1.8 * 0.0625 / (648.0 * 648.0) / 2.0, 1e-18);
}

TEST(Envelope, Examples) {
  UnifiedParams p;
  p.A = 0.5;
  p.rho = 0.00625;
  const auto e = envelope(p, 1.0);
  EXPECT_EQ(e.kind, BoundKind::LinearToNeighborhood);
  for (int K : {0, 1, 10, 1000}) EXPECT_NEAR(e(K), std::pow(0.99375, K), 1e-15);

  UnifiedParams q;
  q.A = 0.5;
  q.B = 0.125;
  const auto f = envelope(q, 1.0);
  EXPECT_EQ(f.kind, BoundKind::AveragedNorm);
  for (int K : {0, 7, 99}) EXPECT_NEAR(f(K), 8.0 / (K + 1.0), 1e-15);

  UnifiedParams bad;
  bad.rho = 0.1;
  bad.C = 0.2;
  EXPECT_THROW(envelope(bad, 1.0), ValidationError);
  UnifiedParams big_a;
  big_a.A = 0.6;
  big_a.rho = 0.1;
  EXPECT_THROW(envelope(big_a, 1.0), ValidationError);
}

TEST(Envelope, IsegTheoremForm) {
  const auto e = iseg_envelope(0.1, 0.35, 0.25, 1.0, 4, 2.0);
  EXPECT_NEAR(e.plateau, 52.5, 1e-12);
  EXPECT_NEAR(e.rate, 1.0 - 0.25 * 0.35 * 0.1 / 8.0, 1e-15);
  EXPECT_NEAR(e(3), 2.0 * std::pow(e.rate, 3) + 52.5, 1e-12);
}

TEST(Envelope, OneStep) {
  UnifiedParams p;
  p.C = 0.01;
  p.rho = 0.05;
  p.D1 = 1;
  p.D2 = 2;
  const auto s = one_step(p);
  EXPECT_DOUBLE_EQ(s.factor, 0.96);
  EXPECT_DOUBLE_EQ(s.additive, 3.0);
}

TEST(Corollary, UniformClosedFormMatchesGeneralBound) {
  const auto op = small_game_op(8, 3, 3);
  const auto xs = solve_root(op);
  const auto us = SamplingScheme::uniform(8);
  const double L = max_L(op), gamma = 1.0 / (6.0 * L), R0 = 3.0;
  const auto gen = corollary_envelope(us, op, xs, gamma, R0);
  const auto cf = us_corollary(L, mu_bar(us, op), sigma_us(op, xs));
  EXPECT_NEAR(gen.coefficient, cf.exp_coefficient * R0, 1e-9 * gen.coefficient);
  EXPECT_NEAR(gen.rate, cf.exp_rate, 1e-12 * gen.rate);
  EXPECT_NEAR(gen.plateau, cf.tail, 1e-9 * gen.plateau);
}

TEST(Corollary, Examples) {
  const auto pure = sseg_decreasing_envelope(0.01, 0.0, 2.0);
  EXPECT_EQ(pure.plateau, 0.0);
  EXPECT_NEAR(pure(100), 32.0 * 2.0 / 0.01 * std::exp(-0.5), 1e-9);
  EXPECT_THROW(sseg_decreasing_envelope(0.0, 1.0, 1.0), ValidationError);

  EXPECT_NEAR(iseg_condition_number(0.1, 1.0, 0.0, 4), 10.0, 1e-12);
  EXPECT_NEAR(iseg_condition_number(0.1, 1.0, 4.0, 1), 400.0, 1e-12);

  const auto c2 = iseg_corollary_envelope(0.1, 0.2, 1.0, 2, 1.0);
  EXPECT_NEAR(c2.coefficient, 1024.0 / 0.02, 1e-9);
  EXPECT_NEAR(c2.rate, 0.02 / 64.0, 1e-15);
  EXPECT_NEAR(c2.plateau, 69120.0 / (0.01 * 2.0), 1e-6);
}

TEST(Corollary, AveragedBounds) {
  const auto s = sseg_averaged_envelope(0.1, 0.02, 4, 1.0);
  EXPECT_NEAR(s(9), 16.0 / 0.01 / 10.0 + 12.0 * 0.02 / (0.01 * 4.0), 1e-9);
  const auto i = iseg_averaged_envelope(2.0, 3.0, 5, 1.0);
  EXPECT_NEAR(i(0), 32.0 * std::sqrt(6.0) + 18.0, 1e-12);
}

TEST(Certificate, ScalarIdentityMargin) {
  const Op op({Comp::identity(1)});
  CertifyMethod m;
  m.scheme = SamplingScheme::uniform(1);
  m.gamma = 0.1;
  m.params = sseg_params(*m.scheme, op, vec({0}), 0.1, 0.25);
  const auto r = certify_assumption3(op, vec({0}), m, {vec({1})}, 10, 1);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_NEAR(r.points[0].second_moment.value, 0.00050625, 1e-15);
  EXPECT_NEAR(r.points[0].margin_second_moment.value, 0.00050625 - 0.0225, 1e-15);
  EXPECT_NEAR(r.points[0].margin_second_moment.value, -0.0219, 1e-4);
  EXPECT_TRUE(r.all_ok);
}

TEST(Certificate, InterpolationAtSolution) {
  const auto op = scalar_op({{0.5, 0}, {1.0, 0}});
  CertifyMethod m;
  m.scheme = SamplingScheme::uniform(2);
  m.gamma = 0.1;
  m.params = sseg_params(*m.scheme, op, vec({0}), 0.1, 0.25);
  const auto r = certify_assumption3(op, vec({0}), m, {vec({0})}, 50, 1);
  EXPECT_EQ(r.points[0].second_moment.value, 0.0);
  EXPECT_EQ(r.points[0].P.value, 0.0);
  EXPECT_EQ(r.points[0].margin_descent.value, 0.0);
  EXPECT_TRUE(r.all_ok);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_TRUE(j.at("all_ok").get<bool>());
  EXPECT_EQ(j.at("points").size(), 1u);
}

TEST(Certificate, SmallSweepPasses) {
  const auto op = small_game_op(6, 2, 11);
  const auto xs = solve_root(op);
  const auto pts = random_test_points(xs, 10, 1e-2, 1e2, 3);
  std::vector<double> L;
  for (const auto& c : all_component_constants(op)) L.push_back(c.L);
  for (const auto& s : {SamplingScheme::uniform(6), SamplingScheme::importance(L), SamplingScheme::bnice(6, 4)}) {
    CertifyMethod m;
    m.scheme = s;
    m.gamma = stepsize_cap(s, op);
    m.params = sseg_params(s, op, xs, m.gamma, 0.25);
    EXPECT_TRUE(certify_assumption3(op, xs, m, pts, 2000, 5).all_ok) << s.name();
  }
  CertifyMethod i;
  i.method = MethodKind::ISEG;
  i.b = 4;
  const double mu = operator_constants(op).mu;
  i.gamma = iseg_stepsize_cap(mu, max_L(op), 0.0, 4);
  i.params = iseg_params(mu, max_L(op), 0.0, sigma_us(op, xs), 4, i.gamma, 0.25);
  EXPECT_TRUE(certify_assumption3(op, xs, i, pts, 2000, 5).all_ok);
}

// One-step recursion E||x+ - x*||^2 <= (1 + C - rho) ||x - x*||^2 + D1 + D2
// checked by Monte-Carlo at random states.
TEST(OneStepRecursion, HoldsInExpectation) {
  const auto op = small_game_op(6, 2, 21);
  const auto xs = solve_root(op);
  const auto pts = random_test_points(xs, 15, 1e-2, 1e2, 9);
  const auto us = SamplingScheme::uniform(6);
  const double gs = stepsize_cap(us, op);
  const auto ps = sseg_params(us, op, xs, gs, 0.25);
  const double mu = operator_constants(op).mu, L = max_L(op);
  const double gi = iseg_stepsize_cap(mu, L, 0.0, 2);
  const auto pi = iseg_params(mu, L, 0.0, sigma_us(op, xs), 2, gi, 0.25);
  const int N = 4000;
  for (std::size_t t = 0; t < pts.size(); ++t) {
    const auto& x = pts[t];
    const double d = (x - xs).squaredNorm();
    double ss = 0, ss2 = 0, is = 0, is2 = 0;
    for (int k = 0; k < N; ++k) {
      CounterRng rng = CounterRng::stream(t, k, 1);
      const auto y = sseg_step(op, us.draw(rng), x, gs, 0.25, 1.0);
      const double v = (y - xs).squaredNorm();
      ss += v;
      ss2 += v * v;
      const double w = (iseg_step(op, x, 2, gi, 0.25, rng) - xs).squaredNorm();
      is += w;
      is2 += w * w;
    }
    auto check = [&](double s, double s2, const UnifiedParams& p) {
      const double m = s / N, se = std::sqrt(std::max(0.0, s2 / N - m * m) / N);
      const auto o = one_step(p);
      EXPECT_LE(m, o.factor * d + o.additive + 3.0 * se + 1e-12 * d);
    };
    check(ss, ss2, ps);
    check(is, is2, pi);
  }
}
