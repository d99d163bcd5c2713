#include "seg/theory.hpp"

#include <cmath>
#include <json.hpp>
#include <limits>

namespace seg {

namespace {

struct Accumulator {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  Estimate estimate() const {
    const double N = static_cast<double>(n);
    const double m = sum / N;
    const double var = n > 1 ? std::max(0.0, (sum_sq - N * m * m) / (N - 1.0)) : 0.0;
    return {m, std::sqrt(var / N), false};
  }
};

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
}

}  // namespace

double RateBound::operator()(double K) const {
  switch (kind) {
    case BoundKind::LinearToNeighborhood:
      return coefficient * std::pow(rate, K) + plateau;
    case BoundKind::DecreasingOverK:
      if (K <= 0.0) return std::numeric_limits<double>::infinity();
      return coefficient * std::exp(-rate * K) + plateau / K;
    case BoundKind::AveragedNorm:
      return coefficient / (K + 1.0) + plateau;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

SsegTheory sseg_theory(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                       const Point<double>& x_star, double gamma, double alpha, std::uint64_t seed) {
  require_alpha(alpha);
  if (!(gamma > 0.0)) throw ValidationError("stepsize must be positive");
  const double cap = stepsize_cap(scheme, op, CapRule::Raw);
  if (gamma > cap * (1.0 + 1e-12))
    throw ValidationError("stepsize " + std::to_string(gamma) + " exceeds the per-sample cap " +
                          std::to_string(cap));
  SsegTheory t;
  t.mu_bar = mu_bar(scheme, op);
  if (t.mu_bar < 0.0) throw ValidationError("aggregate monotonicity constant is negative");
  const Estimate sig = sigma_star_sq(scheme, op, x_star, seed);
  t.approximate = !sig.exact;
  t.sigma_as_sq = gamma * gamma * sig.value;
  t.params.A = 2.0 * alpha;
  t.params.B = 0.5;
  t.params.C = 0.0;
  t.params.D1 = 6.0 * alpha * alpha * t.sigma_as_sq;
  t.params.D2 = 1.5 * alpha * t.sigma_as_sq;
  t.params.rho = 0.5 * alpha * gamma * t.mu_bar;
  return t;
}

UnifiedParams sseg_params(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                          const Point<double>& x_star, double gamma, double alpha) {
  return sseg_theory(scheme, op, x_star, gamma, alpha).params;
}

double iseg_stepsize_cap(double mu, double L, double delta, Index b) {
  if (b < 1) throw ValidationError("batch size must be >= 1");
  if (mu < 0.0 || L < 0.0 || delta < 0.0) throw ValidationError("constants must be nonnegative");
  const double bb = static_cast<double>(b);
  const double second = 1.0 / (4.0 * mu + std::sqrt(6.0 * (L * L + 2.0 * delta / bb)));
  if (delta == 0.0) return second;
  return std::min(mu * bb / (18.0 * delta), second);
}

UnifiedParams iseg_params(double mu, double L, double delta, double sigma_sq, Index b,
                          double gamma, double alpha) {
  require_alpha(alpha);
  const double cap = iseg_stepsize_cap(mu, L, delta, b);
  if (!(gamma > 0.0) || gamma > cap * (1.0 + 1e-12))
    throw ValidationError("stepsize " + std::to_string(gamma) + " violates the I-SEG cap " +
                          std::to_string(cap));
  const double bb = static_cast<double>(b);
  UnifiedParams p;
  p.A = 2.0 * alpha;
  p.C = 9.0 * delta * alpha * alpha * gamma * gamma / bb;
  p.D1 = 6.0 * alpha * alpha * gamma * gamma * sigma_sq / bb;
  p.D2 = 6.0 * alpha * gamma * gamma * sigma_sq / bb;
  p.rho = alpha * gamma * mu / 4.0;
  p.B = alpha * gamma * gamma / 4.0;
  return p;
}

RateBound envelope(const UnifiedParams& p, double R0_sq) {
  if (p.A > 0.5 + 1e-15) throw ValidationError("envelope needs A <= 1/2");
  RateBound r;
  if (p.rho > p.C) {
    r.kind = BoundKind::LinearToNeighborhood;
    r.coefficient = R0_sq;
    r.rate = 1.0 + p.C - p.rho;
    r.plateau = (p.D1 + p.D2) / (p.rho - p.C);
    return r;
  }
  if (p.rho == 0.0 && p.C == 0.0 && p.B > 0.0) {
    r.kind = BoundKind::AveragedNorm;
    r.coefficient = R0_sq / p.B;
    r.plateau = (p.D1 + p.D2) / p.B;
    return r;
  }
  throw ValidationError("no rate: need rho > C, or rho = C = 0 with B > 0");
}

RateBound iseg_envelope(double mu, double gamma, double alpha, double sigma_sq, Index b,
                        double R0_sq) {
  if (!(mu > 0.0)) throw ValidationError("I-SEG envelope needs mu > 0");
  RateBound r;
  r.coefficient = R0_sq;
  r.rate = 1.0 - alpha * gamma * mu / 8.0;
  r.plateau = 48.0 * (alpha + 1.0) * gamma * sigma_sq / (mu * static_cast<double>(b));
  return r;
}

RateBound sseg_decreasing_envelope(double rho_tilde, double sigma_as_sq, double R0_sq) {
  if (!(rho_tilde > 0.0)) throw ValidationError("decreasing envelope needs rho_tilde > 0");
  RateBound r;
  r.kind = BoundKind::DecreasingOverK;
  r.coefficient = 32.0 * R0_sq / rho_tilde;
  r.rate = rho_tilde / 2.0;
  r.plateau = 27.0 * sigma_as_sq / (rho_tilde * rho_tilde);
  return r;
}

CorollaryCoefficients us_corollary(double L_max, double mu_bar, double sigma_us_sq) {
  if (!(mu_bar > 0.0)) throw ValidationError("closed form needs mu_bar > 0");
  return {1536.0 * L_max / mu_bar, mu_bar / (96.0 * L_max), 1728.0 * sigma_us_sq / (mu_bar * mu_bar)};
}

RateBound corollary_envelope(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                             const Point<double>& x_star, double gamma, double R0_sq) {
  const SsegTheory t = sseg_theory(scheme, op, x_star, gamma, 0.25);
  auto r = sseg_decreasing_envelope(gamma * t.mu_bar / 8.0, t.sigma_as_sq, R0_sq);
  r.approximate = t.approximate;
  return r;
}

RateBound iseg_corollary_envelope(double mu, double gamma, double sigma_sq, Index b, double R0_sq) {
  if (!(mu > 0.0 && gamma > 0.0)) throw ValidationError("I-SEG corollary needs mu, gamma > 0");
  RateBound r;
  r.kind = BoundKind::DecreasingOverK;
  r.coefficient = 1024.0 * R0_sq / (gamma * mu);
  r.rate = gamma * mu / 64.0;
  r.plateau = 69120.0 * sigma_sq / (mu * mu * static_cast<double>(b));
  return r;
}

double iseg_condition_number(double mu, double L, double delta, Index b) {
  if (!(mu > 0.0)) throw ValidationError("condition number needs mu > 0");
  const double bb = static_cast<double>(b);
  return std::max(delta / (mu * mu * bb), (L + std::sqrt(delta / bb)) / mu);
}

RateBound sseg_averaged_envelope(double gamma, double sigma_as_sq, Index b, double R0_sq) {
  RateBound r;
  r.kind = BoundKind::AveragedNorm;
  r.coefficient = 16.0 * R0_sq / (gamma * gamma);
  r.plateau = 12.0 * sigma_as_sq / (gamma * gamma * static_cast<double>(b));
  return r;
}

RateBound iseg_averaged_envelope(double L, double sigma_sq, Index b, double R0_sq) {
  RateBound r;
  r.kind = BoundKind::AveragedNorm;
  r.coefficient = 16.0 * std::sqrt(6.0) * L * R0_sq;
  r.plateau = 30.0 * sigma_sq / static_cast<double>(b);
  return r;
}

OneStep one_step(const UnifiedParams& p) { return {1.0 + p.C - p.rho, p.D1 + p.D2}; }

std::vector<Point<double>> random_test_points(const Point<double>& x_star, std::size_t count,
                                              double r_min, double r_max, std::uint64_t seed) {
  std::vector<Point<double>> pts;
  CounterRng rng = CounterRng::stream(seed, 0x7e57, 0);
  const double lo = std::log10(r_min), hi = std::log10(r_max);
  for (std::size_t t = 0; t < count; ++t) {
    Point<double> u(x_star.size());
    for (Index j = 0; j < u.size(); ++j) u(j) = rng.normal();
    u.normalize();
    pts.push_back(x_star + std::pow(10.0, rng.uniform(lo, hi)) * u);
  }
  return pts;
}

Assumption3Report certify_assumption3(const FiniteSumOperator<double>& op,
                                      const Point<double>& x_star, const CertifyMethod& m,
                                      const std::vector<Point<double>>& points,
                                      std::size_t samples, std::uint64_t seed) {
  if (m.method == MethodKind::SSEG && !m.scheme)
    throw ValidationError("S-SEG certificate needs a scheme");
  if (samples < 2) throw ValidationError("need at least two samples per point");

  Assumption3Report rep;
  rep.params = m.params;
  rep.samples_per_point = samples;
  switch (m.method) {
    case MethodKind::SSEG: rep.method = "sseg/" + m.scheme->name(); break;
    case MethodKind::ISEG: rep.method = "iseg/b=" + std::to_string(m.b); break;
    case MethodKind::EG: rep.method = "eg"; break;
  }

  const UnifiedParams& p = m.params;
  const bool exact_spectra = m.method != MethodKind::SSEG || spectra_affordable(*m.scheme, op);
  SampleSpectra spectra(op);
  const auto full = all_indices(op);
  Point<double> Fx(op.dim()), xt(op.dim()), g(op.dim()), e(op.dim());
  std::vector<Index> xi1, xi2;
  IsegOptions opts;
  opts.b = m.b;
  Sample s;

  for (std::size_t t = 0; t < points.size(); ++t) {
    const Point<double>& x = points[t];
    e = x - x_star;
    const double d = e.squaredNorm();
    CounterRng rng = CounterRng::stream(seed, t, 0);
    Accumulator P, S, G, m4, m5;

    for (std::size_t k = 0; k < samples; ++k) {
      double g1 = 0.0, g2 = 0.0, Gs = 0.0;
      std::span<const Index> idx1, idx2;
      switch (m.method) {
        case MethodKind::SSEG:
          m.scheme->draw_into(rng, s);
          g1 = m.gamma * s.weight;
          idx1 = idx2 = std::span<const Index>(s.indices);
          break;
        case MethodKind::ISEG:
          draw_iseg_batches(op, opts, rng, xi1, xi2);
          g1 = m.gamma;
          idx1 = std::span<const Index>(xi1);
          idx2 = std::span<const Index>(xi2);
          break;
        case MethodKind::EG:
          g1 = m.gamma;
          idx1 = idx2 = std::span<const Index>(full);
          break;
      }
      g2 = m.alpha * g1;
      double pk = 0.0, sk = 0.0;
      if (g1 != 0.0) {
        average_into(op, idx1, x, Fx);
        xt = x - g1 * Fx;
        average_into(op, idx2, xt, g);
        pk = g2 * g.dot(e);
        sk = g2 * g2 * g.squaredNorm();
        if (m.method == MethodKind::ISEG) {
          Gs = Fx.squaredNorm();
        } else {
          const auto c = exact_spectra ? spectra(idx1) : spectra.bound(idx1);
          const double bhat = 1.0 - 4.0 * std::abs(c.mu) * g1 - 2.0 * c.L * c.L * g1 * g1;
          Gs = m.alpha * g1 * g1 * bhat * Fx.squaredNorm();
        }
      } else if (m.method == MethodKind::ISEG) {
        average_into(op, idx1, x, Fx);
        Gs = Fx.squaredNorm();
      }
      P.add(pk);
      S.add(sk);
      G.add(Gs);
      m4.add(sk - 2.0 * p.A * pk - p.C * d - p.D1);
      m5.add(p.rho * d + p.B * Gs - p.D2 - pk);
    }

    PointCertificate c;
    c.sq_dist = d;
    c.P = P.estimate();
    c.second_moment = S.estimate();
    c.G = G.estimate();
    c.margin_second_moment = m4.estimate();
    c.margin_descent = m5.estimate();
    // Rounding slack for the zero-variance (deterministic) cases.
    const double tiny4 = 1e-12 * (std::abs(c.second_moment.value) + 2.0 * p.A * std::abs(c.P.value) +
                                  p.C * d + p.D1) + 1e-300;
    const double tiny5 =
        1e-12 * (p.rho * d + p.B * std::abs(c.G.value) + p.D2 + std::abs(c.P.value)) + 1e-300;
    c.ok = c.margin_second_moment.value <= rep.se_tolerance * c.margin_second_moment.std_error + tiny4 &&
           c.margin_descent.value <= rep.se_tolerance * c.margin_descent.std_error + tiny5;
    rep.all_ok = rep.all_ok && c.ok;
    rep.points.push_back(c);
  }
  return rep;
}

std::string Assumption3Report::to_json() const {
  using nlohmann::json;
  auto est = [](const Estimate& e) { return json{{"value", e.value}, {"stderr", e.std_error}}; };
  json j;
  j["method"] = method;
  j["samples_per_point"] = samples_per_point;
  j["se_tolerance"] = se_tolerance;
  j["params"] = {{"A", params.A},   {"B", params.B},   {"C", params.C},
                 {"D1", params.D1}, {"D2", params.D2}, {"rho", params.rho}};
  j["all_ok"] = all_ok;
  j["points"] = json::array();
  for (const auto& c : points) {
    j["points"].push_back({{"sq_dist", c.sq_dist},
                           {"P", est(c.P)},
                           {"second_moment", est(c.second_moment)},
                           {"G", est(c.G)},
                           {"margin_second_moment", est(c.margin_second_moment)},
                           {"margin_descent", est(c.margin_descent)},
                           {"ok", c.ok}});
  }
  return j.dump(2);
}

}  // namespace seg
