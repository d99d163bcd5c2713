#ifndef SEG_SOLVERS_HPP
#define SEG_SOLVERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "seg/errors.hpp"
#include "seg/operators.hpp"
#include "seg/rng.hpp"
#include "seg/sampling.hpp"
#include "seg/schedule.hpp"

namespace seg {

enum class MethodKind { SSEG, ISEG, EG };

/// Unbiased oracle F(x) + e with E||e||^2 = delta ||x - x*||^2 + sigma_sq,
/// e Gaussian and isotropic. Replaces the component draws of I-SEG.
struct SyntheticNoise {
  double delta = 0.0;
  double sigma_sq = 0.0;
};

struct IsegOptions {
  Index b = 1;
  // Batches of i.i.d. uniform indices. Without replacement a batch is a
  // uniform b-subset, and b = n reproduces the full operator exactly.
  bool with_replacement = true;
  std::optional<SyntheticNoise> noise;
};

struct SolverConfig {
  MethodKind method = MethodKind::EG;
  std::optional<SamplingScheme> scheme;
  IsegOptions iseg;
  StepsizePolicy policy;
  std::int64_t K = 0;
  std::int64_t record_every = 0;  // 0 selects ceil(K / 100)
  std::uint64_t seed = 0;
  std::uint64_t run = 0;

  static SolverConfig eg(StepsizePolicy policy, std::int64_t K) {
    SolverConfig c;
    c.policy = policy;
    c.K = K;
    return c;
  }
  static SolverConfig sseg(SamplingScheme scheme, StepsizePolicy policy, std::int64_t K,
                           std::uint64_t seed = 0, std::uint64_t run = 0) {
    SolverConfig c;
    c.method = MethodKind::SSEG;
    c.scheme = std::move(scheme);
    c.policy = policy;
    c.K = K;
    c.seed = seed;
    c.run = run;
    return c;
  }
  static SolverConfig iseg_batches(IsegOptions opts, StepsizePolicy policy, std::int64_t K,
                                   std::uint64_t seed = 0, std::uint64_t run = 0) {
    SolverConfig c;
    c.method = MethodKind::ISEG;
    c.iseg = opts;
    c.policy = policy;
    c.K = K;
    c.seed = seed;
    c.run = run;
    return c;
  }
};

struct TrajectoryPoint {
  std::int64_t k = 0;
  double sq_dist = 0.0;     // ||x^k - x*||^2, NaN without a known solution
  double sq_op_norm = 0.0;  // ||F(x^k)||^2
  double beta = 1.0;        // multiplier used for the step leaving x^k
  // Running mean of ||F(x^j)||^2 over j <= k; only in the rho = 0 fallback.
  double avg_sq_op_norm = std::numeric_limits<double>::quiet_NaN();
};

template <typename Scalar>
struct Trajectory {
  std::vector<TrajectoryPoint> points;
  Point<Scalar> final;
  // The decreasing policy was replaced by a constant one because rho_tilde <= 0.
  bool averaged_fallback = false;
};

/// Scratch vectors for the in-place kernels.
template <typename Scalar>
struct StepWorkspace {
  Point<Scalar> g, x_tilde;
  void resize(Index d) {
    g.resize(d);
    x_tilde.resize(d);
  }
};

namespace detail {

template <typename Scalar>
void require_finite(const Point<Scalar>& v) {
  if (!v.allFinite()) throw DivergenceError("non-finite iterate");
}

}  // namespace detail

/// x <- x - g2 F_{idx2}(x - g1 F_{idx1}(x)).
template <typename Scalar>
void extragradient_update(const FiniteSumOperator<Scalar>& op, std::span<const Index> idx1,
                          std::span<const Index> idx2, Point<Scalar>& x, Scalar g1, Scalar g2,
                          StepWorkspace<Scalar>& ws) {
  average_into(op, idx1, x, ws.g);
  ws.x_tilde = x - g1 * ws.g;
  average_into(op, idx2, ws.x_tilde, ws.g);
  x -= g2 * ws.g;
  detail::require_finite(x);
}

template <typename Scalar, typename Derived>
Point<Scalar> sseg_step(const FiniteSumOperator<Scalar>& op, const Sample& s,
                        const Eigen::MatrixBase<Derived>& x, Scalar gamma1_base, Scalar alpha,
                        Scalar beta_k) {
  if (x.size() != op.dim()) throw DimensionMismatch("point dimension does not match operator");
  Point<Scalar> out = x;
  if (s.weight == 0.0) return out;
  const Scalar g1 = beta_k * gamma1_base * static_cast<Scalar>(s.weight);
  StepWorkspace<Scalar> ws;
  ws.resize(op.dim());
  extragradient_update(op, std::span<const Index>(s.indices), std::span<const Index>(s.indices), out,
                       g1, alpha * g1, ws);
  return out;
}

/// Draws the two independent I-SEG batches.
template <typename Scalar>
void draw_iseg_batches(const FiniteSumOperator<Scalar>& op, const IsegOptions& opts,
                       CounterRng& rng, std::vector<Index>& xi1, std::vector<Index>& xi2) {
  if (opts.b < 1) throw ValidationError("batch size must be >= 1");
  if (opts.with_replacement) {
    const auto n = static_cast<std::uint64_t>(op.size());
    xi1.resize(static_cast<std::size_t>(opts.b));
    xi2.resize(static_cast<std::size_t>(opts.b));
    for (auto& i : xi1) i = static_cast<Index>(rng.index(n));
    for (auto& i : xi2) i = static_cast<Index>(rng.index(n));
  } else {
    if (opts.b > op.size()) throw ValidationError("batch larger than n without replacement");
    const auto nice = SamplingScheme::bnice(op.size(), opts.b);
    Sample s;
    nice.draw_into(rng, s);
    xi1 = s.indices;
    nice.draw_into(rng, s);
    xi2 = s.indices;
  }
}

namespace detail {

// Synthetic oracle batch: F(y) + (1/b) sum_j e_j.
template <typename Scalar>
void noisy_estimate(const FiniteSumOperator<Scalar>& op, const SyntheticNoise& noise, Index b,
                    const Point<Scalar>& y, const Point<Scalar>& x_star, CounterRng& rng,
                    Point<Scalar>& out) {
  eval_full_into(op, y, out);
  const double var = noise.delta * static_cast<double>((y - x_star).squaredNorm()) + noise.sigma_sq;
  const double sd = std::sqrt(var / static_cast<double>(op.dim()) / static_cast<double>(b));
  for (Index j = 0; j < out.size(); ++j) out(j) += static_cast<Scalar>(sd * rng.normal());
}

}  // namespace detail

template <typename Scalar>
void iseg_update(const FiniteSumOperator<Scalar>& op, Point<Scalar>& x, const IsegOptions& opts,
                 Scalar g1, Scalar g2, CounterRng& rng, StepWorkspace<Scalar>& ws,
                 std::vector<Index>& xi1, std::vector<Index>& xi2,
                 const Point<Scalar>* x_star = nullptr) {
  if (opts.noise) {
    if (!x_star) throw ValidationError("synthetic noise needs the solution");
    detail::noisy_estimate(op, *opts.noise, opts.b, x, *x_star, rng, ws.g);
    ws.x_tilde = x - g1 * ws.g;
    detail::noisy_estimate(op, *opts.noise, opts.b, ws.x_tilde, *x_star, rng, ws.g);
    x -= g2 * ws.g;
    detail::require_finite(x);
    return;
  }
  draw_iseg_batches(op, opts, rng, xi1, xi2);
  extragradient_update(op, std::span<const Index>(xi1), std::span<const Index>(xi2), x, g1, g2, ws);
}

template <typename Scalar, typename Derived>
Point<Scalar> iseg_step(const FiniteSumOperator<Scalar>& op, const Eigen::MatrixBase<Derived>& x,
                        Index b, Scalar gamma1, Scalar alpha, CounterRng& rng,
                        bool with_replacement = true) {
  if (x.size() != op.dim()) throw DimensionMismatch("point dimension does not match operator");
  Point<Scalar> out = x;
  StepWorkspace<Scalar> ws;
  ws.resize(op.dim());
  std::vector<Index> xi1, xi2;
  IsegOptions opts;
  opts.b = b;
  opts.with_replacement = with_replacement;
  iseg_update(op, out, opts, gamma1, alpha * gamma1, rng, ws, xi1, xi2);
  return out;
}

/// Deterministic extragradient step on the full operator.
template <typename Scalar, typename Derived>
Point<Scalar> eg_step(const FiniteSumOperator<Scalar>& op, const Eigen::MatrixBase<Derived>& x,
                      Scalar gamma1, Scalar alpha) {
  if (x.size() != op.dim()) throw DimensionMismatch("point dimension does not match operator");
  Point<Scalar> out = x;
  StepWorkspace<Scalar> ws;
  ws.resize(op.dim());
  const auto idx = all_indices(op);
  extragradient_update(op, std::span<const Index>(idx), std::span<const Index>(idx), out, gamma1,
                       alpha * gamma1, ws);
  return out;
}

inline std::int64_t default_stride(std::int64_t K) { return std::max<std::int64_t>(1, (K + 99) / 100); }

/// Runs K iterations. The random stream for iteration k is keyed by
/// (seed, run, k), so a run does not depend on what else executes.
template <typename Scalar>
Trajectory<Scalar> run(const FiniteSumOperator<Scalar>& op, const Point<Scalar>& x0,
                       const SolverConfig& cfg) {
  if (x0.size() != op.dim()) throw DimensionMismatch("x0 dimension does not match operator");
  if (cfg.K < 0) throw ValidationError("K must be nonnegative");
  if (cfg.method == MethodKind::SSEG) {
    if (!cfg.scheme) throw ValidationError("S-SEG needs a sampling scheme");
    if (cfg.scheme->n() != op.size()) throw ValidationError("scheme size does not match operator");
  }
  cfg.policy.validate();

  std::optional<Point<Scalar>> x_star = op.cached_solution();
  if (!x_star && op.all_affine()) {
    try {
      x_star = solve_root(op);
    } catch (const SingularSystem&) {
    }
  }

  StepsizePolicy policy = cfg.policy;
  Trajectory<Scalar> traj;
  if (policy.kind == PolicyKind::DecreasingK && !(policy.rho_tilde > 0.0)) {
    policy.kind = PolicyKind::Constant;
    traj.averaged_fallback = true;
  }
  if (policy.kind == PolicyKind::DecreasingK && policy.K < cfg.K)
    throw ValidationError("decreasing policy budget is shorter than the run");

  const std::int64_t stride = cfg.record_every > 0 ? cfg.record_every : default_stride(cfg.K);
  traj.points.reserve(static_cast<std::size_t>(cfg.K / stride + 2));

  Point<Scalar> x = x0;
  Point<Scalar> Fx(op.dim());
  const auto full = all_indices(op);
  StepWorkspace<Scalar> ws;
  ws.resize(op.dim());
  std::vector<Index> xi1, xi2;
  Sample sample;

  auto sq_dist = [&](const Point<Scalar>& y) {
    return x_star ? static_cast<double>((y - *x_star).squaredNorm())
                  : std::numeric_limits<double>::quiet_NaN();
  };
  const double guard = 1e12 * std::max(1.0, x_star ? sq_dist(x0) : 1.0);
  double norm_sum = 0.0;

  auto record = [&](std::int64_t k, double b, double op_norm) {
    TrajectoryPoint p;
    p.k = k;
    p.sq_dist = sq_dist(x);
    if (std::isnan(op_norm)) {
      eval_full_into(op, x, Fx);
      op_norm = static_cast<double>(Fx.squaredNorm());
    }
    p.sq_op_norm = op_norm;
    p.beta = b;
    if (traj.averaged_fallback) p.avg_sq_op_norm = norm_sum / static_cast<double>(k + 1);
    traj.points.push_back(p);
  };

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::int64_t k = 0;; ++k) {
    double op_norm = nan;
    if (traj.averaged_fallback) {
      eval_full_into(op, x, Fx);
      op_norm = static_cast<double>(Fx.squaredNorm());
      norm_sum += op_norm;
    }
    const double b_k = beta(policy, k);
    if (k % stride == 0 || k == cfg.K) record(k, b_k, op_norm);
    if (k == cfg.K) break;

    const StepPair st = step_sizes(policy, k);
    CounterRng rng = CounterRng::stream(cfg.seed, cfg.run, static_cast<std::uint64_t>(k));
    switch (cfg.method) {
      case MethodKind::EG:
        extragradient_update(op, std::span<const Index>(full), std::span<const Index>(full), x,
                             static_cast<Scalar>(st.gamma1), static_cast<Scalar>(st.gamma2), ws);
        break;
      case MethodKind::SSEG: {
        cfg.scheme->draw_into(rng, sample);
        if (sample.weight == 0.0) break;
        const auto w = static_cast<Scalar>(sample.weight);
        const std::span<const Index> idx(sample.indices);
        extragradient_update(op, idx, idx, x, static_cast<Scalar>(st.gamma1) * w,
                             static_cast<Scalar>(st.gamma2) * w, ws);
        break;
      }
      case MethodKind::ISEG:
        iseg_update(op, x, cfg.iseg, static_cast<Scalar>(st.gamma1), static_cast<Scalar>(st.gamma2),
                    rng, ws, xi1, xi2, x_star ? &*x_star : nullptr);
        break;
    }
    if (x_star) {
      const double d = sq_dist(x);
      if (!(d <= guard))
        throw DivergenceError("iterate diverged at k = " + std::to_string(k + 1) +
                              ": squared distance " + std::to_string(d));
    }
  }
  traj.final = x;
  return traj;
}

}  // namespace seg

#endif
