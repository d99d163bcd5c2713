#ifndef SEG_THEORY_HPP
#define SEG_THEORY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seg/operators.hpp"
#include "seg/sampling.hpp"
#include "seg/solvers.hpp"

namespace seg {

/// Constants of the unified second-moment / descent assumption:
///   E[g_xi^2 ||g||^2] <= 2A P + C ||x - x*||^2 + D1,
///   P >= rho ||x - x*||^2 + B G - D2,  with P = E[g_xi <g, x - x*>].
struct UnifiedParams {
  double A = 0.0, B = 0.0, C = 0.0, D1 = 0.0, D2 = 0.0, rho = 0.0;
};

enum class BoundKind {
  LinearToNeighborhood,  // coefficient * rate^K + plateau
  DecreasingOverK,       // coefficient * exp(-rate K) + plateau / K
  AveragedNorm,          // coefficient / (K + 1) + plateau
};

struct RateBound {
  BoundKind kind = BoundKind::LinearToNeighborhood;
  double coefficient = 0.0;
  double rate = 0.0;
  double plateau = 0.0;
  // Some constant behind the bound is a Monte-Carlo estimate.
  bool approximate = false;

  double operator()(double K) const;
};

/// S-SEG constants at base stepsize gamma: A = 2 alpha, B = 1/2, C = 0,
/// D1 = 6 alpha^2 sigma_AS^2, D2 = 3 alpha sigma_AS^2 / 2,
/// rho = (alpha/2) E[gamma_{1,xi} mu_xi (1 or 4)].
struct SsegTheory {
  UnifiedParams params;
  double sigma_as_sq = 0.0;  // gamma^2 * E[w^2 ||F_xi(x*)||^2]
  double mu_bar = 0.0;       // E[w mu_xi (1 or 4)]
  bool approximate = false;
};

SsegTheory sseg_theory(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                       const Point<double>& x_star, double gamma, double alpha,
                       std::uint64_t seed = 0);

UnifiedParams sseg_params(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                          const Point<double>& x_star, double gamma, double alpha);

/// min{ mu b / (18 delta), 1 / (4 mu + sqrt(6 (L^2 + 2 delta / b))) }.
double iseg_stepsize_cap(double mu, double L, double delta, Index b);

/// I-SEG constants: A = 2 alpha, C = 9 delta alpha^2 gamma^2 / b,
/// D1 = 6 alpha^2 gamma^2 sigma^2 / b, D2 = 6 alpha gamma^2 sigma^2 / b,
/// rho = alpha gamma mu / 4, B = alpha gamma^2 / 4 (with G = E||F_xi1(x)||^2).
UnifiedParams iseg_params(double mu, double L, double delta, double sigma_sq, Index b,
                          double gamma, double alpha);

/// Generic bound from the unified constants: linear convergence to a
/// neighborhood when rho > C, averaged G bound when rho = C = 0.
RateBound envelope(const UnifiedParams& params, double R0_sq);

/// (1 - alpha gamma mu / 8)^K R0^2 + 48 (alpha + 1) gamma sigma^2 / (mu b).
RateBound iseg_envelope(double mu, double gamma, double alpha, double sigma_sq, Index b,
                        double R0_sq);

/// Decreasing-schedule bound 32 R0^2/rt exp(-rt K / 2) + 27 sigma_AS^2 / (rt^2 K).
RateBound sseg_decreasing_envelope(double rho_tilde, double sigma_as_sq, double R0_sq);

/// Closed-form coefficients (1536 L_max / mu_bar, 1728 sigma_US^2 / mu_bar^2)
/// of the uniform-sampling decreasing bound at gamma = 1 / (6 L_max).
struct CorollaryCoefficients {
  double exp_coefficient;  // multiplies R0^2
  double exp_rate;         // multiplies K inside exp(-.)
  double tail;             // multiplies 1/K
};
CorollaryCoefficients us_corollary(double L_max, double mu_bar, double sigma_us_sq);

/// Decreasing-schedule bound for S-SEG under the given scheme at base
/// stepsize gamma (the per-scheme closed forms are this bound at their caps).
RateBound corollary_envelope(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                             const Point<double>& x_star, double gamma, double R0_sq);

/// 1024 R0^2 / (gamma mu) exp(-gamma mu K / 64) + 69120 sigma^2 / (mu^2 b K).
RateBound iseg_corollary_envelope(double mu, double gamma, double sigma_sq, Index b, double R0_sq);

/// max{ delta / (mu^2 b), (L + sqrt(delta / b)) / mu }.
double iseg_condition_number(double mu, double L, double delta, Index b);

/// Averaged ||F||^2 bounds for the rho = 0 regime.
RateBound sseg_averaged_envelope(double gamma, double sigma_as_sq, Index b, double R0_sq);
RateBound iseg_averaged_envelope(double L, double sigma_sq, Index b, double R0_sq);

/// The one-step contraction factor and additive term of the unified
/// recursion: E||x+ - x*||^2 <= factor ||x - x*||^2 + additive.
struct OneStep {
  double factor;
  double additive;
};
OneStep one_step(const UnifiedParams& params);

// ---------------------------------------------------------------------------
// Monte-Carlo certificate of the unified assumption.

struct CertifyMethod {
  MethodKind method = MethodKind::SSEG;
  std::optional<SamplingScheme> scheme;  // S-SEG
  Index b = 1;                           // I-SEG batch
  double gamma = 0.0;
  double alpha = 0.25;
  UnifiedParams params;
};

struct PointCertificate {
  double sq_dist = 0.0;
  Estimate P, second_moment, G;
  // LHS - RHS of each inequality; expected <= 0 up to sampling error.
  Estimate margin_second_moment, margin_descent;
  bool ok = false;
};

struct Assumption3Report {
  UnifiedParams params;
  std::string method;
  std::size_t samples_per_point = 0;
  double se_tolerance = 3.0;
  std::vector<PointCertificate> points;
  bool all_ok = true;

  std::string to_json() const;
};

Assumption3Report certify_assumption3(const FiniteSumOperator<double>& op,
                                      const Point<double>& x_star, const CertifyMethod& method,
                                      const std::vector<Point<double>>& points,
                                      std::size_t samples_per_point, std::uint64_t seed);

/// Test points x* + r u with u uniform on the sphere and log10 r uniform
/// in [log10 r_min, log10 r_max].
std::vector<Point<double>> random_test_points(const Point<double>& x_star, std::size_t count,
                                              double r_min, double r_max, std::uint64_t seed);

}  // namespace seg

#endif
