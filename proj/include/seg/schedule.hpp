#ifndef SEG_SCHEDULE_HPP
#define SEG_SCHEDULE_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "seg/errors.hpp"
#include "seg/sampling.hpp"

namespace seg {

enum class PolicyKind {
  Constant,
  // Three-branch K-aware policy: constant for the first half, then
  // beta_k = 2 / (2 + rho_tilde (k - k0)).
  DecreasingK,
  // Comparison only: gamma1_k = gamma / (k+t)^{2/3}, gamma2_k = alpha gamma / (k+t)^{1/3}.
  Hsieh,
};

struct StepsizePolicy {
  PolicyKind kind = PolicyKind::Constant;
  double base_gamma = 0.0;
  double alpha = 0.25;
  std::int64_t K = 0;
  double rho_tilde = 0.0;
  double offset = 1.0;

  static StepsizePolicy constant(double gamma, double alpha = 0.25) {
    StepsizePolicy p;
    p.base_gamma = gamma;
    p.alpha = alpha;
    p.validate();
    return p;
  }

  static StepsizePolicy decreasing(double gamma, std::int64_t K, double rho_tilde,
                                   double alpha = 0.25) {
    StepsizePolicy p;
    p.kind = PolicyKind::DecreasingK;
    p.base_gamma = gamma;
    p.alpha = alpha;
    p.K = K;
    p.rho_tilde = rho_tilde;
    p.validate();
    return p;
  }

  static StepsizePolicy hsieh(double gamma, double alpha = 0.25, double offset = 1.0) {
    StepsizePolicy p;
    p.kind = PolicyKind::Hsieh;
    p.base_gamma = gamma;
    p.alpha = alpha;
    p.offset = offset;
    p.validate();
    return p;
  }

  void validate() const {
    if (!(base_gamma > 0.0 && std::isfinite(base_gamma)))
      throw ValidationError("base stepsize must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
    if (kind == PolicyKind::DecreasingK && (K < 0 || !(rho_tilde >= 0.0)))
      throw ValidationError("decreasing policy needs K >= 0 and rho_tilde >= 0");
    if (kind == PolicyKind::Hsieh && !(offset >= 1.0))
      throw ValidationError("Hsieh offset must be >= 1");
  }
};

/// Multiplier beta_k in (0, 1]. For the Hsieh policy this is the decay of
/// the extrapolation stepsize.
inline double beta(const StepsizePolicy& policy, std::int64_t k) {
  if (k < 0) throw std::out_of_range("iteration index must be nonnegative");
  switch (policy.kind) {
    case PolicyKind::Constant:
      return 1.0;
    case PolicyKind::DecreasingK: {
      if (k > policy.K)
        throw std::out_of_range("iteration " + std::to_string(k) + " beyond budget K = " +
                                std::to_string(policy.K));
      const double K = static_cast<double>(policy.K);
      if (K * policy.rho_tilde <= 1.0) return 1.0;
      const std::int64_t k0 = (policy.K + 1) / 2;
      if (k < k0) return 1.0;
      return 2.0 / (2.0 + policy.rho_tilde * static_cast<double>(k - k0));
    }
    case PolicyKind::Hsieh:
      return std::pow(static_cast<double>(k) + policy.offset, -2.0 / 3.0);
  }
  return 1.0;
}

/// Extrapolation and update stepsizes at iteration k before any
/// sample-dependent multiplier.
struct StepPair {
  double gamma1;
  double gamma2;
};

inline StepPair step_sizes(const StepsizePolicy& policy, std::int64_t k) {
  const double g1 = beta(policy, k) * policy.base_gamma;
  if (policy.kind == PolicyKind::Hsieh)
    return {g1, policy.alpha * policy.base_gamma *
                    std::pow(static_cast<double>(k) + policy.offset, -1.0 / 3.0)};
  return {g1, policy.alpha * g1};
}

/// (1/8) E[gamma_{1,xi} mu_xi (1 or 4)] at the base stepsize.
inline double rho_tilde_sseg(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                             double base_gamma) {
  const double r = base_gamma * mu_bar(scheme, op) / 8.0;
  if (r < 0.0) throw ValidationError("negative aggregate monotonicity: condition on mu violated");
  return r;
}

inline double rho_tilde_iseg(double mu, double gamma) {
  if (mu <= 0.0) return 0.0;
  return gamma * mu / 32.0;
}

}  // namespace seg

#endif
