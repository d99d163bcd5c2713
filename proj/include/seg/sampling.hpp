#ifndef SEG_SAMPLING_HPP
#define SEG_SAMPLING_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seg/operators.hpp"
#include "seg/rng.hpp"

namespace seg {

enum class SchemeKind { Uniform, Importance, BNice, IndepWithReplacement, Iswor };

/// A realized sample: indices (with multiplicity) and the stepsize
/// multiplier gamma_{1,xi} / gamma.
struct Sample {
  std::vector<Index> indices;
  double weight = 1.0;
};

/// Value with a Monte-Carlo standard error; std_error is 0 when exact.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = true;
};

class SamplingScheme {
 public:
  static SamplingScheme uniform(Index n, Index b = 1);
  // P(i) proportional to L_i, weight Lbar / L_i.
  static SamplingScheme importance(std::vector<double> lipschitz);
  static SamplingScheme bnice(Index n, Index b);
  static SamplingScheme indep_with_replacement(std::vector<double> probs, Index b);
  static SamplingScheme iswor(std::vector<double> probs);

  SchemeKind kind() const { return kind_; }
  Index n() const { return n_; }
  // Batch size for Uniform, BNice and IndepWithReplacement; 1 for
  // Importance; 0 for ISWOR where it is random.
  Index batch() const { return b_; }
  // Per-index marginal probabilities: the draw distribution for the
  // with-replacement variants, inclusion probabilities for ISWOR.
  const std::vector<double>& probabilities() const { return p_; }
  bool single_index() const;
  std::string name() const;

  Sample draw(CounterRng& rng) const;
  void draw_into(CounterRng& rng, Sample& s) const;

  /// Multiplier of an outcome of this scheme. Only meaningful for index
  /// sets the scheme can produce.
  double weight_of(std::span<const Index> indices) const;
  double probability_of(std::span<const Index> indices) const;

  /// Number of distinct ordered outcomes visited by for_each_outcome.
  double outcome_count() const;

  /// Visits every outcome with its probability and weight, provided
  /// outcome_count() <= limit. Returns false (visiting nothing) otherwise.
  bool for_each_outcome(
      double limit,
      const std::function<void(std::span<const Index>, double prob, double weight)>& f) const;

 private:
  SamplingScheme() = default;
  Index draw_categorical(CounterRng& rng) const;

  SchemeKind kind_ = SchemeKind::Uniform;
  Index n_ = 0;
  Index b_ = 1;
  std::vector<double> p_;
  std::vector<double> cdf_;
  std::vector<double> lipschitz_;
  double lbar_ = 1.0;
};

inline constexpr double kEnumerationLimit = 1e6;
inline constexpr std::size_t kMonteCarloDraws = 100000;

/// mu * (1 if mu >= 0 else 4): the indicator weighting shared by the
/// aggregate monotonicity constants.
inline double signed_weight(double mu) { return mu >= 0.0 ? mu : 4.0 * mu; }

/// (1/n) sum_{mu_i >= 0} mu_i + (4/n) sum_{mu_i < 0} mu_i.
double mu_bar(std::span<const double> mus);

/// Scheme aggregate E[w_xi * mu_xi * (1 or 4)] using mu_xi >= mean of the
/// sampled mu_i. Falls back to the single-index formula, which lower-bounds
/// every unbiased scheme, when enumeration is infeasible.
double mu_bar(const SamplingScheme& scheme, std::span<const double> mus);

/// Exact spectral constants of averaged sample operators, memoized by the
/// sorted index multiset.
class SampleSpectra {
 public:
  explicit SampleSpectra(const FiniteSumOperator<double>& op) : op_(op) {}
  Constants<double> operator()(std::span<const Index> indices);
  // Mean of component constants: L_xi <= mean L_i and mu_xi >= mean mu_i.
  Constants<double> bound(std::span<const Index> indices) const;

 private:
  const FiniteSumOperator<double>& op_;
  std::map<std::vector<Index>, Constants<double>> cache_;
};

struct SchemeConstants {
  Estimate mu_bar;
  Estimate sigma_star_sq;
  double L_eff = 0.0;
  bool spectra_exact = false;
};

std::vector<Constants<double>> all_component_constants(const FiniteSumOperator<double>& op);

/// Whether exact subset spectra fit the cost budget for this scheme and op.
bool spectra_affordable(const SamplingScheme& scheme, const FiniteSumOperator<double>& op);

/// E[w_xi mu_xi (1 or 4)] with exact subset spectra where affordable.
double mu_bar(const SamplingScheme& scheme, const FiniteSumOperator<double>& op);

/// max over outcomes of w_xi * L_xi, or an upper bound when not enumerable.
double effective_lipschitz(const SamplingScheme& scheme, const FiniteSumOperator<double>& op);

/// E[w_xi^2 ||F_xi(x*)||^2]; sigma_AS^2 is gamma^2 times this.
Estimate sigma_star_sq(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                       const Point<double>& x_star, std::uint64_t seed = 0);

SchemeConstants scheme_constants(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                                 const Point<double>& x_star, std::uint64_t seed = 0);

/// E[w_xi F_xi(x)]. Enumerated when possible, otherwise Monte-Carlo; the
/// returned std_error is the largest coordinate standard error.
Point<double> weighted_mean_operator(const SamplingScheme& scheme,
                                     const FiniteSumOperator<double>& op, const Point<double>& x,
                                     bool* exact = nullptr, double* std_error = nullptr,
                                     std::uint64_t seed = 0);

struct ConditionsReport {
  // Unbiasedness at the solution: || E[gamma_{1,xi} F_xi(x*)] ||.
  double unbiased_residual = 0.0;
  double unbiased_stderr = 0.0;
  bool unbiased_exact = true;
  bool unbiased_ok = false;
  // gamma * E[w mu (1 or 4)], required to be nonnegative.
  double monotone_value = 0.0;
  bool monotone_ok = false;

  bool ok() const { return unbiased_ok && monotone_ok; }
};

ConditionsReport verify_conditions(const SamplingScheme& scheme,
                                   const FiniteSumOperator<double>& op,
                                   const Point<double>& x_star, double gamma = 1.0);

enum class CapRule {
  Theory,  // 1 / (6 L_eff), the closed forms used by the rate statements
  Raw,     // largest gamma with w(4|mu_xi| + sqrt(2) L_xi) gamma <= 1 on every outcome
};

double stepsize_cap(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                    CapRule rule = CapRule::Theory);

/// Parsed form of "us:b=1", "is", "nice:b=16", "iwr:b=4", "iswor:p=0.3".
struct SchemeSpec {
  SchemeKind kind = SchemeKind::Uniform;
  Index b = 1;
  double p = 0.5;
};

SchemeSpec parse_scheme(const std::string& text);
std::string to_string(const SchemeSpec& spec);
// Importance sampling takes its L_i from the operator.
SamplingScheme make_scheme(const SchemeSpec& spec, const FiniteSumOperator<double>& op);

template <typename Scalar, typename Derived>
Point<Scalar> apply_sample(const FiniteSumOperator<Scalar>& op, const Sample& s,
                           const Eigen::MatrixBase<Derived>& x) {
  if (s.indices.empty()) throw ValidationError("empty sample");
  Point<Scalar> out;
  average_into(op, std::span<const Index>(s.indices), x, out);
  return out;
}

}  // namespace seg

#endif
