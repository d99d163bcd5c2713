#ifndef SEG_HARNESS_HPP
#define SEG_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seg/quadgame.hpp"
#include "seg/sampling.hpp"
#include "seg/schedule.hpp"
#include "seg/solvers.hpp"

namespace seg {

enum class Preset { Exp1UsVsIs, Exp2SsegStepsizes, Exp3NegativeMu, Exp4IsegStepsizes, AppxBnice, Custom };

Preset parse_preset(const std::string& name);
std::string to_string(Preset p);

enum class GammaRule {
  Cap,           // the method's theoretical stepsize cap
  HalfInverseL,  // 1 / (2 L_max), the classical same-sample baseline
};

/// One solver line of an experiment. An explicit gamma overrides the rule.
struct MethodSpec {
  std::string label;
  MethodKind method = MethodKind::SSEG;
  SchemeSpec scheme;
  IsegOptions iseg;
  PolicyKind policy = PolicyKind::Constant;
  std::optional<double> gamma;
  GammaRule gamma_rule = GammaRule::Cap;
  double alpha = 0.25;
  // Attach the theoretical envelope when the method is covered by one.
  bool envelope = true;
};

/// Parses "sseg/us:b=1", "sseg/nice:b=4@decreasing", "iseg/b=4@hsieh" or
/// "eg". The policy suffix defaults to constant; the label is the text.
MethodSpec parse_method(const std::string& text);
PolicyKind parse_policy(const std::string& text);
std::string to_string(PolicyKind k);

struct ExperimentConfig {
  Preset preset = Preset::Custom;
  std::string name = "custom";
  GameGenConfig game;
  std::optional<std::filesystem::path> game_path;
  std::vector<MethodSpec> methods;
  std::int64_t K = 1000;
  std::int64_t record_every = 0;
  std::size_t seeds = 5;
  std::uint64_t base_seed = 1;
  // x0 = x* + x0_scale * N(0, I), drawn once from base_seed.
  double x0_scale = 10.0;
  unsigned jobs = 1;
  std::optional<std::filesystem::path> out_dir;

  void validate() const;
};

struct SeriesRow {
  std::int64_t k = 0;
  double mean_sq_dist = 0.0;
  double stderr_sq_dist = 0.0;
  double envelope = 0.0;  // NaN when no bound applies
  double beta = 1.0;
};

struct AggregateSeries {
  std::string label;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<SeriesRow> rows;
  double R0_sq = 0.0;

  /// First recorded k with mean <= fraction * R0^2, if any.
  std::optional<std::int64_t> time_to(double fraction) const;
};

/// Preset experiment(s) at full scale (n = 100, d = p = 100, 5 seeds) or
/// at desk scale (n = 20, d = p = 10, 20 seeds). Experiment 1 expands to
/// one experiment per L_max.
std::vector<ExperimentConfig> preset_experiments(Preset p, bool desk);

std::vector<AggregateSeries> run_experiment(const ExperimentConfig& cfg);

void write_csv(const AggregateSeries& s, const std::filesystem::path& path);
AggregateSeries read_csv(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace seg

#endif
