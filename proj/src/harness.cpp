#include "seg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "seg/errors.hpp"
#include "seg/theory.hpp"

namespace seg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kCsvHeader = "k,mean_sq_dist,stderr,envelope,beta_k";

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string method_name(MethodKind m) {
  switch (m) {
    case MethodKind::SSEG:
      return "sseg";
    case MethodKind::ISEG:
      return "iseg";
    case MethodKind::EG:
      return "eg";
  }
  return "?";
}

double max_component_lipschitz(const FiniteSumOperator<double>& op) {
  double L = 0.0;
  for (const auto& c : all_component_constants(op)) L = std::max(L, c.L);
  return L;
}

// Squared norms of the components at the solution averaged uniformly.
double mean_sq_residual(const FiniteSumOperator<double>& op, const Point<double>& x_star) {
  double s = 0.0;
  for (Index i = 0; i < op.size(); ++i) s += eval_component(op, i, x_star).squaredNorm();
  return s / static_cast<double>(op.size());
}

// Iterates r <- (1 - beta_k a) r + beta_k^2 c, the one-step bound with the
// stepsize scaled by beta_k.
std::vector<double> iterate_envelope(const StepsizePolicy& policy, std::int64_t K, double a,
                                     double c, double R0_sq) {
  std::vector<double> env(static_cast<std::size_t>(K + 1));
  double r = R0_sq;
  for (std::int64_t k = 0; k <= K; ++k) {
    env[static_cast<std::size_t>(k)] = r;
    const double b = beta(policy, k);
    r = (1.0 - b * a) * r + b * b * c;
  }
  return env;
}

std::vector<double> sample_bound(const RateBound& bound, std::int64_t K) {
  std::vector<double> env(static_cast<std::size_t>(K + 1));
  for (std::int64_t k = 0; k <= K; ++k) env[static_cast<std::size_t>(k)] = bound(static_cast<double>(k));
  return env;
}

struct Prepared {
  SolverConfig cfg;
  std::vector<double> envelope;  // indexed by k; empty when no bound applies
  std::vector<std::pair<std::string, std::string>> meta;
};

StepsizePolicy make_policy(PolicyKind kind, double gamma, double alpha, std::int64_t K,
                           double rho_tilde) {
  switch (kind) {
    case PolicyKind::Constant:
      return StepsizePolicy::constant(gamma, alpha);
    case PolicyKind::DecreasingK:
      return StepsizePolicy::decreasing(gamma, K, rho_tilde, alpha);
    case PolicyKind::Hsieh:
      return StepsizePolicy::hsieh(gamma, alpha);
  }
  throw ValidationError("unknown policy");
}

Prepared prepare(const MethodSpec& m, const FiniteSumOperator<double>& op,
                 const Point<double>& x_star, double R0_sq, const ExperimentConfig& exp) {
  Prepared out;
  auto& meta = out.meta;
  meta.emplace_back("method", method_name(m.method));
  meta.emplace_back("policy", to_string(m.policy));
  const bool theory_alpha = m.alpha <= 0.25;
  const bool want_env = m.envelope && m.policy != PolicyKind::Hsieh && theory_alpha;
  std::string env_note = "none";
  double gamma = 0.0;

  auto choose_gamma = [&](double cap) {
    if (m.gamma) return *m.gamma;
    if (m.gamma_rule == GammaRule::HalfInverseL) return 1.0 / (2.0 * max_component_lipschitz(op));
    return cap;
  };

  if (m.method == MethodKind::SSEG || m.method == MethodKind::EG) {
    const SamplingScheme scheme = m.method == MethodKind::EG ? SamplingScheme::bnice(op.size(), op.size())
                                                             : make_scheme(m.scheme, op);
    if (m.method == MethodKind::SSEG) meta.emplace_back("scheme", to_string(m.scheme));
    gamma = choose_gamma(stepsize_cap(scheme, op, CapRule::Theory));
    double rho_tilde = 0.0;
    if (m.policy == PolicyKind::DecreasingK) rho_tilde = rho_tilde_sseg(scheme, op, gamma);
    const StepsizePolicy policy = make_policy(m.policy, gamma, m.alpha, exp.K, rho_tilde);
    out.cfg = m.method == MethodKind::EG ? SolverConfig::eg(policy, exp.K)
                                         : SolverConfig::sseg(scheme, policy, exp.K);
    if (want_env) {
      try {
        const SsegTheory t = sseg_theory(scheme, op, x_star, gamma, m.alpha, exp.base_seed);
        meta.emplace_back("mu_bar", format_double(t.mu_bar));
        meta.emplace_back("sigma_as_sq", format_double(t.sigma_as_sq));
        if (t.params.rho > 0.0) {
          if (policy.kind == PolicyKind::Constant) {
            out.envelope = sample_bound(envelope(t.params, R0_sq), exp.K);
            env_note = "linear";
          } else {
            out.envelope = iterate_envelope(policy, exp.K, t.params.rho, t.params.D1 + t.params.D2, R0_sq);
            env_note = "recursion";
          }
          if (t.approximate) env_note += " (monte-carlo variance)";
        }
      } catch (const ValidationError& e) {
        env_note = std::string("none: ") + e.what();
      }
    }
  } else {
    const Index b = m.iseg.b;
    const double mu = operator_constants(op).mu;
    const double L = max_component_lipschitz(op);
    const double delta = m.iseg.noise ? m.iseg.noise->delta : 0.0;
    const double sigma_sq = m.iseg.noise ? m.iseg.noise->sigma_sq : mean_sq_residual(op, x_star);
    meta.emplace_back("batch", std::to_string(b));
    meta.emplace_back("with_replacement", m.iseg.with_replacement ? "true" : "false");
    meta.emplace_back("mu", format_double(mu));
    meta.emplace_back("L", format_double(L));
    meta.emplace_back("delta", format_double(delta));
    meta.emplace_back("sigma_sq", format_double(sigma_sq));
    gamma = choose_gamma(iseg_stepsize_cap(std::max(mu, 0.0), L, delta, b));
    const StepsizePolicy policy = make_policy(m.policy, gamma, m.alpha, exp.K, rho_tilde_iseg(mu, gamma));
    out.cfg = SolverConfig::iseg_batches(m.iseg, policy, exp.K);
    if (want_env && mu > 0.0 && delta == 0.0 &&
        gamma <= iseg_stepsize_cap(mu, L, delta, b) * (1.0 + 1e-12)) {
      const double a = m.alpha * gamma * mu / 8.0;
      const double c = 6.0 * m.alpha * (m.alpha + 1.0) * gamma * gamma * sigma_sq / static_cast<double>(b);
      if (policy.kind == PolicyKind::Constant) {
        out.envelope = sample_bound(iseg_envelope(mu, gamma, m.alpha, sigma_sq, b, R0_sq), exp.K);
        env_note = "linear";
      } else {
        out.envelope = iterate_envelope(policy, exp.K, a, c, R0_sq);
        env_note = "recursion";
      }
    }
  }
  meta.emplace_back("gamma", format_double(gamma));
  meta.emplace_back("alpha", format_double(m.alpha));
  meta.emplace_back("envelope", env_note);
  out.cfg.record_every = exp.record_every;
  return out;
}

std::string sanitize(const std::string& s) {
  std::string o;
  for (char ch : s) o += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
  return o;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Preset parse_preset(const std::string& name) {
  const std::string s = lower(name);
  if (s == "exp1" || s == "exp1_us_vs_is") return Preset::Exp1UsVsIs;
  if (s == "exp2" || s == "exp2_sseg_stepsizes") return Preset::Exp2SsegStepsizes;
  if (s == "exp3" || s == "exp3_negative_mu") return Preset::Exp3NegativeMu;
  if (s == "exp4" || s == "exp4_iseg_stepsizes") return Preset::Exp4IsegStepsizes;
  if (s == "appx_bnice" || s == "bnice") return Preset::AppxBnice;
  if (s == "custom") return Preset::Custom;
  throw ValidationError("unknown preset '" + name + "'");
}

std::string to_string(Preset p) {
  switch (p) {
    case Preset::Exp1UsVsIs:
      return "exp1_us_vs_is";
    case Preset::Exp2SsegStepsizes:
      return "exp2_sseg_stepsizes";
    case Preset::Exp3NegativeMu:
      return "exp3_negative_mu";
    case Preset::Exp4IsegStepsizes:
      return "exp4_iseg_stepsizes";
    case Preset::AppxBnice:
      return "appx_bnice";
    case Preset::Custom:
      return "custom";
  }
  return "custom";
}

PolicyKind parse_policy(const std::string& text) {
  const std::string s = lower(text);
  if (s == "constant") return PolicyKind::Constant;
  if (s == "decreasing") return PolicyKind::DecreasingK;
  if (s == "hsieh") return PolicyKind::Hsieh;
  throw ValidationError("unknown schedule '" + text + "'");
}

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Constant:
      return "constant";
    case PolicyKind::DecreasingK:
      return "decreasing";
    case PolicyKind::Hsieh:
      return "hsieh";
  }
  return "constant";
}

MethodSpec parse_method(const std::string& text) {
  MethodSpec m;
  m.label = text;
  std::string body = lower(text);
  if (const auto at = body.find('@'); at != std::string::npos) {
    m.policy = parse_policy(body.substr(at + 1));
    body = body.substr(0, at);
  }
  const auto slash = body.find('/');
  const std::string head = body.substr(0, slash);
  const std::string rest = slash == std::string::npos ? "" : body.substr(slash + 1);
  if (head == "eg") {
    if (!rest.empty()) throw ValidationError("eg takes no arguments");
    m.method = MethodKind::EG;
  } else if (head == "sseg") {
    m.method = MethodKind::SSEG;
    m.scheme = parse_scheme(rest.empty() ? "us" : rest);
  } else if (head == "iseg") {
    m.method = MethodKind::ISEG;
    if (!rest.empty()) {
      if (rest.rfind("b=", 0) != 0) throw ValidationError("iseg expects b=<batch>");
      try {
        std::size_t used = 0;
        m.iseg.b = std::stoll(rest.substr(2), &used);
        if (used != rest.size() - 2) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ValidationError("bad batch size in '" + text + "'");
      }
      if (m.iseg.b < 1) throw ValidationError("batch size must be >= 1");
    }
  } else {
    throw ValidationError("unknown method '" + text + "'");
  }
  return m;
}

void ExperimentConfig::validate() const {
  if (seeds < 1) throw ValidationError("seeds must be >= 1");
  if (K < 0) throw ValidationError("K must be nonnegative");
  if (record_every < 0) throw ValidationError("record_every must be nonnegative");
  if (methods.empty()) throw ValidationError("no methods configured");
  if (!(x0_scale >= 0.0) || !std::isfinite(x0_scale)) throw ValidationError("x0_scale must be finite and >= 0");
  for (const auto& m : methods)
    if (!(m.alpha > 0.0 && m.alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  if (!game_path) game.validate();
}

std::optional<std::int64_t> AggregateSeries::time_to(double fraction) const {
  const double thr = fraction * R0_sq;
  for (const auto& r : rows)
    if (r.mean_sq_dist <= thr) return r.k;
  return std::nullopt;
}

std::vector<ExperimentConfig> preset_experiments(Preset p, bool desk) {
  ExperimentConfig base;
  base.preset = p;
  base.name = to_string(p);
  base.seeds = desk ? 20 : 5;
  base.game.n = desk ? 20 : 100;
  base.game.d = desk ? 10 : 100;
  base.game.p = desk ? 10 : 100;
  base.game.seed = 7;
  base.K = desk ? 20000 : 100000;

  auto sseg = [](const std::string& scheme, PolicyKind pol, const std::string& label) {
    MethodSpec m = parse_method("sseg/" + scheme);
    m.policy = pol;
    m.label = label;
    return m;
  };

  std::vector<ExperimentConfig> out;
  switch (p) {
    case Preset::Exp1UsVsIs:
      for (double lmax : {2.0, 5.0, 10.0, 20.0}) {
        ExperimentConfig e = base;
        e.name = "exp1_lmax" + format_double(lmax);
        e.game.lmax_override = std::make_pair(Index{0}, lmax);
        e.K = desk ? 40000 : 100000;
        e.record_every = 50;
        e.methods = {sseg("us", PolicyKind::Constant, "us"), sseg("is", PolicyKind::Constant, "is")};
        out.push_back(e);
      }
      break;
    case Preset::Exp2SsegStepsizes: {
      ExperimentConfig e = base;
      MethodSpec baseline = sseg("us", PolicyKind::Constant, "us_half_inverse_l");
      baseline.alpha = 1.0;
      baseline.gamma_rule = GammaRule::HalfInverseL;
      baseline.envelope = false;
      e.methods = {sseg("us", PolicyKind::Constant, "us_constant"),
                   sseg("us", PolicyKind::DecreasingK, "us_decreasing"), baseline};
      out.push_back(e);
      break;
    }
    case Preset::Exp3NegativeMu: {
      ExperimentConfig e = base;
      e.game.negative_mu_component = Index{0};
      e.methods = {sseg("us", PolicyKind::Constant, "us_constant"),
                   sseg("us", PolicyKind::DecreasingK, "us_decreasing")};
      out.push_back(e);
      break;
    }
    case Preset::Exp4IsegStepsizes: {
      ExperimentConfig e = base;
      MethodSpec c = parse_method("iseg/b=1");
      c.label = "iseg_constant";
      MethodSpec d = c;
      d.label = "iseg_decreasing";
      d.policy = PolicyKind::DecreasingK;
      MethodSpec h = c;
      h.label = "iseg_hsieh";
      h.policy = PolicyKind::Hsieh;
      h.envelope = false;
      e.methods = {c, d, h};
      out.push_back(e);
      break;
    }
    case Preset::AppxBnice: {
      ExperimentConfig e = base;
      e.game.lmax_override = std::make_pair(Index{0}, 10.0);
      e.record_every = 50;
      const Index n = e.game.n;
      for (Index b : {n / 10, n / 4, n / 2}) {
        const std::string bs = std::to_string(b);
        e.methods.push_back(sseg("nice:b=" + bs, PolicyKind::Constant, "nice_b" + bs));
        e.methods.push_back(sseg("us:b=" + bs, PolicyKind::Constant, "us_b" + bs));
      }
      out.push_back(e);
      break;
    }
    case Preset::Custom:
      base.methods = {sseg("us", PolicyKind::Constant, "us")};
      out.push_back(base);
      break;
  }
  return out;
}

std::vector<AggregateSeries> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const QuadraticGame game = cfg.game_path ? load_game(*cfg.game_path) : generate_game(cfg.game);
  const FiniteSumOperator<double> op = game_to_operator(game);
  const Point<double> x_star = solve_root(op);

  Point<double> x0 = x_star;
  {
    CounterRng rng = CounterRng::stream(cfg.base_seed, ~std::uint64_t{0}, 0);
    for (Index j = 0; j < x0.size(); ++j) x0(j) += cfg.x0_scale * rng.normal();
  }
  const double R0_sq = (x0 - x_star).squaredNorm();

  std::vector<Prepared> prepared;
  prepared.reserve(cfg.methods.size());
  for (const auto& m : cfg.methods) prepared.push_back(prepare(m, op, x_star, R0_sq, cfg));

  const std::size_t n_tasks = cfg.methods.size() * cfg.seeds;
  std::vector<std::vector<TrajectoryPoint>> results(n_tasks);
  std::vector<std::exception_ptr> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      try {
        SolverConfig sc = prepared[t / cfg.seeds].cfg;
        sc.seed = cfg.base_seed;
        sc.run = t % cfg.seeds;
        results[t] = run(op, x0, sc).points;
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(n_tasks)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<AggregateSeries> out;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    AggregateSeries s;
    s.label = cfg.methods[mi].label;
    s.R0_sq = R0_sq;
    s.metadata = {{"experiment", cfg.name},
                  {"label", s.label},
                  {"K", std::to_string(cfg.K)},
                  {"seeds", std::to_string(cfg.seeds)},
                  {"base_seed", std::to_string(cfg.base_seed)},
                  {"x0_scale", format_double(cfg.x0_scale)},
                  {"R0_sq", format_double(R0_sq)},
                  {"game", cfg.game_path ? cfg.game_path->string() : config_json(game.config)}};
    for (const auto& kv : prepared[mi].meta) s.metadata.push_back(kv);

    const auto& first = results[mi * cfg.seeds];
    const double m = static_cast<double>(cfg.seeds);
    for (std::size_t r = 0; r < first.size(); ++r) {
      double sum = 0.0;
      for (std::size_t sd = 0; sd < cfg.seeds; ++sd) sum += results[mi * cfg.seeds + sd][r].sq_dist;
      SeriesRow row;
      row.k = first[r].k;
      row.mean_sq_dist = sum / m;
      double ss = 0.0;
      for (std::size_t sd = 0; sd < cfg.seeds; ++sd) {
        const double dev = results[mi * cfg.seeds + sd][r].sq_dist - row.mean_sq_dist;
        ss += dev * dev;
      }
      const double var = cfg.seeds > 1 ? ss / (m - 1.0) : 0.0;
      row.stderr_sq_dist = std::sqrt(var / m);
      row.beta = first[r].beta;
      row.envelope = prepared[mi].envelope.empty() ? kNaN : prepared[mi].envelope[static_cast<std::size_t>(row.k)];
      s.rows.push_back(row);
    }
    if (cfg.out_dir) {
      std::filesystem::create_directories(*cfg.out_dir);
      write_csv(s, *cfg.out_dir / (sanitize(cfg.name) + "_" + sanitize(s.label) + ".csv"));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_csv(const AggregateSeries& s, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw SegError("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : s.metadata) f << "# " << k << ": " << v << '\n';
  f << kCsvHeader << '\n';
  for (const auto& r : s.rows) {
    f << r.k << ',' << format_double(r.mean_sq_dist) << ',' << format_double(r.stderr_sq_dist) << ','
      << (std::isnan(r.envelope) ? std::string() : format_double(r.envelope)) << ','
      << format_double(r.beta) << '\n';
  }
  if (!f.flush()) throw SegError("write failed for " + path.string());
}

namespace {

double parse_double(std::string_view field, const std::string& where) {
  if (field.empty()) return kNaN;
  double v = 0.0;
  const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
  if (r.ec != std::errc() || r.ptr != field.data() + field.size())
    throw FormatError("bad number '" + std::string(field) + "' in " + where);
  return v;
}

}  // namespace

AggregateSeries read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SegError("cannot open " + path.string());
  AggregateSeries s;
  std::string line;
  bool header = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) continue;
      std::string key = line.substr(2, colon - 2), value = line.substr(colon + 2);
      if (key == "label") s.label = value;
      if (key == "R0_sq") s.R0_sq = parse_double(value, path.string());
      s.metadata.emplace_back(std::move(key), std::move(value));
      continue;
    }
    if (!header) {
      if (line != kCsvHeader) throw FormatError("unexpected CSV header in " + path.string());
      header = true;
      continue;
    }
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 5) throw FormatError("expected 5 fields in " + path.string());
    SeriesRow r;
    std::int64_t k = 0;
    const auto kr = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), k);
    if (kr.ec != std::errc() || kr.ptr != fields[0].data() + fields[0].size())
      throw FormatError("bad iteration index in " + path.string());
    r.k = k;
    r.mean_sq_dist = parse_double(fields[1], path.string());
    r.stderr_sq_dist = parse_double(fields[2], path.string());
    r.envelope = parse_double(fields[3], path.string());
    r.beta = parse_double(fields[4], path.string());
    s.rows.push_back(r);
  }
  if (!header) throw FormatError("missing CSV header in " + path.string());
  return s;
}

}  // namespace seg
