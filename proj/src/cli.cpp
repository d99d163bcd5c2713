#include "seg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "seg/errors.hpp"
#include "seg/harness.hpp"
#include "seg/theory.hpp"

namespace seg {

namespace {

struct GameFlags {
  GameGenConfig cfg;
  double mu = 0.1, L = 1.0;
  double lmax = 0.0;
  Index negative_mu = -1;
  std::string path;

  void add(CLI::App& app, bool with_path) {
    app.add_option("--n", cfg.n, "number of components")->capture_default_str();
    app.add_option("--d", cfg.d, "dimension of the min player")->capture_default_str();
    app.add_option("--p", cfg.p, "dimension of the max player")->capture_default_str();
    app.add_option("--mu", mu, "lower eigenvalue bound of A_i and C_i")->capture_default_str();
    app.add_option("--L", L, "upper eigenvalue bound of A_i and C_i")->capture_default_str();
    app.add_option("--mu-b", cfg.mu_B, "lower singular value bound of B_i")->capture_default_str();
    app.add_option("--L-b", cfg.L_B, "upper singular value bound of B_i")->capture_default_str();
    app.add_option("--bias-scale", cfg.bias_scale, "scale of the offsets a_i, c_i")->capture_default_str();
    app.add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
    app.add_option("--lmax", lmax, "rescale component 0 to this Lipschitz constant and the rest to 1");
    app.add_option("--negative-mu", negative_mu, "give this component a negative monotonicity constant");
    if (with_path) app.add_option("--game", path, ".qgame file to load instead of generating");
  }

  GameGenConfig resolve() const {
    GameGenConfig c = cfg;
    c.mu_A = c.mu_C = mu;
    c.L_A = c.L_C = L;
    if (lmax > 0.0) c.lmax_override = std::make_pair(Index{0}, lmax);
    if (negative_mu >= 0) c.negative_mu_component = negative_mu;
    c.validate();
    return c;
  }

  QuadraticGame game() const { return path.empty() ? generate_game(resolve()) : load_game(path); }
};

nlohmann::json bound_json(const RateBound& b) {
  const char* kind = b.kind == BoundKind::LinearToNeighborhood ? "linear"
                     : b.kind == BoundKind::DecreasingOverK    ? "decreasing"
                                                                : "averaged";
  return {{"kind", kind}, {"coefficient", b.coefficient}, {"rate", b.rate}, {"plateau", b.plateau},
          {"approximate", b.approximate}};
}

nlohmann::json params_json(const UnifiedParams& p) {
  return {{"A", p.A}, {"B", p.B}, {"C", p.C}, {"D1", p.D1}, {"D2", p.D2}, {"rho", p.rho}};
}

double max_lipschitz(const FiniteSumOperator<double>& op) {
  double L = 0.0;
  for (const auto& c : all_component_constants(op)) L = std::max(L, c.L);
  return L;
}

double uniform_residual(const FiniteSumOperator<double>& op, const Point<double>& x_star) {
  double s = 0.0;
  for (Index i = 0; i < op.size(); ++i) s += eval_component(op, i, x_star).squaredNorm();
  return s / static_cast<double>(op.size());
}

nlohmann::json constants_report(const FiniteSumOperator<double>& op, const Point<double>& x_star,
                                const SchemeSpec& spec, std::optional<double> gamma_opt,
                                double alpha, Index iseg_b, std::uint64_t seed) {
  nlohmann::json j;
  const SamplingScheme scheme = make_scheme(spec, op);
  const SchemeConstants sc = scheme_constants(scheme, op, x_star, seed);
  const double cap = stepsize_cap(scheme, op, CapRule::Theory);
  const double gamma = gamma_opt.value_or(cap);
  const Constants<double> full = operator_constants(op);
  j["operator"] = {{"n", op.size()}, {"dim", op.dim()}, {"mu", full.mu}, {"L", full.L},
                   {"L_max", max_lipschitz(op)}};
  j["scheme"] = {{"name", scheme.name()},
                 {"mu_bar", sc.mu_bar.value},
                 {"sigma_star_sq", sc.sigma_star_sq.value},
                 {"sigma_star_sq_stderr", sc.sigma_star_sq.std_error},
                 {"L_eff", sc.L_eff},
                 {"spectra_exact", sc.spectra_exact},
                 {"stepsize_cap", cap},
                 {"stepsize_cap_raw", stepsize_cap(scheme, op, CapRule::Raw)}};
  const SsegTheory t = sseg_theory(scheme, op, x_star, gamma, alpha, seed);
  const double R0 = 1.0;
  nlohmann::json s = {{"gamma", gamma}, {"alpha", alpha}, {"params", params_json(t.params)},
                      {"sigma_as_sq", t.sigma_as_sq}, {"rho_tilde", gamma * t.mu_bar / 8.0}};
  if (t.params.rho > 0.0) {
    s["constant_envelope_unit_R0"] = bound_json(envelope(t.params, R0));
    s["decreasing_envelope_unit_R0"] = bound_json(corollary_envelope(scheme, op, x_star, gamma, R0));
  }
  j["sseg"] = s;

  const double mu = full.mu, L = max_lipschitz(op), sigma_sq = uniform_residual(op, x_star);
  const double icap = iseg_stepsize_cap(std::max(mu, 0.0), L, 0.0, iseg_b);
  nlohmann::json i = {{"b", iseg_b}, {"delta", 0.0}, {"sigma_sq", sigma_sq}, {"stepsize_cap", icap},
                      {"params", params_json(iseg_params(std::max(mu, 0.0), L, 0.0, sigma_sq, iseg_b, icap, alpha))}};
  if (mu > 0.0) {
    i["kappa"] = iseg_condition_number(mu, L, 0.0, iseg_b);
    i["constant_envelope_unit_R0"] = bound_json(iseg_envelope(mu, icap, alpha, sigma_sq, iseg_b, R0));
    i["decreasing_envelope_unit_R0"] = bound_json(iseg_corollary_envelope(mu, icap, sigma_sq, iseg_b, R0));
  }
  j["iseg"] = i;
  return j;
}

// Moves "--config F" / "--config=F" given after the subcommand in front of
// it. Returns the arguments in reverse order, as CLI11's vector parse expects.
std::vector<std::string> hoist_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + std::min(argc, 1), argv + argc), cfg, rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      cfg = {args[i], args[i + 1]};
      ++i;
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg = {args[i]};
    } else {
      rest.push_back(args[i]);
    }
  }
  rest.insert(rest.begin(), cfg.begin(), cfg.end());
  return {rest.rbegin(), rest.rend()};
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic extragradient solvers and quadratic-game experiments", "seg"};
  app.require_subcommand(1);
  // CLI11 only reads config files on the root app, so `run --config F` is
  // hoisted there and the file keeps its keys under a [run] table.
  app.set_config("--config", "", "TOML file for `run`; keys go under a [run] table");

  // generate
  auto* gen = app.add_subcommand("generate", "write a random quadratic game to a .qgame file");
  GameFlags gen_flags;
  gen_flags.add(*gen, false);
  std::string gen_out;
  gen->add_option("-o,--output", gen_out, "output path")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write one CSV per method");
  GameFlags run_game;
  run_game.add(*run_cmd, true);
  std::string preset = "custom", out_dir = "results", schedule = "constant";
  bool desk = false;
  std::vector<std::string> methods;
  std::int64_t K = -1, record_every = -1;
  std::size_t seeds = 0;
  std::uint64_t base_seed = 1;
  unsigned jobs = 1;
  double alpha = 0.25, x0_scale = 10.0;
  std::optional<double> gamma;
  run_cmd->add_option("--preset", preset, "exp1, exp2, exp3, exp4, appx_bnice or custom")->capture_default_str();
  run_cmd->add_flag("--desk", desk, "small dimensions and more seeds");
  run_cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  run_cmd->add_option("--method", methods, "custom method, e.g. sseg/us:b=1, iseg/b=4, eg");
  run_cmd->add_option("--schedule", schedule, "constant, decreasing or hsieh for custom methods")->capture_default_str();
  run_cmd->add_option("--alpha", alpha, "gamma2 / gamma1 for custom methods")->capture_default_str();
  run_cmd->add_option("--gamma", gamma, "base stepsize (default: the method's cap)");
  run_cmd->add_option("--K", K, "iterations");
  run_cmd->add_option("--record-every", record_every, "checkpoint stride");
  run_cmd->add_option("--seeds", seeds, "number of seeds");
  run_cmd->add_option("--base-seed", base_seed, "base seed for runs and x0")->capture_default_str();
  run_cmd->add_option("--x0-scale", x0_scale, "x0 = x* + scale N(0, I)")->capture_default_str();
  run_cmd->add_option("--jobs", jobs, "concurrent runs")->capture_default_str()->check(CLI::PositiveNumber);

  // verify
  auto* verify = app.add_subcommand("verify", "check the sampling conditions and certify the unified assumption");
  GameFlags ver_game;
  ver_game.add(*verify, true);
  std::string ver_scheme = "us", ver_method = "sseg";
  Index ver_b = 1;
  std::size_t points = 20, samples = 2000;
  std::uint64_t ver_seed = 1;
  double ver_alpha = 0.25;
  std::optional<double> ver_gamma;
  verify->add_option("--scheme", ver_scheme, "sampling scheme for S-SEG")->capture_default_str();
  verify->add_option("--method", ver_method, "sseg or iseg")->capture_default_str();
  verify->add_option("--b", ver_b, "I-SEG batch size")->capture_default_str();
  verify->add_option("--gamma", ver_gamma, "base stepsize (default: the cap)");
  verify->add_option("--alpha", ver_alpha, "gamma2 / gamma1")->capture_default_str();
  verify->add_option("--points", points, "random test points")->capture_default_str();
  verify->add_option("--samples", samples, "Monte-Carlo samples per point")->capture_default_str();
  verify->add_option("--mc-seed", ver_seed, "seed of the certificate")->capture_default_str();

  // constants
  auto* consts = app.add_subcommand("constants", "print the rate constants for a game and scheme");
  GameFlags con_game;
  con_game.add(*consts, true);
  std::string con_scheme = "us";
  double con_alpha = 0.25;
  Index con_b = 1;
  std::optional<double> con_gamma;
  consts->add_option("--scheme", con_scheme, "sampling scheme")->capture_default_str();
  consts->add_option("--gamma", con_gamma, "base stepsize (default: the cap)");
  consts->add_option("--alpha", con_alpha, "gamma2 / gamma1")->capture_default_str();
  consts->add_option("--b", con_b, "I-SEG batch size")->capture_default_str();

  try {
    app.parse(hoist_config(argc, argv));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      save_game(generate_game(gen_flags.resolve()), gen_out);
      out << "wrote " << gen_out << '\n';
      return 0;
    }

    if (*run_cmd) {
      const Preset p = parse_preset(preset);
      std::vector<ExperimentConfig> exps = preset_experiments(p, desk);
      for (auto& e : exps) {
        if (p == Preset::Custom) {
          if (!methods.empty()) {
            e.methods.clear();
            for (const auto& m : methods) {
              MethodSpec spec = parse_method(m);
              if (m.find('@') == std::string::npos) spec.policy = parse_policy(schedule);
              spec.alpha = alpha;
              spec.gamma = gamma;
              e.methods.push_back(spec);
            }
          }
          e.game = run_game.resolve();
          if (!run_game.path.empty()) e.game_path = run_game.path;
        }
        if (K >= 0) e.K = K;
        if (record_every >= 0) e.record_every = record_every;
        if (seeds > 0) e.seeds = seeds;
        e.base_seed = base_seed;
        e.x0_scale = x0_scale;
        e.jobs = jobs;
        e.out_dir = out_dir;
        const auto series = run_experiment(e);
        for (const auto& s : series) {
          const auto t = s.time_to(1e-2);
          out << e.name << '/' << s.label << ": final mean " << format_double(s.rows.back().mean_sq_dist)
              << ", R0^2 " << format_double(s.R0_sq) << ", k(1e-2 R0^2) "
              << (t ? std::to_string(*t) : std::string("not reached")) << '\n';
        }
      }
      return 0;
    }

    if (*verify) {
      const QuadraticGame g = ver_game.game();
      const auto op = game_to_operator(g);
      const Point<double> x_star = solve_root(op);
      nlohmann::json report;
      bool ok = true;
      CertifyMethod cm;
      cm.alpha = ver_alpha;
      if (ver_method == "sseg") {
        const SamplingScheme scheme = make_scheme(parse_scheme(ver_scheme), op);
        cm.method = MethodKind::SSEG;
        cm.gamma = ver_gamma.value_or(stepsize_cap(scheme, op, CapRule::Theory));
        const ConditionsReport cr = verify_conditions(scheme, op, x_star, cm.gamma);
        report["conditions"] = {{"scheme", scheme.name()},
                                {"unbiased_residual", cr.unbiased_residual},
                                {"unbiased_stderr", cr.unbiased_stderr},
                                {"unbiased_exact", cr.unbiased_exact},
                                {"unbiased_ok", cr.unbiased_ok},
                                {"monotone_value", cr.monotone_value},
                                {"monotone_ok", cr.monotone_ok}};
        ok = cr.ok();
        cm.params = sseg_params(scheme, op, x_star, cm.gamma, cm.alpha);
        cm.scheme = scheme;
      } else if (ver_method == "iseg") {
        const double mu = operator_constants(op).mu, L = max_lipschitz(op);
        if (!(mu > 0.0)) throw ValidationError("I-SEG certificate needs a strongly monotone operator");
        cm.method = MethodKind::ISEG;
        cm.b = ver_b;
        cm.gamma = ver_gamma.value_or(iseg_stepsize_cap(mu, L, 0.0, ver_b));
        cm.params = iseg_params(mu, L, 0.0, uniform_residual(op, x_star), ver_b, cm.gamma, cm.alpha);
      } else {
        throw ValidationError("--method must be sseg or iseg");
      }
      const auto pts = random_test_points(x_star, points, 1e-2, 1e2, ver_seed);
      const Assumption3Report a3 = certify_assumption3(op, x_star, cm, pts, samples, ver_seed);
      report["assumption"] = nlohmann::json::parse(a3.to_json());
      ok = ok && a3.all_ok;
      report["ok"] = ok;
      out << report.dump(2) << '\n';
      return ok ? 0 : 1;
    }

    if (*consts) {
      const QuadraticGame g = con_game.game();
      const auto op = game_to_operator(g);
      const Point<double> x_star = solve_root(op);
      out << constants_report(op, x_star, parse_scheme(con_scheme), con_gamma, con_alpha, con_b, 1).dump(2)
          << '\n';
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace seg
