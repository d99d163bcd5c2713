#include "seg/sampling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace seg {

namespace {

// Cost budget (outcomes x dim^3) for exact spectra of averaged samples.
constexpr double kSpectraBudget = 2e8;
constexpr double kRootTolerance = 1e-8;

double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

void check_probs(const std::vector<double>& p, bool sum_to_one) {
  if (p.empty()) throw ValidationError("scheme needs n >= 1");
  for (double v : p)
    if (!(v > 0.0 && v <= 1.0)) throw ValidationError("probabilities must lie in (0, 1]");
  if (sum_to_one) {
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("probabilities must sum to 1");
  }
}

std::vector<double> make_cdf(const std::vector<double>& p) {
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  const double total = cdf.back();
  for (auto& c : cdf) c /= total;
  cdf.back() = 1.0;
  return cdf;
}

// Per-component F_i(x), evaluated once so sample averages are cheap.
std::vector<Point<double>> component_values(const FiniteSumOperator<double>& op,
                                            const Point<double>& x) {
  std::vector<Point<double>> r;
  r.reserve(static_cast<std::size_t>(op.size()));
  for (Index i = 0; i < op.size(); ++i) r.push_back(eval_component(op, i, x));
  return r;
}

void sample_mean(const std::vector<Point<double>>& r, std::span<const Index> idx,
                 Point<double>& out) {
  out.setZero(r.front().size());
  for (Index i : idx) out += r[static_cast<std::size_t>(i)];
  out /= static_cast<double>(idx.size());
}

void check_root(const FiniteSumOperator<double>& op, const Point<double>& x_star) {
  const double res = eval_full(op, x_star).norm();
  if (!(res <= kRootTolerance))
    throw ValidationError("x_star is not a root: ||F(x_star)|| = " + std::to_string(res));
}

}  // namespace

SamplingScheme SamplingScheme::uniform(Index n, Index b) {
  if (n < 1 || b < 1) throw ValidationError("uniform sampling needs n >= 1 and b >= 1");
  SamplingScheme s;
  s.kind_ = SchemeKind::Uniform;
  s.n_ = n;
  s.b_ = b;
  s.p_.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
  return s;
}

SamplingScheme SamplingScheme::importance(std::vector<double> lipschitz) {
  if (lipschitz.empty()) throw ValidationError("importance sampling needs n >= 1");
  for (double L : lipschitz)
    if (!(L > 0.0 && std::isfinite(L)))
      throw ValidationError("importance sampling needs positive finite L_i");
  SamplingScheme s;
  s.kind_ = SchemeKind::Importance;
  s.n_ = static_cast<Index>(lipschitz.size());
  s.b_ = 1;
  const double total = std::accumulate(lipschitz.begin(), lipschitz.end(), 0.0);
  s.lbar_ = total / static_cast<double>(lipschitz.size());
  for (double L : lipschitz) s.p_.push_back(L / total);
  s.cdf_ = make_cdf(s.p_);
  s.lipschitz_ = std::move(lipschitz);
  return s;
}

SamplingScheme SamplingScheme::bnice(Index n, Index b) {
  if (n < 1 || b < 1 || b > n) throw ValidationError("b-nice sampling needs 1 <= b <= n");
  SamplingScheme s;
  s.kind_ = SchemeKind::BNice;
  s.n_ = n;
  s.b_ = b;
  s.p_.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
  return s;
}

SamplingScheme SamplingScheme::indep_with_replacement(std::vector<double> probs, Index b) {
  check_probs(probs, true);
  if (b < 1) throw ValidationError("batch size must be >= 1");
  SamplingScheme s;
  s.kind_ = SchemeKind::IndepWithReplacement;
  s.n_ = static_cast<Index>(probs.size());
  s.b_ = b;
  s.p_ = std::move(probs);
  s.cdf_ = make_cdf(s.p_);
  return s;
}

SamplingScheme SamplingScheme::iswor(std::vector<double> probs) {
  check_probs(probs, false);
  SamplingScheme s;
  s.kind_ = SchemeKind::Iswor;
  s.n_ = static_cast<Index>(probs.size());
  s.b_ = 0;
  s.p_ = std::move(probs);
  return s;
}

bool SamplingScheme::single_index() const {
  return kind_ == SchemeKind::Importance ||
         (b_ == 1 && (kind_ == SchemeKind::Uniform || kind_ == SchemeKind::IndepWithReplacement ||
                      kind_ == SchemeKind::BNice));
}

std::string SamplingScheme::name() const {
  std::ostringstream os;
  switch (kind_) {
    case SchemeKind::Uniform: os << "us:b=" << b_; break;
    case SchemeKind::Importance: os << "is"; break;
    case SchemeKind::BNice: os << "nice:b=" << b_; break;
    case SchemeKind::IndepWithReplacement: os << "iwr:b=" << b_; break;
    case SchemeKind::Iswor: {
      const bool same = std::all_of(p_.begin(), p_.end(), [&](double v) { return v == p_[0]; });
      os << "iswor";
      if (same) os << ":p=" << p_[0];
      break;
    }
  }
  return os.str();
}

Index SamplingScheme::draw_categorical(CounterRng& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<Index>(static_cast<Index>(it - cdf_.begin()), n_ - 1);
}

void SamplingScheme::draw_into(CounterRng& rng, Sample& s) const {
  s.indices.clear();
  switch (kind_) {
    case SchemeKind::Uniform:
      for (Index k = 0; k < b_; ++k)
        s.indices.push_back(static_cast<Index>(rng.index(static_cast<std::uint64_t>(n_))));
      s.weight = 1.0;
      return;
    case SchemeKind::Importance: {
      const Index i = draw_categorical(rng);
      s.indices.push_back(i);
      s.weight = lbar_ / lipschitz_[static_cast<std::size_t>(i)];
      return;
    }
    case SchemeKind::BNice: {
      // Selection sampling: sorted output, exactly b picks.
      Index needed = b_;
      for (Index i = 0; i < n_ && needed > 0; ++i) {
        if (needed == n_ - i || static_cast<double>(n_ - i) * rng.uniform() < static_cast<double>(needed)) {
          s.indices.push_back(i);
          --needed;
        }
      }
      s.weight = 1.0;
      return;
    }
    case SchemeKind::IndepWithReplacement:
      for (Index k = 0; k < b_; ++k) s.indices.push_back(draw_categorical(rng));
      s.weight = weight_of(s.indices);
      return;
    case SchemeKind::Iswor:
      for (Index i = 0; i < n_; ++i)
        if (rng.uniform() < p_[static_cast<std::size_t>(i)]) s.indices.push_back(i);
      s.weight = weight_of(s.indices);
      return;
  }
}

Sample SamplingScheme::draw(CounterRng& rng) const {
  Sample s;
  draw_into(rng, s);
  return s;
}

double SamplingScheme::weight_of(std::span<const Index> idx) const {
  switch (kind_) {
    case SchemeKind::Uniform:
    case SchemeKind::BNice:
      return 1.0;
    case SchemeKind::Importance:
      return lbar_ / lipschitz_[static_cast<std::size_t>(idx.front())];
    case SchemeKind::IndepWithReplacement: {
      double lw = -static_cast<double>(b_) * std::log(static_cast<double>(n_));
      for (Index i : idx) lw -= std::log(p_[static_cast<std::size_t>(i)]);
      return std::exp(lw);
    }
    case SchemeKind::Iswor: {
      if (idx.empty()) return 0.0;
      std::vector<char> in(static_cast<std::size_t>(n_), 0);
      for (Index i : idx) in[static_cast<std::size_t>(i)] = 1;
      double lp = 0.0;
      for (std::size_t i = 0; i < in.size(); ++i) lp += std::log(in[i] ? p_[i] : 1.0 - p_[i]);
      return std::exp(std::log(static_cast<double>(idx.size())) - lp -
                      static_cast<double>(n_ - 1) * std::log(2.0) -
                      std::log(static_cast<double>(n_)));
    }
  }
  return 0.0;
}

double SamplingScheme::probability_of(std::span<const Index> idx) const {
  switch (kind_) {
    case SchemeKind::Uniform:
      return std::pow(static_cast<double>(n_), -static_cast<double>(b_));
    case SchemeKind::Importance:
      return p_[static_cast<std::size_t>(idx.front())];
    case SchemeKind::BNice:
      return 1.0 / binomial(n_, b_);
    case SchemeKind::IndepWithReplacement: {
      double p = 1.0;
      for (Index i : idx) p *= p_[static_cast<std::size_t>(i)];
      return p;
    }
    case SchemeKind::Iswor: {
      std::vector<char> in(static_cast<std::size_t>(n_), 0);
      for (Index i : idx) in[static_cast<std::size_t>(i)] = 1;
      double lp = 0.0;
      for (std::size_t i = 0; i < in.size(); ++i) lp += std::log(in[i] ? p_[i] : 1.0 - p_[i]);
      return std::exp(lp);
    }
  }
  return 0.0;
}

double SamplingScheme::outcome_count() const {
  switch (kind_) {
    case SchemeKind::Uniform:
    case SchemeKind::IndepWithReplacement:
      return std::pow(static_cast<double>(n_), static_cast<double>(b_));
    case SchemeKind::Importance:
      return static_cast<double>(n_);
    case SchemeKind::BNice:
      return binomial(n_, b_);
    case SchemeKind::Iswor:
      return std::pow(2.0, static_cast<double>(n_));
  }
  return 0.0;
}

bool SamplingScheme::for_each_outcome(
    double limit,
    const std::function<void(std::span<const Index>, double, double)>& f) const {
  if (outcome_count() > limit) return false;
  std::vector<Index> idx;
  switch (kind_) {
    case SchemeKind::Importance:
      idx.resize(1);
      for (Index i = 0; i < n_; ++i) {
        idx[0] = i;
        f(idx, probability_of(idx), weight_of(idx));
      }
      return true;
    case SchemeKind::Uniform:
    case SchemeKind::IndepWithReplacement: {
      idx.assign(static_cast<std::size_t>(b_), 0);
      while (true) {
        f(idx, probability_of(idx), weight_of(idx));
        Index pos = b_ - 1;
        while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == n_) {
          idx[static_cast<std::size_t>(pos)] = 0;
          --pos;
        }
        if (pos < 0) return true;
      }
    }
    case SchemeKind::BNice: {
      idx.resize(static_cast<std::size_t>(b_));
      std::iota(idx.begin(), idx.end(), Index{0});
      const double prob = 1.0 / binomial(n_, b_);
      while (true) {
        f(idx, prob, 1.0);
        Index pos = b_ - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n_ - b_ + pos) --pos;
        if (pos < 0) return true;
        ++idx[static_cast<std::size_t>(pos)];
        for (Index j = pos + 1; j < b_; ++j)
          idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
    case SchemeKind::Iswor: {
      const std::uint64_t total = std::uint64_t{1} << n_;
      for (std::uint64_t mask = 0; mask < total; ++mask) {
        idx.clear();
        for (Index i = 0; i < n_; ++i)
          if (mask >> i & 1U) idx.push_back(i);
        const double prob = probability_of(idx);
        if (prob > 0.0) f(idx, prob, weight_of(idx));
      }
      return true;
    }
  }
  return true;
}

double mu_bar(std::span<const double> mus) {
  if (mus.empty()) return 0.0;
  double s = 0.0;
  for (double m : mus) s += signed_weight(m);
  return s / static_cast<double>(mus.size());
}

double mu_bar(const SamplingScheme& scheme, std::span<const double> mus) {
  if (static_cast<Index>(mus.size()) != scheme.n())
    throw DimensionMismatch("mu vector length does not match scheme size");
  if (scheme.single_index()) return mu_bar(mus);
  double acc = 0.0;
  const bool done = scheme.for_each_outcome(
      kEnumerationLimit, [&](std::span<const Index> idx, double prob, double w) {
        if (w == 0.0) return;
        double m = 0.0;
        for (Index i : idx) m += mus[static_cast<std::size_t>(i)];
        acc += prob * w * signed_weight(m / static_cast<double>(idx.size()));
      });
  return done ? acc : mu_bar(mus);
}

std::vector<Constants<double>> all_component_constants(const FiniteSumOperator<double>& op) {
  std::vector<Constants<double>> c;
  c.reserve(static_cast<std::size_t>(op.size()));
  for (Index i = 0; i < op.size(); ++i) c.push_back(component_constants(op, i));
  return c;
}

Constants<double> SampleSpectra::bound(std::span<const Index> idx) const {
  Constants<double> c{0.0, 0.0};
  for (Index i : idx) {
    const auto k = component_constants(op_, i);
    c.L += k.L;
    c.mu += k.mu;
  }
  c.L /= static_cast<double>(idx.size());
  c.mu /= static_cast<double>(idx.size());
  return c;
}

Constants<double> SampleSpectra::operator()(std::span<const Index> idx) {
  if (idx.size() == 1) return component_constants(op_, idx.front());
  if (!op_.all_affine()) return bound(idx);
  std::vector<Index> key(idx.begin(), idx.end());
  std::sort(key.begin(), key.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto c = matrix_constants(averaged_affine(op_, std::span<const Index>(key)).first);
  cache_.emplace(std::move(key), c);
  return c;
}

bool spectra_affordable(const SamplingScheme& scheme, const FiniteSumOperator<double>& op) {
  if (scheme.single_index()) return true;
  if (!op.all_affine()) return false;
  const double dim = static_cast<double>(op.dim());
  return scheme.outcome_count() <= kEnumerationLimit &&
         scheme.outcome_count() * dim * dim * dim <= kSpectraBudget;
}

double mu_bar(const SamplingScheme& scheme, const FiniteSumOperator<double>& op) {
  if (scheme.n() != op.size()) throw DimensionMismatch("scheme size does not match operator");
  const auto consts = all_component_constants(op);
  std::vector<double> mus;
  for (const auto& c : consts) mus.push_back(c.mu);
  if (scheme.single_index() || !spectra_affordable(scheme, op)) return mu_bar(scheme, mus);
  SampleSpectra spectra(op);
  double acc = 0.0;
  scheme.for_each_outcome(kEnumerationLimit, [&](std::span<const Index> idx, double prob, double w) {
    if (w == 0.0) return;
    acc += prob * w * signed_weight(spectra(idx).mu);
  });
  return acc;
}

double effective_lipschitz(const SamplingScheme& scheme, const FiniteSumOperator<double>& op) {
  if (scheme.n() != op.size()) throw DimensionMismatch("scheme size does not match operator");
  const auto consts = all_component_constants(op);
  std::vector<double> Ls;
  for (const auto& c : consts) Ls.push_back(c.L);
  const double L_max = *std::max_element(Ls.begin(), Ls.end());

  switch (scheme.kind()) {
    case SchemeKind::Uniform:
      // L_xi <= mean of sampled L_i <= L_max, attained by repeating the argmax.
      return L_max;
    case SchemeKind::Importance: {
      double best = 0.0;
      for (Index i = 0; i < op.size(); ++i) {
        const Index one[1] = {i};
        best = std::max(best, scheme.weight_of(one) * Ls[static_cast<std::size_t>(i)]);
      }
      return best;
    }
    default:
      break;
  }

  const bool exact = spectra_affordable(scheme, op);
  SampleSpectra spectra(op);
  double best = 0.0;
  const bool done =
      scheme.for_each_outcome(kEnumerationLimit, [&](std::span<const Index> idx, double, double w) {
        if (w == 0.0) return;
        const double L = exact ? spectra(idx).L : spectra.bound(idx).L;
        best = std::max(best, w * L);
      });
  if (done) return best;

  const Index n = scheme.n();
  const auto& p = scheme.probabilities();
  switch (scheme.kind()) {
    case SchemeKind::BNice: {
      std::vector<double> sorted = Ls;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      const auto b = static_cast<std::size_t>(scheme.batch());
      return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(b), 0.0) /
             static_cast<double>(b);
    }
    case SchemeKind::IndepWithReplacement: {
      const double p_min = *std::min_element(p.begin(), p.end());
      const double b = static_cast<double>(scheme.batch());
      return std::exp(-b * std::log(static_cast<double>(n)) - b * std::log(p_min)) * L_max;
    }
    case SchemeKind::Iswor: {
      // For each subset size s the largest weight comes from the s indices
      // with the smallest odds p_i / (1 - p_i).
      double log_empty = 0.0;
      std::vector<double> log_odds;
      for (double v : p) {
        if (v >= 1.0) return std::numeric_limits<double>::infinity();
        log_empty += std::log1p(-v);
        log_odds.push_back(std::log(v) - std::log1p(-v));
      }
      std::sort(log_odds.begin(), log_odds.end());
      double best_log = -std::numeric_limits<double>::infinity();
      double lp = log_empty;
      for (Index s = 1; s <= n; ++s) {
        lp += log_odds[static_cast<std::size_t>(s - 1)];
        best_log = std::max(best_log, std::log(static_cast<double>(s)) - lp);
      }
      return std::exp(best_log - static_cast<double>(n - 1) * std::log(2.0) -
                      std::log(static_cast<double>(n))) *
             L_max;
    }
    default:
      return L_max;
  }
}

Estimate sigma_star_sq(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                       const Point<double>& x_star, std::uint64_t seed) {
  if (scheme.n() != op.size()) throw DimensionMismatch("scheme size does not match operator");
  check_root(op, x_star);
  const auto r = component_values(op, x_star);
  const double n = static_cast<double>(op.size());
  double us = 0.0;
  Point<double> mean = Point<double>::Zero(op.dim());
  for (const auto& v : r) {
    us += v.squaredNorm();
    mean += v;
  }
  us /= n;
  mean /= n;

  switch (scheme.kind()) {
    case SchemeKind::Uniform: {
      const double b = static_cast<double>(scheme.batch());
      return {us / b + (1.0 - 1.0 / b) * mean.squaredNorm(), 0.0, true};
    }
    case SchemeKind::Importance: {
      double acc = 0.0;
      for (Index i = 0; i < op.size(); ++i) {
        const Index one[1] = {i};
        acc += scheme.weight_of(one) * r[static_cast<std::size_t>(i)].squaredNorm();
      }
      return {acc / n, 0.0, true};
    }
    case SchemeKind::BNice: {
      const double b = static_cast<double>(scheme.batch());
      if (scheme.batch() == op.size()) return {0.0, 0.0, true};
      return {(n - b) / (b * (n - 1.0)) * us, 0.0, true};
    }
    default:
      break;
  }

  Point<double> avg(op.dim());
  double acc = 0.0;
  const bool done =
      scheme.for_each_outcome(kEnumerationLimit, [&](std::span<const Index> idx, double prob, double w) {
        if (w == 0.0) return;
        sample_mean(r, idx, avg);
        acc += prob * w * w * avg.squaredNorm();
      });
  if (done) return {acc, 0.0, true};

  CounterRng rng = CounterRng::stream(seed, 0x5157a7, 0);
  Sample s;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < kMonteCarloDraws; ++t) {
    scheme.draw_into(rng, s);
    double v = 0.0;
    if (s.weight != 0.0) {
      sample_mean(r, s.indices, avg);
      v = s.weight * s.weight * avg.squaredNorm();
    }
    sum += v;
    sum_sq += v * v;
  }
  const double m = sum / static_cast<double>(kMonteCarloDraws);
  const double var = std::max(0.0, sum_sq / static_cast<double>(kMonteCarloDraws) - m * m);
  return {m, std::sqrt(var / static_cast<double>(kMonteCarloDraws)), false};
}

SchemeConstants scheme_constants(const SamplingScheme& scheme, const FiniteSumOperator<double>& op,
                                 const Point<double>& x_star, std::uint64_t seed) {
  SchemeConstants c;
  c.spectra_exact = spectra_affordable(scheme, op);
  c.mu_bar = {mu_bar(scheme, op), 0.0, true};
  c.sigma_star_sq = sigma_star_sq(scheme, op, x_star, seed);
  c.L_eff = effective_lipschitz(scheme, op);
  return c;
}

Point<double> weighted_mean_operator(const SamplingScheme& scheme,
                                     const FiniteSumOperator<double>& op, const Point<double>& x,
                                     bool* exact, double* std_error, std::uint64_t seed) {
  if (scheme.n() != op.size()) throw DimensionMismatch("scheme size does not match operator");
  const auto r = component_values(op, x);
  Point<double> acc = Point<double>::Zero(op.dim());
  Point<double> avg(op.dim());
  const bool done =
      scheme.for_each_outcome(kEnumerationLimit, [&](std::span<const Index> idx, double prob, double w) {
        if (w == 0.0) return;
        sample_mean(r, idx, avg);
        acc += prob * w * avg;
      });
  if (done) {
    if (exact) *exact = true;
    if (std_error) *std_error = 0.0;
    return acc;
  }
  CounterRng rng = CounterRng::stream(seed, 0xb1a5, 0);
  Sample s;
  Point<double> sq = Point<double>::Zero(op.dim());
  for (std::size_t t = 0; t < kMonteCarloDraws; ++t) {
    scheme.draw_into(rng, s);
    if (s.weight == 0.0) continue;
    sample_mean(r, s.indices, avg);
    avg *= s.weight;
    acc += avg;
    sq += avg.cwiseAbs2();
  }
  const double N = static_cast<double>(kMonteCarloDraws);
  acc /= N;
  const Point<double> var = (sq / N - acc.cwiseAbs2()).cwiseMax(0.0);
  if (exact) *exact = false;
  if (std_error) *std_error = std::sqrt(var.maxCoeff() / N);
  return acc;
}

ConditionsReport verify_conditions(const SamplingScheme& scheme,
                                   const FiniteSumOperator<double>& op,
                                   const Point<double>& x_star, double gamma) {
  ConditionsReport rep;
  double se = 0.0;
  bool exact = true;
  const Point<double> m = weighted_mean_operator(scheme, op, x_star, &exact, &se);
  double scale = 1.0;
  for (Index i = 0; i < op.size(); ++i) scale = std::max(scale, eval_component(op, i, x_star).norm());
  rep.unbiased_residual = gamma * m.norm();
  rep.unbiased_stderr = gamma * se;
  rep.unbiased_exact = exact;
  rep.unbiased_ok =
      exact ? rep.unbiased_residual <= 1e-9 * gamma * scale
            : rep.unbiased_residual <=
                  4.0 * rep.unbiased_stderr * std::sqrt(static_cast<double>(op.dim())) + 1e-9 * gamma * scale;
  rep.monotone_value = gamma * mu_bar(scheme, op);
  rep.monotone_ok = rep.monotone_value >= 0.0;
  return rep;
}

double stepsize_cap(const SamplingScheme& scheme, const FiniteSumOperator<double>& op, CapRule rule) {
  if (rule == CapRule::Theory) return 1.0 / (6.0 * effective_lipschitz(scheme, op));

  const bool exact = spectra_affordable(scheme, op);
  SampleSpectra spectra(op);
  double worst = 0.0;  // max of w (4|mu| + sqrt(2) L)
  const bool done =
      scheme.for_each_outcome(kEnumerationLimit, [&](std::span<const Index> idx, double, double w) {
        if (w == 0.0) return;
        double need;
        if (exact) {
          const auto c = spectra(idx);
          need = 4.0 * std::abs(c.mu) + std::sqrt(2.0) * c.L;
        } else {
          need = (4.0 + std::sqrt(2.0)) * spectra.bound(idx).L;
        }
        worst = std::max(worst, w * need);
      });
  if (!done) worst = (4.0 + std::sqrt(2.0)) * effective_lipschitz(scheme, op);
  return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

SchemeSpec parse_scheme(const std::string& text) {
  SchemeSpec spec;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  if (head == "us") {
    spec.kind = SchemeKind::Uniform;
  } else if (head == "is") {
    spec.kind = SchemeKind::Importance;
  } else if (head == "nice") {
    spec.kind = SchemeKind::BNice;
  } else if (head == "iwr") {
    spec.kind = SchemeKind::IndepWithReplacement;
  } else if (head == "iswor") {
    spec.kind = SchemeKind::Iswor;
  } else {
    throw ValidationError("unknown sampling scheme '" + head + "'");
  }
  if (colon == std::string::npos) return spec;

  std::stringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("expected key=value in '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "b") {
      Index b = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), b);
      if (ec != std::errc() || ptr != value.data() + value.size() || b < 1)
        throw ValidationError("bad batch size '" + value + "'");
      spec.b = b;
    } else if (key == "p") {
      double p = 0.0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), p);
      if (ec != std::errc() || ptr != value.data() + value.size() || !(p > 0.0 && p <= 1.0))
        throw ValidationError("bad probability '" + value + "'");
      spec.p = p;
    } else {
      throw ValidationError("unknown scheme parameter '" + key + "'");
    }
  }
  if (spec.kind == SchemeKind::Importance && spec.b != 1)
    throw ValidationError("importance sampling draws one index");
  return spec;
}

std::string to_string(const SchemeSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case SchemeKind::Uniform: os << "us:b=" << spec.b; break;
    case SchemeKind::Importance: os << "is"; break;
    case SchemeKind::BNice: os << "nice:b=" << spec.b; break;
    case SchemeKind::IndepWithReplacement: os << "iwr:b=" << spec.b; break;
    case SchemeKind::Iswor: os << "iswor:p=" << spec.p; break;
  }
  return os.str();
}

SamplingScheme make_scheme(const SchemeSpec& spec, const FiniteSumOperator<double>& op) {
  const Index n = op.size();
  switch (spec.kind) {
    case SchemeKind::Uniform:
      return SamplingScheme::uniform(n, spec.b);
    case SchemeKind::Importance: {
      std::vector<double> L;
      for (const auto& c : all_component_constants(op)) L.push_back(c.L);
      return SamplingScheme::importance(std::move(L));
    }
    case SchemeKind::BNice:
      return SamplingScheme::bnice(n, spec.b);
    case SchemeKind::IndepWithReplacement: {
      // Lipschitz-proportional draws: the batched form of importance sampling.
      std::vector<double> p;
      double total = 0.0;
      for (const auto& c : all_component_constants(op)) {
        p.push_back(c.L);
        total += c.L;
      }
      for (auto& v : p) v /= total;
      return SamplingScheme::indep_with_replacement(std::move(p), spec.b);
    }
    case SchemeKind::Iswor:
      return SamplingScheme::iswor(std::vector<double>(static_cast<std::size_t>(n), spec.p));
  }
  throw ValidationError("unknown scheme");
}

}  // namespace seg
