#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lfgof/error.hpp"
#include "lfgof/holdout_gof.hpp"
#include "lfgof/neighbors.hpp"
#include "lfgof/parallel.hpp"
#include "lfgof/posterior.hpp"
#include "lfgof/prior_gof.hpp"
#include "lfgof/rng.hpp"
#include "lfgof/scores.hpp"
#include "lfgof/table.hpp"

namespace lfgof {

// ---------------------------------------------------------------------------
// Sample L-moments

namespace detail {

inline long double binomial_ld(std::size_t n, std::size_t k) {
  if (k > n) return 0.0L;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  return std::round(r);
}

/// Exact binomial coefficient, or nothing on overflow.
inline std::optional<__int128> binomial_exact(std::size_t n, std::size_t k) {
  if (k > n) return __int128{0};
  k = std::min(k, n - k);
  __int128 r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    __int128 next;
    if (__builtin_mul_overflow(r, static_cast<__int128>(n - k + i), &next)) return std::nullopt;
    r = next / static_cast<__int128>(i);  // exact: r * (n-k+i) is divisible by i
  }
  return r;
}

/// Numerator of the order-statistic weight of x_(i) (1-based) in l_r:
/// sum_j (-1)^j C(r-1, j) C(i-1, r-1-j) C(n-i, j).
inline long double lmoment_numerator(std::size_t n, std::size_t r, std::size_t i) {
  __int128 exact = 0;
  bool ok = true;
  for (std::size_t j = 0; j < r && ok; ++j) {
    const auto a = binomial_exact(r - 1, j);
    const auto b = binomial_exact(i - 1, r - 1 - j);
    const auto c = binomial_exact(n - i, j);
    __int128 ab, term;
    if (!a || !b || !c || __builtin_mul_overflow(*a, *b, &ab) || __builtin_mul_overflow(ab, *c, &term)) {
      ok = false;
      break;
    }
    if (j % 2 == 1) term = -term;
    if (__builtin_add_overflow(exact, term, &exact)) ok = false;
  }
  if (ok) return static_cast<long double>(exact);
  long double sum = 0.0L;
  for (std::size_t j = 0; j < r; ++j) {
    const long double term = binomial_ld(r - 1, j) * binomial_ld(i - 1, r - 1 - j) * binomial_ld(n - i, j);
    sum += j % 2 == 1 ? -term : term;
  }
  return sum;
}

}  // namespace detail

/// Precomputed order-statistic weights for unbiased sample L-moments of
/// samples of length n, up to order m.
class LMomentWeights {
 public:
  LMomentWeights(std::size_t n, std::size_t m) : n_(n), m_(m) {
    if (m == 0) throw SpecError("number of L-moments must be positive");
    if (n < m) throw SizeError("sample length must be at least the number of L-moments");
    weights_.assign(m * n, 0.0);
    for (std::size_t r = 1; r <= m; ++r) {
      const long double denom = static_cast<long double>(r) * detail::binomial_ld(n, r);
      for (std::size_t i = 1; i <= n; ++i)
        weights_[(r - 1) * n + (i - 1)] = static_cast<double>(detail::lmoment_numerator(n, r, i) / denom);
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }

  /// (l1, l2, t3, ..., tm) with t_r = l_r / l2. Sorts a copy of z.
  std::vector<double> compute(std::span<const double> z) const {
    std::vector<double> x(z.begin(), z.end());
    std::sort(x.begin(), x.end());
    return compute_sorted(x);
  }

  /// Same as compute() for a sample already sorted ascending; `x` is used as
  /// scratch space.
  std::vector<double> compute_sorted(std::vector<double>& x) const {
    if (x.size() != n_) throw SizeError("sample length does not match the prepared weights");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n_);
    std::vector<double> out(m_);
    out[0] = mean;
    if (m_ == 1) return out;
    // weights of order >= 2 sum to zero, so centering changes nothing but rounding
    for (auto& v : x) v -= mean;
    for (std::size_t r = 2; r <= m_; ++r) {
      const double* w = weights_.data() + (r - 1) * n_;
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) s += w[i] * x[i];
      out[r - 1] = s;
    }
    const double l2 = out[1];
    if (m_ >= 3) {
      if (!(l2 > 0.0)) throw SpecError("L-moment ratios are undefined for a constant sample");
      for (std::size_t r = 3; r <= m_; ++r) out[r - 1] /= l2;
    }
    return out;
  }

 private:
  std::size_t n_;
  std::size_t m_;
  std::vector<double> weights_;  // m x n
};

/// First m sample L-moment summaries of z: l1, l2, then ratios l_r / l2.
inline std::vector<double> sample_lmoments(std::span<const double> z, std::size_t m) {
  return LMomentWeights(z.size(), m).compute(z);
}

// ---------------------------------------------------------------------------
// Toy location-scale model

enum class ToyFamily { laplace, gaussian };

inline std::string to_string(ToyFamily f) { return f == ToyFamily::laplace ? "laplace" : "gaussian"; }

inline ToyFamily parse_toy_family(const std::string& s) {
  if (s == "laplace") return ToyFamily::laplace;
  if (s == "gaussian") return ToyFamily::gaussian;
  throw SpecError("unknown toy family '" + s + "'");
}

/// mu ~ U(mu_low, mu_high), sigma ~ U(sigma_low, sigma_high); d iid draws from
/// Laplace(mu, sigma / sqrt 2) or Normal(mu, sigma^2), summarized by m
/// L-moment summaries.
struct ToyModelSpec {
  ToyFamily family = ToyFamily::laplace;
  std::size_t d = 350;
  std::size_t m = 20;
  double mu_low = -5.0;
  double mu_high = 5.0;
  double sigma_low = 1.0;
  double sigma_high = 4.0;

  void validate() const {
    if (m == 0 || m > d) throw SpecError("toy model needs 1 <= m <= d");
    if (!(mu_low < mu_high)) throw SpecError("toy model mu bounds must be increasing");
    if (!(sigma_low > 0.0 && sigma_low < sigma_high)) throw SpecError("toy model sigma bounds must be positive and increasing");
  }
};

class ToyModel {
 public:
  explicit ToyModel(ToyModelSpec spec) : spec_((spec.validate(), spec)), weights_(spec.d, spec.m) {}

  const ToyModelSpec& spec() const noexcept { return spec_; }

  static std::vector<std::string> param_names() { return {"mu", "sigma"}; }

  std::vector<std::string> stat_names() const {
    std::vector<std::string> names;
    for (std::size_t r = 1; r <= spec_.m; ++r) names.push_back(r <= 2 ? "l" + std::to_string(r) : "t" + std::to_string(r));
    return names;
  }

  std::vector<double> draw_theta(CounterRng& rng) const {
    const double mu = spec_.mu_low + (spec_.mu_high - spec_.mu_low) * rng.uniform01();
    const double sigma = spec_.sigma_low + (spec_.sigma_high - spec_.sigma_low) * rng.uniform01();
    return {mu, sigma};
  }

  std::vector<double> raw_sample(std::span<const double> theta, CounterRng& rng) const {
    if (theta.size() != 2) throw SpecError("toy model takes (mu, sigma)");
    const double mu = theta[0];
    const double sigma = theta[1];
    if (!(sigma > 0.0) || !std::isfinite(mu)) throw SpecError("toy model needs finite mu and positive sigma");
    std::vector<double> z(spec_.d);
    if (spec_.family == ToyFamily::laplace) {
      const double b = sigma / std::sqrt(2.0);
      for (auto& v : z) {
        const double u = rng.uniform_open01() - 0.5;
        v = u < 0.0 ? mu + b * std::log1p(2.0 * u) : mu - b * std::log1p(-2.0 * u);
      }
    } else {
      std::normal_distribution<double> normal(mu, sigma);
      for (auto& v : z) v = normal(rng);
    }
    return z;
  }

  std::vector<double> simulate(std::span<const double> theta, CounterRng& rng) const {
    auto z = raw_sample(theta, rng);
    std::sort(z.begin(), z.end());
    return weights_.compute_sorted(z);
  }

  Resimulator resimulator() const {
    return {stat_names(), [model = *this](std::span<const double> theta, CounterRng& rng) {
              return model.simulate(theta, rng);
            }};
  }

 private:
  ToyModelSpec spec_;
  LMomentWeights weights_;
};

/// n particles; particle i draws theta and its sample from child stream i.
inline ReferenceTable simulate_toy(const ToyModel& model, std::size_t n, std::uint64_t seed, std::size_t workers = 1) {
  if (n == 0) throw SizeError("simulate_toy needs n >= 1");
  const std::size_t m = model.spec().m;
  std::vector<double> params(2 * n);
  std::vector<double> stats(m * n);
  const CounterRng master(seed);
  parallel_for(n, workers, [&](std::size_t i) {
    CounterRng rng = master.child(i);
    const auto theta = model.draw_theta(rng);
    const auto y = model.simulate(theta, rng);
    std::copy(theta.begin(), theta.end(), params.begin() + static_cast<std::ptrdiff_t>(2 * i));
    std::copy(y.begin(), y.end(), stats.begin() + static_cast<std::ptrdiff_t>(m * i));
  });
  return ReferenceTable(ToyModel::param_names(), model.stat_names(), std::move(params), std::move(stats));
}

inline ReferenceTable simulate_toy(const ToyModelSpec& spec, std::size_t n, std::uint64_t seed, std::size_t workers = 1) {
  return simulate_toy(ToyModel(spec), n, seed, workers);
}

// ---------------------------------------------------------------------------
// Experiments

/// Budgets are total simulation counts: the prior test splits each into
/// N_ref = N_calib = budget / 2; the holdout test uses the budget as N_ref.
struct ExperimentSpec {
  std::string setting = "toy";
  std::vector<std::size_t> budgets{500, 1000, 2000, 5000};
  std::size_t n_test = 1000;
  double alpha = 0.05;
  std::vector<ScoreSpec> scores{ScoreSpec::max_lof(5, 20), ScoreSpec::knn(1)};
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  void validate_prior() const {
    validate_common();
    for (const auto b : budgets)
      if (b < 2 || b % 2 != 0) throw SpecError("prior-test budgets must be even (N_ref = N_calib = budget / 2)");
    for (const auto b : budgets)
      for (const auto& s : scores) s.validate(b / 2);
  }

  void validate_common() const {
    if (budgets.empty()) throw SpecError("experiment needs at least one budget");
    if (n_test == 0) throw SpecError("n_test must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw SpecError("alpha must lie in (0, 1)");
    if (scores.empty()) throw SpecError("experiment needs at least one score");
  }
};

/// kNN(k) and LOF(k) for every k in [k_lo, k_hi].
inline std::vector<ScoreSpec> k_sweep_specs(std::size_t k_lo, std::size_t k_hi) {
  if (k_lo == 0 || k_lo > k_hi) throw SpecError("k sweep needs 1 <= k_lo <= k_hi");
  std::vector<ScoreSpec> out;
  for (std::size_t k = k_lo; k <= k_hi; ++k) out.push_back(ScoreSpec::knn(k));
  for (std::size_t k = k_lo; k <= k_hi; ++k) out.push_back(ScoreSpec::lof(k));
  return out;
}

/// Largest count c with c / n <= alpha, so that "p <= alpha" and
/// "count <= c" select the same PODs.
inline std::size_t max_rejecting_count(std::size_t n, double alpha) {
  std::size_t c = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
  c = std::min(c, n);
  while (c < n && static_cast<double>(c + 1) / static_cast<double>(n) <= alpha) ++c;
  while (c > 0 && static_cast<double>(c) / static_cast<double>(n) > alpha) --c;
  return c;
}

struct PriorPowerResult {
  double power = 0.0;           // quantile formulation
  double power_counting = 0.0;  // per-POD p-value formulation
  double threshold = 0.0;       // calibration-score quantile; -inf when every POD rejects
  std::vector<double> pvalues;  // per POD
};

/// Power of the prior test on fixed data. The quantile formulation rejects a
/// POD when its score reaches the ceil((1 - alpha) N_calib)-th smallest
/// calibration score; the counting formulation rejects when its p-value is at
/// most alpha. Both select exactly the same PODs.
inline PriorPowerResult prior_power(const ReferenceTable& ref, const ReferenceTable& calib, const ReferenceTable& pods,
                                    const ScoreSpec& spec, double alpha, const ScoreOptions& options = {}) {
  if (calib.empty() || pods.empty()) throw SizeError("power needs calibration points and PODs");
  const OutlierScorer scorer(ref, spec, options);
  auto calib_scores = scorer.score_batch(calib, spec);
  const auto pod_scores = scorer.score_batch(pods, spec);

  PriorPowerResult out;
  const std::size_t n = calib_scores.size();
  std::size_t rejected_counting = 0;
  out.pvalues.reserve(pod_scores.size());
  for (const double s : pod_scores) {
    const double p = exceedance_pvalue(calib_scores, s);
    out.pvalues.push_back(p);
    if (p <= alpha) ++rejected_counting;
  }
  std::sort(calib_scores.begin(), calib_scores.end());
  const std::size_t order = n - max_rejecting_count(n, alpha);  // 1-based; 0 means "always reject"
  out.threshold = order == 0 ? -std::numeric_limits<double>::infinity() : calib_scores[order - 1];
  const auto rejected = std::count_if(pod_scores.begin(), pod_scores.end(), [&](double s) { return s >= out.threshold; });
  out.power = static_cast<double>(rejected) / static_cast<double>(pod_scores.size());
  out.power_counting = static_cast<double>(rejected_counting) / static_cast<double>(pod_scores.size());
  return out;
}

/// One row of a tidy power/calibration table.
struct PowerRow {
  std::string setting;
  std::string test;  // prior | holdout
  std::size_t budget = 0;
  std::size_t n_ref = 0;
  std::size_t n_calib = 0;
  std::string score;
  std::string method;  // posterior method, "-" for the prior test
  std::size_t n_post = 0;
  double alpha = 0.05;
  std::size_t n_test = 0;
  double power = 0.0;
  double power_counting = 0.0;
};

/// Prior-test power with a simulated null (reference + calibration) and
/// alternative PODs. All budgets share the same PODs; every budget draws its
/// own null table.
inline std::vector<PowerRow> estimate_power_prior(const ToyModelSpec& null_model, const ToyModelSpec& alt_model,
                                                  const ExperimentSpec& exp, const ScoreOptions& options = {}) {
  exp.validate_prior();
  const ToyModel null_sim(null_model);
  const ToyModel alt_sim(alt_model);
  const auto pods = simulate_toy(alt_sim, exp.n_test, derive_seed(exp.seed, stream::kPods), exp.workers);
  ScoreOptions scoring = options;
  scoring.workers = exp.workers;
  std::vector<PowerRow> rows;
  for (std::size_t b = 0; b < exp.budgets.size(); ++b) {
    const std::size_t budget = exp.budgets[b];
    const std::uint64_t budget_seed = derive_seed(derive_seed(exp.seed, stream::kReference), b);
    const auto pool = simulate_toy(null_sim, budget, budget_seed, exp.workers);
    const auto split = split_calibration(pool, {budget / 2, derive_seed(budget_seed, stream::kSplit)});
    for (const auto& spec : exp.scores) {
      const auto res = prior_power(split.reference, split.calibration, pods, spec, exp.alpha, scoring);
      rows.push_back({exp.setting, "prior", budget, split.reference.size(), split.calibration.size(), spec.label(), "-",
                      0, exp.alpha, exp.n_test, res.power, res.power_counting});
    }
  }
  return rows;
}

/// Prior-test power on ingested tables: each budget draws its rows from
/// `null_pool` without replacement and scores the rows of `pods`.
inline std::vector<PowerRow> estimate_power_prior(const ReferenceTable& null_pool, const ReferenceTable& pods,
                                                  const ExperimentSpec& exp, const ScoreOptions& options = {}) {
  exp.validate_prior();
  if (null_pool.n_stats() != pods.n_stats()) throw SchemaError("null table and PODs differ in dimension");
  ScoreOptions scoring = options;
  scoring.workers = exp.workers;
  std::vector<PowerRow> rows;
  for (std::size_t b = 0; b < exp.budgets.size(); ++b) {
    const std::size_t budget = exp.budgets[b];
    if (budget > null_pool.size())
      throw SizeError("budget " + std::to_string(budget) + " exceeds the " + std::to_string(null_pool.size()) +
                      " rows of the null table");
    const std::uint64_t budget_seed = derive_seed(derive_seed(exp.seed, stream::kReference), b);
    const auto pool = budget == null_pool.size()
                          ? null_pool
                          : null_pool.subset(sample_calibration_rows(null_pool.size(), budget, budget_seed));
    const auto split = split_calibration(pool, {budget / 2, derive_seed(budget_seed, stream::kSplit)});
    for (const auto& spec : exp.scores) {
      const auto res = prior_power(split.reference, split.calibration, pods, spec, exp.alpha, scoring);
      rows.push_back({exp.setting, "prior", budget, split.reference.size(), split.calibration.size(), spec.label(), "-",
                      0, exp.alpha, pods.size(), res.power, res.power_counting});
    }
  }
  return rows;
}

/// Holdout p-values of n_test POD pairs: POD k draws theta from the
/// alternative prior and simulates y_obs and y_new from that same theta on
/// independent streams. Rows are indexed [score][pod].
struct HoldoutSample {
  std::vector<ScoreSpec> scores;
  std::vector<std::vector<double>> pvalues;
  std::size_t n_ref = 0;
};

inline HoldoutSample holdout_pvalue_sample(const ReferenceTable& ref, const ToyModel& null_sim, const ToyModel& alt_sim,
                                           const PosteriorSpec& posterior, const std::vector<ScoreSpec>& scores,
                                           std::size_t n_test, std::uint64_t seed, std::size_t workers,
                                           const ScoreOptions& options = {}) {
  const NeighborIndex index(ref.summary_data(), ref.n_stats(), {.strategy = IndexOptions::Strategy::scan});
  const auto resim = null_sim.resimulator();
  HoldoutSample out{scores, std::vector<std::vector<double>>(scores.size(), std::vector<double>(n_test)), ref.size()};
  const CounterRng pods(derive_seed(seed, stream::kPods));
  HoldoutOptions opts;
  opts.scoring = options;
  opts.scoring.workers = 1;
  opts.index = &index;
  parallel_for(n_test, workers, [&](std::size_t k) {
    CounterRng rng = pods.child(k);
    const auto theta = alt_sim.draw_theta(rng);
    CounterRng obs_rng = rng.child(0);
    CounterRng new_rng = rng.child(1);
    HoldoutInput in;
    in.y_obs = alt_sim.simulate(theta, obs_rng);
    in.y_new = alt_sim.simulate(theta, new_rng);
    in.ref = &ref;
    in.posterior = posterior;
    in.seed = derive_seed(derive_seed(seed, stream::kPodTasks), k);
    const auto reports = holdout_pvalues(in, scores, resim, opts);
    for (std::size_t s = 0; s < scores.size(); ++s) out.pvalues[s][k] = reports[s].p_hat;
  });
  return out;
}

/// Holdout-test power: fraction of alternative POD pairs with p <= alpha.
/// Budgets are reference-table sizes.
inline std::vector<PowerRow> estimate_power_holdout(const ToyModelSpec& null_model, const ToyModelSpec& alt_model,
                                                    const PosteriorSpec& posterior, const ExperimentSpec& exp,
                                                    const ScoreOptions& options = {}) {
  exp.validate_common();
  const ToyModel null_sim(null_model);
  const ToyModel alt_sim(alt_model);
  std::vector<PowerRow> rows;
  for (std::size_t b = 0; b < exp.budgets.size(); ++b) {
    const std::size_t budget = exp.budgets[b];
    posterior.validate(budget);
    const auto ref = simulate_toy(null_sim, budget, derive_seed(derive_seed(exp.seed, stream::kReference), b), exp.workers);
    const auto sample = holdout_pvalue_sample(ref, null_sim, alt_sim, posterior, exp.scores, exp.n_test,
                                              derive_seed(exp.seed, b), exp.workers, options);
    for (std::size_t s = 0; s < exp.scores.size(); ++s) {
      const auto& p = sample.pvalues[s];
      const auto rejected = std::count_if(p.begin(), p.end(), [&](double v) { return v <= exp.alpha; });
      const double power = static_cast<double>(rejected) / static_cast<double>(p.size());
      rows.push_back({exp.setting, "holdout", budget, posterior.n_post / 2, posterior.n_post / 2,
                      exp.scores[s].label(), to_string(posterior.method), posterior.n_post, exp.alpha, exp.n_test,
                      power, power});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Calibration

/// Kolmogorov-Smirnov distance between the empirical CDF of `p` and Uniform(0, 1).
inline double ks_uniform_distance(std::span<const double> p) {
  if (p.empty()) throw SizeError("KS distance of an empty sample");
  std::vector<double> s(p.begin(), p.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = std::clamp(s[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

/// max_i |p_(i) - (i - 0.5) / n|: largest gap between empirical and uniform quantiles.
inline double max_quantile_deviation(std::span<const double> p) {
  if (p.empty()) throw SizeError("quantile deviation of an empty sample");
  std::vector<double> s(p.begin(), p.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    d = std::max(d, std::abs(s[i] - (static_cast<double>(i) + 0.5) / n));
  return d;
}

enum class TestKind { prior, holdout };

inline std::string to_string(TestKind t) { return t == TestKind::prior ? "prior" : "holdout"; }

struct CalibrationResult {
  std::string setting;
  std::string test;
  std::size_t budget = 0;
  std::string score;
  std::string method;
  std::size_t n_post = 0;
  std::vector<double> pvalues;  // per POD, in POD order
  double ks = 0.0;
  double max_quantile_deviation = 0.0;
};

/// p-values of null PODs and their distance to uniformity.
///
/// Prior test: each POD gets its own freshly simulated reference and
/// calibration sets (budget / 2 rows each), so the p-values are marginally
/// calibrated rather than conditional on one calibration set. Holdout test:
/// one reference table of `budget` rows, with POD pairs sharing theta.
inline std::vector<CalibrationResult> calibration_check(const ToyModelSpec& model, const ExperimentSpec& exp,
                                                        TestKind test,
                                                        const std::optional<PosteriorSpec>& posterior = std::nullopt,
                                                        const ScoreOptions& options = {}) {
  const ToyModel sim(model);
  std::vector<CalibrationResult> out;
  if (test == TestKind::prior) {
    exp.validate_prior();
    for (std::size_t b = 0; b < exp.budgets.size(); ++b) {
      const std::size_t budget = exp.budgets[b];
      std::vector<std::vector<double>> pvalues(exp.scores.size(), std::vector<double>(exp.n_test));
      const std::uint64_t budget_seed = derive_seed(exp.seed, b);
      ScoreOptions scoring = options;
      scoring.workers = 1;
      parallel_for(exp.n_test, exp.workers, [&](std::size_t k) {
        const std::uint64_t pod_seed = derive_seed(derive_seed(budget_seed, stream::kPodTasks), k);
        CounterRng rng(derive_seed(pod_seed, stream::kPods));
        const auto theta = sim.draw_theta(rng);
        const auto y = sim.simulate(theta, rng);
        const auto ref = simulate_toy(sim, budget / 2, derive_seed(pod_seed, stream::kReference));
        const auto calib = simulate_toy(sim, budget / 2, derive_seed(pod_seed, stream::kSplit));
        for (std::size_t s = 0; s < exp.scores.size(); ++s)
          pvalues[s][k] = prior_pvalue(y, ref, calib, exp.scores[s], scoring).p_hat;
      });
      for (std::size_t s = 0; s < exp.scores.size(); ++s)
        out.push_back({exp.setting, "prior", budget, exp.scores[s].label(), "-", 0, pvalues[s],
                       ks_uniform_distance(pvalues[s]), max_quantile_deviation(pvalues[s])});
    }
    return out;
  }

  if (!posterior) throw SpecError("holdout calibration needs a posterior specification");
  exp.validate_common();
  for (std::size_t b = 0; b < exp.budgets.size(); ++b) {
    const std::size_t budget = exp.budgets[b];
    posterior->validate(budget);
    const auto ref = simulate_toy(sim, budget, derive_seed(derive_seed(exp.seed, stream::kReference), b), exp.workers);
    const auto sample = holdout_pvalue_sample(ref, sim, sim, *posterior, exp.scores, exp.n_test,
                                              derive_seed(exp.seed, b), exp.workers, options);
    for (std::size_t s = 0; s < exp.scores.size(); ++s) {
      const auto& p = sample.pvalues[s];
      out.push_back({exp.setting, "holdout", budget, exp.scores[s].label(), to_string(posterior->method),
                     posterior->n_post, p, ks_uniform_distance(p), max_quantile_deviation(p)});
    }
  }
  return out;
}

}  // namespace lfgof
