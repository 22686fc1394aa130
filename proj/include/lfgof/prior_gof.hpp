#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "lfgof/error.hpp"
#include "lfgof/parallel.hpp"
#include "lfgof/posterior.hpp"
#include "lfgof/rng.hpp"
#include "lfgof/scores.hpp"
#include "lfgof/table.hpp"

namespace lfgof {

enum class CiMethod { none, asymptotic, bootstrap_hdi };

inline std::string to_string(CiMethod m) {
  switch (m) {
    case CiMethod::none:
      return "none";
    case CiMethod::asymptotic:
      return "asymptotic";
    case CiMethod::bootstrap_hdi:
      return "bootstrap-HDI";
  }
  return {};
}

struct Interval {
  double low = 0.0;
  double high = 0.0;

  double width() const noexcept { return high - low; }
  bool contains(double x) const noexcept { return low <= x && x <= high; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  CiMethod method = CiMethod::none;
  double level = 0.95;
  /// Plug-in variance vanished (p_hat at 0 or 1); bootstrap is the better choice.
  bool degenerate = false;
  /// Median of the bootstrap p-values.
  std::optional<double> median;
};

/// Extra provenance carried by post-inference reports.
struct HoldoutProvenance {
  PosteriorMethod method = PosteriorMethod::rejection;
  std::size_t n_post = 0;
  double epsilon_implied = 0.0;
  std::size_t n_ref_total = 0;
};

struct GofReport {
  std::string scenario;
  ScoreSpec score_spec;
  std::size_t n_ref = 0;
  std::size_t n_calib = 0;
  std::size_t exceedances = 0;
  double p_hat = 0.0;
  std::optional<ConfidenceInterval> ci;
  std::uint64_t seed = 0;
  std::optional<HoldoutProvenance> holdout;
  std::optional<double> bh_adjusted;
  std::vector<std::string> warnings;
};

/// Number of calibration scores strictly greater than the observed score.
inline std::size_t count_exceedances(std::span<const double> calibration_scores, double observed) {
  return static_cast<std::size_t>(std::count_if(calibration_scores.begin(), calibration_scores.end(),
                                                [&](double s) { return s > observed; }));
}

inline double exceedance_pvalue(std::span<const double> calibration_scores, double observed) {
  if (calibration_scores.empty()) throw SizeError("no calibration scores");
  return static_cast<double>(count_exceedances(calibration_scores, observed)) /
         static_cast<double>(calibration_scores.size());
}

/// Empirical p-value of y_obs: fraction of calibration points whose score
/// against `ref` strictly exceeds the observed score.
inline GofReport prior_pvalue(std::span<const double> y_obs, const ReferenceTable& ref, const ReferenceTable& calib,
                              const ScoreSpec& spec, const ScoreOptions& options = {}) {
  if (calib.empty()) throw SizeError("calibration set is empty");
  if (calib.n_stats() != ref.n_stats()) throw SchemaError("calibration and reference tables differ in dimension");
  const OutlierScorer scorer(ref, spec, options);
  const auto scores = scorer.score_batch(calib, spec);
  const double observed = scorer.score(y_obs, spec);
  GofReport report;
  report.score_spec = spec;
  report.n_ref = ref.size();
  report.n_calib = calib.size();
  report.exceedances = count_exceedances(scores, observed);
  report.p_hat = static_cast<double>(report.exceedances) / static_cast<double>(calib.size());
  return report;
}

/// p_hat +/- z * sqrt(p_hat (1 - p_hat) / n), clipped to [0, 1].
inline Interval asymptotic_ci(double p_hat, std::size_t n_calib, double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw SpecError("confidence level must lie in (0, 1)");
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw SpecError("p_hat must lie in [0, 1]");
  if (n_calib == 0) throw SpecError("n_calib must be positive");
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 0.5 * (1.0 + level));
  const double se = std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n_calib));
  return {std::clamp(p_hat - z * se, 0.0, 1.0), std::clamp(p_hat + z * se, 0.0, 1.0)};
}

inline ConfidenceInterval asymptotic_confidence(double p_hat, std::size_t n_calib, double level = 0.95) {
  const auto ci = asymptotic_ci(p_hat, n_calib, level);
  return {ci.low, ci.high, CiMethod::asymptotic, level, p_hat == 0.0 || p_hat == 1.0};
}

/// Number of sorted samples an HDI window must hold: ceil(level * n).
inline std::size_t hdi_window(std::size_t n, double level) {
  const double target = level * static_cast<double>(n);
  auto w = static_cast<std::size_t>(std::ceil(target - 1e-9 * std::max(1.0, target)));
  return std::clamp<std::size_t>(w, 1, n);
}

/// Shortest window of consecutive sorted samples holding ceil(level * n)
/// points; the leftmost wins among equally short windows.
inline Interval hdi(std::span<const double> samples, double level = 0.95) {
  if (samples.empty()) throw SpecError("HDI of an empty sample");
  if (!(level > 0.0 && level <= 1.0)) throw SpecError("HDI level must lie in (0, 1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t w = hdi_window(sorted.size(), level);
  std::size_t best = 0;
  double best_width = sorted[w - 1] - sorted[0];
  for (std::size_t i = 1; i + w <= sorted.size(); ++i) {
    const double width = sorted[i + w - 1] - sorted[i];
    if (width < best_width) {
      best_width = width;
      best = i;
    }
  }
  return {sorted[best], sorted[best + w - 1]};
}

/// Lower median: the ceil(n/2)-th order statistic, which stays on the
/// p-value lattice.
inline double lower_median(std::span<const double> samples) {
  if (samples.empty()) throw SpecError("median of an empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}

struct BootstrapResult {
  double median = 0.0;
  double hdi_low = 0.0;
  double hdi_high = 0.0;
  std::vector<double> samples;
};

/// Re-splits `pool` into calibration/reference parts n_boot times (replicate b
/// uses child stream b of `seed`) and returns the p-value distribution.
inline BootstrapResult bootstrap_pvalues(std::span<const double> y_obs, const ReferenceTable& pool,
                                         std::size_t n_calib, const ScoreSpec& spec, std::size_t n_boot,
                                         std::uint64_t seed, double level = 0.95, const ScoreOptions& options = {}) {
  if (n_boot == 0) throw SpecError("n_boot must be at least 1");
  if (n_calib >= pool.size()) throw SizeError("n_calib must be smaller than the pool size");
  spec.validate(pool.size() - n_calib);
  BootstrapResult out;
  out.samples.resize(n_boot);
  ScoreOptions inner = options;
  inner.workers = 1;
  parallel_for(n_boot, options.workers, [&](std::size_t b) {
    const auto split = split_calibration(pool, {n_calib, derive_seed(seed, b)});
    out.samples[b] = prior_pvalue(y_obs, split.reference, split.calibration, spec, inner).p_hat;
  });
  out.median = lower_median(out.samples);
  const auto interval = hdi(out.samples, level);
  out.hdi_low = interval.low;
  out.hdi_high = interval.high;
  return out;
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
inline std::vector<double> bh_adjust(std::span<const double> pvalues) {
  for (const double p : pvalues)
    if (!(p >= 0.0 && p <= 1.0)) throw SpecError("p-values must lie in [0, 1]");
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    // p m / rank is never below p; the max only absorbs rounding
    const double candidate =
        std::max(pvalues[order[r]], pvalues[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1));
    running = std::min(running, candidate);
    adjusted[order[r]] = std::min(running, 1.0);
  }
  return adjusted;
}

/// Localized prior test: the score reference and calibration points both come
/// from re-simulating the n_post rows nearest to y_obs (rejection
/// localization), split in two halves.
inline GofReport localized_prior_pvalue(std::span<const double> y_obs, const ReferenceTable& ref,
                                        const Resimulator& resim, std::size_t n_post, const ScoreSpec& spec,
                                        std::uint64_t seed, const ScoreOptions& options = {}) {
  if (n_post < 2) throw SizeError("localized prior test needs n_post >= 2");
  if (resim.n_stats() != ref.n_stats())
    throw SchemaError("resimulator statistic count does not match the reference table");
  const auto localized = localize(ref, y_obs, n_post);
  const auto params = ParameterSet::from_table(localized.table);
  const auto resimulated = resimulate(params, resim, derive_seed(seed, stream::kResimulate), options.workers);
  const std::size_t half = n_post / 2;
  auto split = split_calibration(resimulated, {half, derive_seed(seed, stream::kSplit)});
  GofReport report;
  if (split.reference.size() > half) {
    split.reference = split.reference.head(half);
    report.warnings.push_back("odd n_post rounded down to " + std::to_string(2 * half));
  }
  auto base = prior_pvalue(y_obs, split.reference, split.calibration, spec, options);
  base.warnings = std::move(report.warnings);
  base.seed = seed;
  base.holdout = HoldoutProvenance{PosteriorMethod::rejection, n_post, localized.epsilon, ref.size()};
  return base;
}

}  // namespace lfgof
