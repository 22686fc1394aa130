#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lfgof/error.hpp"
#include "lfgof/neighbors.hpp"
#include "lfgof/posterior.hpp"
#include "lfgof/prior_gof.hpp"
#include "lfgof/rng.hpp"
#include "lfgof/scores.hpp"
#include "lfgof/table.hpp"

namespace lfgof {

/// y_obs drives the posterior approximation and y_new is the held-out
/// replicate being tested. The caller guarantees they come from independent
/// splits of the data.
struct HoldoutInput {
  std::vector<double> y_obs;
  std::vector<double> y_new;
  const ReferenceTable* ref = nullptr;
  PosteriorSpec posterior;
  ScoreSpec score;
  std::uint64_t seed = 0;
};

struct HoldoutOptions {
  ScoreOptions scoring{};
  std::size_t workers = 1;  // resimulation
  /// Prebuilt index over ref summaries, reused across many evaluations.
  const NeighborIndex* index = nullptr;
  CiMethod ci = CiMethod::none;
  double level = 0.95;
  std::size_t n_boot = 500;
};

namespace detail {

inline void check_holdout(const HoldoutInput& in) {
  if (!in.ref) throw SpecError("holdout input has no reference table");
  if (in.y_obs.size() != in.ref->n_stats() || in.y_new.size() != in.ref->n_stats())
    throw QueryError("observation dimension does not match the reference table");
  in.posterior.validate(in.ref->size());
  if (in.posterior.n_post < 2) throw SizeError("holdout test needs n_post >= 2");
  in.score.validate(in.posterior.n_post / 2);
}

}  // namespace detail

/// Counting stage on an already re-simulated posterior table: split it into
/// calibration and reference halves (child split stream of `seed`) and score
/// y_new against the reference half. An odd table drops its last reference
/// row, with a warning.
inline GofReport holdout_from_resimulated(const ReferenceTable& resimulated, std::span<const double> y_new,
                                          const ScoreSpec& spec, std::uint64_t seed,
                                          const HoldoutOptions& options = {}) {
  if (resimulated.size() < 2) throw SizeError("re-simulated table needs at least two rows");
  const std::size_t half = resimulated.size() / 2;
  spec.validate(half);
  std::vector<std::string> warnings;
  auto split = split_calibration(resimulated, {half, derive_seed(seed, stream::kSplit)});
  if (split.reference.size() > half) {
    split.reference = split.reference.head(half);
    warnings.push_back("odd n_post rounded down to " + std::to_string(2 * half));
  }
  auto report = prior_pvalue(y_new, split.reference, split.calibration, spec, options.scoring);
  report.seed = seed;
  report.warnings = std::move(warnings);
  if (options.ci == CiMethod::asymptotic) {
    report.ci = asymptotic_confidence(report.p_hat, report.n_calib, options.level);
  } else if (options.ci == CiMethod::bootstrap_hdi) {
    // re-split the even-sized pool many times, as in the prior test
    const auto pool = resimulated.head(2 * half);
    const auto boot = bootstrap_pvalues(y_new, pool, half, spec, options.n_boot,
                                        derive_seed(seed, stream::kBootstrap), options.level, options.scoring);
    report.ci = ConfidenceInterval{boot.hdi_low, boot.hdi_high, CiMethod::bootstrap_hdi, options.level, false, boot.median};
  }
  return report;
}

/// Holdout p-value: localize around y_obs, adjust, re-simulate each posterior
/// particle (child resimulation stream of `seed`), then count how many
/// calibration replicates score strictly above y_new.
inline GofReport holdout_pvalue(const HoldoutInput& in, const Resimulator& resim, const HoldoutOptions& options = {}) {
  detail::check_holdout(in);
  if (resim.n_stats() != in.ref->n_stats())
    throw SchemaError("resimulator statistic count does not match the reference table");
  const auto draw = posterior_particles(*in.ref, in.y_obs, in.posterior, options.index);
  const auto resimulated = resimulate(draw.params, resim, derive_seed(in.seed, stream::kResimulate), options.workers);
  auto report = holdout_from_resimulated(resimulated, in.y_new, in.score, in.seed, options);
  report.warnings.insert(report.warnings.begin(), draw.warnings.begin(), draw.warnings.end());
  report.holdout = HoldoutProvenance{in.posterior.method, in.posterior.n_post, draw.localized.epsilon, in.ref->size()};
  return report;
}

/// Same pipeline scored with several score specs on one shared re-simulation.
inline std::vector<GofReport> holdout_pvalues(const HoldoutInput& in, std::span<const ScoreSpec> specs,
                                              const Resimulator& resim, const HoldoutOptions& options = {}) {
  detail::check_holdout(in);
  for (const auto& s : specs) s.validate(in.posterior.n_post / 2);
  const auto draw = posterior_particles(*in.ref, in.y_obs, in.posterior, options.index);
  const auto resimulated = resimulate(draw.params, resim, derive_seed(in.seed, stream::kResimulate), options.workers);
  std::vector<GofReport> out;
  for (const auto& s : specs) {
    auto report = holdout_from_resimulated(resimulated, in.y_new, s, in.seed, options);
    report.warnings.insert(report.warnings.begin(), draw.warnings.begin(), draw.warnings.end());
    report.holdout = HoldoutProvenance{in.posterior.method, in.posterior.n_post, draw.localized.epsilon, in.ref->size()};
    out.push_back(std::move(report));
  }
  return out;
}

}  // namespace lfgof
