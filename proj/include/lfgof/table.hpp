#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lfgof/error.hpp"
#include "lfgof/rng.hpp"

namespace lfgof {

/// One simulated draw: parameter vector plus summary-statistic vector.
struct Particle {
  std::vector<double> params;
  std::vector<double> summaries;
};

/// Read-only view of a table row.
struct ParticleView {
  std::size_t id;
  std::span<const double> params;
  std::span<const double> summaries;
};

/// Ordered collection of particles sharing parameter and summary dimensions.
///
/// Storage is row-major. Each row carries a source id: a freshly built table
/// numbers its rows 0..N-1, and subsets keep the ids of the table they were
/// cut from. The table is immutable once constructed.
class ReferenceTable {
 public:
  ReferenceTable() = default;

  ReferenceTable(std::vector<std::string> param_names,
                 std::vector<std::string> stat_names,
                 std::vector<double> params,
                 std::vector<double> summaries,
                 std::vector<std::size_t> ids = {})
      : param_names_(std::move(param_names)),
        stat_names_(std::move(stat_names)),
        params_(std::move(params)),
        summaries_(std::move(summaries)),
        ids_(std::move(ids)) {
    const std::size_t p = param_names_.size();
    const std::size_t m = stat_names_.size();
    if (m == 0) throw SchemaError("reference table needs at least one summary statistic");
    if (summaries_.size() % m != 0)
      throw SchemaError("summary storage is not a multiple of the statistic count");
    rows_ = summaries_.size() / m;
    if (params_.size() != rows_ * p)
      throw SchemaError("parameter storage does not match row count times parameter count");
    if (ids_.empty()) {
      ids_.resize(rows_);
      std::iota(ids_.begin(), ids_.end(), std::size_t{0});
    } else if (ids_.size() != rows_) {
      throw SchemaError("id column length does not match row count");
    }
    for (std::size_t i = 0; i < summaries_.size(); ++i) {
      if (!std::isfinite(summaries_[i]))
        throw ValidationError("non-finite summary statistic at row " + std::to_string(i / m + 1) +
                                  ", column " + stat_names_[i % m],
                              i / m + 1, stat_names_[i % m]);
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!std::isfinite(params_[i]))
        throw ValidationError("non-finite parameter at row " + std::to_string(i / p + 1) +
                                  ", column " + param_names_[i % p],
                              i / p + 1, param_names_[i % p]);
    }
  }

  static ReferenceTable from_particles(std::vector<std::string> param_names,
                                       std::vector<std::string> stat_names,
                                       const std::vector<Particle>& particles) {
    std::vector<double> params;
    std::vector<double> summaries;
    params.reserve(particles.size() * param_names.size());
    summaries.reserve(particles.size() * stat_names.size());
    for (const auto& particle : particles) {
      if (particle.params.size() != param_names.size() ||
          particle.summaries.size() != stat_names.size())
        throw SchemaError("particle dimensions differ from the table header");
      params.insert(params.end(), particle.params.begin(), particle.params.end());
      summaries.insert(summaries.end(), particle.summaries.begin(), particle.summaries.end());
    }
    return ReferenceTable(std::move(param_names), std::move(stat_names), std::move(params),
                          std::move(summaries));
  }

  std::size_t size() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_ == 0; }
  std::size_t n_params() const noexcept { return param_names_.size(); }
  std::size_t n_stats() const noexcept { return stat_names_.size(); }

  std::span<const double> params(std::size_t row) const {
    return {params_.data() + row * n_params(), n_params()};
  }
  std::span<const double> summaries(std::size_t row) const {
    return {summaries_.data() + row * n_stats(), n_stats()};
  }
  std::size_t id(std::size_t row) const { return ids_[row]; }

  ParticleView operator[](std::size_t row) const {
    return {ids_[row], params(row), summaries(row)};
  }

  const std::vector<double>& param_data() const noexcept { return params_; }
  const std::vector<double>& summary_data() const noexcept { return summaries_; }
  const std::vector<std::size_t>& ids() const noexcept { return ids_; }
  const std::vector<std::string>& param_names() const noexcept { return param_names_; }
  const std::vector<std::string>& stat_names() const noexcept { return stat_names_; }

  /// Rows in the given order; ids are carried over.
  ReferenceTable subset(std::span<const std::size_t> rows) const {
    std::vector<double> out_params;
    std::vector<double> out_summaries;
    std::vector<std::size_t> ids;
    out_params.reserve(rows.size() * n_params());
    out_summaries.reserve(rows.size() * n_stats());
    ids.reserve(rows.size());
    for (const auto row : rows) {
      if (row >= rows_) throw SizeError("subset row index out of range");
      const auto p = params(row);
      const auto s = summaries(row);
      out_params.insert(out_params.end(), p.begin(), p.end());
      out_summaries.insert(out_summaries.end(), s.begin(), s.end());
      ids.push_back(ids_[row]);
    }
    return ReferenceTable(param_names_, stat_names_, std::move(out_params), std::move(out_summaries),
                          std::move(ids));
  }

  /// First n rows.
  ReferenceTable head(std::size_t n) const {
    if (n > rows_) throw SizeError("head: requested more rows than the table holds");
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return subset(rows);
  }

 private:
  std::vector<std::string> param_names_;
  std::vector<std::string> stat_names_;
  std::vector<double> params_;
  std::vector<double> summaries_;
  std::vector<std::size_t> ids_;
  std::size_t rows_ = 0;
};

struct SplitSpec {
  std::size_t n_calib = 0;
  std::uint64_t seed = 0;
};

/// Result of a calibration/reference split. Row positions refer to the input
/// table; both sides keep ascending input order.
struct CalibrationSplit {
  ReferenceTable reference;
  ReferenceTable calibration;
  std::vector<std::size_t> reference_rows;
  std::vector<std::size_t> calibration_rows;
};

/// Sample n_calib rows uniformly without replacement as calibration points.
inline std::vector<std::size_t> sample_calibration_rows(std::size_t n, std::size_t n_calib,
                                                        std::uint64_t seed) {
  if (n_calib == 0) throw SizeError("n_calib must be positive");
  if (n_calib >= n)
    throw SizeError("n_calib (" + std::to_string(n_calib) + ") must be smaller than the table size (" +
                    std::to_string(n) + ")");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < n_calib; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(n_calib);
  std::sort(order.begin(), order.end());
  return order;
}

inline CalibrationSplit split_calibration(const ReferenceTable& table, const SplitSpec& spec) {
  CalibrationSplit out;
  out.calibration_rows = sample_calibration_rows(table.size(), spec.n_calib, spec.seed);
  out.reference_rows.reserve(table.size() - spec.n_calib);
  std::size_t next = 0;
  for (std::size_t row = 0; row < table.size(); ++row) {
    if (next < out.calibration_rows.size() && out.calibration_rows[next] == row) {
      ++next;
      continue;
    }
    out.reference_rows.push_back(row);
  }
  out.reference = table.subset(out.reference_rows);
  out.calibration = table.subset(out.calibration_rows);
  return out;
}

}  // namespace lfgof
