#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfgof/error.hpp"
#include "lfgof/io.hpp"
#include "lfgof/neighbors.hpp"
#include "lfgof/parallel.hpp"
#include "lfgof/rng.hpp"
#include "lfgof/table.hpp"
#include "lfgof/transform.hpp"

namespace lfgof {

enum class PosteriorMethod { rejection, loclin, ridge };

inline std::string to_string(PosteriorMethod m) {
  switch (m) {
    case PosteriorMethod::rejection:
      return "rejection";
    case PosteriorMethod::loclin:
      return "loclin";
    case PosteriorMethod::ridge:
      return "ridge";
  }
  return {};
}

inline PosteriorMethod parse_posterior_method(const std::string& name) {
  if (name == "rejection") return PosteriorMethod::rejection;
  if (name == "loclin") return PosteriorMethod::loclin;
  if (name == "ridge") return PosteriorMethod::ridge;
  throw SpecError("unknown posterior method '" + name + "'");
}

/// How to approximate the posterior around an observation.
struct PosteriorSpec {
  std::size_t n_post = 1000;
  PosteriorMethod method = PosteriorMethod::rejection;
  std::vector<double> lambdas{1e-4, 1e-3, 1e-2};
  std::optional<TransformSpec> transform;
  /// With a transform, regress in the transformed space (default) or regress
  /// raw parameters and clip the result to the transform's constraints.
  bool regress_transformed = true;

  void validate(std::size_t n_ref) const {
    if (n_post == 0) throw SpecError("n_post must be positive");
    if (n_post > n_ref)
      throw SizeError("n_post (" + std::to_string(n_post) + ") exceeds the reference table size (" +
                      std::to_string(n_ref) + ")");
    if (method == PosteriorMethod::ridge) {
      if (lambdas.empty()) throw SpecError("ridge adjustment needs at least one lambda");
      for (const double l : lambdas)
        if (!(l > 0.0)) throw SpecError("ridge lambdas must be positive");
    }
    if (transform) transform->validate();
  }
};

/// Row-major parameter vectors with the ids of the particles they came from.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<std::size_t> ids;
  std::vector<double> values;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t n_params() const noexcept { return names.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * n_params(), n_params()}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * n_params(), n_params()}; }

  static ParameterSet from_table(const ReferenceTable& table) {
    return {table.param_names(), table.ids(), table.param_data()};
  }
};

/// Rows of a reference table nearest to an observation.
struct Localized {
  ReferenceTable table;           // ascending original row order; ids carried over
  std::vector<double> distances;  // aligned with table rows
  double epsilon = 0.0;           // distance of the farthest retained row
  std::size_t n_ref_total = 0;
};

/// The n_post rows of `ref` nearest to y_obs in summary space (ties by id).
inline Localized localize(const ReferenceTable& ref, std::span<const double> y_obs, std::size_t n_post,
                          const NeighborIndex* index = nullptr) {
  if (n_post == 0) throw SpecError("n_post must be positive");
  if (n_post > ref.size())
    throw SizeError("n_post (" + std::to_string(n_post) + ") exceeds the reference table size (" +
                    std::to_string(ref.size()) + ")");
  if (y_obs.size() != ref.n_stats()) throw QueryError("observation dimension does not match the table");
  std::vector<Neighbor> nearest;
  if (index) {
    nearest = index->query(y_obs, n_post);
  } else {
    nearest = NeighborIndex(ref.summary_data(), ref.n_stats(), {.strategy = IndexOptions::Strategy::scan})
                  .query(y_obs, n_post);
  }
  std::sort(nearest.begin(), nearest.end(), [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
  Localized out;
  std::vector<std::size_t> rows;
  rows.reserve(nearest.size());
  for (const auto& n : nearest) {
    rows.push_back(n.id);
    out.distances.push_back(n.distance);
    out.epsilon = std::max(out.epsilon, n.distance);
  }
  out.table = ref.subset(rows);
  out.n_ref_total = ref.size();
  return out;
}

/// Adjusted parameters plus diagnostics.
struct Adjustment {
  ParameterSet params;
  bool fell_back = false;  // regression was impossible; rejection particles returned
  std::vector<std::string> warnings;
};

namespace detail {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Matrix transformed_params(const ReferenceTable& table, const TransformSpec* transform) {
  Matrix theta(table.size(), table.n_params());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto p = table.params(i);
    if (transform) {
      const auto v = transform_forward(p, *transform);
      for (std::size_t j = 0; j < v.size(); ++j) theta(i, j) = v[j];
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) theta(i, j) = p[j];
    }
  }
  return theta;
}

inline Matrix centered_summaries(const ReferenceTable& table, std::span<const double> y_obs) {
  Matrix x(table.size(), table.n_stats());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto s = table.summaries(i);
    for (std::size_t j = 0; j < s.size(); ++j) x(i, j) = s[j] - y_obs[j];
  }
  return x;
}

/// Weighted regression of theta on [1, x]; returns the slope block
/// (n_stats x n_params) or nothing when the weighted design is rank-deficient.
/// lambda > 0 adds a ridge penalty on the slopes, with each summary column
/// scaled to unit weighted mean square and the penalty scaled by the total
/// weight, so lambda is unitless.
inline std::optional<Matrix> regression_slopes(const Matrix& x, const Matrix& theta, const Eigen::VectorXd& w,
                                               double lambda) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  const double total = w.sum();
  if (!(total > 0.0)) return std::nullopt;

  if (lambda == 0.0) {
    Matrix design(n, m + 1);
    design.col(0).setOnes();
    design.rightCols(m) = x;
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Matrix a = sw.asDiagonal() * design;
    const Matrix b = sw.asDiagonal() * theta;
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < m + 1) return std::nullopt;
    const Matrix coef = qr.solve(b);
    return Matrix(coef.bottomRows(m));
  }

  Eigen::VectorXd scale(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double ms = (w.array() * x.col(j).array().square()).sum() / total;
    scale(j) = ms > 0.0 ? std::sqrt(ms) : 0.0;
  }
  Matrix design(n, m + 1);
  design.col(0).setOnes();
  for (Eigen::Index j = 0; j < m; ++j)
    design.col(j + 1) = scale(j) > 0.0 ? Eigen::VectorXd(x.col(j) / scale(j)) : Eigen::VectorXd::Zero(n);
  Matrix gram = design.transpose() * w.asDiagonal() * design;
  for (Eigen::Index j = 1; j <= m; ++j) gram(j, j) += lambda * total;
  const Matrix rhs = design.transpose() * w.asDiagonal() * theta;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Matrix coef = ldlt.solve(rhs);
  Matrix slopes = coef.bottomRows(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (scale(j) > 0.0) {
      slopes.row(j) /= scale(j);
    } else {
      slopes.row(j).setZero();
    }
  }
  return slopes;
}

inline ParameterSet back_transform(const ReferenceTable& table, const Matrix& adjusted, const TransformSpec* transform,
                                   bool clip, std::vector<std::string>& warnings) {
  ParameterSet out{table.param_names(), table.ids(), {}};
  out.values.reserve(table.size() * table.n_params());
  bool clipped = false;
  for (Eigen::Index i = 0; i < adjusted.rows(); ++i) {
    std::vector<double> row(adjusted.cols());
    for (Eigen::Index j = 0; j < adjusted.cols(); ++j) row[j] = adjusted(i, j);
    if (transform && !clip) {
      row = transform_inverse(row, *transform);
    } else if (transform && clip) {
      clipped = clip_to_constraints(row, *transform) || clipped;
    }
    out.values.insert(out.values.end(), row.begin(), row.end());
  }
  if (clipped) warnings.push_back("raw-space adjustment produced out-of-bounds parameters; clipped to bounds");
  return out;
}

inline Eigen::VectorXd epanechnikov_weights(const Localized& loc) {
  Eigen::VectorXd w(loc.table.size());
  for (std::size_t i = 0; i < loc.table.size(); ++i) {
    if (loc.epsilon == 0.0) {
      w(i) = 1.0;
    } else {
      const double r = loc.distances[i] / loc.epsilon;
      w(i) = std::max(0.0, 1.0 - r * r);
    }
  }
  return w;
}

}  // namespace detail

/// Regression adjustment with explicit weights: theta*_i = theta_i - B (y_i - y_obs),
/// B from a weighted (optionally ridge-penalized) fit of theta on y - y_obs.
/// Falls back to the unadjusted particles when the fit is impossible.
inline Adjustment weighted_adjust(const ReferenceTable& localized, std::span<const double> y_obs,
                                  const Eigen::VectorXd& weights, std::span<const double> lambdas,
                                  const TransformSpec* transform, bool regress_transformed = true) {
  if (localized.empty()) throw EmptyTableError("cannot adjust an empty localized table");
  if (y_obs.size() != localized.n_stats()) throw QueryError("observation dimension does not match the table");
  if (transform && transform->size() != localized.n_params())
    throw TransformError("transform size does not match the parameter count", 0);
  Adjustment out;
  const TransformSpec* regression_transform = regress_transformed ? transform : nullptr;
  const auto theta = detail::transformed_params(localized, regression_transform);
  const auto x = detail::centered_summaries(localized, y_obs);

  std::vector<detail::Matrix> candidates;
  for (const double lambda : lambdas) {
    auto slopes = detail::regression_slopes(x, theta, weights, lambda);
    if (!slopes) {
      out.fell_back = true;
      out.warnings.push_back("weighted design is rank-deficient; fell back to rejection particles");
      out.params = ParameterSet::from_table(localized);
      return out;
    }
    candidates.push_back(theta - x * (*slopes));
  }

  detail::Matrix adjusted = candidates.front();
  if (candidates.size() > 1) {
    std::vector<double> values(candidates.size());
    for (Eigen::Index i = 0; i < adjusted.rows(); ++i) {
      for (Eigen::Index j = 0; j < adjusted.cols(); ++j) {
        for (std::size_t c = 0; c < candidates.size(); ++c) values[c] = candidates[c](i, j);
        std::sort(values.begin(), values.end());
        const std::size_t n = values.size();
        adjusted(i, j) = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
      }
    }
  }
  out.params = detail::back_transform(localized, adjusted, transform, transform && !regress_transformed, out.warnings);
  return out;
}

/// Local-linear adjustment with Epanechnikov weights 1 - (d_i / eps)^2.
inline Adjustment loclin_adjust(const Localized& localized, std::span<const double> y_obs,
                                const TransformSpec* transform = nullptr, bool regress_transformed = true) {
  const auto w = detail::epanechnikov_weights(localized);
  const double no_penalty[] = {0.0};
  return weighted_adjust(localized.table, y_obs, w, no_penalty, transform, regress_transformed);
}

/// Ridge adjustment per lambda, then the coordinatewise median over lambdas.
inline Adjustment ridge_adjust(const Localized& localized, std::span<const double> y_obs,
                               std::span<const double> lambdas, const TransformSpec* transform = nullptr,
                               bool regress_transformed = true) {
  if (lambdas.empty()) throw SpecError("ridge adjustment needs at least one lambda");
  for (const double l : lambdas)
    if (!(l > 0.0)) throw SpecError("ridge lambdas must be positive");
  const auto w = detail::epanechnikov_weights(localized);
  return weighted_adjust(localized.table, y_obs, w, lambdas, transform, regress_transformed);
}

/// Posterior particles for one observation: localization plus optional
/// regression adjustment.
struct PosteriorDraw {
  Localized localized;
  ParameterSet params;
  std::vector<std::string> warnings;
};

inline PosteriorDraw posterior_particles(const ReferenceTable& ref, std::span<const double> y_obs,
                                         const PosteriorSpec& spec, const NeighborIndex* index = nullptr) {
  spec.validate(ref.size());
  PosteriorDraw draw;
  draw.localized = localize(ref, y_obs, spec.n_post, index);
  const TransformSpec* transform = spec.transform ? &*spec.transform : nullptr;
  switch (spec.method) {
    case PosteriorMethod::rejection:
      draw.params = ParameterSet::from_table(draw.localized.table);
      break;
    case PosteriorMethod::loclin: {
      auto adj = loclin_adjust(draw.localized, y_obs, transform, spec.regress_transformed);
      draw.params = std::move(adj.params);
      draw.warnings = std::move(adj.warnings);
      break;
    }
    case PosteriorMethod::ridge: {
      auto adj = ridge_adjust(draw.localized, y_obs, spec.lambdas, transform, spec.regress_transformed);
      draw.params = std::move(adj.params);
      draw.warnings = std::move(adj.warnings);
      break;
    }
  }
  return draw;
}

/// Stochastic simulator from parameters to summaries.
struct Resimulator {
  std::vector<std::string> stat_names;
  std::function<std::vector<double>(std::span<const double> theta, CounterRng& rng)> simulate;

  std::size_t n_stats() const noexcept { return stat_names.size(); }
};

/// One fresh summary vector per parameter vector; particle i draws from child
/// stream i of `seed`, so results do not depend on the worker count. The first
/// failing particle (lowest index) is reported; partial tables are never
/// returned.
inline ReferenceTable resimulate(const ParameterSet& params, const Resimulator& resim, std::uint64_t seed,
                                 std::size_t workers = 1) {
  if (!resim.simulate) throw ResimulationError("resimulator has no simulate function", 0);
  const std::size_t m = resim.n_stats();
  std::vector<double> summaries(params.size() * m);
  CounterRng master(seed);
  parallel_for(params.size(), workers, [&](std::size_t i) {
    CounterRng rng = master.child(i);
    std::vector<double> y;
    try {
      y = resim.simulate(params.row(i), rng);
    } catch (const std::exception& e) {
      throw ResimulationError("simulation failed for particle " + std::to_string(i) + ": " + e.what(), i);
    }
    if (y.size() != m)
      throw ResimulationError("simulator returned " + std::to_string(y.size()) + " statistics for particle " +
                                  std::to_string(i) + ", expected " + std::to_string(m),
                              i);
    for (std::size_t j = 0; j < m; ++j) {
      if (!std::isfinite(y[j]))
        throw ResimulationError("simulator returned a non-finite statistic for particle " + std::to_string(i), i);
      summaries[i * m + j] = y[j];
    }
  });
  return ReferenceTable(params.names, resim.stat_names, params.values, std::move(summaries), params.ids);
}

/// Writes `id,param:...` for an external simulator.
inline void export_parameters_csv(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id";
  for (const auto& n : params.names) out << ",param:" << n;
  out << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    out << params.ids[i];
    for (const double v : params.row(i)) {
      out << ',';
      detail::write_double(out, v);
    }
    out << '\n';
  }
}

/// Reads externally simulated `id,stat:...` rows and aligns them with
/// `params`. The id sets must match exactly (any order); mismatches throw.
inline ReferenceTable import_summaries_csv(const std::filesystem::path& path, const ParameterSet& params,
                                           const ColumnSchema& schema = {}) {
  const auto source = path.string();
  const auto text = detail::read_text_table(path, detail::resolve_delimiter(schema, path));
  const auto roles = detail::resolve_columns(text.header, schema, source);
  if (!roles.id_column) throw SchemaError(source + ": summary import needs an 'id' column");
  if (text.rows.size() != params.size())
    throw SchemaError(source + ": expected " + std::to_string(params.size()) + " rows, found " +
                      std::to_string(text.rows.size()));

  std::vector<std::size_t> position(params.size());
  std::vector<std::pair<std::size_t, std::size_t>> by_id;  // (id, position in params)
  for (std::size_t i = 0; i < params.size(); ++i) by_id.emplace_back(params.ids[i], i);
  std::sort(by_id.begin(), by_id.end());

  const std::size_t m = roles.stat_columns.size();
  std::vector<double> summaries(params.size() * m);
  std::vector<bool> seen(params.size(), false);
  for (std::size_t r = 0; r < text.rows.size(); ++r) {
    const double raw_id = detail::cell_value(text, r, *roles.id_column, source);
    if (raw_id < 0 || raw_id != std::floor(raw_id))
      throw ValidationError(source + ": invalid id at row " + std::to_string(r + 1), r + 1, "id");
    const auto id = static_cast<std::size_t>(raw_id);
    const auto it = std::lower_bound(by_id.begin(), by_id.end(), std::make_pair(id, std::size_t{0}));
    if (it == by_id.end() || it->first != id)
      throw SchemaError(source + ": unknown particle id " + std::to_string(id) + " at row " + std::to_string(r + 1));
    const std::size_t target = it->second;
    if (seen[target]) throw SchemaError(source + ": duplicate particle id " + std::to_string(id));
    seen[target] = true;
    for (std::size_t j = 0; j < m; ++j)
      summaries[target * m + j] = detail::cell_value(text, r, roles.stat_columns[j], source);
  }
  return ReferenceTable(params.names, roles.stat_names, params.values, std::move(summaries), params.ids);
}

}  // namespace lfgof
