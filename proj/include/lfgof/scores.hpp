#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfgof/error.hpp"
#include "lfgof/neighbors.hpp"
#include "lfgof/parallel.hpp"
#include "lfgof/table.hpp"

namespace lfgof {

enum class ScoreKind { knn, lof, max_lof };

/// Which outlier score to compute against a reference set.
struct ScoreSpec {
  ScoreKind kind = ScoreKind::knn;
  std::size_t k = 1;       // knn / lof
  std::size_t k_min = 5;   // max_lof, inclusive
  std::size_t k_max = 20;  // max_lof, inclusive

  static ScoreSpec knn(std::size_t k = 1) { return {ScoreKind::knn, k, 5, 20}; }
  static ScoreSpec lof(std::size_t k) { return {ScoreKind::lof, k, 5, 20}; }
  static ScoreSpec max_lof(std::size_t k_min = 5, std::size_t k_max = 20) {
    return {ScoreKind::max_lof, 0, k_min, k_max};
  }

  std::size_t largest_k() const noexcept { return kind == ScoreKind::max_lof ? k_max : k; }

  /// Throws SpecError for malformed specs and SizeError when the largest k
  /// does not leave room for self-exclusion in a reference set of n_ref rows.
  void validate(std::size_t n_ref) const {
    if (kind == ScoreKind::max_lof) {
      if (k_min == 0) throw SpecError("max-LOF interval must start at k >= 1");
      if (k_min > k_max) throw SpecError("max-LOF interval is empty");
    } else if (k == 0) {
      throw SpecError("k must be at least 1");
    }
    if (largest_k() >= n_ref)
      throw SizeError("k = " + std::to_string(largest_k()) + " requires a reference set larger than " +
                      std::to_string(n_ref) + " rows");
  }

  std::string label() const {
    switch (kind) {
      case ScoreKind::knn:
        return "knn(k=" + std::to_string(k) + ")";
      case ScoreKind::lof:
        return "lof(k=" + std::to_string(k) + ")";
      case ScoreKind::max_lof:
        return "maxlof(k=" + std::to_string(k_min) + ".." + std::to_string(k_max) + ")";
    }
    return {};
  }

  /// Inverse of label(); also accepts the short forms "knn:1", "lof:5",
  /// "maxlof:5-20".
  static ScoreSpec parse(std::string_view text) {
    auto number = [&](std::string_view s) {
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw SpecError("invalid score specification '" + std::string(text) + "'");
      return v;
    };
    auto strip = [](std::string_view s, std::string_view prefix, std::string_view suffix) {
      s.remove_prefix(prefix.size());
      if (!suffix.empty() && s.ends_with(suffix)) s.remove_suffix(suffix.size());
      return s;
    };
    auto range = [&](std::string_view s) {
      auto sep = s.find("..");
      std::size_t width = 2;
      if (sep == std::string_view::npos) {
        sep = s.find('-');
        width = 1;
      }
      if (sep == std::string_view::npos) throw SpecError("invalid k range in '" + std::string(text) + "'");
      return ScoreSpec::max_lof(number(s.substr(0, sep)), number(s.substr(sep + width)));
    };
    if (text.starts_with("knn(k=")) return knn(number(strip(text, "knn(k=", ")")));
    if (text.starts_with("lof(k=")) return lof(number(strip(text, "lof(k=", ")")));
    if (text.starts_with("maxlof(k=")) return range(strip(text, "maxlof(k=", ")"));
    if (text.starts_with("knn:")) return knn(number(text.substr(4)));
    if (text.starts_with("lof:")) return lof(number(text.substr(4)));
    if (text.starts_with("maxlof:")) return range(text.substr(7));
    throw SpecError("unknown score '" + std::string(text) + "'");
  }

  friend bool operator==(const ScoreSpec& a, const ScoreSpec& b) {
    if (a.kind != b.kind) return false;
    return a.kind == ScoreKind::max_lof ? (a.k_min == b.k_min && a.k_max == b.k_max) : a.k == b.k;
  }
};

enum class Reachability {
  reach_distance,
  /// Plain Euclidean distance in place of reach-dist. Makes lrd the inverse of
  /// the kNN score; only meant for testing.
  plain_distance,
};

struct ScoreOptions {
  /// Rescale every summary column by the reference mean and standard deviation.
  bool standardize = false;
  Reachability reachability = Reachability::reach_distance;
  std::size_t workers = 1;
  IndexOptions index{};
};

/// kNN, local reachable density, LOF and max-LOF scores against a fixed
/// reference set.
///
/// Points scored with an `exclude` id are treated as reference rows and never
/// count themselves as neighbors; external points need no exclusion.
/// Neighborhoods hold exactly k points (ties by ascending id).
///
/// The per-reference k-distances and densities needed by LOF are computed once,
/// on first use, for every k up to the prepared maximum, and then shared by all
/// queries. Instances are safe for concurrent use.
class OutlierScorer {
 public:
  OutlierScorer(std::span<const double> points, std::size_t dim, std::size_t max_k, ScoreOptions options = {})
      : options_(options), dim_(dim), max_k_(max_k) {
    if (dim == 0 || points.empty() || points.size() % dim != 0)
      throw BuildError("reference points must be a non-empty row-major matrix");
    if (max_k == 0) throw SpecError("k must be at least 1");
    std::vector<double> stored(points.begin(), points.end());
    const std::size_t n = points.size() / dim;
    center_.assign(dim, 0.0);
    scale_.assign(dim, 1.0);
    if (options_.standardize) {
      for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += stored[i * dim + j];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = stored[i * dim + j] - mean;
          ss += d * d;
        }
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        center_[j] = mean;
        scale_[j] = sd > 0.0 ? sd : 1.0;
        for (std::size_t i = 0; i < n; ++i) stored[i * dim + j] = (stored[i * dim + j] - mean) / scale_[j];
      }
    }
    index_ = NeighborIndex(stored, dim, options_.index);
  }

  OutlierScorer(const ReferenceTable& ref, std::size_t max_k, ScoreOptions options = {})
      : OutlierScorer(ref.summary_data(), ref.n_stats(), max_k, options) {}

  OutlierScorer(const ReferenceTable& ref, const ScoreSpec& spec, ScoreOptions options = {})
      : OutlierScorer(ref.summary_data(), ref.n_stats(), checked_max_k(spec, ref.size()), options) {}

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t max_k() const noexcept { return max_k_; }
  const NeighborIndex& index() const noexcept { return index_; }

  /// Mean distance to the k nearest reference points.
  double knn(std::span<const double> y, std::size_t k, std::optional<std::size_t> exclude = std::nullopt) const {
    const auto q = prepare(y);
    const auto nbrs = neighbors(q, k, exclude);
    double sum = 0.0;
    for (const auto& n : nbrs) sum += n.distance;
    return sum / static_cast<double>(k);
  }

  /// Local reachable density; +infinity when the mean reachability distance is 0.
  double lrd(std::span<const double> y, std::size_t k, std::optional<std::size_t> exclude = std::nullopt) const {
    check_density_k(k);
    const auto q = prepare(y);
    return density_of(neighbors(q, k, exclude), k);
  }

  double lof(std::span<const double> y, std::size_t k, std::optional<std::size_t> exclude = std::nullopt) const {
    check_density_k(k);
    const auto q = prepare(y);
    return lof_of(neighbors(q, k, exclude), k);
  }

  double max_lof(std::span<const double> y, std::size_t k_min, std::size_t k_max,
                 std::optional<std::size_t> exclude = std::nullopt) const {
    if (k_min == 0 || k_min > k_max) throw SpecError("max-LOF interval is empty");
    check_density_k(k_max);
    const auto q = prepare(y);
    const auto nbrs = neighbors(q, k_max, exclude);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= k_max; ++k)
      best = std::max(best, lof_of(std::span<const Neighbor>(nbrs).first(k), k));
    return best;
  }

  double score(std::span<const double> y, const ScoreSpec& spec,
               std::optional<std::size_t> exclude = std::nullopt) const {
    switch (spec.kind) {
      case ScoreKind::knn:
        return knn(y, spec.k, exclude);
      case ScoreKind::lof:
        return lof(y, spec.k, exclude);
      case ScoreKind::max_lof:
        return max_lof(y, spec.k_min, spec.k_max, exclude);
    }
    throw SpecError("unknown score kind");
  }

  /// Score of reference row `id`, excluding itself from its neighborhood.
  double score_member(std::size_t id, const ScoreSpec& spec) const {
    return score_raw(index_.point(id), spec, id);
  }

  /// k-distance and lrd of a reference row (self excluded).
  double member_k_dist(std::size_t id, std::size_t k) const {
    check_density_k(k);
    ensure_density();
    return member_dist_[id * max_k_ + k - 1];
  }
  double member_lrd(std::size_t id, std::size_t k) const {
    check_density_k(k);
    ensure_density();
    return member_lrd_[id * max_k_ + k - 1];
  }

  /// Scores of row-major points; element i equals score(points row i).
  std::vector<double> score_batch(std::span<const double> points, const ScoreSpec& spec) const {
    if (points.size() % dim_ != 0) throw QueryError("batch storage is not a multiple of the dimension");
    const std::size_t n = points.size() / dim_;
    if (spec.kind != ScoreKind::knn) ensure_density();
    std::vector<double> out(n);
    parallel_for(n, options_.workers, [&](std::size_t i) { out[i] = score(points.subspan(i * dim_, dim_), spec); });
    return out;
  }

  std::vector<double> score_batch(const ReferenceTable& points, const ScoreSpec& spec) const {
    return score_batch(points.summary_data(), spec);
  }

  std::vector<double> score_batch(const std::vector<std::vector<double>>& points, const ScoreSpec& spec) const {
    std::vector<double> flat;
    flat.reserve(points.size() * dim_);
    for (const auto& p : points) {
      if (p.size() != dim_) throw QueryError("batch point dimension does not match the reference set");
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return score_batch(flat, spec);
  }

 private:
  static std::size_t checked_max_k(const ScoreSpec& spec, std::size_t n) {
    spec.validate(n);
    return spec.largest_k();
  }

  std::vector<double> prepare(std::span<const double> y) const {
    if (y.size() != dim_) throw QueryError("point dimension does not match the reference set");
    std::vector<double> q(y.begin(), y.end());
    if (options_.standardize)
      for (std::size_t j = 0; j < dim_; ++j) q[j] = (q[j] - center_[j]) / scale_[j];
    return q;
  }

  /// Like score() for a point already in index coordinates.
  double score_raw(std::span<const double> q, const ScoreSpec& spec, std::size_t id) const {
    switch (spec.kind) {
      case ScoreKind::knn: {
        double sum = 0.0;
        for (const auto& n : neighbors(q, spec.k, id)) sum += n.distance;
        return sum / static_cast<double>(spec.k);
      }
      case ScoreKind::lof:
        check_density_k(spec.k);
        return lof_of(neighbors(q, spec.k, id), spec.k);
      case ScoreKind::max_lof: {
        if (spec.k_min == 0 || spec.k_min > spec.k_max) throw SpecError("max-LOF interval is empty");
        check_density_k(spec.k_max);
        const auto nbrs = neighbors(q, spec.k_max, id);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = spec.k_min; k <= spec.k_max; ++k)
          best = std::max(best, lof_of(std::span<const Neighbor>(nbrs).first(k), k));
        return best;
      }
    }
    throw SpecError("unknown score kind");
  }

  std::vector<Neighbor> neighbors(std::span<const double> q, std::size_t k,
                                  std::optional<std::size_t> exclude) const {
    if (k == 0) throw SpecError("k must be at least 1");
    const std::size_t available = size() - (exclude && *exclude < size() ? 1 : 0);
    if (k > available)
      throw SizeError("k = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                      " available neighbors");
    return index_.query(q, k, exclude);
  }

  void check_density_k(std::size_t k) const {
    if (k == 0) throw SpecError("k must be at least 1");
    if (k > max_k_)
      throw SizeError("k = " + std::to_string(k) + " exceeds the prepared maximum " + std::to_string(max_k_));
    // every reference point needs k neighbors other than itself
    if (max_k_ >= size())
      throw SizeError("k = " + std::to_string(max_k_) + " requires a reference set larger than " +
                      std::to_string(size()) + " rows");
  }

  double reach(const Neighbor& n, std::size_t k) const {
    if (options_.reachability == Reachability::plain_distance) return n.distance;
    return std::max(n.distance, member_dist_[n.id * max_k_ + k - 1]);
  }

  double density_of(std::span<const Neighbor> nbrs, std::size_t k) const {
    ensure_density();
    double sum = 0.0;
    for (const auto& n : nbrs) sum += reach(n, k);
    const double mean = sum / static_cast<double>(k);
    return mean == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / mean;
  }

  double lof_of(std::span<const Neighbor> nbrs, std::size_t k) const {
    const double own = density_of(nbrs, k);
    if (std::isinf(own)) {
      double sum = 0.0;
      for (const auto& n : nbrs) sum += member_lrd_[n.id * max_k_ + k - 1];
      return std::isinf(sum) ? 1.0 : 0.0;
    }
    // ratios first, so equal densities give exactly 1
    double sum = 0.0;
    for (const auto& n : nbrs) sum += member_lrd_[n.id * max_k_ + k - 1] / own;
    return sum / static_cast<double>(k);
  }

  void ensure_density() const {
    std::call_once(density_once_, [this] {
      const std::size_t n = size();
      member_dist_.assign(n * max_k_, 0.0);
      std::vector<std::size_t> member_ids(n * max_k_, 0);
      parallel_for(n, options_.workers, [&](std::size_t i) {
        const auto nbrs = index_.query_member(i, max_k_);
        for (std::size_t k = 0; k < max_k_; ++k) {
          member_dist_[i * max_k_ + k] = nbrs[k].distance;
          member_ids[i * max_k_ + k] = nbrs[k].id;
        }
      });
      member_lrd_.assign(n * max_k_, 0.0);
      parallel_for(n, options_.workers, [&](std::size_t i) {
        for (std::size_t k = 1; k <= max_k_; ++k) {
          // no running sum: reach-dist depends on k through the neighbors' k-dist
          double sum = 0.0;
          for (std::size_t r = 0; r < k; ++r) {
            const Neighbor nb{member_ids[i * max_k_ + r], member_dist_[i * max_k_ + r]};
            sum += reach(nb, k);
          }
          const double mean = sum / static_cast<double>(k);
          member_lrd_[i * max_k_ + k - 1] = mean == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / mean;
        }
      });
    });
  }

  ScoreOptions options_;
  std::size_t dim_ = 0;
  std::size_t max_k_ = 0;
  std::vector<double> center_;
  std::vector<double> scale_;
  NeighborIndex index_;

  mutable std::once_flag density_once_;
  mutable std::vector<double> member_dist_;  // n x max_k, k-th entry = k-dist
  mutable std::vector<double> member_lrd_;   // n x max_k
};

/// Mean distance from y to its k nearest points of `ref`.
inline double knn_score(std::span<const double> y, const ReferenceTable& ref, std::size_t k,
                        std::optional<std::size_t> exclude = std::nullopt) {
  return OutlierScorer(ref, k).knn(y, k, exclude);
}

inline double lrd(std::span<const double> y, const ReferenceTable& ref, std::size_t k,
                  std::optional<std::size_t> exclude = std::nullopt) {
  return OutlierScorer(ref, k).lrd(y, k, exclude);
}

inline double lof(std::span<const double> y, const ReferenceTable& ref, std::size_t k,
                  std::optional<std::size_t> exclude = std::nullopt) {
  return OutlierScorer(ref, k).lof(y, k, exclude);
}

inline double max_lof(std::span<const double> y, const ReferenceTable& ref, std::size_t k_min, std::size_t k_max,
                      std::optional<std::size_t> exclude = std::nullopt) {
  if (k_min == 0 || k_min > k_max) throw SpecError("max-LOF interval is empty");
  return OutlierScorer(ref, k_max).max_lof(y, k_min, k_max, exclude);
}

inline std::vector<double> score_batch(const std::vector<std::vector<double>>& points, const ReferenceTable& ref,
                                       const ScoreSpec& spec, ScoreOptions options = {}) {
  return OutlierScorer(ref, spec, options).score_batch(points, spec);
}

}  // namespace lfgof
