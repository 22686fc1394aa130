#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lfgof/error.hpp"

namespace lfgof {

struct Neighbor {
  std::size_t id;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Squared Euclidean distance accumulated in coordinate order. Every code
/// path that compares distances goes through this function, so tree and scan
/// answers are bit-identical.
inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

struct IndexOptions {
  /// Dimensions above this use the exhaustive scan instead of the tree.
  std::size_t max_tree_dim = 16;
  std::size_t leaf_size = 12;
  /// Forces one strategy (testing).
  enum class Strategy { automatic, tree, scan } strategy = Strategy::automatic;
};

/// Exact Euclidean k-nearest-neighbor index over points with ids 0..N-1.
///
/// Answers are ordered by (distance, id): ties are broken by ascending id and
/// neighborhoods always contain exactly min(k, available) points. A k-d tree
/// with bounding-box pruning serves low dimensions; above
/// IndexOptions::max_tree_dim queries scan all points with partial-distance
/// early exit. Both paths return identical results. The index is immutable and
/// safe for concurrent queries.
class NeighborIndex {
 public:
  NeighborIndex() = default;

  /// `points` is row-major with `dim` columns.
  NeighborIndex(std::span<const double> points, std::size_t dim, IndexOptions options = {})
      : dim_(dim), options_(options) {
    if (dim == 0) throw BuildError("neighbor index needs a positive dimension");
    if (points.size() % dim != 0) throw BuildError("point storage is not a multiple of the dimension");
    size_ = points.size() / dim;
    if (size_ == 0) throw BuildError("neighbor index needs at least one point");
    use_tree_ = options_.strategy == IndexOptions::Strategy::tree ||
                (options_.strategy == IndexOptions::Strategy::automatic && dim_ <= options_.max_tree_dim);
    order_.resize(size_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (use_tree_) {
      std::vector<double> scratch(points.begin(), points.end());
      original_ = std::span<const double>(scratch);
      build(0, size_);
      original_ = {};
      points_.resize(points.size());
      for (std::size_t i = 0; i < size_; ++i)
        std::copy_n(scratch.data() + order_[i] * dim_, dim_, points_.data() + i * dim_);
    } else {
      points_.assign(points.begin(), points.end());
    }
  }

  static NeighborIndex from_rows(const std::vector<std::vector<double>>& rows, IndexOptions options = {}) {
    if (rows.empty()) throw BuildError("neighbor index needs at least one point");
    const std::size_t dim = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * dim);
    for (const auto& r : rows) {
      if (r.size() != dim) throw BuildError("points have inconsistent dimensions");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return NeighborIndex(flat, dim, options);
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }
  bool uses_tree() const noexcept { return use_tree_; }

  std::span<const double> point(std::size_t id) const {
    return {points_.data() + position_of(id) * dim_, dim_};
  }

  /// The min(k, available) points closest to y, never including `exclude`.
  std::vector<Neighbor> query(std::span<const double> y, std::size_t k,
                              std::optional<std::size_t> exclude = std::nullopt) const {
    if (y.size() != dim_) throw QueryError("query dimension does not match the index");
    if (k == 0) throw QueryError("k must be at least 1");
    const std::size_t excluded = exclude && *exclude < size_ ? 1 : 0;
    if (size_ - excluded == 0) throw QueryError("no points available after exclusion");
    k = std::min(k, size_ - excluded);

    Heap heap(k);
    const std::size_t skip = exclude ? *exclude : static_cast<std::size_t>(-1);
    if (use_tree_) {
      search(0, y, skip, heap);
    } else {
      scan(y, skip, heap);
    }
    auto items = heap.sorted();
    std::vector<Neighbor> out;
    out.reserve(items.size());
    for (const auto& [d2, id] : items) out.push_back({id, std::sqrt(d2)});
    return out;
  }

  /// Neighbors of indexed point `id`, itself excluded.
  std::vector<Neighbor> query_member(std::size_t id, std::size_t k) const {
    if (id >= size_) throw QueryError("point id out of range");
    return query(point(id), k, id);
  }

  /// Distance to the k-th nearest neighbor (self excluded when `exclude` set).
  double k_dist(std::span<const double> y, std::size_t k,
                std::optional<std::size_t> exclude = std::nullopt) const {
    const std::size_t excluded = exclude && *exclude < size_ ? 1 : 0;
    if (k == 0 || k > size_ - excluded)
      throw SizeError("k_dist: fewer than k other points in the index");
    return query(y, k, exclude).back().distance;
  }

  double k_dist_member(std::size_t id, std::size_t k) const { return k_dist(point(id), k, id); }

 private:
  using Entry = std::pair<double, std::size_t>;  // (squared distance, id)

  /// Bounded max-heap on (d2, id).
  class Heap {
   public:
    explicit Heap(std::size_t k) : k_(k) { items_.reserve(k); }
    bool full() const noexcept { return items_.size() == k_; }
    const Entry& worst() const noexcept { return items_.front(); }
    void offer(const Entry& e) {
      if (!full()) {
        items_.push_back(e);
        std::push_heap(items_.begin(), items_.end());
      } else if (e < items_.front()) {
        std::pop_heap(items_.begin(), items_.end());
        items_.back() = e;
        std::push_heap(items_.begin(), items_.end());
      }
    }
    std::vector<Entry> sorted() {
      std::sort_heap(items_.begin(), items_.end());
      return std::move(items_);
    }

   private:
    std::size_t k_;
    std::vector<Entry> items_;
  };

  struct Node {
    std::size_t begin = 0, end = 0;  // positions in order_
    std::size_t left = 0, right = 0;  // child node indices, 0 for leaves
    std::vector<double> lo, hi;       // bounding box
  };

  std::size_t position_of(std::size_t id) const {
    if (!use_tree_) return id;
    return position_[id];
  }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t node_index = nodes_.size();
    nodes_.emplace_back();
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.assign(dim_, std::numeric_limits<double>::infinity());
    node.hi.assign(dim_, -std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      const double* p = original_.data() + order_[i] * dim_;
      for (std::size_t j = 0; j < dim_; ++j) {
        node.lo[j] = std::min(node.lo[j], p[j]);
        node.hi[j] = std::max(node.hi[j], p[j]);
      }
    }
    if (end - begin > options_.leaf_size) {
      std::size_t axis = 0;
      double spread = -1.0;
      for (std::size_t j = 0; j < dim_; ++j) {
        if (node.hi[j] - node.lo[j] > spread) {
          spread = node.hi[j] - node.lo[j];
          axis = j;
        }
      }
      if (spread > 0.0) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) {
                           const double va = original_[a * dim_ + axis];
                           const double vb = original_[b * dim_ + axis];
                           return va < vb || (va == vb && a < b);
                         });
        node.left = build(begin, mid);
        node.right = build(mid, end);
      }
    }
    nodes_[node_index] = std::move(node);
    if (node_index == 0) {
      position_.assign(size_, 0);
      for (std::size_t i = 0; i < size_; ++i) position_[order_[i]] = i;
    }
    return node_index;
  }

  double box_distance(const Node& node, std::span<const double> y) const noexcept {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      double d = 0.0;
      if (y[j] < node.lo[j]) {
        d = node.lo[j] - y[j];
      } else if (y[j] > node.hi[j]) {
        d = y[j] - node.hi[j];
      }
      s += d * d;
    }
    return s;
  }

  void search(std::size_t node_index, std::span<const double> y, std::size_t skip, Heap& heap) const {
    const Node& node = nodes_[node_index];
    if (node.left == 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t id = order_[i];
        if (id == skip) continue;
        const double d2 = squared_distance(y, {points_.data() + i * dim_, dim_});
        heap.offer({d2, id});
      }
      return;
    }
    const Node& a = nodes_[node.left];
    const Node& b = nodes_[node.right];
    const double da = box_distance(a, y);
    const double db = box_distance(b, y);
    const bool left_first = da <= db;
    const std::size_t first = left_first ? node.left : node.right;
    const std::size_t second = left_first ? node.right : node.left;
    const double d_first = left_first ? da : db;
    const double d_second = left_first ? db : da;
    // Prune only boxes strictly farther than the current worst; equal-distance
    // points may still win on id.
    if (!heap.full() || d_first <= heap.worst().first) search(first, y, skip, heap);
    if (!heap.full() || d_second <= heap.worst().first) search(second, y, skip, heap);
  }

  void scan(std::span<const double> y, std::size_t skip, Heap& heap) const {
    for (std::size_t id = 0; id < size_; ++id) {
      if (id == skip) continue;
      const double* p = points_.data() + id * dim_;
      if (!heap.full()) {
        heap.offer({squared_distance(y, {p, dim_}), id});
        continue;
      }
      const double bound = heap.worst().first;
      double s = 0.0;
      std::size_t j = 0;
      for (; j < dim_; ++j) {
        const double d = y[j] - p[j];
        s += d * d;
        if (s > bound) break;
      }
      if (j == dim_) heap.offer({s, id});
    }
  }

  std::size_t dim_ = 0;
  std::size_t size_ = 0;
  IndexOptions options_;
  bool use_tree_ = false;
  std::vector<double> points_;     // tree order when use_tree_, id order otherwise
  std::vector<std::size_t> order_;  // position -> id
  std::vector<std::size_t> position_;  // id -> position
  std::vector<Node> nodes_;
  std::span<const double> original_;
};

inline std::vector<Neighbor> knn_query(const NeighborIndex& index, std::span<const double> y, std::size_t k,
                                       std::optional<std::size_t> exclude = std::nullopt) {
  return index.query(y, k, exclude);
}

inline NeighborIndex build_index(std::span<const double> points, std::size_t dim, IndexOptions options = {}) {
  return NeighborIndex(points, dim, options);
}

inline double k_dist(const NeighborIndex& index, std::span<const double> y, std::size_t k,
                     std::optional<std::size_t> exclude = std::nullopt) {
  return index.k_dist(y, k, exclude);
}

}  // namespace lfgof
