#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfgof/error.hpp"

namespace lfgof {

// Logistic reparametrization of bounded and ordered parameters, so that
// regression adjustments happen in an unconstrained space.
//
// Integer parameters use bounds inflated by 0.49 on each side, which keeps
// inclusive bounds at a finite image and makes rounding after the inverse
// land back inside the bounds. Continuous parameters use their exact bounds;
// values on a bound are nudged inside by a relative 1e-12.
//
// An ordered group t_1 < t_2 < ... (integers) is mapped through gaps: the
// first element is transformed on its own bounds, and each following element
// through u_j = max(t_j - t_{j-1} - 1, 0.25) on
// [max(L_j - t_{j-1} - 1, 0), U_j - t_{j-1} - 1 + 0.49]. The 0.25 floor keeps
// adjacent values (gap 0) away from the open lower end. When the box bound L_j
// is the binding constraint the lower end is inflated by 0.49 instead.
struct ParameterBounds {
  double lower = 0.0;
  double upper = 1.0;
  bool integer = false;
};

struct OrderedGroup {
  std::vector<std::size_t> indices;  // parameters required to be strictly increasing, in order
};

struct TransformSpec {
  static constexpr double kInflation = 0.49;
  static constexpr double kGapFloor = 0.25;

  std::vector<ParameterBounds> bounds;
  std::vector<OrderedGroup> groups;

  std::size_t size() const noexcept { return bounds.size(); }

  void validate() const {
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      const auto& b = bounds[i];
      if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper))
        throw TransformError("parameter " + std::to_string(i) + " needs finite bounds with lower < upper", i);
      if (b.integer && (b.lower != std::round(b.lower) || b.upper != std::round(b.upper)))
        throw TransformError("integer parameter " + std::to_string(i) + " needs integer bounds", i);
    }
    std::vector<bool> grouped(bounds.size(), false);
    for (const auto& g : groups) {
      if (g.indices.size() < 2) throw TransformError("ordered group needs at least two parameters", 0);
      for (std::size_t j = 0; j < g.indices.size(); ++j) {
        const auto idx = g.indices[j];
        if (idx >= bounds.size()) throw TransformError("ordered group index out of range", idx);
        if (grouped[idx]) throw TransformError("parameter appears in two ordered groups", idx);
        grouped[idx] = true;
        if (!bounds[idx].integer) throw TransformError("ordered groups support integer parameters only", idx);
        if (j > 0 && bounds[idx].upper <= bounds[g.indices[j - 1]].upper)
          throw TransformError("ordered group upper bounds must be strictly increasing", idx);
      }
    }
  }

  /// {"params": [{"lower":..,"upper":..,"integer":..}, ...], "ordered": [[i,j,k], ...]}
  static TransformSpec from_json(const nlohmann::json& j) {
    TransformSpec spec;
    try {
      for (const auto& p : j.at("params")) {
        ParameterBounds b;
        b.lower = p.at("lower").get<double>();
        b.upper = p.at("upper").get<double>();
        b.integer = p.value("integer", false);
        spec.bounds.push_back(b);
      }
      if (j.contains("ordered"))
        for (const auto& g : j.at("ordered")) spec.groups.push_back({g.get<std::vector<std::size_t>>()});
    } catch (const nlohmann::json::exception& e) {
      throw TransformError(std::string("malformed transform: ") + e.what(), 0);
    }
    spec.validate();
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& b : bounds) params.push_back({{"lower", b.lower}, {"upper", b.upper}, {"integer", b.integer}});
    nlohmann::json ordered = nlohmann::json::array();
    for (const auto& g : groups) ordered.push_back(g.indices);
    return {{"params", params}, {"ordered", ordered}};
  }
};

namespace detail {

inline double logit_between(double x, double a, double b) { return std::log((x - a) / (b - x)); }

inline double logistic_between(double v, double a, double b) {
  if (v >= 0.0) return a + (b - a) / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return a + (b - a) * e / (1.0 + e);
}

/// Position of each parameter inside its ordered group: (group, rank) or none.
struct GroupSlot {
  std::size_t group = static_cast<std::size_t>(-1);
  std::size_t rank = 0;
};

inline std::vector<GroupSlot> group_slots(const TransformSpec& spec) {
  std::vector<GroupSlot> slots(spec.size());
  for (std::size_t g = 0; g < spec.groups.size(); ++g)
    for (std::size_t r = 0; r < spec.groups[g].indices.size(); ++r) slots[spec.groups[g].indices[r]] = {g, r};
  return slots;
}

struct GapRange {
  double lower;
  double upper;
  bool floored;  // lower end is the order constraint (gap 0)
};

inline GapRange gap_range(const ParameterBounds& b, double previous) {
  const double box_gap = b.lower - previous - 1.0;
  const double top = b.upper - previous - 1.0 + TransformSpec::kInflation;
  if (box_gap > 0.0) return {box_gap - TransformSpec::kInflation, top, false};
  return {0.0, top, true};
}

inline double free_forward(double x, const ParameterBounds& b) {
  if (b.integer) return logit_between(x, b.lower - TransformSpec::kInflation, b.upper + TransformSpec::kInflation);
  const double width = b.upper - b.lower;
  const double nudge = 1e-12 * width;
  const double clamped = std::clamp(x, b.lower + nudge, b.upper - nudge);
  return logit_between(clamped, b.lower, b.upper);
}

inline double free_inverse(double v, const ParameterBounds& b) {
  if (b.integer) {
    const double x =
        logistic_between(v, b.lower - TransformSpec::kInflation, b.upper + TransformSpec::kInflation);
    return std::clamp(std::round(x), b.lower, b.upper);
  }
  return std::clamp(logistic_between(v, b.lower, b.upper), b.lower, b.upper);
}

}  // namespace detail

/// Constrained parameters to R^p. Throws TransformError naming the first
/// parameter that violates its bounds, order, or integrality.
inline std::vector<double> transform_forward(std::span<const double> theta, const TransformSpec& spec) {
  if (theta.size() != spec.size()) throw TransformError("parameter vector length does not match transform", 0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& b = spec.bounds[i];
    if (!(theta[i] >= b.lower && theta[i] <= b.upper))
      throw TransformError("parameter " + std::to_string(i) + " = " + std::to_string(theta[i]) +
                               " is outside [" + std::to_string(b.lower) + ", " + std::to_string(b.upper) + "]",
                           i);
    if (b.integer && theta[i] != std::round(theta[i]))
      throw TransformError("parameter " + std::to_string(i) + " must be an integer", i);
  }
  const auto slots = detail::group_slots(spec);
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& slot = slots[i];
    if (slot.group == static_cast<std::size_t>(-1) || slot.rank == 0) {
      out[i] = detail::free_forward(theta[i], spec.bounds[i]);
      continue;
    }
    const auto prev_index = spec.groups[slot.group].indices[slot.rank - 1];
    const double previous = theta[prev_index];
    if (!(theta[i] > previous))
      throw TransformError("parameter " + std::to_string(i) + " must exceed parameter " +
                               std::to_string(prev_index),
                           i);
    const auto range = detail::gap_range(spec.bounds[i], previous);
    const double gap = theta[i] - previous - 1.0;
    const double u = range.floored ? std::max(gap, TransformSpec::kGapFloor) : gap;
    out[i] = detail::logit_between(u, range.lower, range.upper);
  }
  return out;
}

/// R^p back to constrained parameters: inverse logistic, reconstruction of
/// ordered chains, rounding of integer parameters. The result always satisfies
/// the bounds and strict orders.
inline std::vector<double> transform_inverse(std::span<const double> v, const TransformSpec& spec) {
  if (v.size() != spec.size()) throw TransformError("vector length does not match transform", 0);
  const auto slots = detail::group_slots(spec);
  std::vector<double> out(v.size());
  auto solve = [&](std::size_t i) { out[i] = detail::free_inverse(v[i], spec.bounds[i]); };
  for (std::size_t i = 0; i < v.size(); ++i)
    if (slots[i].group == static_cast<std::size_t>(-1)) solve(i);
  for (const auto& group : spec.groups) {
    solve(group.indices.front());
    for (std::size_t r = 1; r < group.indices.size(); ++r) {
      const auto i = group.indices[r];
      const double previous = out[group.indices[r - 1]];
      const auto& b = spec.bounds[i];
      const auto range = detail::gap_range(b, previous);
      const double u = detail::logistic_between(v[i], range.lower, range.upper);
      out[i] = std::clamp(std::round(u + previous + 1.0), std::max(b.lower, previous + 1.0), b.upper);
    }
  }
  return out;
}

/// Clamp to bounds and repair strict orders (used for raw-space adjustment).
/// Returns true when any value had to move.
inline bool clip_to_constraints(std::span<double> theta, const TransformSpec& spec) {
  bool moved = false;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& b = spec.bounds[i];
    double x = std::clamp(theta[i], b.lower, b.upper);
    if (b.integer) x = std::clamp(std::round(x), b.lower, b.upper);
    moved = moved || x != theta[i];
    theta[i] = x;
  }
  for (const auto& g : spec.groups) {
    for (std::size_t r = 1; r < g.indices.size(); ++r) {
      const auto i = g.indices[r];
      const double floor = theta[g.indices[r - 1]] + 1.0;
      if (theta[i] < floor) {
        theta[i] = std::min(floor, spec.bounds[i].upper);
        moved = true;
      }
    }
  }
  return moved;
}

}  // namespace lfgof
