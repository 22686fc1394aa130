#pragma once

#include <cstdint>
#include <limits>

namespace lfgof {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Derive an independent 64-bit key for child stream `stream` of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return detail::mix64(seed ^ detail::mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Counter-based generator: output n is a bijective hash of key + n * golden.
///
/// Any position of any stream can be reached without replaying the stream,
/// and child streams are derived by hashing (key, stream id). Every stochastic
/// operation in the library receives either a seed or a CounterRng, so results
/// do not depend on thread scheduling.
///
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  constexpr CounterRng child(std::uint64_t stream) const noexcept {
    return CounterRng(derive_seed(key_, stream));
  }

  /// Uniform draw in [0, 1) with 53 random bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in the open interval (0, 1).
  constexpr double uniform_open01() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Stream tags used to split a master seed into the stages of a pipeline.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kResimulate = 2;
inline constexpr std::uint64_t kBootstrap = 3;
inline constexpr std::uint64_t kReference = 4;
inline constexpr std::uint64_t kPods = 5;
inline constexpr std::uint64_t kReplicates = 6;
inline constexpr std::uint64_t kPodTasks = 7;
}  // namespace stream

}  // namespace lfgof
