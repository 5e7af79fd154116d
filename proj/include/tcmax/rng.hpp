#pragma once

#include <cstdint>
#include <limits>

namespace tcmax {

/// Counter-based 64-bit generator: output k is a SplitMix64 hash of (key, k).
/// Streams derived with split() are independent of the parent's position, so
/// the same (seed, stream) always reproduces the same sequence.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Independent child stream identified by `stream`.
  Rng split(std::uint64_t stream) const noexcept {
    Rng child;
    child.key_ = mix(key_ ^ mix(stream + 0xbb67ae8584caa73bULL));
    return child;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t position() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace tcmax
