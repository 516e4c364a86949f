#pragma once

#include <cstdint>
#include <limits>

namespace hl0 {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

/// Counter-based SplitMix64: the k-th output (k = 0, 1, ...) is
/// mix64(seed + (k+1) * 0x9E3779B97F4A7C15), so any draw can be recomputed
/// from (seed, k) alone and streams are identical on every platform.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return at(seed_, counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return to_unit((*this)()); }

  std::uint64_t counter() const { return counter_; }

  static constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t k) { return mix64(seed + (k + 1) * kGolden); }
  static constexpr double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Seed of an independent sub-stream, e.g. one Monte Carlo replica.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

}  // namespace hl0
