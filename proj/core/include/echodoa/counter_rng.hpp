#pragma once

#include <cstdint>

namespace echodoa {

// Stateless, counter-based random numbers: every value is a pure function of
// its key, so records can be generated in any order or on any worker.

std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines key words into one 64-bit key (order-sensitive).
std::uint64_t hash_key(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept;
std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d) noexcept;

/// Uniform double in [0, 1) from the top 53 bits.
double to_unit(std::uint64_t bits) noexcept;

/// Standard normal sample for the given key (Box-Muller on two derived uniforms).
double normal_at(std::uint64_t key) noexcept;

/// Small sequential generator over the same mixer, for shuffles and draws that
/// are naturally sequential.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept;
  double uniform() noexcept { return to_unit((*this)()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace echodoa
