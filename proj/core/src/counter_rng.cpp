#include "echodoa/counter_rng.hpp"

#include <cmath>
#include <numbers>

namespace echodoa {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_key(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return hash_key(hash_key(a, b), c);
}

std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d) noexcept {
  return hash_key(hash_key(a, b, c), d);
}

double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double normal_at(std::uint64_t key) noexcept {
  const std::uint64_t k1 = mix64(key);
  const std::uint64_t k2 = mix64(k1 ^ 0xd1b54a32d192ed03ULL);
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - to_unit(k1);
  const double u2 = to_unit(k2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SplitMix64::result_type SplitMix64::operator()() noexcept {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t n) noexcept {
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x = (*this)();
  while (x >= limit) x = (*this)();
  return x % n;
}

}  // namespace echodoa
