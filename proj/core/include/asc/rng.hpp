#pragma once

#include <cstdint>
#include <random>

namespace asc {

// Single RNG type everywhere so seeded runs replay exactly (same build).
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

template <typename T>
T uniform(Rng& rng, T lo, T hi) {
  std::uniform_real_distribution<T> d(lo, hi);
  return d(rng);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  std::uniform_int_distribution<std::int64_t> d(lo, hi);
  return d(rng);
}

template <typename T>
T normal(Rng& rng, T mean, T stddev) {
  std::normal_distribution<T> d(mean, stddev);
  return d(rng);
}

// Derives an independent stream from a base seed and a salt.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + salt);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace asc
