#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sec {

using Engine = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a path of counters
// (user index, day, purpose tag, ...). Streams derived this way do not depend
// on the order in which they are consumed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(base);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Engine make_engine(std::uint64_t base, std::initializer_list<std::uint64_t> path = {}) {
  return Engine(derive_seed(base, path));
}

inline double uniform01(Engine& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Engine& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Stream tags used with derive_seed.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kKMeans = 3;
inline constexpr std::uint64_t kPopulation = 10;
inline constexpr std::uint64_t kSession = 11;
inline constexpr std::uint64_t kReturn = 12;
inline constexpr std::uint64_t kHistory = 13;
inline constexpr std::uint64_t kEvaluation = 14;
inline constexpr std::uint64_t kJitter = 20;
}  // namespace stream

}  // namespace sec
