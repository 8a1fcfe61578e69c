#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mrss {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with a path of stream identifiers. Every consumer of
/// randomness derives its own stream so results do not depend on call order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(base);
  for (auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

/// Stable stream tags.
enum Stream : std::uint64_t {
  kStreamInit = 1,
  kStreamRounds = 2,
  kStreamEpisode = 3,
  kStreamShuffle = 4,
  kStreamBaseline = 5,
  kStreamTasks = 6,
  kStreamValidation = 7,
  kStreamPretrain = 8,
  kStreamEval = 9,
  kStreamSpawn = 10,
  kStreamMeta = 11,
  kStreamHarness = 12,
};

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> u(lo, hi);
  return u(rng);
}

}  // namespace mrss
