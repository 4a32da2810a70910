#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "osmid/core/tensor.hpp"

namespace osmid {

// Counter-based seeding: every consumer derives its generator from
// (master seed, purpose tag, counters). No RNG state is ever shared,
// which keeps training resumable and every stage a pure function of
// its seed.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t seed_mix(std::initializer_list<uint64_t> keys) {
  uint64_t h = 0x2545f4914f6cdd1dull;
  for (uint64_t k : keys) h = mix64(h ^ mix64(k));
  return h;
}

inline std::mt19937_64 make_rng(std::initializer_list<uint64_t> keys) {
  return std::mt19937_64(seed_mix(keys));
}

inline void fill_normal(Tensor& t, std::mt19937_64& rng, double mean = 0.0,
                        double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : t.data) v = dist(rng);
}

inline void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
}

inline Tensor normal_tensor(std::vector<int> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  auto rng = make_rng({seed});
  fill_normal(t, rng);
  return t;
}

}  // namespace osmid
