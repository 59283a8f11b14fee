#pragma once

// Deterministic randomness. The engine is std::mt19937_64, whose output sequence
// is fixed by the C++ standard. Standard distributions are implementation-defined,
// so every draw below is built from raw 64-bit outputs with integer or dyadic
// arithmetic only; results are bit-identical across compilers and platforms.

#include <cstdint>
#include <random>

namespace autoqc {

// SplitMix64 finaliser; used to derive independent sub-seeds from (seed, stream).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi], unbiased (rejection on the top range).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    if (span == 0) return std::int64_t(next());
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return lo + std::int64_t(v % span);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Approximately standard normal: Irwin-Hall sum of 12 uniforms minus 6.
  double normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform01();
    return s - 6.0;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace autoqc
