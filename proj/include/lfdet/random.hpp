#pragma once

#include <cstdint>
#include <random>

#include "lfdet/tensor.hpp"

namespace lfdet {

/// Seeded generator whose output is identical across standard libraries.
/// std::uniform_*_distribution is implementation-defined, so the mapping
/// from raw 64-bit draws to values is done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 engine_;
};

/// Derive an independent seed for stream position `index` (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace lfdet
