#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace sdlyap {

/// Deterministic 64-bit stream (splitmix64). Chosen over <random> engines so
/// that seeded results are bit-identical across platforms and thread counts;
/// streams are split per work item, never shared.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Derives an independent stream for work item `index` of a parent seed.
  static Rng split(std::uint64_t seed, std::uint64_t index) {
    Rng mix(seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    mix.next_u64();
    return mix;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  /// Standard normal (Box-Muller).
  double normal() {
    double u1 = u01(), u2 = u01();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform direction on the unit sphere in `dim` dimensions.
  std::vector<double> unit_vector(std::size_t dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& c : v) {
        c = normal();
        norm2 += c * c;
      }
    } while (norm2 == 0.0);
    double inv = 1.0 / std::sqrt(norm2);
    for (auto& c : v) c *= inv;
    return v;
  }

 private:
  std::uint64_t state_;
};

}  // namespace sdlyap
