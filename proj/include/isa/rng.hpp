#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace isa {

/// Seeded generator used by every sampler in the toolkit.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions on top of it are defined here rather than
/// taken from <random>, whose distributions are implementation-defined:
///   - below(n): rejection sampling on the raw 64-bit output, reject values
///     under (2^64 - n) mod n, then take the remainder.
///   - uniform(): top 53 bits scaled by 2^-53, in [0, 1).
///   - normal(): Box-Muller, one draw per pair of uniforms (second discarded).
/// Any implementation following these rules reproduces selections exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= threshold) return x % n;
    }
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

/// First m entries of a partial Fisher-Yates shuffle of [0, n): position i is
/// swapped with i + below(n - i).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  if (m > n) m = n;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace isa
