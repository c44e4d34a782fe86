#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hyperscore {

// Counter-based generator: every draw is a pure function of (key, counter),
// so tensors can be filled in any order and stay bit-identical across runs.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t counter) const { return mix(key_ ^ mix(counter)); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in [-1, 1].
  double symmetric(std::uint64_t counter) const { return 2.0 * uniform(counter) - 1.0; }

  // Standard normal via Box-Muller on two sub-counters.
  double normal(std::uint64_t counter) const {
    double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Derive an independent stream for a named tensor.
  CounterRng child(std::string_view tag) const { return CounterRng(mix(key_ ^ fnv1a(tag))); }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::uint64_t key_;
};

}  // namespace hyperscore
