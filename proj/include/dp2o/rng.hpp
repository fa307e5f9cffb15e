#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace dp2o {

// Counter-based random stream. Every draw is a pure function of
// (seed, counter), so substreams can be derived freely and parallel
// evaluation order cannot perturb the sequence. Output is bit-stable
// across runs and process restarts.

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives an independent seed for a tagged substream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag * kGolden + 1));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a,
                                 std::uint64_t tag_b) {
  return derive_seed(derive_seed(seed, tag_a), tag_b);
}

class Prng {
 public:
  explicit Prng(std::uint64_t seed) : key_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1]; safe as a log() argument.
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Consumes two words per draw.
  double normal() {
    const double u = uniform_open();
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) *
           std::cos(2.0 * std::numbers::pi * v);
  }

  /// Independent substream; the parent stream is not advanced.
  Prng fork(std::uint64_t tag) const { return Prng(derive_seed(key_, tag)); }

  void fill_normal(std::span<double> out) {
    for (double& x : out) x = normal();
  }

  std::vector<double> normal_vector(std::size_t n) {
    std::vector<double> out(n);
    fill_normal(out);
    return out;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dp2o
