#pragma once

// Reproducible random streams. Everything random in this project draws from
// Xoshiro256ss seeded through SplitMix64, so datasets and runs are pure
// functions of their seed.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace jfpd {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

/// xoshiro256** with state filled by four SplitMix64 outputs.
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1) from the top 53 bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n) by 128-bit multiply-shift. n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller, cosine branch only (two uniforms per draw).
  double normal();
  /// Independent child stream; advances this generator by one draw.
  Xoshiro256ss split();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// The first eight outputs of Xoshiro256ss(seed); published in manifests.
std::array<std::uint64_t, 8> reference_outputs(std::uint64_t seed);

}  // namespace jfpd
