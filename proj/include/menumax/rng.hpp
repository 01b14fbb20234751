#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every random draw in this library is addressed by a (seed, stream, counter)
// triple instead of mutable generator state.  Draws for sample k, player i,
// coordinate j at iteration t are therefore identical no matter how the work
// is chunked across threads.

#include <array>
#include <cmath>
#include <cstdint>

namespace menumax {

namespace detail {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& ctr, std::array<uint32_t, 2>& key) {
  const uint64_t p0 = static_cast<uint64_t>(kPhiloxM0) * ctr[0];
  const uint64_t p1 = static_cast<uint64_t>(kPhiloxM1) * ctr[2];
  const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
  const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  key[0] += kPhiloxW0;
  key[1] += kPhiloxW1;
}

inline std::array<uint32_t, 4> philox10(uint64_t key64, uint64_t ctr_hi, uint64_t ctr_lo) {
  std::array<uint32_t, 4> ctr = {
      static_cast<uint32_t>(ctr_lo), static_cast<uint32_t>(ctr_lo >> 32),
      static_cast<uint32_t>(ctr_hi), static_cast<uint32_t>(ctr_hi >> 32)};
  std::array<uint32_t, 2> key = {static_cast<uint32_t>(key64),
                                 static_cast<uint32_t>(key64 >> 32)};
  for (int r = 0; r < 10; ++r) philox_round(ctr, key);
  return ctr;
}

}  // namespace detail

// One logical stream of random numbers identified by (seed, stream id).
// Values are indexed: u01(k) always returns the same number for the same k.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  // 64-bit word at counter position k.
  uint64_t bits(uint64_t k) const {
    const auto v = detail::philox10(seed_, stream_, k);
    return (static_cast<uint64_t>(v[0]) << 32) | v[1];
  }

  // Uniform on [0, 1) with 53 random bits.
  double u01(uint64_t k) const {
    return static_cast<double>(bits(k) >> 11) * 0x1.0p-53;
  }

  double uniform(uint64_t k, double lo, double hi) const {
    return lo + (hi - lo) * u01(k);
  }

  // Standard normal via Box-Muller; consumes counters 2k and 2k+1.
  double normal(uint64_t k) const {
    const double u1 = static_cast<double>((bits(2 * k) >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = u01(2 * k + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double bernoulli01(uint64_t k) const { return (bits(k) & 1u) ? 1.0 : 0.0; }

 private:
  uint64_t seed_;
  uint64_t stream_;
};

// Stable stream ids for the different random uses of a run.  Keeping them in
// one place guarantees two uses never alias.
struct Streams {
  static constexpr uint64_t kTypeSamples = 1;
  static constexpr uint64_t kPoolInit = 2;
  static constexpr uint64_t kLangevinNoise = 3;
  static constexpr uint64_t kNetInit = 4;
  static constexpr uint64_t kValidation = 5;
  static constexpr uint64_t kEvaluation = 6;
  static constexpr uint64_t kRegret = 7;
  static constexpr uint64_t kOracle = 8;
  static constexpr uint64_t kFit = 9;
};

// Packs a small multi-index into one counter.  Fields must respect the
// declared bit widths; used for (sample, player, coordinate, step) style keys.
constexpr uint64_t pack4(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return (a << 34) | (b << 26) | (c << 18) | d;
}

}  // namespace menumax
