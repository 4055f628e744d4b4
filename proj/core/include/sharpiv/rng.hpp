#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

/* Counter-based random number generation.
 *
 * Every draw is a pure function of (seed, stream, counter), so replicate b,
 * observation i always sees the same variate no matter how work is sliced
 * across threads and no matter how many replicates run.  The mixer is the
 * splitmix64 finalizer applied in cascade; one application already passes
 * avalanche, the cascade decorrelates the key components.
 */

namespace sharpiv::rng {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix(std::uint64_t z) {
  z += kGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t key2(std::uint64_t a, std::uint64_t b) {
  return mix(mix(a) ^ b);
}

inline std::uint64_t key3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(mix(a) ^ b) ^ c);
}

/* uniform on [0,1) from the top 53 bits */
inline double u01(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/* uniform on (0,1): offset by half an ulp so log() is always finite */
inline double u01_open(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

/* A keyed stream: draw k-th variate via stateless hashing of the counter. */
struct Stream {
  std::uint64_t key = 0;

  std::uint64_t raw(std::uint64_t ctr, std::uint64_t lane = 0) const {
    return mix(mix(key ^ mix(ctr)) ^ lane);
  }
  double uniform(std::uint64_t ctr) const { return u01(raw(ctr)); }
  /* exact N(0,1) via Box-Muller (cosine branch) */
  double normal(std::uint64_t ctr) const {
    const double u1 = u01_open(raw(ctr, 1));
    const double u2 = u01(raw(ctr, 2));
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }
  /* exact Exp(1) */
  double exponential(std::uint64_t ctr) const {
    return -std::log(u01_open(raw(ctr, 3)));
  }
};

/* Stateful convenience wrapper for sequential generation (DGP sampling).
 * Still counter-based underneath, so a generated dataset depends only on its
 * stream key. */
class Sequence {
 public:
  explicit Sequence(std::uint64_t key) : s_{key} {}
  explicit Sequence(Stream s) : s_{s} {}

  double uniform() { return s_.uniform(ctr_++); }
  double normal() { return s_.normal(ctr_++); }
  double exponential() { return s_.exponential(ctr_++); }
  std::uint64_t raw() { return s_.raw(ctr_++); }

 private:
  Stream s_;
  std::uint64_t ctr_ = 0;
};

/* standard normal CDF */
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/* standard normal density */
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * 0.3989422804014326779;
}

double normal_quantile(double p);

}  // namespace sharpiv::rng
