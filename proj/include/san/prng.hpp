#ifndef SAN_PRNG_HPP
#define SAN_PRNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "san/common.hpp"

namespace san {

// Deterministic random source: splitmix64 stream feeding a Box-Muller
// normal transform. Same seed gives the same draw sequence everywhere,
// which is what makes init, shuffling and data generation reproducible.
class Prng {
 public:
  explicit Prng(u64 seed) : state_(seed) {}

  u64 next_u64() {
    u64 z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Rejection-free modulo is fine here:
  // bounds are tiny compared to 2^64 so the bias is unobservable.
  u64 next_below(u64 bound) { return bound == 0 ? 0 : next_u64() % bound; }

  // Standard normal via Box-Muller; draws come in pairs, the second is cached.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1], keeps log() finite
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // Derives an independent sub-stream seed; used to give each concern
  // (init, shuffle, data) its own generator from one master seed.
  u64 derive(u64 salt) {
    Prng child(state_ ^ (salt * 0x9E3779B97F4A7C15ULL + 0x6A09E667F3BCC909ULL));
    return child.next_u64();
  }

  // Seeded Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (u64 i = v.size(); i > 1; --i) {
      u64 j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  u64 state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace san

#endif  // SAN_PRNG_HPP
