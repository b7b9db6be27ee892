#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "decloss/error.hpp"

namespace decloss {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// splitmix64 stream; bit-identical on every platform, unlike the standard
// distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return detail::mix64(state_ += 0x9e3779b97f4a7c15ull); }

  // uniform in [0, n), rejection sampled so every value is equally likely
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ValueError("rng: next_below needs a positive bound");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // uniform in [0, 1) with 53 random bits
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // standard normal via Box-Muller; the spare half is cached
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = next_double(), v = next_double();
    while (u <= 0.0) u = next_double();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stable substream key: fold integer tags into a master seed. Equal inputs
// give equal keys on every platform and run.
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = seed;
  for (std::uint64_t t : tags) h = detail::mix64(h + 0x9e3779b97f4a7c15ull + t);
  return h;
}

}  // namespace decloss
