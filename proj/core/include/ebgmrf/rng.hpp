#pragma once

#include <cmath>
#include <cstdint>

namespace ebgmrf {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Counter-keyed deterministic generator. A child stream is a pure function
/// of the parent's key and the tag values, never of how many draws the parent
/// has made, so concurrent tasks seeded by child() reproduce bitwise.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(0x6a09e667f3bcc909ull, seed)), state_(key_) {}

  Rng child(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    return Rng(mix(mix(mix(key_, a), b), c), 0);
  }

  std::uint64_t next() { return splitmix64(state_); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Marsaglia polar method.
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  /// Marsaglia-Tsang gamma draw, shape > 0, scale > 0.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  int rademacher() { return (next() & 1u) ? 1 : -1; }

  std::uint64_t key() const { return key_; }

 private:
  Rng(std::uint64_t key, int) : key_(key), state_(key) {}

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    return splitmix64(s);
  }

  std::uint64_t key_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ebgmrf
