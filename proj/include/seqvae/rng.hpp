#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "seqvae/tensor.hpp"

namespace seqvae {

/// Seeded random stream. All stochastic operations take one of these by
/// reference; there is no hidden global generator.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    // Rejection sampling keeps the stream independent of the platform's
    // uniform_int_distribution.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Box-Muller without caching the second variate, so the generator state
  /// is fully described by the engine.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> seed_ >> engine_;
    if (!is) throw std::invalid_argument("malformed rng state");
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.seed_ == b.seed_ && a.engine_ == b.engine_; }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline Tensor standard_normal(Rng& rng, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

/// Uniform in [-r, r] with r = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Rng& rng, std::size_t fan_out, std::size_t fan_in) {
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_out, fan_in});
  for (double& v : t.values()) v = rng.uniform(-r, r);
  return t;
}

}  // namespace seqvae
