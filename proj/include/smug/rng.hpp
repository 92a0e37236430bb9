#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "smug/tensor.hpp"

namespace smug {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-seeded SplitMix64 generator. Every random draw in the project is
/// derived from (seed, stream ids...) so any sub-draw is reproducible in
/// isolation, independent of call order elsewhere, and identical across
/// platforms (no std::normal_distribution, which is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(detail::mix64(seed + 0x9e3779b97f4a7c15ull)) {}

  /// Derive an independent stream from a seed and a list of counter ids.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = seed;
    for (std::uint64_t id : ids) h = detail::mix64(h + 0x9e3779b97f4a7c15ull + id);
    Rng r(0);
    r.state_ = detail::mix64(h);
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return detail::mix64(state_);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1] (safe for log()).
  double uniform01_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double sigma) { return sigma * normal(); }

  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  void fill_normal(Tensor& t, double sigma) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = sigma * normal();
  }

 private:
  std::uint64_t state_;
};

/// Hash a (seed, ids...) chain into a new seed for nested counter schemes.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = seed;
  for (std::uint64_t id : ids) h = detail::mix64(h + 0x9e3779b97f4a7c15ull + id);
  return h;
}

// Fixed stream tags; keeps (seed, tag, ...) draws from colliding across uses.
namespace rng_stream {
inline constexpr std::uint64_t smooth = 1;     // per-step smoothing noise
inline constexpr std::uint64_t rs_e2e = 2;     // measurement-domain smoothing noise
inline constexpr std::uint64_t ustab = 3;      // UStab loss noise
inline constexpr std::uint64_t pretrain = 4;   // pre-training noise
inline constexpr std::uint64_t init = 5;       // parameter init
inline constexpr std::uint64_t mask = 6;       // undersampling mask lines
inline constexpr std::uint64_t phantom = 7;    // dataset synthesis
inline constexpr std::uint64_t meas = 8;       // measurement noise
inline constexpr std::uint64_t shuffle = 9;    // epoch shuffles
inline constexpr std::uint64_t attack = 10;    // attack noise draws
inline constexpr std::uint64_t power = 11;     // power-iteration starts
inline constexpr std::uint64_t eval = 12;      // evaluation perturbations
}  // namespace rng_stream

}  // namespace smug
