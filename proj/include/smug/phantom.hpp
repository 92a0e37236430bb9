#pragma once

#include <cstdint>
#include <vector>

#include "smug/fourier.hpp"

namespace smug {

/// Synthetic ellipse-phantom generator: random overlapping ellipses with
/// smooth intensities plus mild low-frequency texture, normalized into
/// [-1, 1]. Real-valued by default (zero imaginary plane).
struct PhantomSpec {
  std::size_t size = 64;
  int min_ellipses = 4;
  int max_ellipses = 9;
  double min_intensity = -0.9;
  double max_intensity = 0.9;
  std::uint64_t seed = 0;
};

std::vector<ComplexImage> generate_phantoms(const PhantomSpec& spec, int n);

/// y = A t (+ optional Gaussian measurement noise on the sampled support).
KSpaceData simulate_measurements(const ComplexImage& t, const ForwardOperator& A,
                                 double noise_sigma, std::uint64_t seed);

}  // namespace smug
