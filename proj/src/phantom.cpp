#include "smug/phantom.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

namespace {

void add_ellipse(Tensor& plane, std::size_t size, double cx, double cy, double ax, double ay,
                 double angle, double intensity) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = (static_cast<double>(x) / static_cast<double>(size)) - cx;
      const double dy = (static_cast<double>(y) / static_cast<double>(size)) - cy;
      const double u = (ca * dx + sa * dy) / ax;
      const double v = (-sa * dx + ca * dy) / ay;
      const double r2 = u * u + v * v;
      if (r2 < 1.0) {
        // soft edge keeps the spectrum from being dominated by hard rims
        const double edge = std::min(1.0, 4.0 * (1.0 - r2));
        plane.at(y, x) += intensity * edge;
      }
    }
  }
}

}  // namespace

std::vector<ComplexImage> generate_phantoms(const PhantomSpec& spec, int n) {
  if (n < 1) throw std::invalid_argument("generate_phantoms: n must be >= 1");
  validate_dims(spec.size, spec.size);
  std::vector<ComplexImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(spec.seed, {rng_stream::phantom, static_cast<std::uint64_t>(i)});
    ComplexImage img(spec.size, spec.size);
    const int n_ell =
        spec.min_ellipses + static_cast<int>(rng.below(
                                static_cast<std::uint64_t>(spec.max_ellipses - spec.min_ellipses + 1)));
    for (int e = 0; e < n_ell; ++e) {
      const double cx = rng.uniform(0.2, 0.8);
      const double cy = rng.uniform(0.2, 0.8);
      const double ax = rng.uniform(0.08, 0.35);
      const double ay = rng.uniform(0.08, 0.35);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double intensity = rng.uniform(spec.min_intensity, spec.max_intensity);
      add_ellipse(img.re, spec.size, cx, cy, ax, ay, angle, intensity);
    }
    // mild smooth texture
    const double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.02, 0.06);
    for (std::size_t y = 0; y < spec.size; ++y)
      for (std::size_t x = 0; x < spec.size; ++x)
        img.re.at(y, x) += amp * std::sin(2.0 * std::numbers::pi *
                                              (fx * static_cast<double>(x) +
                                               fy * static_cast<double>(y)) /
                                              static_cast<double>(spec.size) +
                                          phase);
    // normalize into [-1, 1]
    const double m = max_abs(img.re);
    if (m > 1.0) scale_inplace(img.re, 1.0 / m);
    out.push_back(std::move(img));
  }
  return out;
}

KSpaceData simulate_measurements(const ComplexImage& t, const ForwardOperator& A,
                                 double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0.0) throw std::invalid_argument("simulate_measurements: bad noise sigma");
  KSpaceData y = apply_forward(A, t);
  if (noise_sigma > 0.0) {
    Rng rng = Rng::stream(seed, {rng_stream::meas});
    const std::size_t npix = y.height * y.width;
    for (std::size_t i = 0; i < npix; ++i) {
      const double er = rng.normal(noise_sigma);
      const double ei = rng.normal(noise_sigma);
      if (A.mask.keep[i]) {
        y.re[i] += er;
        y.im[i] += ei;
      }
    }
  }
  return y;
}

}  // namespace smug
