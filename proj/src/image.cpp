#include "smug/image.hpp"

#include <cmath>
#include <stdexcept>

namespace smug {

void validate_dims(std::size_t h, std::size_t w) {
  if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("image dims must be even and >= 2, got " +
                                std::to_string(h) + "x" + std::to_string(w));
}

void validate_image(const ComplexImage& x, const char* what) {
  validate_dims(x.height, x.width);
  if (x.re.shape() != std::vector<std::size_t>{x.height, x.width} ||
      x.im.shape() != std::vector<std::size_t>{x.height, x.width})
    throw std::invalid_argument(std::string(what) + ": plane shape mismatch");
  if (!all_finite(x.re) || !all_finite(x.im))
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

void validate_kspace(const KSpaceData& y, const char* what) {
  validate_dims(y.height, y.width);
  if (y.re.shape() != std::vector<std::size_t>{y.height, y.width} ||
      y.im.shape() != std::vector<std::size_t>{y.height, y.width})
    throw std::invalid_argument(std::string(what) + ": plane shape mismatch");
  if (!all_finite(y.re) || !all_finite(y.im))
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

namespace {
Tensor stack_planes(const Tensor& re, const Tensor& im, std::size_t h, std::size_t w) {
  Tensor t({2, h, w});
  const std::size_t n = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = re[i];
    t[n + i] = im[i];
  }
  return t;
}
}  // namespace

Tensor to_chw(const ComplexImage& x) { return stack_planes(x.re, x.im, x.height, x.width); }
Tensor to_chw(const KSpaceData& y) { return stack_planes(y.re, y.im, y.height, y.width); }

ComplexImage image_from_chw(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 2) throw std::invalid_argument("expected (2,H,W) tensor");
  ComplexImage x(t.dim(1), t.dim(2));
  const std::size_t n = x.height * x.width;
  for (std::size_t i = 0; i < n; ++i) {
    x.re[i] = t[i];
    x.im[i] = t[n + i];
  }
  return x;
}

KSpaceData kspace_from_chw(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 2) throw std::invalid_argument("expected (2,H,W) tensor");
  KSpaceData y(t.dim(1), t.dim(2));
  const std::size_t n = y.height * y.width;
  for (std::size_t i = 0; i < n; ++i) {
    y.re[i] = t[i];
    y.im[i] = t[n + i];
  }
  return y;
}

double image_norm(const ComplexImage& x) {
  return std::sqrt(dot(x.re, x.re) + dot(x.im, x.im));
}

double kspace_norm(const KSpaceData& y) {
  return std::sqrt(dot(y.re, y.re) + dot(y.im, y.im));
}

double image_dist(const ComplexImage& a, const ComplexImage& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.re.size(); ++i) {
    const double dr = a.re[i] - b.re[i];
    const double di = a.im[i] - b.im[i];
    s += dr * dr + di * di;
  }
  return std::sqrt(s);
}

}  // namespace smug
