#pragma once

#include <cstdint>
#include <vector>

#include "smug/tensor.hpp"

namespace smug {

/// H x W complex-valued image stored as paired real/imaginary planes.
/// Invariants: all entries finite; height and width >= 2 and even.
struct ComplexImage {
  std::size_t height = 0, width = 0;
  Tensor re, im;  // each (height, width)

  ComplexImage() = default;
  ComplexImage(std::size_t h, std::size_t w)
      : height(h), width(w), re({h, w}), im({h, w}) {}

  static ComplexImage zeros(std::size_t h, std::size_t w) { return ComplexImage(h, w); }
};

/// Same layout as ComplexImage, indexed by spatial frequency. Stored
/// zero-filled at unsampled locations; the mask defines the measurements.
struct KSpaceData {
  std::size_t height = 0, width = 0;
  Tensor re, im;

  KSpaceData() = default;
  KSpaceData(std::size_t h, std::size_t w)
      : height(h), width(w), re({h, w}), im({h, w}) {}

  static KSpaceData zeros(std::size_t h, std::size_t w) { return KSpaceData(h, w); }
};

/// Cartesian line-based undersampling pattern. A "line" is one row of
/// k-space (one phase-encode index); keep[r][c] is constant along c.
struct SamplingMask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> keep;  // height*width, row-major
  double accel = 1.0;
  double center_frac = 0.0;

  bool kept(std::size_t r, std::size_t c) const { return keep[r * width + c] != 0; }
  std::size_t kept_lines() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < height; ++r) n += keep[r * width] ? 1 : 0;
    return n;
  }
  bool any() const {
    for (auto k : keep)
      if (k) return true;
    return false;
  }
  bool fully_sampled() const {
    for (auto k : keep)
      if (!k) return false;
    return true;
  }
};

/// The MRI system matrix A = M F: a binary sampling mask composed with the
/// unitary 2D DFT. With this normalization ||A||_2 = 1 for any nonempty mask
/// and the eigenvalues of A^H A are exactly {0, 1}.
struct ForwardOperator {
  SamplingMask mask;
};

// -- validation ---------------------------------------------------------------

void validate_image(const ComplexImage& x, const char* what = "image");
void validate_kspace(const KSpaceData& y, const char* what = "k-space");
void validate_dims(std::size_t h, std::size_t w);

// -- conversions between plane pairs and stacked (2,H,W) tensors --------------

Tensor to_chw(const ComplexImage& x);
Tensor to_chw(const KSpaceData& y);
ComplexImage image_from_chw(const Tensor& t);
KSpaceData kspace_from_chw(const Tensor& t);

/// l2 norm over both planes.
double image_norm(const ComplexImage& x);
double kspace_norm(const KSpaceData& y);

/// l2 norm of the difference.
double image_dist(const ComplexImage& a, const ComplexImage& b);

}  // namespace smug
