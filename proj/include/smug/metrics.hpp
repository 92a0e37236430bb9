#pragma once

#include "smug/image.hpp"

namespace smug {

/// PSNR on magnitude images: 10 log10(peak^2 / MSE), peak = max magnitude of
/// the reference t. MSE = 0 returns +infinity (CSV writers cap at 99 dB).
double psnr(const ComplexImage& x, const ComplexImage& t);

/// Mean local SSIM on magnitude images: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range = peak magnitude of t, valid-region
/// filtering (no padding).
double ssim(const ComplexImage& x, const ComplexImage& t);

/// The 99 dB cap applied when serializing PSNR values.
inline constexpr double kPsnrCap = 99.0;
double psnr_capped(const ComplexImage& x, const ComplexImage& t);

}  // namespace smug
