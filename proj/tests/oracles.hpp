// Test-only oracles, kept independent of the implementation paths they check:
// a direct O(n^2) DFT summation, a dense Gaussian-elimination solver for the
// data-consistency normal equations, and a direct-window SSIM reference.
#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include "smug/image.hpp"

namespace oracles {

using cplx = std::complex<double>;

inline std::vector<cplx> to_complex(const smug::ComplexImage& x) {
  std::vector<cplx> v(x.height * x.width);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = cplx(x.re[i], x.im[i]);
  return v;
}

inline std::vector<cplx> to_complex(const smug::KSpaceData& x) {
  std::vector<cplx> v(x.height * x.width);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = cplx(x.re[i], x.im[i]);
  return v;
}

/// Direct unitary 2D DFT by explicit double summation.
inline std::vector<cplx> dft2_direct(const std::vector<cplx>& in, std::size_t h, std::size_t w,
                                     bool inverse = false) {
  std::vector<cplx> out(h * w);
  const double sign = inverse ? 1.0 : -1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t k = 0; k < h; ++k) {
    for (std::size_t l = 0; l < w; ++l) {
      cplx s(0.0, 0.0);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double ang = sign * 2.0 * std::numbers::pi *
                             (static_cast<double>(k * y) / static_cast<double>(h) +
                              static_cast<double>(l * x) / static_cast<double>(w));
          s += in[y * w + x] * cplx(std::cos(ang), std::sin(ang));
        }
      }
      out[k * w + l] = s * scale;
    }
  }
  return out;
}

/// Dense complex linear solve by Gaussian elimination with partial pivoting.
inline std::vector<cplx> solve_dense(std::vector<std::vector<cplx>> A, std::vector<cplx> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const cplx f = A[r][col] / A[col][col];
      for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<cplx> x(n);
  for (std::size_t i = n; i-- > 0;) {
    cplx s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= A[i][c] * x[c];
    x[i] = s / A[i][i];
  }
  return x;
}

/// Dense (A^H A + lambda I) built from the direct DFT matrix and the mask.
inline std::vector<std::vector<cplx>> normal_matrix_dense(const smug::SamplingMask& mask,
                                                          double lambda) {
  const std::size_t h = mask.height, w = mask.width, n = h * w;
  // F[(k,l),(y,x)] of the unitary DFT
  std::vector<std::vector<cplx>> F(n, std::vector<cplx>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < h; ++k)
    for (std::size_t l = 0; l < w; ++l)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double ang = -2.0 * std::numbers::pi *
                             (static_cast<double>(k * y) / static_cast<double>(h) +
                              static_cast<double>(l * x) / static_cast<double>(w));
          F[k * w + l][y * w + x] = scale * cplx(std::cos(ang), std::sin(ang));
        }
  std::vector<std::vector<cplx>> M(n, std::vector<cplx>(n, cplx(0, 0)));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      cplx s(0, 0);
      for (std::size_t k = 0; k < n; ++k)
        if (mask.keep[k]) s += std::conj(F[k][r]) * F[k][c];
      M[r][c] = s;
      if (r == c) M[r][c] += lambda;
    }
  return M;
}

/// Dense solve of (A^H A + lambda I) x = A^H y + lambda z.
inline smug::ComplexImage dc_solve_dense(const smug::SamplingMask& mask, const smug::KSpaceData& y,
                                         const smug::ComplexImage& z, double lambda) {
  const std::size_t h = mask.height, w = mask.width, n = h * w;
  auto yk = to_complex(y);
  for (std::size_t i = 0; i < n; ++i)
    if (!mask.keep[i]) yk[i] = cplx(0, 0);
  auto ahy = dft2_direct(yk, h, w, /*inverse=*/true);
  std::vector<cplx> rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = ahy[i] + lambda * cplx(z.re[i], z.im[i]);
  auto x = solve_dense(normal_matrix_dense(mask, lambda), rhs);
  smug::ComplexImage out(h, w);
  for (std::size_t i = 0; i < n; ++i) {
    out.re[i] = x[i].real();
    out.im[i] = x[i].imag();
  }
  return out;
}

/// Reference SSIM with explicit per-window loops (valid region, 11x11
/// Gaussian, sigma 1.5, K1 = .01, K2 = .03, L = peak of the reference).
inline double ssim_reference(const smug::ComplexImage& xi, const smug::ComplexImage& ti) {
  const std::size_t H = xi.height, W = xi.width, win = 11;
  std::vector<double> x(H * W), t(H * W);
  double peak = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::sqrt(xi.re[i] * xi.re[i] + xi.im[i] * xi.im[i]);
    t[i] = std::sqrt(ti.re[i] * ti.re[i] + ti.im[i] * ti.im[i]);
    peak = std::max(peak, t[i]);
  }
  const double L = peak > 0.0 ? peak : 1.0;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  std::vector<double> g(win * win);
  double gsum = 0.0;
  for (std::size_t i = 0; i < win; ++i)
    for (std::size_t j = 0; j < win; ++j) {
      const double dy = static_cast<double>(i) - 5.0, dx = static_cast<double>(j) - 5.0;
      g[i * win + j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      gsum += g[i * win + j];
    }
  for (auto& v : g) v /= gsum;

  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t y = 0; y + win <= H; ++y)
    for (std::size_t xx = 0; xx + win <= W; ++xx) {
      double mx = 0, mt = 0, sxx = 0, stt = 0, sxt = 0;
      for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
          const double wgt = g[i * win + j];
          const double xv = x[(y + i) * W + xx + j];
          const double tv = t[(y + i) * W + xx + j];
          mx += wgt * xv;
          mt += wgt * tv;
          sxx += wgt * xv * xv;
          stt += wgt * tv * tv;
          sxt += wgt * xv * tv;
        }
      const double vx = sxx - mx * mx, vt = stt - mt * mt, cov = sxt - mx * mt;
      acc += ((2 * mx * mt + c1) * (2 * cov + c2)) / ((mx * mx + mt * mt + c1) * (vx + vt + c2));
      ++cnt;
    }
  return acc / static_cast<double>(cnt);
}

}  // namespace oracles
