#include "smug/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace smug {

namespace {

Tensor magnitude(const ComplexImage& x) {
  Tensor m({x.height, x.width});
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = std::sqrt(x.re[i] * x.re[i] + x.im[i] * x.im[i]);
  return m;
}

void check_pair(const ComplexImage& x, const ComplexImage& t) {
  validate_image(x, "metric input");
  validate_image(t, "metric reference");
  if (x.height != t.height || x.width != t.width)
    throw std::invalid_argument("metrics: shape mismatch");
}

constexpr std::size_t kWin = 11;
constexpr double kWinSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

const std::vector<double>& gaussian_taps() {
  static const std::vector<double> taps = [] {
    std::vector<double> t(kWin);
    double sum = 0.0;
    const double c = (static_cast<double>(kWin) - 1.0) / 2.0;
    for (std::size_t i = 0; i < kWin; ++i) {
      const double d = static_cast<double>(i) - c;
      t[i] = std::exp(-d * d / (2.0 * kWinSigma * kWinSigma));
      sum += t[i];
    }
    for (auto& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Separable valid-mode Gaussian filter: (H,W) -> (H-10, W-10).
Tensor gauss_valid(const Tensor& img) {
  const auto& taps = gaussian_taps();
  const std::size_t H = img.dim(0), W = img.dim(1);
  const std::size_t Wv = W - kWin + 1;
  Tensor rows({H, Wv});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < Wv; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += taps[k] * img.at(y, x + k);
      rows.at(y, x) = s;
    }
  const std::size_t Hv = H - kWin + 1;
  Tensor out({Hv, Wv});
  for (std::size_t y = 0; y < Hv; ++y)
    for (std::size_t x = 0; x < Wv; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += taps[k] * rows.at(y + k, x);
      out.at(y, x) = s;
    }
  return out;
}

}  // namespace

double psnr(const ComplexImage& x, const ComplexImage& t) {
  check_pair(x, t);
  const Tensor mx = magnitude(x);
  const Tensor mt = magnitude(t);
  double peak = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    peak = std::max(peak, mt[i]);
    const double d = mx[i] - mt[i];
    mse += d * d;
  }
  mse /= static_cast<double>(mx.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_capped(const ComplexImage& x, const ComplexImage& t) {
  return std::min(psnr(x, t), kPsnrCap);
}

double ssim(const ComplexImage& x, const ComplexImage& t) {
  check_pair(x, t);
  if (x.height < kWin || x.width < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const Tensor mx = magnitude(x);
  const Tensor mt = magnitude(t);
  double peak = 0.0;
  for (std::size_t i = 0; i < mt.size(); ++i) peak = std::max(peak, mt[i]);
  const double L = peak > 0.0 ? peak : 1.0;
  const double c1 = (kK1 * L) * (kK1 * L);
  const double c2 = (kK2 * L) * (kK2 * L);

  Tensor xx({x.height, x.width}), tt({x.height, x.width}), xt({x.height, x.width});
  for (std::size_t i = 0; i < mx.size(); ++i) {
    xx[i] = mx[i] * mx[i];
    tt[i] = mt[i] * mt[i];
    xt[i] = mx[i] * mt[i];
  }
  const Tensor mu_x = gauss_valid(mx);
  const Tensor mu_t = gauss_valid(mt);
  const Tensor m_xx = gauss_valid(xx);
  const Tensor m_tt = gauss_valid(tt);
  const Tensor m_xt = gauss_valid(xt);

  double acc = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double ux = mu_x[i], ut = mu_t[i];
    const double vx = m_xx[i] - ux * ux;
    const double vt = m_tt[i] - ut * ut;
    const double cov = m_xt[i] - ux * ut;
    acc += ((2.0 * ux * ut + c1) * (2.0 * cov + c2)) /
           ((ux * ux + ut * ut + c1) * (vx + vt + c2));
  }
  return acc / static_cast<double>(mu_x.size());
}

}  // namespace smug
