#include "smug/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "smug/rng.hpp"

namespace smug {

namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

// Twiddle tables are cached per (size, direction). Guarded so concurrent
// transform calls stay safe; tables are immutable once built.
const std::vector<cplx>& twiddles(std::size_t n, bool inverse) {
  static std::map<std::pair<std::size_t, bool>, std::vector<cplx>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n, inverse);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<cplx> tw(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    tw[k] = cplx(std::cos(ang), std::sin(ang));
  }
  it = cache.emplace(key, std::move(tw)).first;
  return it->second;
}

// In-place iterative radix-2 FFT, no normalization.
void fft_pow2(cplx* a, std::size_t n, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& tw = twiddles(n, inverse);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx w = tw[k * stride];
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

// Direct O(n^2) transform for non-power-of-two axes (test-size images only).
void dft_direct(cplx* a, std::size_t n, bool inverse) {
  const auto& tw = twiddles(n, inverse);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx s(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) s += a[j] * tw[(k * j) % n];
    out[k] = s;
  }
  std::copy(out.begin(), out.end(), a);
}

void transform_axis(cplx* a, std::size_t n, bool inverse) {
  if (is_pow2(n))
    fft_pow2(a, n, inverse);
  else
    dft_direct(a, n, inverse);
}

// Unitary 2D transform over a (2,H,W) stacked tensor.
Tensor transform2_chw(const Tensor& t, bool inverse) {
  const std::size_t h = t.dim(1), w = t.dim(2);
  const std::size_t n = h * w;
  std::vector<cplx> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(t[i], t[n + i]);

  for (std::size_t r = 0; r < h; ++r) transform_axis(buf.data() + r * w, w, inverse);

  std::vector<cplx> col(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = buf[r * w + c];
    transform_axis(col.data(), h, inverse);
    for (std::size_t r = 0; r < h; ++r) buf[r * w + c] = col[r];
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Tensor out({2, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = buf[i].real() * scale;
    out[n + i] = buf[i].imag() * scale;
  }
  return out;
}

}  // namespace

Tensor dft2_chw(const Tensor& x) { return transform2_chw(x, false); }
Tensor idft2_chw(const Tensor& y) { return transform2_chw(y, true); }

Tensor mask_chw(const SamplingMask& m, const Tensor& t) {
  const std::size_t n = m.height * m.width;
  Tensor out = t;
  for (std::size_t i = 0; i < n; ++i) {
    if (!m.keep[i]) {
      out[i] = 0.0;
      out[n + i] = 0.0;
    }
  }
  return out;
}

KSpaceData dft2_unitary(const ComplexImage& x) {
  validate_image(x);
  return kspace_from_chw(dft2_chw(to_chw(x)));
}

ComplexImage idft2_unitary(const KSpaceData& y) {
  validate_kspace(y);
  return image_from_chw(idft2_chw(to_chw(y)));
}

SamplingMask make_vd_mask(std::size_t h, std::size_t w, double accel, double center_frac,
                          std::uint64_t seed) {
  validate_dims(h, w);
  if (accel < 1.0) throw std::invalid_argument("make_vd_mask: accel must be >= 1");
  if (!(center_frac > 0.0) || !(center_frac < 1.0 / accel))
    throw std::invalid_argument("make_vd_mask: need 0 < center_frac < 1/accel");

  const auto n_keep = static_cast<std::size_t>(std::llround(static_cast<double>(h) / accel));
  const auto n_center = static_cast<std::size_t>(std::llround(center_frac * static_cast<double>(h)));
  if (n_center > n_keep)
    throw std::invalid_argument("make_vd_mask: central band exceeds the line budget");

  // Lines ordered by |frequency| with DC at row 0: offsets 0, +1, -1, +2, ...
  std::vector<std::size_t> by_freq;
  by_freq.reserve(h);
  by_freq.push_back(0);
  for (std::size_t k = 1; by_freq.size() < h; ++k) {
    by_freq.push_back(k % h);
    if (by_freq.size() < h) by_freq.push_back(h - k);
  }

  std::vector<std::uint8_t> line_kept(h, 0);
  for (std::size_t i = 0; i < n_center; ++i) line_kept[by_freq[i]] = 1;

  std::vector<std::size_t> rest(by_freq.begin() + static_cast<std::ptrdiff_t>(n_center), by_freq.end());
  std::sort(rest.begin(), rest.end());
  Rng rng = Rng::stream(seed, {rng_stream::mask, h, w});
  const std::size_t n_random = n_keep - n_center;
  for (std::size_t i = 0; i < n_random; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(rest.size() - i));
    std::swap(rest[i], rest[j]);
    line_kept[rest[i]] = 1;
  }

  SamplingMask m;
  m.height = h;
  m.width = w;
  m.accel = accel;
  m.center_frac = center_frac;
  m.keep.assign(h * w, 0);
  for (std::size_t r = 0; r < h; ++r)
    if (line_kept[r])
      for (std::size_t c = 0; c < w; ++c) m.keep[r * w + c] = 1;
  return m;
}

KSpaceData apply_forward(const ForwardOperator& A, const ComplexImage& x) {
  validate_image(x);
  if (A.mask.height != x.height || A.mask.width != x.width)
    throw std::invalid_argument("apply_forward: mask/image shape mismatch");
  return kspace_from_chw(mask_chw(A.mask, dft2_chw(to_chw(x))));
}

ComplexImage apply_adjoint(const ForwardOperator& A, const KSpaceData& y) {
  validate_kspace(y);
  if (A.mask.height != y.height || A.mask.width != y.width)
    throw std::invalid_argument("apply_adjoint: mask/k-space shape mismatch");
  return image_from_chw(idft2_chw(mask_chw(A.mask, to_chw(y))));
}

}  // namespace smug
