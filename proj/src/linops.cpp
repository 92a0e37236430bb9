#include "smug/linops.hpp"

#include <cmath>
#include <stdexcept>

#include "smug/fourier.hpp"
#include "smug/rng.hpp"

namespace smug {

Tensor cg_solve_spd(const LinearMap& apply, const Tensor& b, double tol, int max_iters,
                    CgStats* stats) {
  const double bnorm = norm2(b);
  Tensor x(b.shape());
  if (bnorm == 0.0) {
    if (stats) *stats = {0, 0.0, true};
    return x;
  }
  Tensor r = b;            // r = b - A*0
  Tensor p = r;
  double rs = dot(r, r);
  int it = 0;
  for (; it < max_iters; ++it) {
    if (std::sqrt(rs) <= tol * bnorm) break;
    Tensor Ap = apply(p);
    const double pAp = dot(p, Ap);
    if (pAp <= 0.0) break;  // lost positive definiteness (roundoff)
    const double alpha = rs / pAp;
    axpy(alpha, p, x);
    axpy(-alpha, Ap, r);
    const double rs_new = dot(r, r);
    const double beta = rs_new / rs;
    rs = rs_new;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
  const double rel = std::sqrt(rs) / bnorm;
  if (stats) *stats = {it, rel, rel <= tol};
  return x;
}

LinearMap normal_plus_identity(const ForwardOperator& A, double lambda) {
  const SamplingMask& mask = A.mask;
  return [mask, lambda](const Tensor& x) {
    Tensor out = idft2_chw(mask_chw(mask, dft2_chw(x)));
    axpy(lambda, x, out);
    return out;
  };
}

PowerIterResult power_iteration(const LinearMap& apply, const std::vector<std::size_t>& shape,
                                int iters, double tol, std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("power_iteration: iters must be >= 1");
  Rng rng = Rng::stream(seed, {rng_stream::power});
  Tensor v(shape);
  rng.fill_normal(v, 1.0);
  double n = norm2(v);
  if (n == 0.0) {
    v[0] = 1.0;
    n = 1.0;
  }
  scale_inplace(v, 1.0 / n);

  double lambda_prev = 0.0;
  for (int it = 1; it <= iters; ++it) {
    Tensor w = apply(v);
    const double lambda = dot(v, w);  // Rayleigh quotient
    const double wn = norm2(w);
    if (wn == 0.0) return {0.0, it, true};  // v in the null space: PSD map, 0 is the answer
    scale_inplace(w, 1.0 / wn);
    v = std::move(w);
    if (it > 1 && std::fabs(lambda - lambda_prev) <= tol * std::max(std::fabs(lambda), 1e-30))
      return {lambda, it, true};
    lambda_prev = lambda;
  }
  return {lambda_prev, iters, false};
}

PowerIterResult spectral_norm(const LinearMap& op, const LinearMap& adj,
                              const std::vector<std::size_t>& in_shape, int iters, double tol,
                              std::uint64_t seed) {
  LinearMap composed = [&op, &adj](const Tensor& x) { return adj(op(x)); };
  PowerIterResult r = power_iteration(composed, in_shape, iters, tol, seed);
  r.value = std::sqrt(std::max(0.0, r.value));
  return r;
}

PowerIterResult spectral_norm_forward(const ForwardOperator& A, int iters, double tol,
                                      std::uint64_t seed) {
  const SamplingMask& mask = A.mask;
  LinearMap op = [&mask](const Tensor& x) { return mask_chw(mask, dft2_chw(x)); };
  LinearMap adj = [&mask](const Tensor& y) { return idft2_chw(mask_chw(mask, y)); };
  return spectral_norm(op, adj, {2, mask.height, mask.width}, iters, tol, seed);
}

PowerIterResult alpha_constant(const ForwardOperator& A, double lambda, int iters, double tol,
                               std::uint64_t seed) {
  if (!(lambda > 0.0)) throw std::invalid_argument("alpha_constant: lambda must be > 0");
  LinearMap fwd = normal_plus_identity(A, lambda);
  bool cg_ok = true;
  LinearMap inv = [fwd, &cg_ok](const Tensor& b) {
    CgStats st;
    Tensor x = cg_solve_spd(fwd, b, 1e-12, 64, &st);
    if (!st.converged) cg_ok = false;
    return x;
  };
  PowerIterResult r = power_iteration(inv, {2, A.mask.height, A.mask.width}, iters, tol, seed);
  if (!cg_ok) r.converged = false;
  return r;
}

}  // namespace smug
