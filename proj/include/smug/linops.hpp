#pragma once

#include <cstdint>
#include <functional>

#include "smug/image.hpp"

namespace smug {

/// Any self-adjoint linear map over real tensors (complex data as 2 channels).
using LinearMap = std::function<Tensor(const Tensor&)>;

struct CgStats {
  int iters = 0;
  double residual = 0.0;  // achieved relative residual ||Ax-b|| / ||b||
  bool converged = true;
};

/// Conjugate gradients for a symmetric positive definite map. Stops at
/// relative residual <= tol or max_iters; never throws on non-convergence,
/// the stats flag carries it.
Tensor cg_solve_spd(const LinearMap& apply, const Tensor& b, double tol, int max_iters,
                    CgStats* stats = nullptr);

/// x -> A^H A x + lambda x, over (2,H,W) tensors. Eigenvalues {lambda, 1+lambda}.
LinearMap normal_plus_identity(const ForwardOperator& A, double lambda);

struct PowerIterResult {
  double value = 0.0;
  int iters = 0;
  bool converged = true;
};

/// Largest eigenvalue of a self-adjoint PSD map via power iteration with a
/// seeded random start. Converging within `iters` to relative tol is flagged.
PowerIterResult power_iteration(const LinearMap& apply, const std::vector<std::size_t>& shape,
                                int iters, double tol, std::uint64_t seed);

/// Largest singular value of a general map: power iteration on adj∘op.
PowerIterResult spectral_norm(const LinearMap& op, const LinearMap& adj,
                              const std::vector<std::size_t>& in_shape, int iters, double tol,
                              std::uint64_t seed);

/// ||A||_2 for A = M F (equals 1 exactly for any nonempty binary mask).
PowerIterResult spectral_norm_forward(const ForwardOperator& A, int iters = 100,
                                      double tol = 1e-9, std::uint64_t seed = 0);

/// alpha = ||(A^H A + lambda I)^{-1}||_2, each power-iteration application
/// solved by conjugate gradients.
PowerIterResult alpha_constant(const ForwardOperator& A, double lambda, int iters = 200,
                               double tol = 1e-9, std::uint64_t seed = 0);

}  // namespace smug
