#pragma once

#include <cstdint>

#include "smug/image.hpp"

namespace smug {

/// Unitary 2D DFT (1/sqrt(HW) scaling in both directions). Energy-preserving:
/// ||dft2_unitary(x)|| == ||x|| up to roundoff, and idft2_unitary is the exact
/// inverse and adjoint.
KSpaceData dft2_unitary(const ComplexImage& x);
ComplexImage idft2_unitary(const KSpaceData& y);

// Stacked (2,H,W) tensor variants used by the solver and autodiff internals.
// No finiteness validation; callers own their data.
Tensor dft2_chw(const Tensor& x);
Tensor idft2_chw(const Tensor& y);
Tensor mask_chw(const SamplingMask& m, const Tensor& t);

/// Variable-density Cartesian line mask: a fully kept central band of
/// round(center_frac*h) lowest-|frequency| lines, the rest drawn uniformly
/// at random so that round(h/accel) lines are kept in total. Deterministic
/// per seed. Throws std::invalid_argument on infeasible configurations.
SamplingMask make_vd_mask(std::size_t h, std::size_t w, double accel, double center_frac,
                          std::uint64_t seed);

/// Masked unitary DFT; zero at unsampled locations.
KSpaceData apply_forward(const ForwardOperator& A, const ComplexImage& x);

/// Adjoint of apply_forward (inverse DFT of the masked data).
ComplexImage apply_adjoint(const ForwardOperator& A, const KSpaceData& y);

}  // namespace smug
