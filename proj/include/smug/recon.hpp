#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smug/autodiff.hpp"
#include "smug/fourier.hpp"
#include "smug/models.hpp"

namespace smug {

struct UnrollConfig {
  int n_steps = 8;
  double lambda = 1.0;
  double cg_tol = 1e-6;
  int cg_max = 64;
};

struct SmoothingConfig {
  double sigma = 0.0;
  int samples = 1;
  std::uint64_t seed = 0;
};

void validate(const UnrollConfig& cfg);
void validate(const SmoothingConfig& sc);

/// Iterate record of one reconstruction run: x^0 = A^H y, then one entry per
/// unrolling step, plus the CG residuals of each data-consistency solve.
struct ReconTrace {
  std::vector<ComplexImage> iterates;  // length n_steps + 1
  std::vector<CgStats> cg;
  const ComplexImage& final() const { return iterates.back(); }
};

/// Same trace while the graph is still alive on a tape (training, attacks).
struct TraceVars {
  std::vector<Variable> iterates;
  std::vector<CgStats> cg;
  Variable final_var;
};

enum class ReconMethod { modl, rs_e2e, smug, wsmug, istanet, istanet_smug, istanet_wsmug };
enum class IstaMode { vanilla, smug, wsmug };

std::string method_name(ReconMethod m);
ReconMethod method_from_name(const std::string& name);

// -- on-tape builders (parameters already bound by the caller) -----------------

Variable smooth_denoise_var(Tape& tape, const DenoiserVars& den, Variable x,
                            const SmoothingConfig& sc, std::uint64_t step_index = 0);
Variable weighted_smooth_var(Tape& tape, const DenoiserVars& den, const EncoderVars& enc,
                             Variable x, const SmoothingConfig& sc, std::uint64_t step_index = 0);

TraceVars modl_trace_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A,
                         Variable y, const UnrollConfig& cfg);
TraceVars smug_trace_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A,
                         Variable y, const UnrollConfig& cfg, const SmoothingConfig& sc);
TraceVars wsmug_trace_var(Tape& tape, const DenoiserVars& den, const EncoderVars& enc,
                          const ForwardOperator& A, Variable y, const UnrollConfig& cfg,
                          const SmoothingConfig& sc);
Variable rs_e2e_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A, Variable y,
                    const UnrollConfig& cfg, const SmoothingConfig& sc);
TraceVars istanet_trace_var(Tape& tape, const IstaVars& ista, const EncoderVars* enc,
                            const ForwardOperator& A, Variable y, const UnrollConfig& cfg,
                            const SmoothingConfig& sc, IstaMode mode);

// -- plain reconstructions ------------------------------------------------------

ReconTrace modl_reconstruct(const DenoiserNet& theta, const ForwardOperator& A,
                            const KSpaceData& y, const UnrollConfig& cfg);
ComplexImage smooth_denoise(const DenoiserNet& theta, const ComplexImage& x,
                            const SmoothingConfig& sc);
ReconTrace smug_reconstruct(const DenoiserNet& theta, const ForwardOperator& A,
                            const KSpaceData& y, const UnrollConfig& cfg,
                            const SmoothingConfig& sc);
ComplexImage rs_e2e_reconstruct(const DenoiserNet& theta, const ForwardOperator& A,
                                const KSpaceData& y, const UnrollConfig& cfg,
                                const SmoothingConfig& sc);
ComplexImage weighted_smooth(const DenoiserNet& theta, const WeightEncoder& phi,
                             const ComplexImage& x, const SmoothingConfig& sc);
ReconTrace wsmug_reconstruct(const DenoiserNet& theta, const WeightEncoder& phi,
                             const ForwardOperator& A, const KSpaceData& y,
                             const UnrollConfig& cfg, const SmoothingConfig& sc);
ReconTrace istanet_reconstruct(const IstaNetParams& params, const WeightEncoder* phi,
                               const ForwardOperator& A, const KSpaceData& y,
                               const UnrollConfig& cfg, const SmoothingConfig& sc, IstaMode mode);

/// One data-consistency step x = (A^H A + lambda I)^{-1}(A^H y + lambda z).
ComplexImage dc_step(const ForwardOperator& A, const KSpaceData& y, const ComplexImage& z,
                     const UnrollConfig& cfg, CgStats* stats = nullptr);

// -- method dispatch --------------------------------------------------------------

/// Bundles everything needed to run (and differentiate) one pipeline.
struct ReconSpec {
  ReconMethod method = ReconMethod::modl;
  const DenoiserNet* denoiser = nullptr;
  const WeightEncoder* encoder = nullptr;
  const IstaNetParams* ista = nullptr;
  UnrollConfig unroll;
  SmoothingConfig smoothing;
};

/// Runs the pipeline on an existing tape (y already on it); parameters are
/// bound as constants. Used by attacks and evaluation.
Variable recon_forward(Tape& tape, const ReconSpec& spec, const ForwardOperator& A, Variable y,
                       TraceVars* trace = nullptr);

ReconTrace reconstruct(const ReconSpec& spec, const ForwardOperator& A, const KSpaceData& y);

}  // namespace smug
