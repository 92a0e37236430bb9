#include "smug/recon.hpp"

#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

void validate(const UnrollConfig& cfg) {
  if (cfg.n_steps < 0) throw std::invalid_argument("UnrollConfig: n_steps must be >= 0");
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("UnrollConfig: lambda must be > 0");
  if (!(cfg.cg_tol > 0.0)) throw std::invalid_argument("UnrollConfig: cg_tol must be > 0");
  if (cfg.cg_max < 1) throw std::invalid_argument("UnrollConfig: cg_max must be >= 1");
}

void validate(const SmoothingConfig& sc) {
  if (sc.sigma < 0.0) throw std::invalid_argument("SmoothingConfig: sigma must be >= 0");
  if (sc.samples < 1) throw std::invalid_argument("SmoothingConfig: samples must be >= 1");
}

std::string method_name(ReconMethod m) {
  switch (m) {
    case ReconMethod::modl: return "modl";
    case ReconMethod::rs_e2e: return "rs_e2e";
    case ReconMethod::smug: return "smug";
    case ReconMethod::wsmug: return "wsmug";
    case ReconMethod::istanet: return "istanet";
    case ReconMethod::istanet_smug: return "istanet_smug";
    case ReconMethod::istanet_wsmug: return "istanet_wsmug";
  }
  return "unknown";
}

ReconMethod method_from_name(const std::string& name) {
  if (name == "modl") return ReconMethod::modl;
  if (name == "rs_e2e") return ReconMethod::rs_e2e;
  if (name == "smug") return ReconMethod::smug;
  if (name == "wsmug") return ReconMethod::wsmug;
  if (name == "istanet") return ReconMethod::istanet;
  if (name == "istanet_smug") return ReconMethod::istanet_smug;
  if (name == "istanet_wsmug") return ReconMethod::istanet_wsmug;
  throw std::invalid_argument("unknown reconstruction method: " + name);
}

namespace {

// Smoothing noise for unrolling step n, Monte-Carlo sample t: an independent
// counter-derived stream per (seed, step, sample), so any sub-draw is
// reproducible in isolation.
Tensor smoothing_noise(const SmoothingConfig& sc, std::uint64_t step, std::uint64_t sample,
                       std::size_t h, std::size_t w) {
  Rng rng = Rng::stream(sc.seed, {rng_stream::smooth, step, sample});
  Tensor eta({2, h, w});
  rng.fill_normal(eta, sc.sigma);
  return eta;
}

Variable perturbed_input(Tape& tape, Variable x, const SmoothingConfig& sc, std::uint64_t step,
                         std::uint64_t sample, std::size_t h, std::size_t w) {
  if (sc.sigma == 0.0) return x;  // exact degeneracy: no node inserted
  return tape.add(x, tape.constant(smoothing_noise(sc, step, sample, h, w)));
}

Variable adjoint_var(Tape& tape, const ForwardOperator& A, Variable y) {
  return tape.idft2(tape.mask_apply(y, A.mask));
}

}  // namespace

Variable smooth_denoise_var(Tape& tape, const DenoiserVars& den, Variable x,
                            const SmoothingConfig& sc, std::uint64_t step_index) {
  const Tensor& xv = tape.value(x);
  const std::size_t h = xv.dim(1), w = xv.dim(2);
  Variable acc{};
  for (int t = 0; t < sc.samples; ++t) {
    Variable d = denoiser_forward(
        tape, den, perturbed_input(tape, x, sc, step_index, static_cast<std::uint64_t>(t), h, w));
    acc = acc.valid() ? tape.add(acc, d) : d;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(sc.samples));
}

Variable weighted_smooth_var(Tape& tape, const DenoiserVars& den, const EncoderVars& enc,
                             Variable x, const SmoothingConfig& sc, std::uint64_t step_index) {
  const Tensor& xv = tape.value(x);
  const std::size_t h = xv.dim(1), w = xv.dim(2);
  Variable num{}, denom{};
  for (int t = 0; t < sc.samples; ++t) {
    Variable in = perturbed_input(tape, x, sc, step_index, static_cast<std::uint64_t>(t), h, w);
    Variable wgt = encoder_forward(tape, enc, in);
    Variable d = tape.mul_scalar(denoiser_forward(tape, den, in), wgt);
    num = num.valid() ? tape.add(num, d) : d;
    denom = denom.valid() ? tape.add(denom, wgt) : wgt;
  }
  return tape.div_scalar(num, denom);
}

namespace {

// Shared unroll skeleton: per-step denoised estimate from `denoised(x, n)`,
// then the data-consistency solve.
template <typename DenoiseFn>
TraceVars unroll_trace(Tape& tape, const ForwardOperator& A, Variable y, const UnrollConfig& cfg,
                       DenoiseFn&& denoised) {
  validate(cfg);
  TraceVars tr;
  Variable x = adjoint_var(tape, A, y);
  tr.iterates.push_back(x);
  for (int n = 0; n < cfg.n_steps; ++n) {
    Variable z = denoised(x, n);
    CgStats st;
    x = tape.dc_solve(A, y, z, cfg.lambda, cfg.cg_tol, cfg.cg_max, &st);
    tr.cg.push_back(st);
    tr.iterates.push_back(x);
  }
  tr.final_var = x;
  return tr;
}

}  // namespace

TraceVars modl_trace_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A,
                         Variable y, const UnrollConfig& cfg) {
  return unroll_trace(tape, A, y, cfg,
                      [&](Variable x, int) { return denoiser_forward(tape, den, x); });
}

TraceVars smug_trace_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A,
                         Variable y, const UnrollConfig& cfg, const SmoothingConfig& sc) {
  validate(sc);
  return unroll_trace(tape, A, y, cfg, [&](Variable x, int n) {
    return smooth_denoise_var(tape, den, x, sc, static_cast<std::uint64_t>(n));
  });
}

TraceVars wsmug_trace_var(Tape& tape, const DenoiserVars& den, const EncoderVars& enc,
                          const ForwardOperator& A, Variable y, const UnrollConfig& cfg,
                          const SmoothingConfig& sc) {
  validate(sc);
  return unroll_trace(tape, A, y, cfg, [&](Variable x, int n) {
    return weighted_smooth_var(tape, den, enc, x, sc, static_cast<std::uint64_t>(n));
  });
}

Variable rs_e2e_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A, Variable y,
                    const UnrollConfig& cfg, const SmoothingConfig& sc) {
  validate(cfg);
  validate(sc);
  const std::size_t h = A.mask.height, w = A.mask.width;
  Variable acc{};
  for (int t = 0; t < sc.samples; ++t) {
    Variable yt = y;
    if (sc.sigma > 0.0) {
      // Measurement-domain noise; masked so the perturbed data stays a valid
      // zero-filled k-space sample. The same noisy y feeds every DC step.
      Rng rng = Rng::stream(sc.seed, {rng_stream::rs_e2e, static_cast<std::uint64_t>(t)});
      Tensor eta({2, h, w});
      rng.fill_normal(eta, sc.sigma);
      yt = tape.add(y, tape.constant(mask_chw(A.mask, eta)));
    }
    TraceVars run = modl_trace_var(tape, den, A, yt, cfg);
    acc = acc.valid() ? tape.add(acc, run.final_var) : run.final_var;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(sc.samples));
}

TraceVars istanet_trace_var(Tape& tape, const IstaVars& ista, const EncoderVars* enc,
                            const ForwardOperator& A, Variable y, const UnrollConfig& cfg,
                            const SmoothingConfig& sc, IstaMode mode) {
  validate(cfg);
  validate(sc);
  if (cfg.n_steps > static_cast<int>(ista.phases.size()))
    throw std::invalid_argument("istanet: fewer phases than unrolling steps");
  if (mode == IstaMode::wsmug && enc == nullptr)
    throw std::invalid_argument("istanet: weighted mode needs an encoder");
  const std::size_t h = A.mask.height, w = A.mask.width;

  TraceVars tr;
  Variable x = adjoint_var(tape, A, y);
  tr.iterates.push_back(x);
  for (int n = 0; n < cfg.n_steps; ++n) {
    const auto& ph = ista.phases[static_cast<std::size_t>(n)];
    // r = x - step * A^H (A x - y)
    Variable Ax = tape.mask_apply(tape.dft2(x), A.mask);
    Variable resid = tape.idft2(tape.mask_apply(tape.sub(Ax, y), A.mask));
    Variable r = tape.sub(x, tape.mul_scalar(resid, ph.step_size));

    auto transform_block = [&](Variable input) {
      Variable u = tape.conv2d(tape.relu(tape.conv2d(input, ph.f1)), ph.f2);
      Variable s = tape.soft_threshold(u, ph.threshold);
      return tape.conv2d(tape.relu(tape.conv2d(s, ph.g1)), ph.g2);
    };

    if (mode == IstaMode::vanilla) {
      x = transform_block(r);
    } else if (mode == IstaMode::smug) {
      Variable acc{};
      for (int t = 0; t < sc.samples; ++t) {
        Variable in = perturbed_input(tape, r, sc, static_cast<std::uint64_t>(n),
                                      static_cast<std::uint64_t>(t), h, w);
        Variable out = transform_block(in);
        acc = acc.valid() ? tape.add(acc, out) : out;
      }
      x = tape.scale(acc, 1.0 / static_cast<double>(sc.samples));
    } else {
      Variable num{}, denom{};
      for (int t = 0; t < sc.samples; ++t) {
        Variable in = perturbed_input(tape, r, sc, static_cast<std::uint64_t>(n),
                                      static_cast<std::uint64_t>(t), h, w);
        Variable wgt = encoder_forward(tape, *enc, in);
        Variable out = tape.mul_scalar(transform_block(in), wgt);
        num = num.valid() ? tape.add(num, out) : out;
        denom = denom.valid() ? tape.add(denom, wgt) : wgt;
      }
      x = tape.div_scalar(num, denom);
    }
    tr.iterates.push_back(x);
  }
  tr.final_var = x;
  return tr;
}

// -- plain wrappers ---------------------------------------------------------------

namespace {

ReconTrace materialize(const Tape& tape, const TraceVars& tv) {
  ReconTrace tr;
  for (Variable v : tv.iterates) tr.iterates.push_back(image_from_chw(tape.value(v)));
  tr.cg = tv.cg;
  return tr;
}

void check_inputs(const ForwardOperator& A, const KSpaceData& y) {
  validate_kspace(y);
  if (A.mask.height != y.height || A.mask.width != y.width)
    throw std::invalid_argument("reconstruct: mask/k-space shape mismatch");
  if (!A.mask.any()) throw std::invalid_argument("reconstruct: empty sampling mask");
}

}  // namespace

ReconTrace modl_reconstruct(const DenoiserNet& theta, const ForwardOperator& A,
                            const KSpaceData& y, const UnrollConfig& cfg) {
  check_inputs(A, y);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  TraceVars tv = modl_trace_var(tape, den, A, tape.constant(to_chw(y)), cfg);
  return materialize(tape, tv);
}

ComplexImage smooth_denoise(const DenoiserNet& theta, const ComplexImage& x,
                            const SmoothingConfig& sc) {
  validate_image(x);
  validate(sc);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  Variable out = smooth_denoise_var(tape, den, tape.constant(to_chw(x)), sc, 0);
  return image_from_chw(tape.value(out));
}

ReconTrace smug_reconstruct(const DenoiserNet& theta, const ForwardOperator& A,
                            const KSpaceData& y, const UnrollConfig& cfg,
                            const SmoothingConfig& sc) {
  check_inputs(A, y);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  TraceVars tv = smug_trace_var(tape, den, A, tape.constant(to_chw(y)), cfg, sc);
  return materialize(tape, tv);
}

ComplexImage rs_e2e_reconstruct(const DenoiserNet& theta, const ForwardOperator& A,
                                const KSpaceData& y, const UnrollConfig& cfg,
                                const SmoothingConfig& sc) {
  check_inputs(A, y);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  Variable out = rs_e2e_var(tape, den, A, tape.constant(to_chw(y)), cfg, sc);
  return image_from_chw(tape.value(out));
}

ComplexImage weighted_smooth(const DenoiserNet& theta, const WeightEncoder& phi,
                             const ComplexImage& x, const SmoothingConfig& sc) {
  validate_image(x);
  validate(sc);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  EncoderVars enc = bind_encoder(tape, phi, false);
  Variable out = weighted_smooth_var(tape, den, enc, tape.constant(to_chw(x)), sc, 0);
  return image_from_chw(tape.value(out));
}

ReconTrace wsmug_reconstruct(const DenoiserNet& theta, const WeightEncoder& phi,
                             const ForwardOperator& A, const KSpaceData& y,
                             const UnrollConfig& cfg, const SmoothingConfig& sc) {
  check_inputs(A, y);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  EncoderVars enc = bind_encoder(tape, phi, false);
  TraceVars tv = wsmug_trace_var(tape, den, enc, A, tape.constant(to_chw(y)), cfg, sc);
  return materialize(tape, tv);
}

ReconTrace istanet_reconstruct(const IstaNetParams& params, const WeightEncoder* phi,
                               const ForwardOperator& A, const KSpaceData& y,
                               const UnrollConfig& cfg, const SmoothingConfig& sc, IstaMode mode) {
  check_inputs(A, y);
  Tape tape;
  IstaVars ista = bind_istanet(tape, params, false);
  std::optional<EncoderVars> enc;
  if (phi) enc = bind_encoder(tape, *phi, false);
  TraceVars tv = istanet_trace_var(tape, ista, enc ? &*enc : nullptr, A,
                                   tape.constant(to_chw(y)), cfg, sc, mode);
  return materialize(tape, tv);
}

ComplexImage dc_step(const ForwardOperator& A, const KSpaceData& y, const ComplexImage& z,
                     const UnrollConfig& cfg, CgStats* stats) {
  check_inputs(A, y);
  validate_image(z);
  Tape tape;
  Variable x = tape.dc_solve(A, tape.constant(to_chw(y)), tape.constant(to_chw(z)), cfg.lambda,
                             cfg.cg_tol, cfg.cg_max, stats);
  return image_from_chw(tape.value(x));
}

Variable recon_forward(Tape& tape, const ReconSpec& spec, const ForwardOperator& A, Variable y,
                       TraceVars* trace) {
  TraceVars tv;
  switch (spec.method) {
    case ReconMethod::modl: {
      DenoiserVars den = bind_denoiser(tape, *spec.denoiser, false);
      tv = modl_trace_var(tape, den, A, y, spec.unroll);
      break;
    }
    case ReconMethod::rs_e2e: {
      DenoiserVars den = bind_denoiser(tape, *spec.denoiser, false);
      tv.final_var = rs_e2e_var(tape, den, A, y, spec.unroll, spec.smoothing);
      break;
    }
    case ReconMethod::smug: {
      DenoiserVars den = bind_denoiser(tape, *spec.denoiser, false);
      tv = smug_trace_var(tape, den, A, y, spec.unroll, spec.smoothing);
      break;
    }
    case ReconMethod::wsmug: {
      DenoiserVars den = bind_denoiser(tape, *spec.denoiser, false);
      EncoderVars enc = bind_encoder(tape, *spec.encoder, false);
      tv = wsmug_trace_var(tape, den, enc, A, y, spec.unroll, spec.smoothing);
      break;
    }
    case ReconMethod::istanet:
    case ReconMethod::istanet_smug:
    case ReconMethod::istanet_wsmug: {
      IstaVars ista = bind_istanet(tape, *spec.ista, false);
      std::optional<EncoderVars> enc;
      if (spec.method == ReconMethod::istanet_wsmug) enc = bind_encoder(tape, *spec.encoder, false);
      const IstaMode mode = spec.method == ReconMethod::istanet ? IstaMode::vanilla
                            : spec.method == ReconMethod::istanet_smug ? IstaMode::smug
                                                                       : IstaMode::wsmug;
      tv = istanet_trace_var(tape, ista, enc ? &*enc : nullptr, A, y, spec.unroll, spec.smoothing,
                             mode);
      break;
    }
  }
  if (trace) *trace = tv;
  return tv.final_var;
}

ReconTrace reconstruct(const ReconSpec& spec, const ForwardOperator& A, const KSpaceData& y) {
  check_inputs(A, y);
  Tape tape;
  TraceVars tv;
  Variable out = recon_forward(tape, spec, A, tape.constant(to_chw(y)), &tv);
  if (tv.iterates.empty()) {
    // rs_e2e exposes only the smoothed final image
    ReconTrace tr;
    tr.iterates.push_back(image_from_chw(tape.value(out)));
    return tr;
  }
  return materialize(tape, tv);
}

}  // namespace smug
