#include "smug/eval.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "smug/csvio.hpp"
#include "smug/rng.hpp"

namespace smug {

ReconSpec make_spec(const MethodModels& m, const UnrollConfig& cfg, const SmoothingConfig& sc) {
  ReconSpec spec;
  spec.method = m.method;
  spec.denoiser = &m.denoiser;
  spec.encoder = m.encoder ? &*m.encoder : nullptr;
  spec.ista = m.ista ? &*m.ista : nullptr;
  spec.unroll = cfg;
  spec.smoothing = sc;
  // non-smoothing pipelines run the degenerate path
  if (m.method == ReconMethod::modl || m.method == ReconMethod::istanet) {
    spec.smoothing.sigma = 0.0;
    spec.smoothing.samples = 1;
  }
  return spec;
}

void save_dataset(const std::string& path, const std::vector<ComplexImage>& images,
                  const nlohmann::json& meta) {
  if (images.empty()) throw std::invalid_argument("save_dataset: empty dataset");
  const std::size_t h = images[0].height, w = images[0].width;
  Tensor all({images.size(), 2, h, w});
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = 0; j < plane; ++j) {
      all[(i * 2 + 0) * plane + j] = images[i].re[j];
      all[(i * 2 + 1) * plane + j] = images[i].im[j];
    }
  }
  Checkpoint ck;
  ck.kind = "dataset";
  ck.meta = meta;
  ck.tensors.emplace_back("images", std::move(all));
  save_checkpoint(path, ck);
}

std::vector<ComplexImage> load_dataset(const std::string& path, nlohmann::json* meta) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "dataset") throw std::runtime_error("load_dataset: not a dataset file");
  const Tensor& all = checkpoint_tensor(ck, "images");
  const std::size_t n = all.dim(0), h = all.dim(2), w = all.dim(3);
  const std::size_t plane = h * w;
  std::vector<ComplexImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    ComplexImage img(h, w);
    for (std::size_t j = 0; j < plane; ++j) {
      img.re[j] = all[(i * 2 + 0) * plane + j];
      img.im[j] = all[(i * 2 + 1) * plane + j];
    }
    out.push_back(std::move(img));
  }
  if (meta) *meta = ck.meta;
  return out;
}

void save_models(const std::string& path, const std::string& method,
                 const DenoiserNet& denoiser, const WeightEncoder* encoder,
                 const IstaNetParams* ista, const nlohmann::json& meta) {
  Checkpoint ck;
  ck.kind = method;
  ck.meta = meta;
  pack_model(ck, denoiser);
  if (encoder) pack_model(ck, *encoder);
  if (ista) pack_model(ck, *ista);
  save_checkpoint(path, ck);
}

MethodModels load_models(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  MethodModels m;
  m.name = ck.kind;
  m.method = method_from_name(ck.kind);
  m.denoiser = unpack_denoiser(ck);
  if (ck.meta.contains("encoder")) m.encoder = unpack_encoder(ck);
  if (ck.meta.contains("istanet")) m.ista = unpack_istanet(ck);
  return m;
}

namespace {

double now_seconds() {
  using clk = std::chrono::steady_clock;
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

KSpaceData add_kspace(const KSpaceData& y, const KSpaceData& d) {
  KSpaceData out = y;
  axpy(1.0, d.re, out.re);
  axpy(1.0, d.im, out.im);
  return out;
}

}  // namespace

std::vector<EvalRow> evaluate_method(const MethodModels& m, const EvalContext& ctx,
                                     const UnrollConfig& cfg, const SmoothingConfig& sc) {
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < ctx.targets.size(); ++i) {
    const ComplexImage& t = ctx.targets[i];
    const std::uint64_t item_seed = derive_seed(ctx.seed, {rng_stream::eval, i});
    const KSpaceData y = simulate_measurements(t, ctx.A, ctx.meas_noise_sigma, item_seed);

    ReconSpec spec = make_spec(m, cfg, sc);
    spec.smoothing.seed = derive_seed(item_seed, {rng_stream::smooth});

    EvalRow row;
    row.method = m.name;
    row.item = static_cast<int>(i);

    const ReconTrace clean = reconstruct(spec, ctx.A, y);
    row.clean_psnr = psnr_capped(clean.final(), t);
    row.clean_ssim = ssim(clean.final(), t);

    const KSpaceData y_noise = gaussian_perturb(y, ctx.A.mask, ctx.eval_noise_sigma, item_seed);
    const ReconTrace noisy = reconstruct(spec, ctx.A, y_noise);
    row.noise_psnr = psnr_capped(noisy.final(), t);
    row.noise_ssim = ssim(noisy.final(), t);

    AttackConfig ac = ctx.attack;
    ac.seed = derive_seed(item_seed, {rng_stream::attack});
    const PerturbationResult atk = pgd_attack(spec, ctx.A, y, t, ac);
    const ReconTrace robust = reconstruct(spec, ctx.A, add_kspace(y, atk.delta));
    row.robust_psnr = psnr_capped(robust.final(), t);
    row.robust_ssim = ssim(robust.final(), t);
    row.rob_error = image_dist(clean.final(), robust.final());

    rows.push_back(row);
  }
  return rows;
}

SweepKind sweep_kind_from_name(const std::string& name) {
  if (name == "epsilon") return SweepKind::epsilon;
  if (name == "sigma") return SweepKind::sigma;
  if (name == "accel") return SweepKind::accel;
  if (name == "unroll_steps") return SweepKind::unroll_steps;
  if (name == "mc_samples") return SweepKind::mc_samples;
  throw std::invalid_argument("unknown sweep kind: " + name);
}

std::string sweep_kind_name(SweepKind k) {
  switch (k) {
    case SweepKind::epsilon: return "epsilon";
    case SweepKind::sigma: return "sigma";
    case SweepKind::accel: return "accel";
    case SweepKind::unroll_steps: return "unroll_steps";
    case SweepKind::mc_samples: return "mc_samples";
  }
  return "unknown";
}

namespace {

struct Accum {
  double clean_psnr = 0, clean_ssim = 0, noise_psnr = 0, noise_ssim = 0;
  double robust_psnr = 0, robust_ssim = 0, rob_error = 0;
  int n = 0;
  bool holds = true;
};

}  // namespace

std::vector<MetricsRow> sweep(SweepKind kind, const std::vector<double>& grid,
                              const SweepContext& ctx) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  if (ctx.methods.empty()) throw std::invalid_argument("sweep: no methods");
  const ExperimentConfig& cfg = ctx.cfg;
  const std::size_t size = ctx.targets.empty() ? cfg.phantom.size : ctx.targets[0].height;

  // Base operator and, for the sigma sweep, per-(method,item) attacks fixed
  // across the grid so the robustness-error trend is comparable.
  ForwardOperator base_A{cfg.make_mask(size, size)};
  std::vector<std::vector<KSpaceData>> fixed_deltas;
  if (kind == SweepKind::sigma) {
    for (const MethodModels& m : ctx.methods) {
      std::vector<KSpaceData> per_item;
      for (std::size_t i = 0; i < ctx.targets.size(); ++i) {
        const std::uint64_t item_seed = derive_seed(cfg.master_seed, {rng_stream::eval, i});
        const KSpaceData y =
            simulate_measurements(ctx.targets[i], base_A, cfg.meas_noise_sigma, item_seed);
        ReconSpec spec = make_spec(m, cfg.unroll, cfg.smoothing);
        spec.smoothing.seed = derive_seed(item_seed, {rng_stream::smooth});
        AttackConfig ac = cfg.attack;
        ac.seed = derive_seed(item_seed, {rng_stream::attack});
        per_item.push_back(pgd_attack(spec, base_A, y, ctx.targets[i], ac).delta);
      }
      fixed_deltas.push_back(std::move(per_item));
    }
  }

  std::vector<MetricsRow> out;
  for (double g : grid) {
    for (std::size_t mi = 0; mi < ctx.methods.size(); ++mi) {
      const MethodModels& m = ctx.methods[mi];
      const double t0 = now_seconds();

      UnrollConfig ucfg = cfg.unroll;
      SmoothingConfig scfg = cfg.smoothing;
      AttackConfig acfg = cfg.attack;
      ForwardOperator A = base_A;
      switch (kind) {
        case SweepKind::epsilon: acfg.epsilon_scale = g; break;
        case SweepKind::sigma: scfg.sigma = g; break;
        case SweepKind::accel: A.mask = cfg.make_mask(size, size, g); break;
        case SweepKind::unroll_steps: ucfg.n_steps = static_cast<int>(g); break;
        case SweepKind::mc_samples: scfg.samples = static_cast<int>(g); break;
      }
      if (m.ista && ucfg.n_steps > static_cast<int>(m.ista->phases.size()))
        ucfg.n_steps = static_cast<int>(m.ista->phases.size());

      Accum acc;
      const ReconSpec bound_probe = make_spec(m, ucfg, scfg);
      double bound_Cn = std::numeric_limits<double>::quiet_NaN();
      if (bound_probe.smoothing.sigma > 0.0) {
        const double alpha = alpha_constant(A, 1.0).value;
        const double opnorm = spectral_norm_forward(A).value;
        bound_Cn = theorem1_bound(ucfg.n_steps, bound_probe.smoothing.sigma,
                                  bound_M(m.denoiser, size, size), alpha, opnorm);
      }

      for (std::size_t i = 0; i < ctx.targets.size(); ++i) {
        const ComplexImage& t = ctx.targets[i];
        const std::uint64_t item_seed = derive_seed(cfg.master_seed, {rng_stream::eval, i});
        const KSpaceData y = simulate_measurements(t, A, cfg.meas_noise_sigma, item_seed);
        ReconSpec spec = make_spec(m, ucfg, scfg);
        spec.smoothing.seed = derive_seed(item_seed, {rng_stream::smooth});

        const ReconTrace clean = reconstruct(spec, A, y);
        const KSpaceData y_noise = gaussian_perturb(y, A.mask, cfg.eval_noise_sigma, item_seed);
        const ReconTrace noisy = reconstruct(spec, A, y_noise);

        KSpaceData delta;
        if (kind == SweepKind::sigma) {
          delta = fixed_deltas[mi][i];
        } else {
          AttackConfig ac = acfg;
          ac.seed = derive_seed(item_seed, {rng_stream::attack});
          delta = pgd_attack(spec, A, y, t, ac).delta;
        }
        const ReconTrace robust = reconstruct(spec, A, add_kspace(y, delta));
        const double rob_err = image_dist(clean.final(), robust.final());

        acc.clean_psnr += psnr_capped(clean.final(), t);
        acc.clean_ssim += ssim(clean.final(), t);
        acc.noise_psnr += psnr_capped(noisy.final(), t);
        acc.noise_ssim += ssim(noisy.final(), t);
        acc.robust_psnr += psnr_capped(robust.final(), t);
        acc.robust_ssim += ssim(robust.final(), t);
        acc.rob_error += rob_err;
        acc.n += 1;
        if (!std::isnan(bound_Cn)) {
          const double dn = std::sqrt(dot(delta.re, delta.re) + dot(delta.im, delta.im));
          if (rob_err > bound_Cn * dn + 1e-12) acc.holds = false;
        }
      }

      MetricsRow row;
      row.method = m.name;
      row.kind = sweep_kind_name(kind);
      row.grid_value = g;
      const double n = std::max(1, acc.n);
      row.clean_psnr = acc.clean_psnr / n;
      row.clean_ssim = acc.clean_ssim / n;
      row.noise_psnr = acc.noise_psnr / n;
      row.noise_ssim = acc.noise_ssim / n;
      row.robust_psnr = acc.robust_psnr / n;
      row.robust_ssim = acc.robust_ssim / n;
      row.rob_error_mean = acc.rob_error / n;
      row.bound_Cn = bound_Cn;
      row.holds = acc.holds;
      row.wall_seconds = now_seconds() - t0;
      out.push_back(row);
    }
  }
  return out;
}

std::vector<std::string> metrics_csv_header() {
  return {"method",     "kind",       "grid_value", "clean_psnr",    "clean_ssim",
          "noise_psnr", "noise_ssim", "robust_psnr", "robust_ssim",  "rob_error_mean",
          "bound_Cn",   "holds",      "wall_seconds"};
}

std::vector<std::string> metrics_csv_row(const MetricsRow& r) {
  return {r.method,
          r.kind,
          CsvWriter::fmt(r.grid_value),
          CsvWriter::fmt(r.clean_psnr),
          CsvWriter::fmt(r.clean_ssim),
          CsvWriter::fmt(r.noise_psnr),
          CsvWriter::fmt(r.noise_ssim),
          CsvWriter::fmt(r.robust_psnr),
          CsvWriter::fmt(r.robust_ssim),
          CsvWriter::fmt(r.rob_error_mean),
          CsvWriter::fmt(r.bound_Cn),
          r.holds ? "true" : "false",
          CsvWriter::fmt(r.wall_seconds)};
}

std::vector<std::string> eval_csv_header() {
  return {"method",     "item",       "clean_psnr",  "clean_ssim", "noise_psnr",
          "noise_ssim", "robust_psnr", "robust_ssim", "rob_error"};
}

std::vector<std::string> trace_csv_header() {
  return {"method", "item", "step", "iterate_norm", "cg_iters", "cg_residual", "cg_converged"};
}

std::vector<std::vector<std::string>> trace_csv_rows(const std::string& method, int item,
                                                     const ReconTrace& tr) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t s = 0; s < tr.iterates.size(); ++s) {
    std::vector<std::string> row = {method, CsvWriter::fmt(static_cast<long>(item)),
                                    CsvWriter::fmt(static_cast<long>(s)),
                                    CsvWriter::fmt(image_norm(tr.iterates[s]))};
    if (s >= 1 && s - 1 < tr.cg.size()) {
      const CgStats& st = tr.cg[s - 1];
      row.push_back(CsvWriter::fmt(static_cast<long>(st.iters)));
      row.push_back(CsvWriter::fmt(st.residual));
      row.push_back(st.converged ? "true" : "false");
    } else {
      row.insert(row.end(), {"", "", ""});  // x^0 has no solve behind it
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> eval_csv_row(const EvalRow& r) {
  return {r.method,
          CsvWriter::fmt(static_cast<long>(r.item)),
          CsvWriter::fmt(r.clean_psnr),
          CsvWriter::fmt(r.clean_ssim),
          CsvWriter::fmt(r.noise_psnr),
          CsvWriter::fmt(r.noise_ssim),
          CsvWriter::fmt(r.robust_psnr),
          CsvWriter::fmt(r.robust_ssim),
          CsvWriter::fmt(r.rob_error)};
}

}  // namespace smug
