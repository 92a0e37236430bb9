#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smug/checkpoint.hpp"
#include "smug/config.hpp"
#include "smug/metrics.hpp"
#include "smug/robustness.hpp"

namespace smug {

/// Loaded model bundle for one reconstruction method.
struct MethodModels {
  std::string name;
  ReconMethod method = ReconMethod::modl;
  DenoiserNet denoiser;
  std::optional<WeightEncoder> encoder;
  std::optional<IstaNetParams> ista;
};

ReconSpec make_spec(const MethodModels& m, const UnrollConfig& cfg, const SmoothingConfig& sc);

// -- dataset and model containers ------------------------------------------------

void save_dataset(const std::string& path, const std::vector<ComplexImage>& images,
                  const nlohmann::json& meta);
std::vector<ComplexImage> load_dataset(const std::string& path, nlohmann::json* meta = nullptr);

void save_models(const std::string& path, const std::string& method,
                 const DenoiserNet& denoiser, const WeightEncoder* encoder,
                 const IstaNetParams* ista, const nlohmann::json& meta);
MethodModels load_models(const std::string& path);

// -- per-item evaluation -----------------------------------------------------------

struct EvalRow {
  std::string method;
  int item = 0;
  double clean_psnr = 0, clean_ssim = 0;
  double noise_psnr = 0, noise_ssim = 0;
  double robust_psnr = 0, robust_ssim = 0;
  double rob_error = 0;  // ||recon(y) - recon(y+delta_pgd)||
};

struct EvalContext {
  ForwardOperator A;
  std::vector<ComplexImage> targets;
  double meas_noise_sigma = 0.0;
  double eval_noise_sigma = 0.01;
  AttackConfig attack;
  std::uint64_t seed = 0;
};

/// Clean / Gaussian-noise / white-box-PGD metrics for every item.
std::vector<EvalRow> evaluate_method(const MethodModels& m, const EvalContext& ctx,
                                     const UnrollConfig& cfg, const SmoothingConfig& sc);

// -- sweeps ------------------------------------------------------------------------

enum class SweepKind { epsilon, sigma, accel, unroll_steps, mc_samples };

SweepKind sweep_kind_from_name(const std::string& name);
std::string sweep_kind_name(SweepKind k);

/// One aggregated row per (method, grid point); the sweep CSV schema.
struct MetricsRow {
  std::string method;
  std::string kind;
  double grid_value = 0;
  double clean_psnr = 0, clean_ssim = 0;
  double noise_psnr = 0, noise_ssim = 0;
  double robust_psnr = 0, robust_ssim = 0;
  double rob_error_mean = 0;
  double bound_Cn = 0;  // NaN for methods without a smoothing bound
  bool holds = true;
  double wall_seconds = 0;
};

struct SweepContext {
  std::vector<MethodModels> methods;
  std::vector<ComplexImage> targets;
  ExperimentConfig cfg;  // base configuration; mask rebuilt per accel point
};

std::vector<MetricsRow> sweep(SweepKind kind, const std::vector<double>& grid,
                              const SweepContext& ctx);

std::vector<std::string> metrics_csv_header();
std::vector<std::string> metrics_csv_row(const MetricsRow& r);
std::vector<std::string> eval_csv_header();
std::vector<std::string> eval_csv_row(const EvalRow& r);

// Per-iterate trace export (norms and CG residuals), one row per step.
std::vector<std::string> trace_csv_header();
std::vector<std::vector<std::string>> trace_csv_rows(const std::string& method, int item,
                                                     const ReconTrace& tr);

}  // namespace smug
