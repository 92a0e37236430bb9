#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "smug/recon.hpp"

namespace smug {

enum class UStabVariant { denoised_target, denoised_iterate, raw_target, frozen_denoiser };

UStabVariant ustab_variant_from_name(const std::string& name);
std::string ustab_variant_name(UStabVariant v);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 2;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_ell = 1.0;   // reconstruction weight in the fine-tune loss
  double sigma = 0.05;       // training-time smoothing noise std
  int train_T = 2;           // Monte-Carlo draws per expectation during training
  std::uint64_t seed = 0;
  UStabVariant ustab_variant = UStabVariant::denoised_target;
  double clip_norm = 10.0;   // global-norm gradient clip; <= 0 disables
};

void validate(const TrainConfig& tc);

struct AdamState {
  std::vector<Tensor> m, v;
  long step = 0;
};

AdamState make_adam_state(const std::vector<Tensor*>& params);

/// Bias-corrected Adam update, in place. Shapes of params/grads/state must align.
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, const TrainConfig& tc);

/// Scales grads to global norm clip_norm when exceeded; returns true if clipped.
bool clip_gradients(std::vector<Tensor>& grads, double clip_norm);

struct LossReport {
  double total = 0.0;
  double recon = 0.0;
  double ustab = 0.0;
  bool clipped = false;
  std::vector<double> history;  // per-epoch totals when produced by a training run
};

// -- loss builders (on tape; parameters bound by caller) ------------------------

/// (1/T) sum_t ||D(t + eta_t) - t||^2
Variable pretrain_loss_var(Tape& tape, const DenoiserVars& den, Variable target,
                           const SmoothingConfig& sc);

/// sum_{n=0}^{N-1} (1/T) sum_t ||D(x^n + eta) - target_branch||^2 over the
/// iterates of the current forward pass (gradient flows through them).
Variable ustab_loss_var(Tape& tape, const DenoiserVars& den,
                        const std::vector<Variable>& iterates, Variable target,
                        const SmoothingConfig& sc, UStabVariant variant,
                        const DenoiserVars* frozen = nullptr);

struct LossVars {
  Variable total, recon, ustab;
  TraceVars trace;
};

LossVars finetune_loss_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A,
                           Variable y, Variable target, const UnrollConfig& cfg,
                           const SmoothingConfig& sc, double lambda_ell, UStabVariant variant,
                           const DenoiserVars* frozen = nullptr);

LossVars wfinetune_loss_var(Tape& tape, const DenoiserVars& den, const EncoderVars& enc,
                            const ForwardOperator& A, Variable y, Variable target,
                            const UnrollConfig& cfg, const SmoothingConfig& sc, double lambda_ell,
                            UStabVariant variant, const DenoiserVars* frozen = nullptr);

// -- plain evaluations -----------------------------------------------------------

double pretrain_loss(const DenoiserNet& theta, const ComplexImage& t, const SmoothingConfig& sc);
double ustab_loss(const DenoiserNet& theta, const ReconTrace& trace, const ComplexImage& t,
                  const SmoothingConfig& sc, UStabVariant variant,
                  const DenoiserNet* frozen = nullptr);
LossReport finetune_loss(const DenoiserNet& theta, const ForwardOperator& A, const KSpaceData& y,
                         const ComplexImage& t, const UnrollConfig& cfg,
                         const SmoothingConfig& sc, const TrainConfig& tc);
LossReport wfinetune_loss(const DenoiserNet& theta, const WeightEncoder& phi,
                          const ForwardOperator& A, const KSpaceData& y, const ComplexImage& t,
                          const UnrollConfig& cfg, const SmoothingConfig& sc,
                          const TrainConfig& tc);

// -- training loops -----------------------------------------------------------------

struct TrainItem {
  KSpaceData y;
  ComplexImage target;
};

struct EpochRow {
  int epoch = 0;
  double total = 0.0;
  double recon = 0.0;
  double ustab = 0.0;
  double wall_seconds = 0.0;
  bool clipped = false;
};

enum class TrainMode { modl, rs_e2e, smug, wsmug, istanet, istanet_smug, istanet_wsmug };

TrainMode train_mode_from_name(const std::string& name);
std::string train_mode_name(TrainMode m);

struct FinetuneOptions {
  TrainMode mode = TrainMode::smug;
  UnrollConfig unroll;
  EncoderSpec encoder_spec;           // weighted modes
  IstaSpec ista_spec;                 // istanet modes
  double ista_constraint_weight = 10.0;
};

struct TrainedModels {
  DenoiserNet denoiser;
  std::optional<WeightEncoder> encoder;
  std::optional<IstaNetParams> ista;
  std::vector<EpochRow> log;
};

/// Called after every epoch (checkpoint writers hook in here).
using EpochCallback = std::function<void(int epoch, const TrainedModels& current)>;

DenoiserNet pretrain(const std::vector<ComplexImage>& targets, const DenoiserSpec& arch,
                     const TrainConfig& tc, std::vector<EpochRow>* log = nullptr,
                     const EpochCallback& cb = {});

TrainedModels finetune(const std::vector<TrainItem>& items, const ForwardOperator& A,
                       const DenoiserNet& theta_pre, const TrainConfig& tc,
                       const FinetuneOptions& opt, const EpochCallback& cb = {});

}  // namespace smug
