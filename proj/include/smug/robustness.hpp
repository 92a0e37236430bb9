#pragma once

#include <cstdint>
#include <vector>

#include "smug/recon.hpp"

namespace smug {

struct AttackConfig {
  double epsilon_scale = 0.02;  // epsilon = scale * max k-space |Re|/|Im| unless overridden
  double epsilon_override = -1.0;
  int steps = 10;
  double step_size_multiple = 2.5;  // step = multiple * epsilon / steps
  std::uint64_t seed = 0;
  bool freeze_smoothing_noise = true;
};

void validate(const AttackConfig& ac);

struct PerturbationResult {
  KSpaceData delta;                // ||delta||_inf <= epsilon on both planes, masked support
  double epsilon = 0.0;
  double objective = 0.0;          // best reconstruction error found
  std::vector<double> history;     // running best per evaluation
};

/// epsilon = scale * max over entries of max(|Re|, |Im|).
double epsilon_from_data(const KSpaceData& y, double scale);

/// l_inf-constrained sign-gradient ascent on the measurement perturbation,
/// maximizing ||recon(y+delta) - t||^2. Box projection is the last operation
/// of every step; the best-objective delta over the trajectory is returned.
/// With freeze_smoothing_noise the smoothing draws are identical at every
/// step, making the objective a deterministic function of delta.
PerturbationResult pgd_attack(const ReconSpec& recon, const ForwardOperator& A,
                              const KSpaceData& y, const ComplexImage& t, const AttackConfig& ac);

/// y + eta, eta i.i.d. N(0, sigma^2) per real/imag plane on the sampled support.
KSpaceData gaussian_perturb(const KSpaceData& y, const SamplingMask& mask, double sigma,
                            std::uint64_t seed);

/// C_n = alpha*||A||*(1-r^n)/(1-r) + ||A||*r^n with r = M*alpha/(sqrt(2 pi) sigma);
/// the r = 1 case degenerates to alpha*||A||*n + ||A||. sigma must be > 0.
double theorem1_bound(int n, double sigma, double M, double alpha, double opnorm);

/// ||recon(y) - recon(y+delta)||_2 with a shared smoothing seed.
double robustness_error(const ReconSpec& recon, const ForwardOperator& A, const KSpaceData& y,
                        const KSpaceData& delta);

/// Per-step robustness errors ||x^n(y) - x^n(y+delta)|| for n = 0..N.
std::vector<double> robustness_error_per_step(const ReconSpec& recon, const ForwardOperator& A,
                                              const KSpaceData& y, const KSpaceData& delta);

struct LemmaCheckReport {
  double lhs = 0.0;           // ||g_hat(x) - g_hat(x+delta)||
  double bound = 0.0;         // (M / (sqrt(2 pi) sigma)) ||delta||
  double stderr_slack = 0.0;  // 3 * (SE_x + SE_{x+delta})
  bool holds = false;         // lhs <= bound + stderr_slack
};

/// Monte-Carlo audit of the smoothed-denoiser Lipschitz bound with shared
/// noise samples and a 3-standard-error statistical slack per estimate.
LemmaCheckReport lemma1_check(const DenoiserNet& theta, double sigma, const ComplexImage& x,
                              const ComplexImage& delta, int T_large, std::uint64_t seed = 0);

/// (alpha, ||A||, M, r, C_n, measured errors) for one trained model/mask pair.
struct BoundReport {
  int n = 0;
  double sigma = 0.0;
  double M = 0.0;
  double alpha = 0.0;
  double opnorm = 0.0;
  double r = 0.0;
  double C_n = 0.0;
  std::vector<double> errors;       // measured robustness errors at step n
  std::vector<double> delta_norms;  // matching ||delta||_2 values
  bool holds = false;               // every error <= C_n * ||delta||
};

}  // namespace smug
