#include "smug/robustness.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

void validate(const AttackConfig& ac) {
  if (ac.epsilon_scale < 0.0) throw std::invalid_argument("AttackConfig: epsilon_scale >= 0");
  if (ac.steps < 1) throw std::invalid_argument("AttackConfig: steps >= 1");
  if (!(ac.step_size_multiple > 0.0))
    throw std::invalid_argument("AttackConfig: step_size_multiple > 0");
}

double epsilon_from_data(const KSpaceData& y, double scale) {
  if (scale < 0.0) throw std::invalid_argument("epsilon_from_data: scale must be >= 0");
  double m = 0.0;
  for (std::size_t i = 0; i < y.re.size(); ++i)
    m = std::max(m, std::max(std::fabs(y.re[i]), std::fabs(y.im[i])));
  return scale * m;
}

namespace {

double attack_objective_and_grad(const ReconSpec& recon, const ForwardOperator& A,
                                 const Tensor& y_chw, const Tensor& t_chw, Tensor* grad_out) {
  Tape tape;
  Variable y = grad_out ? tape.leaf(y_chw) : tape.constant(y_chw);
  Variable out = recon_forward(tape, recon, A, y);
  Variable obj = tape.sum_squares(tape.sub(out, tape.constant(t_chw)));
  const double value = tape.value(obj)[0];
  if (grad_out) {
    tape.backward(obj);
    *grad_out = tape.grad(y);
  }
  return value;
}

}  // namespace

PerturbationResult pgd_attack(const ReconSpec& recon, const ForwardOperator& A,
                              const KSpaceData& y, const ComplexImage& t, const AttackConfig& ac) {
  validate(ac);
  validate_kspace(y);
  validate_image(t);
  ReconSpec spec = recon;
  if (!ac.freeze_smoothing_noise)
    spec.smoothing.seed = derive_seed(ac.seed, {rng_stream::attack, 0xfeed});

  const double eps =
      ac.epsilon_override >= 0.0 ? ac.epsilon_override : epsilon_from_data(y, ac.epsilon_scale);
  const std::size_t n = y.height * y.width;
  const Tensor y0 = to_chw(y);
  const Tensor t_chw = to_chw(t);

  PerturbationResult res;
  res.epsilon = eps;
  res.delta = KSpaceData::zeros(y.height, y.width);
  Tensor delta({2, y.height, y.width});

  // objective at delta = 0
  double best = attack_objective_and_grad(spec, A, y0, t_chw, nullptr);
  res.objective = best;
  res.history.push_back(best);
  if (eps == 0.0) return res;

  const double step = ac.step_size_multiple * eps / static_cast<double>(ac.steps);
  Tensor best_delta = delta;
  for (int it = 0; it < ac.steps; ++it) {
    if (!ac.freeze_smoothing_noise)
      spec.smoothing.seed =
          derive_seed(ac.seed, {rng_stream::attack, static_cast<std::uint64_t>(it)});
    Tensor y_pert = y0;
    axpy(1.0, delta, y_pert);
    Tensor grad;
    attack_objective_and_grad(spec, A, y_pert, t_chw, &grad);
    // ascend the sign gradient on the sampled support, then project to the box
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double g = grad[i];
      delta[i] += step * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
      delta[i] = std::clamp(delta[i], -eps, eps);
      if (!A.mask.keep[i % n]) delta[i] = 0.0;
    }
    Tensor y_new = y0;
    axpy(1.0, delta, y_new);
    const double obj = attack_objective_and_grad(spec, A, y_new, t_chw, nullptr);
    if (obj > best) {
      best = obj;
      best_delta = delta;
    }
    res.history.push_back(best);
  }
  res.objective = best;
  res.delta = kspace_from_chw(best_delta);
  return res;
}

KSpaceData gaussian_perturb(const KSpaceData& y, const SamplingMask& mask, double sigma,
                            std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_perturb: sigma must be >= 0");
  validate_kspace(y);
  KSpaceData out = y;
  if (sigma == 0.0) return out;
  Rng rng = Rng::stream(seed, {rng_stream::eval, 1});
  const std::size_t npix = y.height * y.width;
  for (std::size_t i = 0; i < npix; ++i) {
    // draw for every bin so the stream is mask-independent, keep on support
    const double er = rng.normal(sigma);
    const double ei = rng.normal(sigma);
    if (mask.keep[i]) {
      out.re[i] += er;
      out.im[i] += ei;
    }
  }
  return out;
}

double theorem1_bound(int n, double sigma, double M, double alpha, double opnorm) {
  if (!(sigma > 0.0)) throw std::domain_error("theorem1_bound: sigma must be > 0");
  if (n < 0) throw std::invalid_argument("theorem1_bound: n must be >= 0");
  const double r = M * alpha / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  const double rn = std::pow(r, n);
  if (std::fabs(1.0 - r) < 1e-12)  // geometric sum degenerates to n terms of 1
    return alpha * opnorm * static_cast<double>(n) + opnorm;
  return alpha * opnorm * (1.0 - rn) / (1.0 - r) + opnorm * rn;
}

namespace {

KSpaceData add_kspace(const KSpaceData& y, const KSpaceData& d) {
  KSpaceData out = y;
  axpy(1.0, d.re, out.re);
  axpy(1.0, d.im, out.im);
  return out;
}

}  // namespace

double robustness_error(const ReconSpec& recon, const ForwardOperator& A, const KSpaceData& y,
                        const KSpaceData& delta) {
  const ReconTrace a = reconstruct(recon, A, y);
  const ReconTrace b = reconstruct(recon, A, add_kspace(y, delta));
  return image_dist(a.final(), b.final());
}

std::vector<double> robustness_error_per_step(const ReconSpec& recon, const ForwardOperator& A,
                                              const KSpaceData& y, const KSpaceData& delta) {
  const ReconTrace a = reconstruct(recon, A, y);
  const ReconTrace b = reconstruct(recon, A, add_kspace(y, delta));
  if (a.iterates.size() != b.iterates.size())
    throw std::logic_error("robustness_error_per_step: trace length mismatch");
  std::vector<double> out;
  for (std::size_t i = 0; i < a.iterates.size(); ++i)
    out.push_back(image_dist(a.iterates[i], b.iterates[i]));
  return out;
}

LemmaCheckReport lemma1_check(const DenoiserNet& theta, double sigma, const ComplexImage& x,
                              const ComplexImage& delta, int T_large, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw std::domain_error("lemma1_check: sigma must be > 0");
  if (T_large < 2) throw std::invalid_argument("lemma1_check: need at least 2 samples");
  validate_image(x);
  validate_image(delta);

  const std::size_t h = x.height, w = x.width;
  Tensor x_chw = to_chw(x);
  Tensor xd_chw = x_chw;
  axpy(1.0, to_chw(delta), xd_chw);

  // Shared noise across the two estimates: delta = 0 gives exactly 0.
  Tensor mean_a({2, h, w}), mean_b({2, h, w});
  double sq_a = 0.0, sq_b = 0.0;  // running sums of ||sample||^2 for SE estimates

  for (int t = 0; t < T_large; ++t) {
    Rng rng = Rng::stream(seed, {rng_stream::smooth, 0, static_cast<std::uint64_t>(t)});
    Tensor eta({2, h, w});
    rng.fill_normal(eta, sigma);

    Tape tape;
    DenoiserVars den = bind_denoiser(tape, theta, false);
    Tensor in_a = x_chw;
    axpy(1.0, eta, in_a);
    const Tensor& fa = tape.value(denoiser_forward(tape, den, tape.constant(in_a)));
    Tensor in_b = xd_chw;
    axpy(1.0, eta, in_b);
    const Tensor& fb = tape.value(denoiser_forward(tape, den, tape.constant(in_b)));

    axpy(1.0, fa, mean_a);
    axpy(1.0, fb, mean_b);
    sq_a += dot(fa, fa);
    sq_b += dot(fb, fb);
  }
  const double T = static_cast<double>(T_large);
  scale_inplace(mean_a, 1.0 / T);
  scale_inplace(mean_b, 1.0 / T);

  LemmaCheckReport rep;
  Tensor diff = mean_a;
  axpy(-1.0, mean_b, diff);
  rep.lhs = norm2(diff);

  const double delta_norm = image_norm(delta);
  rep.bound = bound_M(theta, h, w) / (std::sqrt(2.0 * std::numbers::pi) * sigma) * delta_norm;

  // SE of a vector-mean estimate: sqrt(sum_coords Var / T) per estimate.
  const double var_a = std::max(0.0, sq_a / T - dot(mean_a, mean_a));
  const double var_b = std::max(0.0, sq_b / T - dot(mean_b, mean_b));
  rep.stderr_slack = 3.0 * (std::sqrt(var_a / T) + std::sqrt(var_b / T));
  rep.holds = rep.lhs <= rep.bound + rep.stderr_slack;
  return rep;
}

}  // namespace smug
