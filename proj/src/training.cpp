#include "smug/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

UStabVariant ustab_variant_from_name(const std::string& name) {
  if (name == "denoised_target") return UStabVariant::denoised_target;
  if (name == "denoised_iterate") return UStabVariant::denoised_iterate;
  if (name == "raw_target") return UStabVariant::raw_target;
  if (name == "frozen_denoiser") return UStabVariant::frozen_denoiser;
  throw std::invalid_argument("unknown ustab variant: " + name);
}

std::string ustab_variant_name(UStabVariant v) {
  switch (v) {
    case UStabVariant::denoised_target: return "denoised_target";
    case UStabVariant::denoised_iterate: return "denoised_iterate";
    case UStabVariant::raw_target: return "raw_target";
    case UStabVariant::frozen_denoiser: return "frozen_denoiser";
  }
  return "unknown";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "modl") return TrainMode::modl;
  if (name == "rs_e2e") return TrainMode::rs_e2e;
  if (name == "smug") return TrainMode::smug;
  if (name == "wsmug") return TrainMode::wsmug;
  if (name == "istanet") return TrainMode::istanet;
  if (name == "istanet_smug") return TrainMode::istanet_smug;
  if (name == "istanet_wsmug") return TrainMode::istanet_wsmug;
  throw std::invalid_argument("unknown train mode: " + name);
}

std::string train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::modl: return "modl";
    case TrainMode::rs_e2e: return "rs_e2e";
    case TrainMode::smug: return "smug";
    case TrainMode::wsmug: return "wsmug";
    case TrainMode::istanet: return "istanet";
    case TrainMode::istanet_smug: return "istanet_smug";
    case TrainMode::istanet_wsmug: return "istanet_wsmug";
  }
  return "unknown";
}

void validate(const TrainConfig& tc) {
  if (tc.epochs < 1 || tc.batch_size < 1) throw std::invalid_argument("TrainConfig: bad loop sizes");
  if (!(tc.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (tc.beta1 < 0.0 || tc.beta1 >= 1.0 || tc.beta2 < 0.0 || tc.beta2 >= 1.0)
    throw std::invalid_argument("TrainConfig: betas must be in [0,1)");
  if (!(tc.lambda_ell > 0.0)) throw std::invalid_argument("TrainConfig: lambda_ell must be > 0");
  if (tc.sigma < 0.0 || tc.train_T < 1) throw std::invalid_argument("TrainConfig: bad smoothing");
}

AdamState make_adam_state(const std::vector<Tensor*>& params) {
  AdamState st;
  for (const Tensor* p : params) {
    st.m.emplace_back(p->shape());
    st.v.emplace_back(p->shape());
  }
  return st;
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, const TrainConfig& tc) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape bookkeeping mismatch");
  state.step += 1;
  const double b1t = 1.0 - std::pow(tc.beta1, static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(tc.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) throw std::invalid_argument("adam_step: grad shape mismatch");
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * g[j];
      v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * g[j] * g[j];
      const double mhat = m[j] / b1t;
      const double vhat = v[j] / b2t;
      p[j] -= tc.lr * mhat / (std::sqrt(vhat) + tc.adam_eps);
    }
  }
}

bool clip_gradients(std::vector<Tensor>& grads, double clip_norm) {
  if (clip_norm <= 0.0) return false;
  double total = 0.0;
  for (const Tensor& g : grads) total += dot(g, g);
  total = std::sqrt(total);
  if (total <= clip_norm) return false;
  const double s = clip_norm / total;
  for (Tensor& g : grads) scale_inplace(g, s);
  return true;
}

// -- loss builders ---------------------------------------------------------------

Variable pretrain_loss_var(Tape& tape, const DenoiserVars& den, Variable target,
                           const SmoothingConfig& sc) {
  const Tensor& tv = tape.value(target);
  const std::size_t h = tv.dim(1), w = tv.dim(2);
  Variable acc{};
  for (int t = 0; t < sc.samples; ++t) {
    Variable in = target;
    if (sc.sigma > 0.0) {
      Rng rng = Rng::stream(sc.seed, {rng_stream::pretrain, static_cast<std::uint64_t>(t)});
      Tensor eta({2, h, w});
      rng.fill_normal(eta, sc.sigma);
      in = tape.add(target, tape.constant(eta));
    }
    Variable term = tape.sum_squares(tape.sub(denoiser_forward(tape, den, in), target));
    acc = acc.valid() ? tape.add(acc, term) : term;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(sc.samples));
}

Variable ustab_loss_var(Tape& tape, const DenoiserVars& den,
                        const std::vector<Variable>& iterates, Variable target,
                        const SmoothingConfig& sc, UStabVariant variant,
                        const DenoiserVars* frozen) {
  if (iterates.empty()) throw std::invalid_argument("ustab_loss: empty trace");
  if (variant == UStabVariant::frozen_denoiser && frozen == nullptr)
    throw std::invalid_argument("ustab_loss: frozen_denoiser variant needs frozen weights");
  const Tensor& tv = tape.value(target);
  const std::size_t h = tv.dim(1), w = tv.dim(2);

  // Target branch shared across steps for the target-based variants.
  Variable shared_target{};
  if (variant == UStabVariant::denoised_target)
    shared_target = denoiser_forward(tape, den, target);
  else if (variant == UStabVariant::raw_target)
    shared_target = target;
  else if (variant == UStabVariant::frozen_denoiser)
    shared_target = denoiser_forward(tape, *frozen, target);

  Variable total{};
  const std::size_t n_steps = iterates.size() - 1;  // sum over n = 0..N-1
  for (std::size_t n = 0; n < n_steps; ++n) {
    Variable branch = shared_target;
    if (variant == UStabVariant::denoised_iterate)
      branch = denoiser_forward(tape, den, iterates[n]);
    Variable acc{};
    for (int t = 0; t < sc.samples; ++t) {
      Variable in = iterates[n];
      if (sc.sigma > 0.0) {
        Rng rng = Rng::stream(sc.seed, {rng_stream::ustab, n, static_cast<std::uint64_t>(t)});
        Tensor eta({2, h, w});
        rng.fill_normal(eta, sc.sigma);
        in = tape.add(iterates[n], tape.constant(eta));
      }
      Variable term = tape.sum_squares(tape.sub(denoiser_forward(tape, den, in), branch));
      acc = acc.valid() ? tape.add(acc, term) : term;
    }
    acc = tape.scale(acc, 1.0 / static_cast<double>(sc.samples));
    total = total.valid() ? tape.add(total, acc) : acc;
  }
  return total;
}

LossVars finetune_loss_var(Tape& tape, const DenoiserVars& den, const ForwardOperator& A,
                           Variable y, Variable target, const UnrollConfig& cfg,
                           const SmoothingConfig& sc, double lambda_ell, UStabVariant variant,
                           const DenoiserVars* frozen) {
  LossVars out;
  out.trace = smug_trace_var(tape, den, A, y, cfg, sc);
  out.recon = tape.sum_squares(tape.sub(out.trace.final_var, target));
  out.ustab = ustab_loss_var(tape, den, out.trace.iterates, target, sc, variant, frozen);
  out.total = tape.add(out.ustab, tape.scale(out.recon, lambda_ell));
  return out;
}

LossVars wfinetune_loss_var(Tape& tape, const DenoiserVars& den, const EncoderVars& enc,
                            const ForwardOperator& A, Variable y, Variable target,
                            const UnrollConfig& cfg, const SmoothingConfig& sc, double lambda_ell,
                            UStabVariant variant, const DenoiserVars* frozen) {
  LossVars out;
  out.trace = wsmug_trace_var(tape, den, enc, A, y, cfg, sc);
  out.recon = tape.sum_squares(tape.sub(out.trace.final_var, target));
  out.ustab = ustab_loss_var(tape, den, out.trace.iterates, target, sc, variant, frozen);
  out.total = tape.add(out.ustab, tape.scale(out.recon, lambda_ell));
  return out;
}

// -- plain evaluations -------------------------------------------------------------

double pretrain_loss(const DenoiserNet& theta, const ComplexImage& t, const SmoothingConfig& sc) {
  validate_image(t);
  validate(sc);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  Variable loss = pretrain_loss_var(tape, den, tape.constant(to_chw(t)), sc);
  return tape.value(loss)[0];
}

double ustab_loss(const DenoiserNet& theta, const ReconTrace& trace, const ComplexImage& t,
                  const SmoothingConfig& sc, UStabVariant variant, const DenoiserNet* frozen) {
  validate(sc);
  if (trace.iterates.empty()) throw std::invalid_argument("ustab_loss: empty trace");
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  std::optional<DenoiserVars> froz;
  if (frozen) froz = bind_denoiser(tape, *frozen, false);
  std::vector<Variable> iterates;
  for (const auto& img : trace.iterates) iterates.push_back(tape.constant(to_chw(img)));
  Variable loss = ustab_loss_var(tape, den, iterates, tape.constant(to_chw(t)), sc, variant,
                                 froz ? &*froz : nullptr);
  return tape.value(loss)[0];
}

LossReport finetune_loss(const DenoiserNet& theta, const ForwardOperator& A, const KSpaceData& y,
                         const ComplexImage& t, const UnrollConfig& cfg,
                         const SmoothingConfig& sc, const TrainConfig& tc) {
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  LossVars lv = finetune_loss_var(tape, den, A, tape.constant(to_chw(y)),
                                  tape.constant(to_chw(t)), cfg, sc, tc.lambda_ell,
                                  tc.ustab_variant, nullptr);
  LossReport rep;
  rep.total = tape.value(lv.total)[0];
  rep.recon = tape.value(lv.recon)[0];
  rep.ustab = tape.value(lv.ustab)[0];
  return rep;
}

LossReport wfinetune_loss(const DenoiserNet& theta, const WeightEncoder& phi,
                          const ForwardOperator& A, const KSpaceData& y, const ComplexImage& t,
                          const UnrollConfig& cfg, const SmoothingConfig& sc,
                          const TrainConfig& tc) {
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, theta, false);
  EncoderVars enc = bind_encoder(tape, phi, false);
  LossVars lv = wfinetune_loss_var(tape, den, enc, A, tape.constant(to_chw(y)),
                                   tape.constant(to_chw(t)), cfg, sc, tc.lambda_ell,
                                   tc.ustab_variant, nullptr);
  LossReport rep;
  rep.total = tape.value(lv.total)[0];
  rep.recon = tape.value(lv.recon)[0];
  rep.ustab = tape.value(lv.ustab)[0];
  return rep;
}

// -- training loops ------------------------------------------------------------------

namespace {

std::vector<Variable> leaves_of(const DenoiserVars& v) {
  std::vector<Variable> out;
  for (const auto& [k, b] : v.layers) {
    out.push_back(k);
    out.push_back(b);
  }
  return out;
}

std::vector<Variable> leaves_of(const EncoderVars& v) {
  std::vector<Variable> out;
  for (const auto& b : v.blocks) {
    out.push_back(b.kernel);
    out.push_back(b.bias);
    out.push_back(b.gamma);
    out.push_back(b.beta);
  }
  out.push_back(v.head_w);
  out.push_back(v.head_b);
  return out;
}

std::vector<Variable> leaves_of(const IstaVars& v) {
  std::vector<Variable> out;
  for (const auto& p : v.phases) {
    out.push_back(p.step_size);
    out.push_back(p.threshold);
    out.push_back(p.f1);
    out.push_back(p.f2);
    out.push_back(p.g1);
    out.push_back(p.g2);
  }
  return out;
}

void accumulate_grads(const Tape& tape, const std::vector<Variable>& leaves, double weight,
                      std::vector<Tensor>& into) {
  for (std::size_t i = 0; i < leaves.size(); ++i) axpy(weight, tape.grad(leaves[i]), into[i]);
}

std::vector<Tensor> zeros_like(const std::vector<Tensor*>& params) {
  std::vector<Tensor> out;
  for (const Tensor* p : params) out.emplace_back(p->shape());
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng::stream(seed, {rng_stream::shuffle, static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

double now_seconds() {
  using clk = std::chrono::steady_clock;
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

}  // namespace

DenoiserNet pretrain(const std::vector<ComplexImage>& targets, const DenoiserSpec& arch,
                     const TrainConfig& tc, std::vector<EpochRow>* log,
                     const EpochCallback& cb) {
  validate(tc);
  if (targets.empty()) throw std::invalid_argument("pretrain: empty dataset");
  DenoiserNet net = init_denoiser(arch, tc.seed);
  std::vector<Tensor*> params = params_of(net);
  AdamState adam = make_adam_state(params);

  TrainedModels snapshot;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double t0 = now_seconds();
    auto order = epoch_order(targets.size(), tc.seed, epoch);
    double epoch_loss = 0.0;
    bool clipped_any = false;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t bend = std::min(order.size(), b + static_cast<std::size_t>(tc.batch_size));
      std::vector<Tensor> grads = zeros_like(params);
      const double wbatch = 1.0 / static_cast<double>(bend - b);
      for (std::size_t k = b; k < bend; ++k) {
        const std::size_t item = order[k];
        Tape tape;
        DenoiserVars den = bind_denoiser(tape, net, true);
        SmoothingConfig sc{tc.sigma, tc.train_T,
                           derive_seed(tc.seed, {rng_stream::pretrain,
                                                 static_cast<std::uint64_t>(epoch), item})};
        Variable loss = pretrain_loss_var(tape, den, tape.constant(to_chw(targets[item])), sc);
        tape.backward(loss);
        epoch_loss += tape.value(loss)[0];
        accumulate_grads(tape, leaves_of(den), wbatch, grads);
      }
      clipped_any |= clip_gradients(grads, tc.clip_norm);
      adam_step(adam, params, grads, tc);
    }
    EpochRow row;
    row.epoch = epoch;
    row.total = epoch_loss / static_cast<double>(targets.size());
    row.recon = row.total;
    row.ustab = 0.0;
    row.wall_seconds = now_seconds() - t0;
    row.clipped = clipped_any;
    if (log) log->push_back(row);
    if (cb) {
      snapshot.denoiser = net;
      snapshot.log.assign(1, row);
      cb(epoch, snapshot);
    }
  }
  return net;
}

TrainedModels finetune(const std::vector<TrainItem>& items, const ForwardOperator& A,
                       const DenoiserNet& theta_pre, const TrainConfig& tc,
                       const FinetuneOptions& opt, const EpochCallback& cb) {
  validate(tc);
  validate(opt.unroll);
  if (items.empty()) throw std::invalid_argument("finetune: empty dataset");
  const bool is_ista = opt.mode == TrainMode::istanet || opt.mode == TrainMode::istanet_smug ||
                       opt.mode == TrainMode::istanet_wsmug;
  const bool has_encoder = opt.mode == TrainMode::wsmug || opt.mode == TrainMode::istanet_wsmug;

  TrainedModels models;
  models.denoiser = theta_pre;
  if (has_encoder) models.encoder = init_encoder(opt.encoder_spec, tc.seed);
  if (is_ista) models.ista = init_istanet(opt.ista_spec, tc.seed);

  std::vector<Tensor*> params;
  if (!is_ista)
    params = params_of(models.denoiser);
  else
    params = params_of(*models.ista);
  if (has_encoder)
    for (Tensor* p : params_of(*models.encoder)) params.push_back(p);
  AdamState adam = make_adam_state(params);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double t0 = now_seconds();
    auto order = epoch_order(items.size(), tc.seed, epoch);
    double etotal = 0.0, erecon = 0.0, eustab = 0.0;
    bool clipped_any = false;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t bend = std::min(order.size(), b + static_cast<std::size_t>(tc.batch_size));
      std::vector<Tensor> grads = zeros_like(params);
      const double wbatch = 1.0 / static_cast<double>(bend - b);
      for (std::size_t k = b; k < bend; ++k) {
        const std::size_t item = order[k];
        Tape tape;
        Variable y = tape.constant(to_chw(items[item].y));
        Variable target = tape.constant(to_chw(items[item].target));
        const SmoothingConfig sc{tc.sigma, tc.train_T,
                                 derive_seed(tc.seed, {rng_stream::smooth,
                                                       static_cast<std::uint64_t>(epoch), item})};
        std::vector<Variable> leaves;
        Variable total{}, recon{}, ustab{};

        if (!is_ista) {
          DenoiserVars den = bind_denoiser(tape, models.denoiser, true);
          leaves = leaves_of(den);
          if (opt.mode == TrainMode::modl) {
            TraceVars tv = modl_trace_var(tape, den, A, y, opt.unroll);
            recon = tape.sum_squares(tape.sub(tv.final_var, target));
            total = recon;
          } else if (opt.mode == TrainMode::rs_e2e) {
            Variable out = rs_e2e_var(tape, den, A, y, opt.unroll, sc);
            recon = tape.sum_squares(tape.sub(out, target));
            total = recon;
          } else if (opt.mode == TrainMode::smug) {
            LossVars lv = finetune_loss_var(tape, den, A, y, target, opt.unroll, sc,
                                            tc.lambda_ell, tc.ustab_variant, nullptr);
            total = lv.total;
            recon = lv.recon;
            ustab = lv.ustab;
          } else {  // wsmug
            EncoderVars enc = bind_encoder(tape, *models.encoder, true);
            for (Variable v : leaves_of(enc)) leaves.push_back(v);
            LossVars lv = wfinetune_loss_var(tape, den, enc, A, y, target, opt.unroll, sc,
                                             tc.lambda_ell, tc.ustab_variant, nullptr);
            total = lv.total;
            recon = lv.recon;
            ustab = lv.ustab;
          }
        } else {
          IstaVars ista = bind_istanet(tape, *models.ista, true);
          leaves = leaves_of(ista);
          std::optional<EncoderVars> enc;
          if (has_encoder) {
            enc = bind_encoder(tape, *models.encoder, true);
            for (Variable v : leaves_of(*enc)) leaves.push_back(v);
          }
          const IstaMode mode = opt.mode == TrainMode::istanet ? IstaMode::vanilla
                                : opt.mode == TrainMode::istanet_smug ? IstaMode::smug
                                                                      : IstaMode::wsmug;
          TraceVars tv = istanet_trace_var(tape, ista, enc ? &*enc : nullptr, A, y, opt.unroll,
                                           sc, mode);
          recon = tape.sum_squares(tape.sub(tv.final_var, target));
          // identity-constraint term: Fhat(F(x)) should stay close to x
          Variable constraint{};
          for (std::size_t n = 0; n < tv.iterates.size() - 1 &&
                                  n < models.ista->phases.size();
               ++n) {
            const auto& ph = ista.phases[n];
            Variable u = tape.conv2d(tape.relu(tape.conv2d(tv.iterates[n], ph.f1)), ph.f2);
            Variable back = tape.conv2d(tape.relu(tape.conv2d(u, ph.g1)), ph.g2);
            Variable term = tape.sum_squares(tape.sub(back, tv.iterates[n]));
            constraint = constraint.valid() ? tape.add(constraint, term) : term;
          }
          total = constraint.valid()
                      ? tape.add(recon, tape.scale(constraint, opt.ista_constraint_weight))
                      : recon;
        }

        tape.backward(total);
        etotal += tape.value(total)[0];
        erecon += recon.valid() ? tape.value(recon)[0] : 0.0;
        eustab += ustab.valid() ? tape.value(ustab)[0] : 0.0;
        accumulate_grads(tape, leaves, wbatch, grads);
      }
      clipped_any |= clip_gradients(grads, tc.clip_norm);
      adam_step(adam, params, grads, tc);
    }
    EpochRow row;
    row.epoch = epoch;
    const auto n = static_cast<double>(items.size());
    row.total = etotal / n;
    row.recon = erecon / n;
    row.ustab = eustab / n;
    row.wall_seconds = now_seconds() - t0;
    row.clipped = clipped_any;
    models.log.push_back(row);
    if (cb) cb(epoch, models);
  }
  return models;
}

}  // namespace smug
