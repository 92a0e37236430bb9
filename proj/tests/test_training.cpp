#include <doctest.h>

#include "smug/phantom.hpp"
#include "smug/rng.hpp"
#include "smug/training.hpp"

using namespace smug;

namespace {

ComplexImage random_image(std::size_t h, std::size_t w, std::uint64_t seed, double sigma = 1.0) {
  ComplexImage x(h, w);
  Rng rng(seed);
  rng.fill_normal(x.re, sigma);
  rng.fill_normal(x.im, sigma);
  return x;
}

DenoiserNet small_net(std::uint64_t seed, int layers = 2, int channels = 6) {
  DenoiserSpec spec;
  spec.n_layers = layers;
  spec.hidden_channels = channels;
  return init_denoiser(spec, seed);
}

DenoiserNet zero_net() {
  DenoiserNet net = small_net(0);
  for (auto& l : net.layers) {
    for (std::size_t i = 0; i < l.kernel.size(); ++i) l.kernel[i] = 0.0;
    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.0;
  }
  return net;
}

double img_sq_dist(const ComplexImage& a, const ComplexImage& b) {
  const double d = image_dist(a, b);
  return d * d;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("pretrain_loss: zero-parameter net on t=0 with sigma=0 gives 0") {
  ComplexImage t(8, 8);
  CHECK(pretrain_loss(zero_net(), t, {0.0, 1, 0}) == 0.0);
}

TEST_CASE("pretrain_loss: sigma=0 equals ||D(t) - t||^2 exactly") {
  DenoiserNet net = small_net(1);
  ComplexImage t = random_image(8, 8, 2, 0.4);
  const double loss = pretrain_loss(net, t, {0.0, 3, 9});
  CHECK(loss == doctest::Approx(img_sq_dist(denoise(net, t), t)).epsilon(1e-12));
}

TEST_CASE("pretrain_loss: T=2 equals the hand-summed two-term average") {
  DenoiserNet net = small_net(3);
  ComplexImage t = random_image(8, 8, 4, 0.4);
  SmoothingConfig sc{0.05, 2, 21};
  const double got = pretrain_loss(net, t, sc);

  double want = 0.0;
  for (std::uint64_t s = 0; s < 2; ++s) {
    Rng rng = Rng::stream(sc.seed, {rng_stream::pretrain, s});
    Tensor eta({2, 8, 8});
    rng.fill_normal(eta, sc.sigma);
    Tensor in = to_chw(t);
    axpy(1.0, eta, in);
    want += img_sq_dist(denoise(net, image_from_chw(in)), t);
  }
  want /= 2.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ustab_loss: sigma=0 with all iterates equal to t is 0 (denoised_target)") {
  DenoiserNet net = small_net(5);
  ComplexImage t = random_image(8, 8, 6, 0.4);
  ReconTrace trace;
  trace.iterates = {t, t, t};  // N = 2 steps, every x^n = t
  const double loss = ustab_loss(net, trace, t, {0.0, 2, 3}, UStabVariant::denoised_target);
  CHECK(loss == 0.0);
}

TEST_CASE("ustab_loss: N=1 is a single expectation term") {
  DenoiserNet net = small_net(7);
  ComplexImage t = random_image(8, 8, 8, 0.4);
  ComplexImage x0 = random_image(8, 8, 9, 0.4);
  ReconTrace trace;
  trace.iterates = {x0, t};  // one step
  SmoothingConfig sc{0.03, 1, 31};
  const double got = ustab_loss(net, trace, t, sc, UStabVariant::denoised_target);

  Rng rng = Rng::stream(sc.seed, {rng_stream::ustab, 0, 0});
  Tensor eta({2, 8, 8});
  rng.fill_normal(eta, sc.sigma);
  Tensor in = to_chw(x0);
  axpy(1.0, eta, in);
  const double want = img_sq_dist(denoise(net, image_from_chw(in)), denoise(net, t));
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ustab_loss: N=2, T=1 equals the hand-computed two-term sum") {
  DenoiserNet net = small_net(10);
  ComplexImage t = random_image(8, 8, 11, 0.4);
  ComplexImage x0 = random_image(8, 8, 12, 0.4);
  ComplexImage x1 = random_image(8, 8, 13, 0.4);
  ReconTrace trace;
  trace.iterates = {x0, x1, t};
  SmoothingConfig sc{0.04, 1, 32};
  const double got = ustab_loss(net, trace, t, sc, UStabVariant::denoised_target);

  double want = 0.0;
  const ComplexImage dt = denoise(net, t);
  const ComplexImage* xs[2] = {&x0, &x1};
  for (std::uint64_t n = 0; n < 2; ++n) {
    Rng rng = Rng::stream(sc.seed, {rng_stream::ustab, n, 0});
    Tensor eta({2, 8, 8});
    rng.fill_normal(eta, sc.sigma);
    Tensor in = to_chw(*xs[n]);
    axpy(1.0, eta, in);
    want += img_sq_dist(denoise(net, image_from_chw(in)), dt);
  }
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ustab variants: raw_target and denoised_iterate change the branch") {
  DenoiserNet net = small_net(14);
  ComplexImage t = random_image(8, 8, 15, 0.4);
  ComplexImage x0 = random_image(8, 8, 16, 0.4);
  ReconTrace trace;
  trace.iterates = {x0, t};
  SmoothingConfig sc{0.0, 1, 0};
  const double raw = ustab_loss(net, trace, t, sc, UStabVariant::raw_target);
  CHECK(raw == doctest::Approx(img_sq_dist(denoise(net, x0), t)).epsilon(1e-12));
  const double den_it = ustab_loss(net, trace, t, sc, UStabVariant::denoised_iterate);
  CHECK(den_it == 0.0);  // sigma=0: D(x0) - D(x0)
}

TEST_CASE("ustab frozen_denoiser: frozen weights receive exactly zero gradient") {
  DenoiserNet net = small_net(17);
  DenoiserNet frozen = small_net(18);
  ComplexImage t = random_image(8, 8, 19, 0.4);
  ComplexImage x0 = random_image(8, 8, 20, 0.4);

  Tape tape;
  DenoiserVars den = bind_denoiser(tape, net, true);
  DenoiserVars froz = bind_denoiser(tape, frozen, false);
  std::vector<Variable> iterates = {tape.constant(to_chw(x0)), tape.constant(to_chw(t))};
  Variable loss = ustab_loss_var(tape, den, iterates, tape.constant(to_chw(t)), {0.02, 2, 5},
                                 UStabVariant::frozen_denoiser, &froz);
  tape.backward(loss);
  for (const auto& [k, b] : froz.layers) {
    CHECK(norm2(tape.grad(k)) == 0.0);
    CHECK(norm2(tape.grad(b)) == 0.0);
  }
  // while the trainable denoiser does get gradient
  double gnorm = 0.0;
  for (const auto& [k, b] : den.layers) gnorm += norm2(tape.grad(k));
  CHECK(gnorm > 0.0);
}

TEST_CASE("finetune_loss: lambda_ell=0 collapses the total to the ustab term") {
  ForwardOperator A{make_vd_mask(8, 8, 2.0, 0.2, 30)};
  ComplexImage t = random_image(8, 8, 31, 0.4);
  KSpaceData y = apply_forward(A, t);
  UnrollConfig cfg;
  cfg.n_steps = 2;
  TrainConfig tc;
  tc.lambda_ell = 0.0;
  LossReport rep = finetune_loss(small_net(32), A, y, t, cfg, {0.03, 2, 41}, tc);
  CHECK(rep.total == doctest::Approx(rep.ustab).epsilon(1e-12));
}

TEST_CASE("finetune_loss composition: total = ustab + lambda_ell * recon to 1e-10") {
  ForwardOperator A{make_vd_mask(8, 8, 2.0, 0.2, 33)};
  ComplexImage t = random_image(8, 8, 34, 0.4);
  KSpaceData y = apply_forward(A, t);
  UnrollConfig cfg;
  cfg.n_steps = 3;
  TrainConfig tc;
  tc.lambda_ell = 2.5;
  LossReport rep = finetune_loss(small_net(35), A, y, t, cfg, {0.05, 2, 42}, tc);
  CHECK(std::fabs(rep.total - (rep.ustab + 2.5 * rep.recon)) < 1e-10 * (1.0 + rep.total));
}

TEST_CASE("finetune_loss: zero pipeline on zero data gives exactly zero total") {
  ForwardOperator A{make_vd_mask(8, 8, 2.0, 0.2, 36)};
  ComplexImage t(8, 8);
  KSpaceData y = apply_forward(A, t);
  UnrollConfig cfg;
  cfg.n_steps = 2;
  TrainConfig tc;
  LossReport rep = finetune_loss(zero_net(), A, y, t, cfg, {0.0, 1, 0}, tc);
  CHECK(rep.total == 0.0);
}

TEST_CASE("finetune gradient matches finite differences on probe parameters") {
  ForwardOperator A{make_vd_mask(8, 8, 4.0, 0.1, 37)};
  ComplexImage t = random_image(8, 8, 38, 0.4);
  KSpaceData y = apply_forward(A, t);
  UnrollConfig cfg;
  cfg.n_steps = 2;
  cfg.cg_tol = 1e-12;
  SmoothingConfig sc{0.03, 2, 43};
  const double lambda_ell = 1.0;
  DenoiserNet net = small_net(39);

  Tape tape;
  DenoiserVars den = bind_denoiser(tape, net, true);
  LossVars lv = finetune_loss_var(tape, den, A, tape.constant(to_chw(y)),
                                  tape.constant(to_chw(t)), cfg, sc, lambda_ell,
                                  UStabVariant::denoised_target, nullptr);
  tape.backward(lv.total);

  auto eval = [&](const DenoiserNet& probe) {
    Tape tp;
    DenoiserVars dv = bind_denoiser(tp, probe, false);
    LossVars l = finetune_loss_var(tp, dv, A, tp.constant(to_chw(y)), tp.constant(to_chw(t)),
                                   cfg, sc, lambda_ell, UStabVariant::denoised_target, nullptr);
    return tp.value(l.total)[0];
  };

  // a handful of probe coordinates across layers
  const double step = 1e-6;
  for (std::size_t layer : {0u, 1u}) {
    Tensor analytic = tape.grad(den.layers[layer].first);
    for (std::size_t idx : {0u, 7u, 13u}) {
      DenoiserNet probe = net;
      probe.layers[layer].kernel[idx] += step;
      const double fp = eval(probe);
      probe.layers[layer].kernel[idx] -= 2.0 * step;
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * step);
      CHECK(std::fabs(analytic[idx] - numeric) <
            1e-4 * std::max({std::fabs(analytic[idx]), std::fabs(numeric), 1e-8}));
    }
  }
}

TEST_CASE("wfinetune_loss: constant encoder equals finetune_loss; dphi=0 at sigma=0") {
  ForwardOperator A{make_vd_mask(8, 8, 2.0, 0.2, 44)};
  ComplexImage t = random_image(8, 8, 45, 0.4);
  KSpaceData y = apply_forward(A, t);
  UnrollConfig cfg;
  cfg.n_steps = 2;
  TrainConfig tc;
  WeightEncoder enc = init_encoder(EncoderSpec{}, 46);
  for (std::size_t i = 0; i < enc.head_w.size(); ++i) enc.head_w[i] = 0.0;
  enc.head_b[0] = 0.0;
  DenoiserNet net = small_net(47);
  SmoothingConfig sc{0.04, 2, 48};
  LossReport a = wfinetune_loss(net, enc, A, y, t, cfg, sc, tc);
  LossReport b = finetune_loss(net, A, y, t, cfg, sc, tc);
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));

  // sigma = 0: all smoothing samples identical, so the weighted mean cannot
  // depend on the encoder -> zero gradient through phi
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, net, false);
  WeightEncoder enc2 = init_encoder(EncoderSpec{}, 49);
  EncoderVars ev = bind_encoder(tape, enc2, true);
  SmoothingConfig sc0{0.0, 3, 0};
  LossVars lv = wfinetune_loss_var(tape, den, ev, A, tape.constant(to_chw(y)),
                                   tape.constant(to_chw(t)), cfg, sc0, tc.lambda_ell,
                                   UStabVariant::denoised_target, nullptr);
  tape.backward(lv.total);
  double gphi = 0.0;
  for (const auto& blk : ev.blocks)
    gphi += norm2(tape.grad(blk.kernel)) + norm2(tape.grad(blk.bias)) +
            norm2(tape.grad(blk.gamma)) + norm2(tape.grad(blk.beta));
  gphi += norm2(tape.grad(ev.head_w)) + norm2(tape.grad(ev.head_b));
  CHECK(gphi < 1e-10);
}

TEST_CASE("wfinetune joint gradient check on denoiser and encoder probes") {
  ForwardOperator A{make_vd_mask(8, 8, 4.0, 0.1, 50)};
  ComplexImage t = random_image(8, 8, 51, 0.4);
  KSpaceData y = apply_forward(A, t);
  UnrollConfig cfg;
  cfg.n_steps = 1;
  cfg.cg_tol = 1e-12;
  SmoothingConfig sc{0.05, 2, 52};
  DenoiserNet net = small_net(53);
  WeightEncoder enc = init_encoder(EncoderSpec{}, 54);

  Tape tape;
  DenoiserVars den = bind_denoiser(tape, net, true);
  EncoderVars ev = bind_encoder(tape, enc, true);
  LossVars lv = wfinetune_loss_var(tape, den, ev, A, tape.constant(to_chw(y)),
                                   tape.constant(to_chw(t)), cfg, sc, 1.0,
                                   UStabVariant::denoised_target, nullptr);
  tape.backward(lv.total);

  auto eval = [&](const DenoiserNet& dn, const WeightEncoder& en) {
    Tape tp;
    DenoiserVars dv = bind_denoiser(tp, dn, false);
    EncoderVars e2 = bind_encoder(tp, en, false);
    LossVars l = wfinetune_loss_var(tp, dv, e2, A, tp.constant(to_chw(y)),
                                    tp.constant(to_chw(t)), cfg, sc, 1.0,
                                    UStabVariant::denoised_target, nullptr);
    return tp.value(l.total)[0];
  };
  const double step = 1e-6;
  {
    Tensor analytic = tape.grad(den.layers[0].first);
    DenoiserNet probe = net;
    probe.layers[0].kernel[4] += step;
    const double fp = eval(probe, enc);
    probe.layers[0].kernel[4] -= 2.0 * step;
    const double fm = eval(probe, enc);
    const double numeric = (fp - fm) / (2.0 * step);
    CHECK(std::fabs(analytic[4] - numeric) <
          1e-4 * std::max({std::fabs(analytic[4]), std::fabs(numeric), 1e-8}));
  }
  {
    Tensor analytic = tape.grad(ev.head_w);
    WeightEncoder probe = enc;
    probe.head_w[2] += step;
    const double fp = eval(net, probe);
    probe.head_w[2] -= 2.0 * step;
    const double fm = eval(net, probe);
    const double numeric = (fp - fm) / (2.0 * step);
    CHECK(std::fabs(analytic[2] - numeric) <
          1e-4 * std::max({std::fabs(analytic[2]), std::fabs(numeric), 1e-8}));
  }
}

TEST_CASE("adam_step: hand-evaluated recurrences") {
  TrainConfig tc;
  tc.lr = 0.1;
  tc.beta1 = 0.5;
  tc.beta2 = 0.999;

  Tensor p = Tensor::from_data({1}, {1.0});
  std::vector<Tensor*> params = {&p};
  AdamState st = make_adam_state(params);

  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Tensor> g = {Tensor::from_data({1}, {0.0})};
    adam_step(st, params, g, tc);
    CHECK(p[0] == 1.0);
  }

  SUBCASE("first step with g=1 moves by about -lr") {
    std::vector<Tensor> g = {Tensor::from_data({1}, {1.0})};
    adam_step(st, params, g, tc);
    // mhat = vhat = 1 after bias correction
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + tc.adam_eps)).epsilon(1e-12));
  }

  SUBCASE("two identical gradients: second move is not larger (hand recurrence)") {
    std::vector<Tensor> g = {Tensor::from_data({1}, {1.0})};
    adam_step(st, params, g, tc);
    const double move1 = std::fabs(1.0 - p[0]);
    const double p_after1 = p[0];
    adam_step(st, params, g, tc);
    const double move2 = std::fabs(p_after1 - p[0]);
    // hand recurrence, step 2: m = .5*.5 + .5*1 = .75, mhat = .75/.75 = 1
    // v = .999*.001 + .001*1, vhat = v/(1-.999^2)
    const double v2 = 0.999 * 0.001 + 0.001;
    const double vhat2 = v2 / (1.0 - 0.999 * 0.999);
    const double want2 = 0.1 * 1.0 / (std::sqrt(vhat2) + tc.adam_eps);
    CHECK(move2 == doctest::Approx(want2).epsilon(1e-10));
    CHECK(move2 <= move1 + 1e-12);
  }
}

TEST_CASE("clip_gradients: triggers only above the threshold and rescales") {
  std::vector<Tensor> g;
  g.push_back(Tensor::from_data({2}, {30.0, 40.0}));  // norm 50
  CHECK(clip_gradients(g, 10.0));
  CHECK(std::fabs(std::sqrt(dot(g[0], g[0])) - 10.0) < 1e-12);
  CHECK(!clip_gradients(g, 10.0));
}

TEST_CASE("pretrain: one epoch over one item is exactly one adam step") {
  ComplexImage t = random_image(8, 8, 60, 0.4);
  DenoiserSpec arch;
  arch.n_layers = 2;
  arch.hidden_channels = 4;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 1;
  tc.sigma = 0.05;
  tc.train_T = 2;
  tc.seed = 7;
  DenoiserNet trained = pretrain({t}, arch, tc);

  // replicate by hand: one tape, one adam step from the same init
  DenoiserNet net = init_denoiser(arch, tc.seed);
  Tape tape;
  DenoiserVars den = bind_denoiser(tape, net, true);
  SmoothingConfig sc{tc.sigma, tc.train_T, derive_seed(tc.seed, {rng_stream::pretrain, 0, 0})};
  Variable loss = pretrain_loss_var(tape, den, tape.constant(to_chw(t)), sc);
  tape.backward(loss);
  std::vector<Tensor*> params = params_of(net);
  std::vector<Tensor> grads;
  for (const auto& [k, b] : den.layers) {
    grads.push_back(tape.grad(k));
    grads.push_back(tape.grad(b));
  }
  clip_gradients(grads, tc.clip_norm);
  AdamState st = make_adam_state(params);
  adam_step(st, params, grads, tc);

  auto tp = params_of(trained);
  for (std::size_t i = 0; i < tp.size(); ++i)
    for (std::size_t j = 0; j < tp[i]->size(); ++j) CHECK((*tp[i])[j] == (*params[i])[j]);
}

TEST_CASE("pretrain on phantoms: the loss decreases from first to last epoch") {
  PhantomSpec pspec;
  pspec.size = 32;
  pspec.seed = 5;
  auto phantoms = generate_phantoms(pspec, 20);
  DenoiserSpec arch;
  arch.n_layers = 2;
  arch.hidden_channels = 8;
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.sigma = 0.05;
  tc.train_T = 2;
  tc.lr = 1e-3;
  tc.seed = 11;
  std::vector<EpochRow> log;
  pretrain(phantoms, arch, tc, &log);
  REQUIRE(log.size() == 4);
  CHECK(log.back().total < log.front().total);
}

TEST_CASE("training determinism: identical config gives byte-identical parameters") {
  PhantomSpec pspec;
  pspec.size = 16;
  pspec.seed = 6;
  auto phantoms = generate_phantoms(pspec, 4);
  ForwardOperator A{make_vd_mask(16, 16, 2.0, 0.2, 3)};
  std::vector<TrainItem> items;
  for (const auto& t : phantoms) items.push_back({apply_forward(A, t), t});

  DenoiserSpec arch;
  arch.n_layers = 2;
  arch.hidden_channels = 4;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.sigma = 0.03;
  tc.train_T = 1;
  tc.seed = 21;
  DenoiserNet pre = init_denoiser(arch, 99);
  FinetuneOptions opt;
  opt.mode = TrainMode::smug;
  opt.unroll.n_steps = 2;

  TrainedModels a = finetune(items, A, pre, tc, opt);
  TrainedModels b = finetune(items, A, pre, tc, opt);
  auto pa = params_of(a.denoiser);
  auto pb = params_of(b.denoiser);
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->size(); ++j) CHECK((*pa[i])[j] == (*pb[i])[j]);
}

TEST_CASE("istanet training drives Fhat(F(r)) toward the identity") {
  PhantomSpec pspec;
  pspec.size = 16;
  pspec.seed = 8;
  auto phantoms = generate_phantoms(pspec, 12);
  ForwardOperator A{make_vd_mask(16, 16, 2.0, 0.2, 4)};
  std::vector<TrainItem> items;
  for (const auto& t : phantoms) items.push_back({apply_forward(A, t), t});

  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 4;
  tc.lr = 1e-3;
  tc.seed = 31;
  FinetuneOptions opt;
  opt.mode = TrainMode::istanet;
  opt.unroll.n_steps = 3;
  opt.ista_spec.phases = 3;
  opt.ista_spec.channels = 8;
  opt.ista_constraint_weight = 10.0;
  DenoiserNet dummy = init_denoiser(DenoiserSpec{}, 0);  // unused by ista modes
  TrainedModels m = finetune(items, A, dummy, tc, opt);
  REQUIRE(m.ista.has_value());

  // held-out r: the gradient-step image of a fresh phantom
  PhantomSpec hspec = pspec;
  hspec.seed = 99;
  ComplexImage held = generate_phantoms(hspec, 1)[0];
  ComplexImage r = apply_adjoint(A, apply_forward(A, held));
  double worst = 0.0;
  for (const auto& ph : m.ista->phases) {
    Tape tape;
    Variable rv = tape.constant(to_chw(r));
    Variable u = tape.conv2d(tape.relu(tape.conv2d(rv, tape.constant(ph.f1))),
                             tape.constant(ph.f2));
    Variable back = tape.conv2d(tape.relu(tape.conv2d(u, tape.constant(ph.g1))),
                                tape.constant(ph.g2));
    Tensor diff = tape.value(back);
    axpy(-1.0, to_chw(r), diff);
    worst = std::max(worst, norm2(diff) / image_norm(r));
  }
  CHECK(worst < 0.1);
}

TEST_SUITE_END();
