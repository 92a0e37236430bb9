#include "smug/models.hpp"

#include <cmath>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

namespace {

Tensor he_kernel(std::size_t cout, std::size_t cin, std::size_t k, Rng& rng) {
  Tensor t({cout, cin, k, k});
  const double std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  rng.fill_normal(t, std);
  return t;
}

}  // namespace

DenoiserNet init_denoiser(const DenoiserSpec& spec, std::uint64_t seed) {
  if (spec.n_layers < 1) throw std::invalid_argument("init_denoiser: need >= 1 layer");
  if (spec.kernel % 2 == 0) throw std::invalid_argument("init_denoiser: kernel must be odd");
  DenoiserNet net;
  net.output_bound = spec.output_bound;
  Rng rng = Rng::stream(seed, {rng_stream::init, 1});
  const auto C = static_cast<std::size_t>(spec.hidden_channels);
  const auto K = static_cast<std::size_t>(spec.kernel);
  for (int l = 0; l < spec.n_layers; ++l) {
    const std::size_t cin = (l == 0) ? 2 : C;
    const std::size_t cout = (l == spec.n_layers - 1) ? 2 : C;
    Conv2dParams layer;
    layer.kernel = he_kernel(cout, cin, K, rng);
    layer.bias = Tensor({cout});
    net.layers.push_back(std::move(layer));
  }
  return net;
}

WeightEncoder init_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  if (spec.n_blocks < 1) throw std::invalid_argument("init_encoder: need >= 1 block");
  WeightEncoder enc;
  Rng rng = Rng::stream(seed, {rng_stream::init, 2});
  const auto C = static_cast<std::size_t>(spec.channels);
  const auto K = static_cast<std::size_t>(spec.kernel);
  for (int b = 0; b < spec.n_blocks; ++b) {
    WeightEncoder::Block blk;
    blk.kernel = he_kernel(C, b == 0 ? 2 : C, K, rng);
    blk.bias = Tensor({C});
    blk.gamma = Tensor({C}, 1.0);
    blk.beta = Tensor({C});
    enc.blocks.push_back(std::move(blk));
  }
  enc.head_w = Tensor({C});
  rng.fill_normal(enc.head_w, std::sqrt(2.0 / static_cast<double>(C)));
  enc.head_b = Tensor({1});
  return enc;
}

IstaNetParams init_istanet(const IstaSpec& spec, std::uint64_t seed) {
  if (spec.phases < 1) throw std::invalid_argument("init_istanet: need >= 1 phase");
  if (spec.channels < 4) throw std::invalid_argument("init_istanet: need >= 4 channels");
  IstaNetParams p;
  Rng rng = Rng::stream(seed, {rng_stream::init, 3});
  const auto C = static_cast<std::size_t>(spec.channels);
  const auto K = static_cast<std::size_t>(spec.kernel);
  const std::size_t c = K / 2;
  // Transform pairs seeded at an exact identity factorization (x is carried
  // through the relu as the +/- channel split), perturbed by small noise.
  // Keeps Fhat(F(r)) close to r from the first step, which the constraint
  // term of the training loss then maintains.
  const double jitter = 0.01;
  for (int n = 0; n < spec.phases; ++n) {
    IstaPhase ph;
    ph.step_size = Tensor({1}, spec.init_step);
    ph.threshold = Tensor({1}, spec.init_threshold);
    ph.f1 = he_kernel(C, 2, K, rng);
    ph.f2 = he_kernel(C, C, K, rng);
    ph.g1 = he_kernel(C, C, K, rng);
    ph.g2 = he_kernel(2, C, K, rng);
    scale_inplace(ph.f1, jitter);
    scale_inplace(ph.f2, jitter);
    scale_inplace(ph.g1, jitter);
    scale_inplace(ph.g2, jitter);
    ph.f1.at(0, 0, c, c) += 1.0;
    ph.f1.at(1, 1, c, c) += 1.0;
    ph.f1.at(2, 0, c, c) -= 1.0;
    ph.f1.at(3, 1, c, c) -= 1.0;
    for (std::size_t ch = 0; ch < C; ++ch) {
      ph.f2.at(ch, ch, c, c) += 1.0;
      ph.g1.at(ch, ch, c, c) += 1.0;
    }
    ph.g2.at(0, 0, c, c) += 1.0;
    ph.g2.at(1, 1, c, c) += 1.0;
    ph.g2.at(0, 2, c, c) -= 1.0;
    ph.g2.at(1, 3, c, c) -= 1.0;
    p.phases.push_back(std::move(ph));
  }
  return p;
}

DenoiserVars bind_denoiser(Tape& tape, const DenoiserNet& net, bool trainable) {
  DenoiserVars vars;
  vars.output_bound = net.output_bound;
  for (const auto& layer : net.layers) {
    Variable k = trainable ? tape.leaf(layer.kernel) : tape.constant(layer.kernel);
    Variable b = trainable ? tape.leaf(layer.bias) : tape.constant(layer.bias);
    vars.layers.emplace_back(k, b);
  }
  return vars;
}

EncoderVars bind_encoder(Tape& tape, const WeightEncoder& enc, bool trainable) {
  EncoderVars vars;
  auto put = [&](const Tensor& t) { return trainable ? tape.leaf(t) : tape.constant(t); };
  for (const auto& blk : enc.blocks)
    vars.blocks.push_back({put(blk.kernel), put(blk.bias), put(blk.gamma), put(blk.beta)});
  vars.head_w = put(enc.head_w);
  vars.head_b = put(enc.head_b);
  return vars;
}

IstaVars bind_istanet(Tape& tape, const IstaNetParams& p, bool trainable) {
  IstaVars vars;
  auto put = [&](const Tensor& t) { return trainable ? tape.leaf(t) : tape.constant(t); };
  for (const auto& ph : p.phases)
    vars.phases.push_back(
        {put(ph.step_size), put(ph.threshold), put(ph.f1), put(ph.f2), put(ph.g1), put(ph.g2)});
  return vars;
}

Variable denoiser_forward(Tape& tape, const DenoiserVars& vars, Variable x) {
  Variable h = x;
  for (std::size_t l = 0; l + 1 < vars.layers.size(); ++l)
    h = tape.relu(tape.conv2d(h, vars.layers[l].first, vars.layers[l].second));
  h = tape.conv2d(h, vars.layers.back().first, vars.layers.back().second);
  return tape.scale(tape.tanh(h), vars.output_bound);
}

Variable encoder_forward(Tape& tape, const EncoderVars& vars, Variable x) {
  Variable h = x;
  for (const auto& blk : vars.blocks)
    h = tape.relu(tape.channel_norm(tape.conv2d(h, blk.kernel, blk.bias), blk.gamma, blk.beta));
  Variable pooled = tape.global_avg_pool(h);
  return tape.sigmoid(tape.linear(pooled, vars.head_w, vars.head_b));
}

ComplexImage denoise(const DenoiserNet& net, const ComplexImage& x) {
  validate_image(x);
  if (net.layers.empty() || net.layers.front().kernel.dim(1) != 2)
    throw std::invalid_argument("denoise: network does not accept 2-channel input");
  Tape tape;
  DenoiserVars vars = bind_denoiser(tape, net, false);
  Variable out = denoiser_forward(tape, vars, tape.constant(to_chw(x)));
  return image_from_chw(tape.value(out));
}

double encode_weight(const WeightEncoder& enc, const ComplexImage& x) {
  validate_image(x);
  Tape tape;
  EncoderVars vars = bind_encoder(tape, enc, false);
  Variable out = encoder_forward(tape, vars, tape.constant(to_chw(x)));
  return tape.value(out)[0];
}

double bound_M(const DenoiserNet& net, std::size_t h, std::size_t w) {
  return 2.0 * net.output_bound * std::sqrt(2.0 * static_cast<double>(h) * static_cast<double>(w));
}

std::vector<Tensor*> params_of(DenoiserNet& net) {
  std::vector<Tensor*> out;
  for (auto& l : net.layers) {
    out.push_back(&l.kernel);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Tensor*> params_of(WeightEncoder& enc) {
  std::vector<Tensor*> out;
  for (auto& b : enc.blocks) {
    out.push_back(&b.kernel);
    out.push_back(&b.bias);
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  out.push_back(&enc.head_w);
  out.push_back(&enc.head_b);
  return out;
}

std::vector<Tensor*> params_of(IstaNetParams& p) {
  std::vector<Tensor*> out;
  for (auto& ph : p.phases) {
    out.push_back(&ph.step_size);
    out.push_back(&ph.threshold);
    out.push_back(&ph.f1);
    out.push_back(&ph.f2);
    out.push_back(&ph.g1);
    out.push_back(&ph.g2);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_params(const DenoiserNet& net) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const std::string base = "denoiser.layer" + std::to_string(l);
    out.emplace_back(base + ".kernel", &net.layers[l].kernel);
    out.emplace_back(base + ".bias", &net.layers[l].bias);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_params(const WeightEncoder& enc) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t b = 0; b < enc.blocks.size(); ++b) {
    const std::string base = "encoder.block" + std::to_string(b);
    out.emplace_back(base + ".kernel", &enc.blocks[b].kernel);
    out.emplace_back(base + ".bias", &enc.blocks[b].bias);
    out.emplace_back(base + ".gamma", &enc.blocks[b].gamma);
    out.emplace_back(base + ".beta", &enc.blocks[b].beta);
  }
  out.emplace_back("encoder.head.w", &enc.head_w);
  out.emplace_back("encoder.head.b", &enc.head_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_params(const IstaNetParams& p) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t n = 0; n < p.phases.size(); ++n) {
    const std::string base = "istanet.phase" + std::to_string(n);
    out.emplace_back(base + ".step_size", &p.phases[n].step_size);
    out.emplace_back(base + ".threshold", &p.phases[n].threshold);
    out.emplace_back(base + ".f1", &p.phases[n].f1);
    out.emplace_back(base + ".f2", &p.phases[n].f2);
    out.emplace_back(base + ".g1", &p.phases[n].g1);
    out.emplace_back(base + ".g2", &p.phases[n].g2);
  }
  return out;
}

}  // namespace smug
