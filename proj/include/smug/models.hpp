#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "smug/autodiff.hpp"
#include "smug/image.hpp"

namespace smug {

struct Conv2dParams {
  Tensor kernel;  // (Cout,Cin,kh,kw)
  Tensor bias;    // (Cout); empty for bias-free layers
};

/// Bounded CNN denoiser: conv/relu stack with a final tanh scaled by
/// output_bound, so every output entry lies in [-B, B] by construction and
/// ||D(x)||_2 <= B * sqrt(2 H W) for any input.
struct DenoiserNet {
  std::vector<Conv2dParams> layers;
  double output_bound = 1.5;
};

struct DenoiserSpec {
  int hidden_channels = 16;
  int n_layers = 3;  // total conv layers, >= 1
  int kernel = 3;
  double output_bound = 1.5;
};

/// Weighting encoder: five (conv, channel_norm, relu) stages, then global
/// average pool -> linear -> sigmoid. Output is a scalar strictly in (0,1).
struct WeightEncoder {
  struct Block {
    Tensor kernel, bias, gamma, beta;
  };
  std::vector<Block> blocks;
  Tensor head_w;  // (C)
  Tensor head_b;  // (1)
};

struct EncoderSpec {
  int channels = 8;
  int n_blocks = 5;
  int kernel = 3;
};

/// Per-phase (unshared) parameters of the learned iterative shrinkage net:
/// gradient step size, soft-threshold level, and the forward/inverse
/// transform conv pairs (two bias-free conv layers separated by relu each).
struct IstaPhase {
  Tensor step_size;  // (1)
  Tensor threshold;  // (1)
  Tensor f1, f2;     // transform F
  Tensor g1, g2;     // inverse transform F_hat
};

struct IstaNetParams {
  std::vector<IstaPhase> phases;
};

struct IstaSpec {
  int phases = 4;
  int channels = 16;
  int kernel = 3;
  double init_step = 0.5;
  double init_threshold = 0.01;
};

// -- initialization (He fan-in scaled, deterministic per seed) ----------------

DenoiserNet init_denoiser(const DenoiserSpec& spec, std::uint64_t seed);
WeightEncoder init_encoder(const EncoderSpec& spec, std::uint64_t seed);
IstaNetParams init_istanet(const IstaSpec& spec, std::uint64_t seed);

// -- tape bindings -------------------------------------------------------------
// Parameters are placed on a tape once (as leaves when trainable, constants
// otherwise); forward passes reuse the handles so gradients accumulate across
// every use of the shared weights.

struct DenoiserVars {
  std::vector<std::pair<Variable, Variable>> layers;  // (kernel, bias)
  double output_bound = 0.0;
};

struct EncoderVars {
  struct Block {
    Variable kernel, bias, gamma, beta;
  };
  std::vector<Block> blocks;
  Variable head_w, head_b;
};

struct IstaVars {
  struct Phase {
    Variable step_size, threshold, f1, f2, g1, g2;
  };
  std::vector<Phase> phases;
};

DenoiserVars bind_denoiser(Tape& tape, const DenoiserNet& net, bool trainable);
EncoderVars bind_encoder(Tape& tape, const WeightEncoder& enc, bool trainable);
IstaVars bind_istanet(Tape& tape, const IstaNetParams& p, bool trainable);

/// x: (2,H,W) -> (2,H,W), entries bounded by output_bound.
Variable denoiser_forward(Tape& tape, const DenoiserVars& vars, Variable x);

/// x: (2,H,W) -> scalar weight in (0,1).
Variable encoder_forward(Tape& tape, const EncoderVars& vars, Variable x);

// -- plain inference ------------------------------------------------------------

ComplexImage denoise(const DenoiserNet& net, const ComplexImage& x);
double encode_weight(const WeightEncoder& enc, const ComplexImage& x);

/// Architectural upper bound on 2 max_x ||D(x)||_2: 2 * B * sqrt(2 h w).
double bound_M(const DenoiserNet& net, std::size_t h, std::size_t w);

// -- parameter listing (fixed order, shared by optimizer and checkpoints) -------

std::vector<Tensor*> params_of(DenoiserNet& net);
std::vector<Tensor*> params_of(WeightEncoder& enc);
std::vector<Tensor*> params_of(IstaNetParams& p);
std::vector<std::pair<std::string, const Tensor*>> named_params(const DenoiserNet& net);
std::vector<std::pair<std::string, const Tensor*>> named_params(const WeightEncoder& enc);
std::vector<std::pair<std::string, const Tensor*>> named_params(const IstaNetParams& p);

}  // namespace smug
