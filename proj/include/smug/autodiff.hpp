#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "smug/image.hpp"
#include "smug/linops.hpp"

namespace smug {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Variable {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coordinate = 0;
  double step = 0.0;
};

/// Append-only reverse-mode tape over real tensors. Nodes are recorded in
/// topological (insertion) order; backward() visits them in strict reverse
/// order, so a node's inputs always precede it. Single-threaded during
/// recording; independent tapes may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf.
  Variable leaf(Tensor value);
  /// Non-differentiable input (targets, frozen params, noise draws).
  Variable constant(Tensor value);

  const Tensor& value(Variable v) const { return nodes_[check(v)].value; }
  /// Gradient after backward(); zeros for leaves the output never touched.
  Tensor grad(Variable v) const;

  /// Reverse sweep from a scalar output. One sweep per tape.
  void backward(Variable output);

  std::size_t size() const { return nodes_.size(); }
  int unconverged_solves() const { return unconverged_solves_; }

  // -- primitives -------------------------------------------------------------
  Variable add(Variable a, Variable b);
  Variable sub(Variable a, Variable b);
  Variable scale(Variable a, double c);
  Variable mul(Variable a, Variable b);          // elementwise
  Variable mul_scalar(Variable a, Variable s);   // s: shape (1)
  Variable div_scalar(Variable a, Variable s);   // s: shape (1), s != 0
  Variable relu(Variable a);
  Variable tanh(Variable a);
  Variable sigmoid(Variable a);
  Variable sum_squares(Variable a);              // -> (1)
  Variable mean_all(Variable a);                 // -> (1)
  Variable concat_channels(Variable a, Variable b);

  /// 2-D convolution, stride 1, zero padding preserving shape.
  /// x: (Cin,H,W), kernel: (Cout,Cin,kh,kw) with odd kh,kw, bias: (Cout) or invalid.
  Variable conv2d(Variable x, Variable kernel, Variable bias = Variable{});

  /// Per-channel mean/variance normalization with learned affine.
  /// x: (C,H,W), gamma/beta: (C).
  Variable channel_norm(Variable x, Variable gamma, Variable beta, double eps = 1e-5);

  /// (C,H,W) -> (C) plane means.
  Variable global_avg_pool(Variable x);

  /// dot(v,w)+b -> (1). v,w: (C), b: (1).
  Variable linear(Variable v, Variable w, Variable b);

  /// sign(u) * max(|u|-theta, 0); theta: (1).
  Variable soft_threshold(Variable u, Variable theta);

  // Linear spectral ops on (2,H,W) stacks; backward is the adjoint.
  Variable dft2(Variable a);
  Variable idft2(Variable a);
  Variable mask_apply(Variable a, const SamplingMask& m);

  /// Data-consistency solve x = (A^H A + lambda I)^{-1} (A^H y + lambda z),
  /// forward by CG; backward by implicit differentiation (one extra CG solve
  /// with the same self-adjoint operator). y: (2,H,W) k-space, z: (2,H,W) image.
  Variable dc_solve(const ForwardOperator& A, Variable y, Variable z, double lambda,
                    double cg_tol, int cg_max, CgStats* stats = nullptr);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward
    bool requires_grad = false;
    bool grad_set = false;
    std::array<int, 3> parents{{-1, -1, -1}};
    std::function<void(Tape&, int)> backward;
  };

  int check(Variable v) const;
  Variable push(Tensor value, std::array<int, 3> parents, std::function<void(Tape&, int)> bw);
  bool needs(Variable v) const { return nodes_[check(v)].requires_grad; }
  Tensor& grad_buf(int id);
  const Tensor& upstream(int id) const { return nodes_[id].grad; }
  const Tensor& val(int id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  int unconverged_solves_ = 0;
};

/// Central-difference check of d(f)/dx. `build` records the scalar function of
/// one leaf on a fresh tape per evaluation. Coordinates flagged in `skip` are
/// excluded (the relu kink policy: callers skip |x| <= 1e-3 coordinates).
GradCheckReport grad_check(const std::function<Variable(Tape&, Variable)>& build, const Tensor& x,
                           double step, const std::vector<std::uint8_t>* skip = nullptr);

}  // namespace smug
