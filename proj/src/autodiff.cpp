#include "smug/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "smug/fourier.hpp"

namespace smug {

int Tape::check(Variable v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("Variable does not belong to this tape");
  return v.id;
}

Variable Tape::push(Tensor value, std::array<int, 3> parents,
                    std::function<void(Tape&, int)> bw) {
  Node n;
  n.value = std::move(value);
  n.parents = parents;
  for (int p : parents)
    if (p >= 0 && nodes_[static_cast<std::size_t>(p)].requires_grad) n.requires_grad = true;
  if (n.requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Variable{static_cast<int>(nodes_.size()) - 1};
}

Variable Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Variable{static_cast<int>(nodes_.size()) - 1};
}

Variable Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Variable{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_set) {
    n.grad = Tensor(n.value.shape());
    n.grad_set = true;
  }
  return n.grad;
}

Tensor Tape::grad(Variable v) const {
  const Node& n = nodes_[static_cast<std::size_t>(check(v))];
  if (n.grad_set) return n.grad;
  return Tensor(n.value.shape());
}

void Tape::backward(Variable output) {
  const int out = check(output);
  if (nodes_[static_cast<std::size_t>(out)].value.size() != 1)
    throw std::invalid_argument("backward: output must be scalar");
  if (backward_done_) throw std::logic_error("backward: tape already swept");
  backward_done_ = true;
  grad_buf(out)[0] = 1.0;
  for (int id = out; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.grad_set || !n.backward) continue;
    n.backward(*this, id);
  }
}

// -- elementwise --------------------------------------------------------------

Variable Tape::add(Variable a, Variable b) {
  const Tensor& av = val(check(a));
  const Tensor& bv = val(check(b));
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    for (int k = 0; k < 2; ++k)
      if (t.nodes_[static_cast<std::size_t>(ps[k])].requires_grad) axpy(1.0, g, t.grad_buf(ps[k]));
  });
}

Variable Tape::sub(Variable a, Variable b) {
  const Tensor& av = val(check(a));
  const Tensor& bv = val(check(b));
  if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad) axpy(1.0, g, t.grad_buf(ps[0]));
    if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad) axpy(-1.0, g, t.grad_buf(ps[1]));
  });
}

Variable Tape::scale(Variable a, double c) {
  Tensor out = val(check(a));
  scale_inplace(out, c);
  return push(std::move(out), {a.id, -1, -1}, [c](Tape& t, int self) {
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    axpy(c, t.upstream(self), t.grad_buf(ps[0]));
  });
}

Variable Tape::mul(Variable a, Variable b) {
  const Tensor& av = val(check(a));
  const Tensor& bv = val(check(b));
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const Tensor& av = t.val(ps[0]);
    const Tensor& bv = t.val(ps[1]);
    if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad) {
      Tensor& ga = t.grad_buf(ps[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad) {
      Tensor& gb = t.grad_buf(ps[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Variable Tape::mul_scalar(Variable a, Variable s) {
  const Tensor& av = val(check(a));
  const Tensor& sv = val(check(s));
  if (sv.size() != 1) throw std::invalid_argument("mul_scalar: s must be scalar");
  Tensor out = av;
  scale_inplace(out, sv[0]);
  return push(std::move(out), {a.id, s.id, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const Tensor& av = t.val(ps[0]);
    const double s = t.val(ps[1])[0];
    if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad) axpy(s, g, t.grad_buf(ps[0]));
    if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad) t.grad_buf(ps[1])[0] += dot(g, av);
  });
}

Variable Tape::div_scalar(Variable a, Variable s) {
  const Tensor& av = val(check(a));
  const Tensor& sv = val(check(s));
  if (sv.size() != 1) throw std::invalid_argument("div_scalar: s must be scalar");
  if (sv[0] == 0.0) throw std::invalid_argument("div_scalar: division by zero");
  Tensor out = av;
  scale_inplace(out, 1.0 / sv[0]);
  return push(std::move(out), {a.id, s.id, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const Tensor& av = t.val(ps[0]);
    const double s = t.val(ps[1])[0];
    if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad)
      axpy(1.0 / s, g, t.grad_buf(ps[0]));
    if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad)
      t.grad_buf(ps[1])[0] -= dot(g, av) / (s * s);
  });
}

Variable Tape::relu(Variable a) {
  Tensor out = val(check(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return push(std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const Tensor& av = t.val(ps[0]);
    Tensor& ga = t.grad_buf(ps[0]);
    // subgradient 0 at exactly 0
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : 0.0;
  });
}

Variable Tape::tanh(Variable a) {
  Tensor out = val(check(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return push(std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const Tensor& y = t.val(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    Tensor& ga = t.grad_buf(ps[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Variable Tape::sigmoid(Variable a) {
  Tensor out = val(check(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return push(std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const Tensor& y = t.val(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    Tensor& ga = t.grad_buf(ps[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Variable Tape::sum_squares(Variable a) {
  const Tensor& av = val(check(a));
  Tensor out({1});
  out[0] = dot(av, av);
  return push(std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const double g = t.upstream(self)[0];
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    axpy(2.0 * g, t.val(ps[0]), t.grad_buf(ps[0]));
  });
}

Variable Tape::mean_all(Variable a) {
  const Tensor& av = val(check(a));
  Tensor out({1});
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
  out[0] = s / static_cast<double>(av.size());
  return push(std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const double g = t.upstream(self)[0];
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const Tensor& av = t.val(ps[0]);
    Tensor& ga = t.grad_buf(ps[0]);
    const double c = g / static_cast<double>(av.size());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c;
  });
}

Variable Tape::concat_channels(Variable a, Variable b) {
  const Tensor& av = val(check(a));
  const Tensor& bv = val(check(b));
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw std::invalid_argument("concat_channels: incompatible shapes");
  Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i];
  for (std::size_t i = 0; i < bv.size(); ++i) out[av.size() + i] = bv[i];
  return push(std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const std::size_t na = t.val(ps[0]).size();
    if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad) {
      Tensor& ga = t.grad_buf(ps[0]);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad) {
      Tensor& gb = t.grad_buf(ps[1]);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

// -- convolution ----------------------------------------------------------------

namespace {

// out[co] += sum_ci k[co,ci] (*) in[ci], zero-padded, shape preserving.
void conv_accum(const Tensor& in, const Tensor& k, Tensor& out, std::size_t H, std::size_t W) {
  const std::size_t cout = k.dim(0), cin = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto sH = static_cast<std::ptrdiff_t>(H);
  const auto sW = static_cast<std::ptrdiff_t>(W);
  for (std::size_t co = 0; co < cout; ++co) {
    double* op = out.data() + co * H * W;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* ip = in.data() + ci * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(sH, sH - dy);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wv = k.at(co, ci, ky, kx);
          if (wv == 0.0) continue;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(sW, sW - dx);
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* src = ip + (y + dy) * sW + (x0 + dx);
            double* dst = op + y * sW + x0;
            const std::ptrdiff_t len = x1 - x0;
            for (std::ptrdiff_t x = 0; x < len; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
}

// din[ci] += sum_co k[co,ci] (*)^T g[co]  (transpose of conv_accum)
void conv_accum_input_grad(const Tensor& g, const Tensor& k, Tensor& din, std::size_t H,
                           std::size_t W) {
  const std::size_t cout = k.dim(0), cin = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto sH = static_cast<std::ptrdiff_t>(H);
  const auto sW = static_cast<std::ptrdiff_t>(W);
  for (std::size_t co = 0; co < cout; ++co) {
    const double* gp = g.data() + co * H * W;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      double* dp = din.data() + ci * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(sH, sH - dy);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wv = k.at(co, ci, ky, kx);
          if (wv == 0.0) continue;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(sW, sW - dx);
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* src = gp + y * sW + x0;
            double* dst = dp + (y + dy) * sW + (x0 + dx);
            const std::ptrdiff_t len = x1 - x0;
            for (std::ptrdiff_t x = 0; x < len; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
}

// dk[co,ci,ky,kx] += sum_{y,x} g[co,y,x] * in[ci, y+dy, x+dx]
void conv_accum_kernel_grad(const Tensor& g, const Tensor& in, Tensor& dk, std::size_t H,
                            std::size_t W) {
  const std::size_t cout = dk.dim(0), cin = dk.dim(1), kh = dk.dim(2), kw = dk.dim(3);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto sH = static_cast<std::ptrdiff_t>(H);
  const auto sW = static_cast<std::ptrdiff_t>(W);
  for (std::size_t co = 0; co < cout; ++co) {
    const double* gp = g.data() + co * H * W;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* ip = in.data() + ci * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(sH, sH - dy);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(sW, sW - dx);
          double acc = 0.0;
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* grow = gp + y * sW + x0;
            const double* irow = ip + (y + dy) * sW + (x0 + dx);
            const std::ptrdiff_t len = x1 - x0;
            for (std::ptrdiff_t x = 0; x < len; ++x) acc += grow[x] * irow[x];
          }
          dk.at(co, ci, ky, kx) += acc;
        }
      }
    }
  }
}

}  // namespace

Variable Tape::conv2d(Variable x, Variable kernel, Variable bias) {
  const Tensor& xv = val(check(x));
  const Tensor& kv = val(check(kernel));
  if (xv.rank() != 3 || kv.rank() != 4 || kv.dim(1) != xv.dim(0))
    throw std::invalid_argument("conv2d: expected x(Cin,H,W), k(Cout,Cin,kh,kw)");
  if (kv.dim(2) % 2 == 0 || kv.dim(3) % 2 == 0)
    throw std::invalid_argument("conv2d: kernel dims must be odd");
  const std::size_t H = xv.dim(1), W = xv.dim(2), cout = kv.dim(0);
  const bool has_bias = bias.valid();
  if (has_bias) {
    const Tensor& bv = val(check(bias));
    if (bv.shape() != std::vector<std::size_t>{cout})
      throw std::invalid_argument("conv2d: bias must be (Cout)");
  }

  Tensor out({cout, H, W});
  if (has_bias) {
    const Tensor& bv = val(bias.id);
    for (std::size_t co = 0; co < cout; ++co) {
      double* op = out.data() + co * H * W;
      const double b = bv[co];
      for (std::size_t i = 0; i < H * W; ++i) op[i] = b;
    }
  }
  conv_accum(xv, kv, out, H, W);

  return push(std::move(out), {x.id, kernel.id, has_bias ? bias.id : -1},
              [H, W](Tape& t, int self) {
                const Tensor& g = t.upstream(self);
                const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
                const Tensor& xv = t.val(ps[0]);
                const Tensor& kv = t.val(ps[1]);
                if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad)
                  conv_accum_input_grad(g, kv, t.grad_buf(ps[0]), H, W);
                if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad)
                  conv_accum_kernel_grad(g, xv, t.grad_buf(ps[1]), H, W);
                if (ps[2] >= 0 && t.nodes_[static_cast<std::size_t>(ps[2])].requires_grad) {
                  Tensor& gb = t.grad_buf(ps[2]);
                  const std::size_t cout = gb.size();
                  for (std::size_t co = 0; co < cout; ++co) {
                    const double* gp = g.data() + co * H * W;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < H * W; ++i) acc += gp[i];
                    gb[co] += acc;
                  }
                }
              });
}

Variable Tape::channel_norm(Variable x, Variable gamma, Variable beta, double eps) {
  const Tensor& xv = val(check(x));
  const Tensor& gv = val(check(gamma));
  const Tensor& bv = val(check(beta));
  if (xv.rank() != 3) throw std::invalid_argument("channel_norm: expected (C,H,W)");
  const std::size_t C = xv.dim(0), n = xv.dim(1) * xv.dim(2);
  if (gv.shape() != std::vector<std::size_t>{C} || bv.shape() != std::vector<std::size_t>{C})
    throw std::invalid_argument("channel_norm: gamma/beta must be (C)");

  Tensor xhat(xv.shape());
  Tensor inv_std({C});
  Tensor out(xv.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double* xp = xv.data() + c * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xp[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = xp[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = is;
    double* hp = xhat.data() + c * n;
    double* op = out.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      hp[i] = (xp[i] - mu) * is;
      op[i] = gv[c] * hp[i] + bv[c];
    }
  }

  return push(std::move(out), {x.id, gamma.id, beta.id},
              [xhat = std::move(xhat), inv_std = std::move(inv_std), C, n](Tape& t, int self) {
                const Tensor& g = t.upstream(self);
                const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
                const Tensor& gv = t.val(ps[1]);
                const bool need_x = t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad;
                const bool need_g = t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad;
                const bool need_b = t.nodes_[static_cast<std::size_t>(ps[2])].requires_grad;
                for (std::size_t c = 0; c < C; ++c) {
                  const double* gp = g.data() + c * n;
                  const double* hp = xhat.data() + c * n;
                  double sg = 0.0, sgh = 0.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    sg += gp[i];
                    sgh += gp[i] * hp[i];
                  }
                  if (need_b) t.grad_buf(ps[2])[c] += sg;
                  if (need_g) t.grad_buf(ps[1])[c] += sgh;
                  if (need_x) {
                    Tensor& gx = t.grad_buf(ps[0]);
                    double* xp = gx.data() + c * n;
                    const double mg = sg / static_cast<double>(n);
                    const double mgh = sgh / static_cast<double>(n);
                    const double a = gv[c] * inv_std[c];
                    for (std::size_t i = 0; i < n; ++i)
                      xp[i] += a * (gp[i] - mg - hp[i] * mgh);
                  }
                }
              });
}

Variable Tape::global_avg_pool(Variable x) {
  const Tensor& xv = val(check(x));
  if (xv.rank() != 3) throw std::invalid_argument("global_avg_pool: expected (C,H,W)");
  const std::size_t C = xv.dim(0), n = xv.dim(1) * xv.dim(2);
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    const double* xp = xv.data() + c * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xp[i];
    out[c] = s / static_cast<double>(n);
  }
  return push(std::move(out), {x.id, -1, -1}, [C, n](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    Tensor& gx = t.grad_buf(ps[0]);
    for (std::size_t c = 0; c < C; ++c) {
      const double v = g[c] / static_cast<double>(n);
      double* xp = gx.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) xp[i] += v;
    }
  });
}

Variable Tape::linear(Variable v, Variable w, Variable b) {
  const Tensor& vv = val(check(v));
  const Tensor& wv = val(check(w));
  const Tensor& bv = val(check(b));
  if (!vv.same_shape(wv) || bv.size() != 1)
    throw std::invalid_argument("linear: expected v,w same shape and b scalar");
  Tensor out({1});
  out[0] = dot(vv, wv) + bv[0];
  return push(std::move(out), {v.id, w.id, b.id}, [](Tape& t, int self) {
    const double g = t.upstream(self)[0];
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad)
      axpy(g, t.val(ps[1]), t.grad_buf(ps[0]));
    if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad)
      axpy(g, t.val(ps[0]), t.grad_buf(ps[1]));
    if (t.nodes_[static_cast<std::size_t>(ps[2])].requires_grad) t.grad_buf(ps[2])[0] += g;
  });
}

Variable Tape::soft_threshold(Variable u, Variable theta) {
  const Tensor& uv = val(check(u));
  const Tensor& tv = val(check(theta));
  if (tv.size() != 1) throw std::invalid_argument("soft_threshold: theta must be scalar");
  const double th = tv[0];
  Tensor out = uv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = std::fabs(uv[i]) - th;
    out[i] = a > 0.0 ? (uv[i] > 0.0 ? a : -a) : 0.0;
  }
  return push(std::move(out), {u.id, theta.id, -1}, [th](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    const Tensor& uv = t.val(ps[0]);
    const bool need_u = t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad;
    const bool need_t = t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad;
    double dth = 0.0;
    Tensor* gu = need_u ? &t.grad_buf(ps[0]) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (std::fabs(uv[i]) > th) {
        if (gu) (*gu)[i] += g[i];
        dth -= (uv[i] > 0.0 ? 1.0 : -1.0) * g[i];
      }
    }
    if (need_t) t.grad_buf(ps[1])[0] += dth;
  });
}

Variable Tape::dft2(Variable a) {
  const Tensor& av = val(check(a));
  if (av.rank() != 3 || av.dim(0) != 2) throw std::invalid_argument("dft2: expected (2,H,W)");
  return push(dft2_chw(av), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    axpy(1.0, idft2_chw(t.upstream(self)), t.grad_buf(ps[0]));
  });
}

Variable Tape::idft2(Variable a) {
  const Tensor& av = val(check(a));
  if (av.rank() != 3 || av.dim(0) != 2) throw std::invalid_argument("idft2: expected (2,H,W)");
  return push(idft2_chw(av), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    axpy(1.0, dft2_chw(t.upstream(self)), t.grad_buf(ps[0]));
  });
}

Variable Tape::mask_apply(Variable a, const SamplingMask& m) {
  const Tensor& av = val(check(a));
  if (av.rank() != 3 || av.dim(0) != 2 || av.dim(1) != m.height || av.dim(2) != m.width)
    throw std::invalid_argument("mask_apply: shape mismatch");
  SamplingMask mask = m;  // captured by value; masks are small
  return push(mask_chw(m, av), {a.id, -1, -1}, [mask](Tape& t, int self) {
    const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
    axpy(1.0, mask_chw(mask, t.upstream(self)), t.grad_buf(ps[0]));
  });
}

Variable Tape::dc_solve(const ForwardOperator& A, Variable y, Variable z, double lambda,
                        double cg_tol, int cg_max, CgStats* stats) {
  const Tensor& yv = val(check(y));
  const Tensor& zv = val(check(z));
  if (yv.rank() != 3 || yv.dim(0) != 2 || !yv.same_shape(zv))
    throw std::invalid_argument("dc_solve: expected matching (2,H,W) y and z");
  if (!(lambda > 0.0)) throw std::invalid_argument("dc_solve: lambda must be > 0");

  const SamplingMask mask = A.mask;
  LinearMap op = normal_plus_identity(ForwardOperator{mask}, lambda);

  Tensor rhs = idft2_chw(mask_chw(mask, yv));  // A^H y
  axpy(lambda, zv, rhs);
  CgStats st;
  Tensor x = cg_solve_spd(op, rhs, cg_tol, cg_max, &st);
  if (!st.converged) ++unconverged_solves_;
  if (stats) *stats = st;

  return push(std::move(x), {y.id, z.id, -1},
              [mask, lambda, cg_tol, cg_max](Tape& t, int self) {
                const Tensor& g = t.upstream(self);
                const auto& ps = t.nodes_[static_cast<std::size_t>(self)].parents;
                LinearMap op = normal_plus_identity(ForwardOperator{mask}, lambda);
                CgStats st;
                Tensor u = cg_solve_spd(op, g, cg_tol, cg_max, &st);
                if (!st.converged) ++t.unconverged_solves_;
                if (t.nodes_[static_cast<std::size_t>(ps[1])].requires_grad)
                  axpy(lambda, u, t.grad_buf(ps[1]));
                if (t.nodes_[static_cast<std::size_t>(ps[0])].requires_grad)
                  axpy(1.0, mask_chw(mask, dft2_chw(u)), t.grad_buf(ps[0]));
              });
}

GradCheckReport grad_check(const std::function<Variable(Tape&, Variable)>& build, const Tensor& x,
                           double step, const std::vector<std::uint8_t>* skip) {
  Tensor analytic;
  {
    Tape tape;
    Variable xv = tape.leaf(x);
    Variable out = build(tape, xv);
    tape.backward(out);
    analytic = tape.grad(xv);
  }
  auto eval = [&build](const Tensor& xt) {
    Tape tape;
    Variable xv = tape.leaf(xt);
    Variable out = build(tape, xv);
    return tape.value(out)[0];
  };

  GradCheckReport rep;
  rep.step = step;
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (skip && (*skip)[i]) continue;
    const double x0 = xp[i];
    xp[i] = x0 + step;
    const double fp = eval(xp);
    xp[i] = x0 - step;
    const double fm = eval(xp);
    xp[i] = x0;
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(analytic[i] - numeric) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coordinate = i;
    }
  }
  return rep;
}

}  // namespace smug
