#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ctrgan/tensor.hpp"

namespace ctrgan {

// Reverse-mode autodiff on a per-step tape. Parameters are persistent nodes
// that survive reset(); everything built during a forward pass is transient.
// Ops are free functions in ctrgan::ad; each records a closure that scatters
// its output gradient into its parents.
template <typename S>
class Tape {
 public:
  using Var = int;

  Var parameter(Tensor<S> v) {
    if (nodes_.size() != persistent_)
      throw std::logic_error("Tape: parameters must be created before any op");
    nodes_.push_back(Node{std::move(v), Tensor<S>(), nullptr, true});
    ++persistent_;
    return static_cast<Var>(nodes_.size() - 1);
  }

  // Transient leaf (no gradient unless requested).
  Var input(Tensor<S> v, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(v), Tensor<S>(), nullptr, requires_grad});
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var make(Tensor<S> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), Tensor<S>(), nullptr, requires_grad});
    return static_cast<Var>(nodes_.size() - 1);
  }

  void set_backward(Var v, std::function<void(Tape&)> fn) {
    nodes_.at(v).backward = std::move(fn);
  }

  const Tensor<S>& value(Var v) const { return nodes_.at(v).value; }
  Tensor<S>& value_mut(Var v) { return nodes_.at(v).value; }
  bool requires_grad(Var v) const { return nodes_.at(v).requires_grad; }

  bool has_grad(Var v) const { return nodes_.at(v).grad.numel() > 0; }
  Tensor<S>& grad(Var v) {
    Node& n = nodes_.at(v);
    if (n.grad.numel() == 0) n.grad = Tensor<S>::zeros(n.value.shape());
    return n.grad;
  }
  // Read-only gradient of a node known to have one (used inside backwards).
  const Tensor<S>& grad_of(Var v) const { return nodes_.at(v).grad; }

  // Accumulate an Eigen expression into v's gradient if v participates.
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    if (!nodes_.at(v).requires_grad) return;
    grad(v).flat() += g;
  }

  void backward(Var loss) {
    if (value(loss).numel() != 1)
      throw std::invalid_argument("Tape::backward: loss must be a scalar tensor");
    grad(loss).flat().setOnes();
    for (Var v = loss; v >= 0; --v) {
      Node& n = nodes_[static_cast<size_t>(v)];
      if (n.grad.numel() == 0 || !n.backward) continue;
      n.backward(*this);
    }
  }

  // Drop transient nodes and clear all gradients.
  void reset() {
    nodes_.resize(persistent_);
    for (auto& n : nodes_) n.grad = Tensor<S>();
  }

  size_t size() const { return nodes_.size(); }
  size_t persistent_count() const { return persistent_; }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    std::function<void(Tape&)> backward;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
  size_t persistent_ = 0;
};

namespace ad {

template <typename S>
using Var = typename Tape<S>::Var;

template <typename S>
inline bool needs_grad(Tape<S>& tp, std::initializer_list<Var<S>> vs) {
  for (Var<S> v : vs)
    if (tp.requires_grad(v)) return true;
  return false;
}

// ---- elementwise -----------------------------------------------------------

template <typename S>
Var<S> add(Tape<S>& tp, Var<S> a, Var<S> b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Tensor<S> v(va.shape());
  v.flat() = va.flat() + vb.flat();
  const bool rg = needs_grad(tp, {a, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, b, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  return out;
}

template <typename S>
Var<S> sub(Tape<S>& tp, Var<S> a, Var<S> b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor<S> v(va.shape());
  v.flat() = va.flat() - vb.flat();
  const bool rg = needs_grad(tp, {a, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, b, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      t.accumulate(a, g);
      t.accumulate(b, -g);
    });
  return out;
}

template <typename S>
Var<S> mul(Tape<S>& tp, Var<S> a, Var<S> b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor<S> v(va.shape());
  v.flat() = va.flat().cwiseProduct(vb.flat());
  const bool rg = needs_grad(tp, {a, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, b, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      t.accumulate(a, g.cwiseProduct(t.value(b).flat()));
      t.accumulate(b, g.cwiseProduct(t.value(a).flat()));
    });
  return out;
}

template <typename S>
Var<S> scale(Tape<S>& tp, Var<S> a, S c) {
  Tensor<S> v(tp.value(a).shape());
  v.flat() = tp.value(a).flat() * c;
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, c, out](Tape<S>& t) {
      t.accumulate(a, (t.grad_of(out).flat() * c).eval());
    });
  return out;
}

template <typename S>
Var<S> leaky_relu(Tape<S>& tp, Var<S> a, S alpha) {
  const auto& va = tp.value(a);
  Tensor<S> v(va.shape());
  v.flat() = va.flat().unaryExpr([alpha](S x) { return x > S(0) ? x : alpha * x; });
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, alpha, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      const auto& x = t.value(a).flat();
      t.accumulate(a, g.cwiseProduct(x.unaryExpr(
                          [alpha](S xv) { return xv > S(0) ? S(1) : alpha; })));
    });
  return out;
}

template <typename S>
Var<S> relu(Tape<S>& tp, Var<S> a) {
  return leaky_relu(tp, a, S(0));
}

template <typename S>
Var<S> sigmoid(Tape<S>& tp, Var<S> a) {
  const auto& va = tp.value(a);
  Tensor<S> v(va.shape());
  v.flat() = va.flat().unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); });
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      const auto& y = t.value(out).flat();
      t.accumulate(a, g.cwiseProduct(y.cwiseProduct((S(1) - y.array()).matrix())));
    });
  return out;
}

template <typename S>
Var<S> tanh_op(Tape<S>& tp, Var<S> a) {
  const auto& va = tp.value(a);
  Tensor<S> v(va.shape());
  v.flat() = va.flat().array().tanh().matrix();
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      const auto& y = t.value(out).flat();
      t.accumulate(a, (g.array() * (S(1) - y.array().square())).matrix().eval());
    });
  return out;
}

// ---- matrix ops ------------------------------------------------------------

template <typename S>
Var<S> matmul(Tape<S>& tp, Var<S> a, Var<S> b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes");
  const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor<S> v({m, n});
  v.mat().noalias() = va.mat() * vb.mat();
  const bool rg = needs_grad(tp, {a, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, b, m, k, n, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(m, n);
      if (t.requires_grad(a)) t.grad(a).mat(m, k).noalias() += g * t.value(b).mat().transpose();
      if (t.requires_grad(b)) t.grad(b).mat(k, n).noalias() += t.value(a).mat().transpose() * g;
    });
  return out;
}

template <typename S>
Var<S> transpose2d(Tape<S>& tp, Var<S> a) {
  const auto& va = tp.value(a);
  if (va.rank() != 2) throw std::invalid_argument("transpose2d: rank != 2");
  const int m = va.dim(0), n = va.dim(1);
  Tensor<S> v({n, m});
  v.mat() = va.mat().transpose();
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, m, n, out](Tape<S>& t) {
      t.grad(a).mat(m, n) += t.grad_of(out).mat(n, m).transpose();
    });
  return out;
}

// Broadcast-add a length-c vector to every row of an [r,c] matrix.
template <typename S>
Var<S> add_rowvec(Tape<S>& tp, Var<S> m, Var<S> v) {
  const auto& vm = tp.value(m);
  const auto& vv = tp.value(v);
  if (vm.rank() != 2 || vv.numel() != vm.dim(1))
    throw std::invalid_argument("add_rowvec: incompatible shapes");
  const int r = vm.dim(0), c = vm.dim(1);
  Tensor<S> out_t(vm.shape());
  out_t.mat(r, c) = vm.mat().rowwise() + vv.flat().transpose();
  const bool rg = needs_grad(tp, {m, v});
  Var<S> out = tp.make(std::move(out_t), rg);
  if (rg)
    tp.set_backward(out, [m, v, r, c, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(r, c);
      if (t.requires_grad(m)) t.grad(m).mat(r, c) += g;
      if (t.requires_grad(v)) t.grad(v).flat() += g.colwise().sum().transpose();
    });
  return out;
}

// x:[n,d] * W:[d,o] + b:[o]
template <typename S>
Var<S> linear(Tape<S>& tp, Var<S> x, Var<S> w, Var<S> b) {
  return add_rowvec(tp, matmul(tp, x, w), b);
}

template <typename S>
Var<S> softmax_rows(Tape<S>& tp, Var<S> a) {
  const auto& va = tp.value(a);
  if (va.rank() != 2) throw std::invalid_argument("softmax_rows: rank != 2");
  const int r = va.dim(0), c = va.dim(1);
  Tensor<S> v(va.shape());
  auto vm = v.mat(r, c);
  for (int i = 0; i < r; ++i) {
    Eigen::Matrix<S, 1, Eigen::Dynamic> e =
        (va.mat(r, c).row(i).array() - va.mat(r, c).row(i).maxCoeff()).exp().matrix();
    vm.row(i) = e / e.sum();
  }
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, r, c, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(r, c);
      const auto y = t.value(out).mat(r, c);
      auto ga = t.grad(a).mat(r, c);
      for (int i = 0; i < r; ++i) {
        const S dot = g.row(i).cwiseProduct(y.row(i)).sum();
        ga.row(i) += (y.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
    });
  return out;
}

// Row-wise layer normalization with learned gain/bias.
template <typename S>
Var<S> layernorm_rows(Tape<S>& tp, Var<S> x, Var<S> gamma, Var<S> beta,
                      S eps = S(1e-5)) {
  const auto& vx = tp.value(x);
  if (vx.rank() != 2) throw std::invalid_argument("layernorm_rows: rank != 2");
  const int r = vx.dim(0), c = vx.dim(1);
  if (tp.value(gamma).numel() != c || tp.value(beta).numel() != c)
    throw std::invalid_argument("layernorm_rows: gain/bias length mismatch");

  auto xhat = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>(r, c);
  auto inv_std = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, 1>>(r);
  Tensor<S> v(vx.shape());
  auto vm = v.mat(r, c);
  const auto xm = vx.mat(r, c);
  for (int i = 0; i < r; ++i) {
    const S mean = xm.row(i).mean();
    const S var = (xm.row(i).array() - mean).square().mean();
    const S istd = S(1) / std::sqrt(var + eps);
    (*inv_std)[i] = istd;
    xhat->row(i) = (xm.row(i).array() - mean) * istd;
    vm.row(i) = xhat->row(i).cwiseProduct(tp.value(gamma).flat().transpose()) +
                tp.value(beta).flat().transpose();
  }
  const bool rg = needs_grad(tp, {x, gamma, beta});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [x, gamma, beta, r, c, xhat, inv_std, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(r, c);
      if (t.requires_grad(gamma))
        t.grad(gamma).flat() += (g.cwiseProduct(*xhat)).colwise().sum().transpose();
      if (t.requires_grad(beta))
        t.grad(beta).flat() += g.colwise().sum().transpose();
      if (t.requires_grad(x)) {
        auto gx = t.grad(x).mat(r, c);
        const auto gamma_row = t.value(gamma).flat().transpose();
        for (int i = 0; i < r; ++i) {
          Eigen::Matrix<S, 1, Eigen::Dynamic> gy = g.row(i).cwiseProduct(gamma_row);
          const S m1 = gy.mean();
          const S m2 = gy.cwiseProduct(xhat->row(i)).mean();
          gx.row(i) += ((gy.array() - m1 - xhat->row(i).array() * m2) * (*inv_std)[i]).matrix();
        }
      }
    });
  return out;
}

// ---- shape ops -------------------------------------------------------------

template <typename S>
Var<S> reshape(Tape<S>& tp, Var<S> a, std::vector<int> shape) {
  Tensor<S> v = tp.value(a).reshaped(shape);
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, out](Tape<S>& t) {
      t.accumulate(a, t.grad_of(out).flat());
    });
  return out;
}

template <typename S>
Var<S> slice_rows(Tape<S>& tp, Var<S> a, int start, int len) {
  const auto& va = tp.value(a);
  if (va.rank() != 2 || start < 0 || start + len > va.dim(0))
    throw std::invalid_argument("slice_rows: bad range");
  const int c = va.dim(1);
  Tensor<S> v({len, c});
  v.mat() = va.mat().middleRows(start, len);
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, start, len, c, out](Tape<S>& t) {
      t.grad(a).mat(t.value(a).dim(0), c).middleRows(start, len) +=
          t.grad_of(out).mat(len, c);
    });
  return out;
}

template <typename S>
Var<S> concat_rows(Tape<S>& tp, const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int c = tp.value(parts[0]).dim(1);
  int r = 0;
  for (Var<S> p : parts) {
    if (tp.value(p).rank() != 2 || tp.value(p).dim(1) != c)
      throw std::invalid_argument("concat_rows: column mismatch");
    r += tp.value(p).dim(0);
  }
  Tensor<S> v({r, c});
  int at = 0;
  bool rg = false;
  for (Var<S> p : parts) {
    const int pr = tp.value(p).dim(0);
    v.mat().middleRows(at, pr) = tp.value(p).mat();
    at += pr;
    rg = rg || tp.requires_grad(p);
  }
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [parts, r, c, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(r, c);
      int at2 = 0;
      for (Var<S> p : parts) {
        const int pr = t.value(p).dim(0);
        if (t.requires_grad(p)) t.grad(p).mat(pr, c) += g.middleRows(at2, pr);
        at2 += pr;
      }
    });
  return out;
}

template <typename S>
Var<S> slice_cols(Tape<S>& tp, Var<S> a, int start, int len) {
  const auto& va = tp.value(a);
  if (va.rank() != 2 || start < 0 || start + len > va.dim(1))
    throw std::invalid_argument("slice_cols: bad range");
  const int r = va.dim(0);
  Tensor<S> v({r, len});
  v.mat() = va.mat().middleCols(start, len);
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, start, len, r, out](Tape<S>& t) {
      t.grad(a).mat(r, t.value(a).dim(1)).middleCols(start, len) +=
          t.grad_of(out).mat(r, len);
    });
  return out;
}

template <typename S>
Var<S> concat_cols(Tape<S>& tp, const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int r = tp.value(parts[0]).dim(0);
  int c = 0;
  for (Var<S> p : parts) {
    if (tp.value(p).rank() != 2 || tp.value(p).dim(0) != r)
      throw std::invalid_argument("concat_cols: row mismatch");
    c += tp.value(p).dim(1);
  }
  Tensor<S> v({r, c});
  int at = 0;
  bool rg = false;
  for (Var<S> p : parts) {
    const int pc = tp.value(p).dim(1);
    v.mat().middleCols(at, pc) = tp.value(p).mat();
    at += pc;
    rg = rg || tp.requires_grad(p);
  }
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [parts, r, c, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(r, c);
      int at2 = 0;
      for (Var<S> p : parts) {
        const int pc = t.value(p).dim(1);
        if (t.requires_grad(p)) t.grad(p).mat(r, pc) += g.middleCols(at2, pc);
        at2 += pc;
      }
    });
  return out;
}

// ---- convolution stack -----------------------------------------------------

// x:[C,H,W], w:[OC,C,kh,kw], b:[OC]; zero padding.
template <typename S>
Var<S> conv2d(Tape<S>& tp, Var<S> x, Var<S> w, Var<S> b, int stride, int pad) {
  const auto& vx = tp.value(x);
  const auto& vw = tp.value(w);
  if (vx.rank() != 3 || vw.rank() != 4 || vw.dim(1) != vx.dim(0))
    throw std::invalid_argument("conv2d: incompatible shapes");
  const int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  const int OC = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d: output collapses");
  const int K = C * kh * kw, N = OH * OW;

  auto cols = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>(K, N);
  cols->setZero();
  const S* xd = vx.data();
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const int row = (c * kh + ky) * kw + kx;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            (*cols)(row, oy * OW + ox) = xd[(c * H + iy) * W + ix];
          }
        }
      }

  Tensor<S> v({OC, OH, OW});
  auto ym = v.mat(OC, N);
  ym.noalias() = vw.mat(OC, K) * (*cols);
  ym.colwise() += tp.value(b).flat();

  const bool rg = needs_grad(tp, {x, w, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [x, w, b, cols, C, H, W, OC, kh, kw, OH, OW, K, N, stride,
                          pad, out](Tape<S>& t) {
      const auto g = t.grad_of(out).mat(OC, N);
      if (t.requires_grad(b)) t.grad(b).flat() += g.rowwise().sum();
      if (t.requires_grad(w)) t.grad(w).mat(OC, K).noalias() += g * cols->transpose();
      if (t.requires_grad(x)) {
        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> dcols =
            t.value(w).mat(OC, K).transpose() * g;
        S* gx = t.grad(x).data();
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int row = (c * kh + ky) * kw + kx;
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= W) continue;
                  gx[(c * H + iy) * W + ix] += dcols(row, oy * OW + ox);
                }
              }
            }
      }
    });
  return out;
}

template <typename S>
Var<S> maxpool2d(Tape<S>& tp, Var<S> x, int k, int stride) {
  const auto& vx = tp.value(x);
  if (vx.rank() != 3) throw std::invalid_argument("maxpool2d: rank != 3");
  const int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  const int OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  if (OH <= 0 || OW <= 0) throw std::invalid_argument("maxpool2d: output collapses");

  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(C) * OH * OW);
  Tensor<S> v({C, OH, OW});
  const S* xd = vx.data();
  S* yd = v.data();
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        S best = -std::numeric_limits<S>::infinity();
        int best_i = -1;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const int idx = (c * H + oy * stride + dy) * W + ox * stride + dx;
            if (xd[idx] > best) {
              best = xd[idx];
              best_i = idx;
            }
          }
        const int o = (c * OH + oy) * OW + ox;
        yd[o] = best;
        (*argmax)[o] = best_i;
      }

  const bool rg = tp.requires_grad(x);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [x, argmax, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      S* gx = t.grad(x).data();
      for (Eigen::Index i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    });
  return out;
}

template <typename S>
Var<S> upsample2d(Tape<S>& tp, Var<S> x, int factor) {
  const auto& vx = tp.value(x);
  if (vx.rank() != 3) throw std::invalid_argument("upsample2d: rank != 3");
  const int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  const int OH = H * factor, OW = W * factor;
  Tensor<S> v({C, OH, OW});
  const S* xd = vx.data();
  S* yd = v.data();
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        yd[(c * OH + oy) * OW + ox] = xd[(c * H + oy / factor) * W + ox / factor];
  const bool rg = tp.requires_grad(x);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [x, factor, C, H, W, OH, OW, out](Tape<S>& t) {
      const auto& g = t.grad_of(out).flat();
      S* gx = t.grad(x).data();
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox)
            gx[(c * H + oy / factor) * W + ox / factor] +=
                g[(c * OH + oy) * OW + ox];
    });
  return out;
}

// ---- reductions and losses -------------------------------------------------

template <typename S>
Var<S> sum_all(Tape<S>& tp, Var<S> a) {
  Tensor<S> v = Tensor<S>::scalar(tp.value(a).flat().sum());
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, out](Tape<S>& t) {
      t.grad(a).flat().array() += t.grad_of(out)[0];
    });
  return out;
}

template <typename S>
Var<S> mean_all(Tape<S>& tp, Var<S> a) {
  const S n = static_cast<S>(tp.value(a).numel());
  Tensor<S> v = Tensor<S>::scalar(tp.value(a).flat().sum() / n);
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, n, out](Tape<S>& t) {
      t.grad(a).flat().array() += t.grad_of(out)[0] / n;
    });
  return out;
}

// mean |a - b|
template <typename S>
Var<S> l1_loss(Tape<S>& tp, Var<S> a, Var<S> b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("l1_loss: shape mismatch");
  const S n = static_cast<S>(va.numel());
  Tensor<S> v = Tensor<S>::scalar((va.flat() - vb.flat()).cwiseAbs().sum() / n);
  const bool rg = needs_grad(tp, {a, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, b, n, out](Tape<S>& t) {
      const S g = t.grad_of(out)[0] / n;
      auto sgn = (t.value(a).flat() - t.value(b).flat())
                     .unaryExpr([](S d) { return d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)); });
      t.accumulate(a, (sgn * g).eval());
      t.accumulate(b, (-sgn * g).eval());
    });
  return out;
}

// mean (a - b)^2
template <typename S>
Var<S> mse_loss(Tape<S>& tp, Var<S> a, Var<S> b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("mse_loss: shape mismatch");
  const S n = static_cast<S>(va.numel());
  Tensor<S> v = Tensor<S>::scalar((va.flat() - vb.flat()).squaredNorm() / n);
  const bool rg = needs_grad(tp, {a, b});
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, b, n, out](Tape<S>& t) {
      const S g = S(2) * t.grad_of(out)[0] / n;
      auto d = (t.value(a).flat() - t.value(b).flat()).eval();
      t.accumulate(a, (d * g).eval());
      t.accumulate(b, (-d * g).eval());
    });
  return out;
}

// mean (a - target)^2 against a constant map.
template <typename S>
Var<S> mse_to_const(Tape<S>& tp, Var<S> a, S target) {
  const auto& va = tp.value(a);
  const S n = static_cast<S>(va.numel());
  Tensor<S> v = Tensor<S>::scalar((va.flat().array() - target).square().sum() / n);
  const bool rg = tp.requires_grad(a);
  Var<S> out = tp.make(std::move(v), rg);
  if (rg)
    tp.set_backward(out, [a, target, n, out](Tape<S>& t) {
      const S g = S(2) * t.grad_of(out)[0] / n;
      t.accumulate(a, ((t.value(a).flat().array() - target) * g).matrix().eval());
    });
  return out;
}

// Numerically stable mean binary cross-entropy from logits:
// mean( max(z,0) - z*y + log(1+exp(-|z|)) ), y constant in {0,1}.
template <typename S>
Var<S> bce_with_logits(Tape<S>& tp, Var<S> z, S target) {
  const auto& vz = tp.value(z);
  const S n = static_cast<S>(vz.numel());
  S acc = S(0);
  for (Eigen::Index i = 0; i < vz.numel(); ++i) {
    const S x = vz[i];
    acc += std::max(x, S(0)) - x * target + std::log1p(std::exp(-std::abs(x)));
  }
  Var<S> out = tp.make(Tensor<S>::scalar(acc / n), tp.requires_grad(z));
  if (tp.requires_grad(z))
    tp.set_backward(out, [z, target, n, out](Tape<S>& t) {
      const S g = t.grad_of(out)[0] / n;
      t.accumulate(z, (t.value(z).flat().unaryExpr([target](S x) {
        return S(1) / (S(1) + std::exp(-x)) - target;
      }) * g).eval());
    });
  return out;
}

// sum_i weights[i] * scalars[i]
template <typename S>
Var<S> weighted_sum(Tape<S>& tp, const std::vector<Var<S>>& scalars,
                    const std::vector<S>& weights) {
  if (scalars.size() != weights.size() || scalars.empty())
    throw std::invalid_argument("weighted_sum: size mismatch");
  S total = S(0);
  bool rg = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    if (tp.value(scalars[i]).numel() != 1)
      throw std::invalid_argument("weighted_sum: non-scalar term");
    total += weights[i] * tp.value(scalars[i])[0];
    rg = rg || tp.requires_grad(scalars[i]);
  }
  Var<S> out = tp.make(Tensor<S>::scalar(total), rg);
  if (rg)
    tp.set_backward(out, [scalars, weights, out](Tape<S>& t) {
      const S g = t.grad_of(out)[0];
      for (size_t i = 0; i < scalars.size(); ++i)
        t.accumulate(scalars[i], Eigen::Matrix<S, Eigen::Dynamic, 1>::Constant(
                                     1, weights[i] * g));
    });
  return out;
}

}  // namespace ad
}  // namespace ctrgan
