#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ctrgan/autodiff.hpp"
#include "ctrgan/random.hpp"

namespace ctrgan::nn {

// Names every parameter so checkpoints can address tensors and optimizers
// can form parameter groups.
template <typename S>
struct ParamRegistry {
  std::vector<std::pair<std::string, typename Tape<S>::Var>> entries;

  typename Tape<S>::Var add(Tape<S>& tape, const std::string& name, Tensor<S> init) {
    auto v = tape.parameter(std::move(init));
    entries.push_back({name, v});
    return v;
  }
  std::vector<typename Tape<S>::Var> vars() const {
    std::vector<typename Tape<S>::Var> out;
    out.reserve(entries.size());
    for (const auto& [_, v] : entries) out.push_back(v);
    return out;
  }
};

template <typename S>
Tensor<S> normal_init(Rng& rng, std::vector<int> shape, double stddev) {
  Tensor<S> t(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.normal(0.0, stddev));
  return t;
}

template <typename S>
struct Conv2dLayer {
  typename Tape<S>::Var w, b;
  int stride = 1, pad = 1;

  static Conv2dLayer init(Tape<S>& tape, ParamRegistry<S>& reg, Rng& rng,
                          const std::string& name, int in_ch, int out_ch,
                          int kernel, int stride, double gain = 2.0) {
    Conv2dLayer l;
    const double stddev = std::sqrt(gain / (in_ch * kernel * kernel));
    l.w = reg.add(tape, name + ".w",
                  normal_init<S>(rng, {out_ch, in_ch, kernel, kernel}, stddev));
    l.b = reg.add(tape, name + ".b", Tensor<S>::zeros({out_ch}));
    l.stride = stride;
    l.pad = (kernel - 1) / 2;
    return l;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x) const {
    return ad::conv2d(tape, x, w, b, stride, pad);
  }
};

template <typename S>
struct LinearLayer {
  typename Tape<S>::Var w, b;

  static LinearLayer init(Tape<S>& tape, ParamRegistry<S>& reg, Rng& rng,
                          const std::string& name, int in_dim, int out_dim,
                          double gain = 1.0) {
    LinearLayer l;
    const double stddev = std::sqrt(gain / in_dim);
    l.w = reg.add(tape, name + ".w", normal_init<S>(rng, {in_dim, out_dim}, stddev));
    l.b = reg.add(tape, name + ".b", Tensor<S>::zeros({out_dim}));
    return l;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x) const {
    return ad::linear(tape, x, w, b);
  }
};

template <typename S>
struct LayerNormLayer {
  typename Tape<S>::Var gamma, beta;

  static LayerNormLayer init(Tape<S>& tape, ParamRegistry<S>& reg,
                             const std::string& name, int dim) {
    LayerNormLayer l;
    l.gamma = reg.add(tape, name + ".gamma", Tensor<S>::constant({dim}, S(1)));
    l.beta = reg.add(tape, name + ".beta", Tensor<S>::zeros({dim}));
    return l;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x) const {
    return ad::layernorm_rows(tape, x, gamma, beta);
  }
};

// Multi-head attention. Queries come from q_in, keys/values from kv_in.
// When `record` is non-null the per-head attention weights are copied out as
// a [heads, n_q, n_kv] tensor.
template <typename S>
struct MultiHeadAttention {
  LinearLayer<S> wq, wk, wv, wo;
  int heads = 1;
  int dim = 0;

  static MultiHeadAttention init(Tape<S>& tape, ParamRegistry<S>& reg, Rng& rng,
                                 const std::string& name, int dim, int heads) {
    if (dim % heads != 0)
      throw std::invalid_argument("MultiHeadAttention: dim % heads != 0");
    MultiHeadAttention m;
    m.wq = LinearLayer<S>::init(tape, reg, rng, name + ".wq", dim, dim);
    m.wk = LinearLayer<S>::init(tape, reg, rng, name + ".wk", dim, dim);
    m.wv = LinearLayer<S>::init(tape, reg, rng, name + ".wv", dim, dim);
    m.wo = LinearLayer<S>::init(tape, reg, rng, name + ".wo", dim, dim);
    m.heads = heads;
    m.dim = dim;
    return m;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> q_in, ad::Var<S> kv_in,
                     Tensord* record = nullptr) const {
    const int dh = dim / heads;
    const int nq = tape.value(q_in).dim(0);
    const int nk = tape.value(kv_in).dim(0);
    auto q = wq.forward(tape, q_in);
    auto k = wk.forward(tape, kv_in);
    auto v = wv.forward(tape, kv_in);
    if (record) *record = Tensord({heads, nq, nk});

    std::vector<ad::Var<S>> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      auto qh = ad::slice_cols(tape, q, h * dh, dh);
      auto kh = ad::slice_cols(tape, k, h * dh, dh);
      auto vh = ad::slice_cols(tape, v, h * dh, dh);
      auto scores = ad::scale(tape, ad::matmul(tape, qh, ad::transpose2d(tape, kh)),
                              S(1) / static_cast<S>(std::sqrt(double(dh))));
      auto attn = ad::softmax_rows(tape, scores);
      if (record) {
        const auto& a = tape.value(attn);
        for (Eigen::Index i = 0; i < a.numel(); ++i)
          (*record)[static_cast<Eigen::Index>(h) * nq * nk + i] =
              static_cast<double>(a[i]);
      }
      head_outs.push_back(ad::matmul(tape, attn, vh));
    }
    auto merged = heads == 1 ? head_outs[0] : ad::concat_cols(tape, head_outs);
    return wo.forward(tape, merged);
  }
};

// Position-wise feed-forward: linear, ReLU, linear.
template <typename S>
struct FeedForward {
  LinearLayer<S> up, down;

  static FeedForward init(Tape<S>& tape, ParamRegistry<S>& reg, Rng& rng,
                          const std::string& name, int dim, int hidden) {
    FeedForward f;
    f.up = LinearLayer<S>::init(tape, reg, rng, name + ".up", dim, hidden, 2.0);
    f.down = LinearLayer<S>::init(tape, reg, rng, name + ".down", hidden, dim);
    return f;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x) const {
    return down.forward(tape, ad::relu(tape, up.forward(tape, x)));
  }
};

// Adam with bias correction; one instance per parameter group.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<typename Tape<S>::Var> params, double beta1,
                double beta2, double epsilon = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  // Applies one update from the gradients currently on the tape.
  void step(Tape<S>& tape, double lr) {
    if (m_.empty()) {
      for (auto p : params_) {
        m_.push_back(Tensor<S>::zeros(tape.value(p).shape()));
        v_.push_back(Tensor<S>::zeros(tape.value(p).shape()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      if (!tape.has_grad(params_[i])) continue;
      const auto& g = tape.grad(params_[i]).flat();
      auto& m = m_[i].flat();
      auto& v = v_[i].flat();
      m = S(beta1_) * m + S(1.0 - beta1_) * g;
      v = (S(beta2_) * v.array() + S(1.0 - beta2_) * g.array().square()).matrix();
      auto mhat = (m.array() / S(bc1)).eval();
      auto vhat = (v.array() / S(bc2)).eval();
      tape.value_mut(params_[i]).flat().array() -=
          S(lr) * mhat / (vhat.sqrt() + S(eps_));
    }
  }

  int steps_taken() const { return t_; }

 private:
  std::vector<typename Tape<S>::Var> params_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace ctrgan::nn
