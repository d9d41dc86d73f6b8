#pragma once

#include <functional>
#include <vector>

#include "ctrgan/autodiff.hpp"
#include "ctrgan/errors.hpp"

namespace ctrgan::train {

struct LossWeights {
  double lambda_idt = 5.0;
  double lambda_adv = 1.0;
  double lambda_cyc = 10.0;
  double lambda_per = 1.0;

  void validate() const {
    for (double w : {lambda_idt, lambda_adv, lambda_cyc, lambda_per})
      if (w < 0.0) throw DataError("loss weights must be non-negative");
    if (lambda_idt + lambda_adv + lambda_cyc + lambda_per <= 0.0)
      throw DataError("at least one loss weight must be positive");
  }
};

// The loss functions are written against frame->frame (generator) and
// frame->score-map (discriminator) callables so they can be exercised with
// stand-in networks in tests and reused by the training loop with window
// batches.
template <typename S>
using FrameFn = std::function<ad::Var<S>(Tape<S>&, ad::Var<S>)>;

// l_idt = L1(G_st(P_t), P_t) + L1(G_ts(P_s), P_s)
template <typename S>
ad::Var<S> loss_identity(Tape<S>& tp, const FrameFn<S>& g_st, const FrameFn<S>& g_ts,
                         ad::Var<S> p_t, ad::Var<S> p_s) {
  auto t_term = ad::l1_loss(tp, g_st(tp, p_t), p_t);
  auto s_term = ad::l1_loss(tp, g_ts(tp, p_s), p_s);
  return ad::add(tp, t_term, s_term);
}

// Least-squares adversarial objective for the discriminator update:
// fakes are pushed to 0, reals to 1, summed over both directions.
template <typename S>
ad::Var<S> loss_adversarial(Tape<S>& tp, const FrameFn<S>& d_st, const FrameFn<S>& d_ts,
                            ad::Var<S> fake_t, ad::Var<S> real_t, ad::Var<S> fake_s,
                            ad::Var<S> real_s) {
  auto a = ad::mse_to_const(tp, d_st(tp, fake_t), S(0));
  auto b = ad::mse_to_const(tp, d_st(tp, real_t), S(1));
  auto c = ad::mse_to_const(tp, d_ts(tp, fake_s), S(0));
  auto d = ad::mse_to_const(tp, d_ts(tp, real_s), S(1));
  return ad::add(tp, ad::add(tp, a, b), ad::add(tp, c, d));
}

// Flipped-target variant used for the generator update.
template <typename S>
ad::Var<S> loss_adversarial_generator(Tape<S>& tp, const FrameFn<S>& d_st,
                                      const FrameFn<S>& d_ts, ad::Var<S> fake_t,
                                      ad::Var<S> fake_s) {
  auto a = ad::mse_to_const(tp, d_st(tp, fake_t), S(1));
  auto b = ad::mse_to_const(tp, d_ts(tp, fake_s), S(1));
  return ad::add(tp, a, b);
}

// l_cyc = L2(G_ts(G_st(P_s)), P_s) + L2(G_st(G_ts(P_t)), P_t)
template <typename S>
ad::Var<S> loss_cycle(Tape<S>& tp, const FrameFn<S>& g_st, const FrameFn<S>& g_ts,
                      ad::Var<S> p_s, ad::Var<S> p_t) {
  auto s_term = ad::mse_loss(tp, g_ts(tp, g_st(tp, p_s)), p_s);
  auto t_term = ad::mse_loss(tp, g_st(tp, g_ts(tp, p_t)), p_t);
  return ad::add(tp, s_term, t_term);
}

// ---- perceptual -------------------------------------------------------------

// Channels 0..2 of a [4,H,W] frame tensor as a 3-channel tensor.
template <typename S>
ad::Var<S> iuv_channels(Tape<S>& tp, ad::Var<S> frame) {
  const auto& v = tp.value(frame);
  const int h = v.dim(1), w = v.dim(2);
  auto rows = ad::reshape(tp, frame, {4, h * w});
  return ad::reshape(tp, ad::slice_rows(tp, rows, 0, 3), {3, h, w});
}

// Alpha channel replicated to 3 channels (pretrained embedders expect RGB).
template <typename S>
ad::Var<S> alpha_as_rgb(Tape<S>& tp, ad::Var<S> frame) {
  const auto& v = tp.value(frame);
  const int h = v.dim(1), w = v.dim(2);
  auto rows = ad::reshape(tp, frame, {4, h * w});
  auto a = ad::slice_rows(tp, rows, 3, 1);
  return ad::reshape(tp, ad::concat_rows<S>(tp, {a, a, a}), {3, h, w});
}

// l_per: L1 between embedder features of the cycled frames and the real
// ones, with the IUV part and the alpha part measured separately.
template <typename S>
ad::Var<S> loss_perceptual(Tape<S>& tp, const FrameFn<S>& embed, ad::Var<S> cycled_s,
                           ad::Var<S> p_s, ad::Var<S> cycled_t, ad::Var<S> p_t) {
  auto term = [&](ad::Var<S> gen, ad::Var<S> real) {
    auto iuv = ad::l1_loss(tp, embed(tp, iuv_channels(tp, gen)),
                           embed(tp, iuv_channels(tp, real)));
    auto alpha = ad::l1_loss(tp, embed(tp, alpha_as_rgb(tp, gen)),
                             embed(tp, alpha_as_rgb(tp, real)));
    return ad::add(tp, iuv, alpha);
  };
  return ad::add(tp, term(cycled_s, p_s), term(cycled_t, p_t));
}

struct LossParts {
  double idt = 0, adv = 0, cyc = 0, per = 0;
};

// l = lambda_idt*l_idt + lambda_adv*l_adv + lambda_cyc*l_cyc + lambda_per*l_per
template <typename S>
ad::Var<S> total_loss(Tape<S>& tp, ad::Var<S> idt, ad::Var<S> adv, ad::Var<S> cyc,
                      ad::Var<S> per, const LossWeights& w) {
  return ad::weighted_sum<S>(tp, {idt, adv, cyc, per},
                             {S(w.lambda_idt), S(w.lambda_adv), S(w.lambda_cyc),
                              S(w.lambda_per)});
}

inline double total_loss_value(const LossParts& p, const LossWeights& w) {
  return w.lambda_idt * p.idt + w.lambda_adv * p.adv + w.lambda_cyc * p.cyc +
         w.lambda_per * p.per;
}

}  // namespace ctrgan::train
