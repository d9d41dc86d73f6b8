#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "ctrgan/checkpoint.hpp"
#include "ctrgan/dataset.hpp"
#include "ctrgan/losses.hpp"
#include "ctrgan/model.hpp"

namespace ctrgan::train {

using nlohmann::json;

struct TrainConfig {
  int epochs = 20;
  int warmup_epochs = 5;  // constant lr, then linear decay to zero
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int steps_per_epoch = 0;  // 0: one step per training window in the dataset
  bool augment = true;
  double augment_scale = 272.0 / 256.0;  // resize factor before random crop
  uint64_t seed = 0;
  int checkpoint_every_epochs = 10;
  int log_every_steps = 25;
  LossWeights weights;
  // Perceptual embedder: "none" disables the term (the desk moments
  // descriptor is not differentiable), "identity" uses raw pixels.
  std::string perceptual_embedder = "none";
  bool overfit_single_batch = false;  // debug probe: reuse the first sample

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);
};

// Constant during warmup, then linear to zero at `epochs`. `epoch` may be
// fractional; epoch 0 is the start of training.
double learning_rate_at(const TrainConfig& cfg, double epoch);

// Spatially coherent window augmentation: upscale by augment_scale, one
// random crop offset shared by all l_w frames, categorical-safe on I.
struct AugmentedWindow {
  std::vector<gait::IuvaFrame> frames;
  int offset_x = 0, offset_y = 0;
};
AugmentedWindow augment_window(const std::vector<gait::IuvaFrame>& window,
                               double scale, Rng& rng);

struct LossRow {
  int epoch = 0;
  int step = 0;
  double lr = 0;
  LossParts parts;
  double total = 0;
  double d_loss = 0;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<LossRow> curve;
  double initial_total = 0;
  double final_total = 0;
};

void write_loss_curve(const std::vector<LossRow>& rows,
                      const std::filesystem::path& path);

// Cycle training of the two generators and discriminators. `sequences` must
// hold >= 2 subjects with target_id among them; key sets must exist for the
// target and every source subject. Deterministic given config.seed.
template <typename S>
TrainResult train_ctrgan(model::CtrGanModel<S>& m,
                         const std::vector<gait::GaitSequence>& sequences,
                         const std::string& target_id,
                         const std::map<std::string, keys::KeySet>& keysets,
                         const TrainConfig& cfg,
                         const std::filesystem::path& out_dir,
                         const json& checkpoint_metadata = json::object());

// ---- implementation ---------------------------------------------------------

template <typename S>
TrainResult train_ctrgan(model::CtrGanModel<S>& m,
                         const std::vector<gait::GaitSequence>& sequences,
                         const std::string& target_id,
                         const std::map<std::string, keys::KeySet>& keysets,
                         const TrainConfig& cfg,
                         const std::filesystem::path& out_dir,
                         const json& checkpoint_metadata) {
  namespace fs = std::filesystem;
  using model::Ablation;
  cfg.validate();
  cfg.weights.validate();
  const int lw = m.cfg.window;

  // Split corpus into target sequences and per-source sequences.
  std::vector<const gait::GaitSequence*> target_seqs;
  std::vector<std::string> source_ids;
  std::map<std::string, std::vector<const gait::GaitSequence*>> source_seqs;
  for (const auto& s : sequences) {
    if (s.size() < lw) continue;
    if (s.subject_id == target_id) {
      target_seqs.push_back(&s);
    } else {
      if (!source_seqs.count(s.subject_id)) source_ids.push_back(s.subject_id);
      source_seqs[s.subject_id].push_back(&s);
    }
  }
  if (target_seqs.empty())
    throw DataError("train: target subject '" + target_id + "' not in dataset");
  if (source_ids.empty())
    throw DataError("train: need at least 2 subjects (no sources found)");
  if (!keysets.count(target_id))
    throw DataError("train: missing KeySet for target '" + target_id + "'");
  for (const auto& id : source_ids)
    if (!keysets.count(id)) throw DataError("train: missing KeySet for source '" + id + "'");

  m.g_st.expected_subject = target_id;

  int total_windows = 0;
  for (const auto& s : sequences)
    if (s.size() >= lw) total_windows += s.size() - lw + 1;
  const int steps_per_epoch =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : std::max(1, total_windows / 2);

  double effective_lambda_per = cfg.weights.lambda_per;
  FrameFn<S> embed;
  if (cfg.perceptual_embedder == "identity") {
    embed = [](Tape<S>& tp, ad::Var<S> x) { return x; };
  } else {
    if (effective_lambda_per > 0.0 && cfg.perceptual_embedder == "none") {
      // The desk feature extractor is not differentiable; note and disable.
      std::ofstream(out_dir / "logs" / "notices.txt", std::ios::app)
          << "perceptual loss disabled: no differentiable embedder configured "
             "(lambda_per treated as 0)\n";
      effective_lambda_per = 0.0;
    }
  }
  LossWeights weights = cfg.weights;
  weights.lambda_per = effective_lambda_per;

  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "logs");

  nn::AdamOptimizer<S> adam_g(m.generator_params(), cfg.adam_beta1, cfg.adam_beta2);
  nn::AdamOptimizer<S> adam_d(m.discriminator_params(), cfg.adam_beta1,
                              cfg.adam_beta2);

  Rng sample_rng = Rng::derive(cfg.seed, "train_sampling");
  auto& tape = m.tape;

  auto pick_window = [&](const std::vector<const gait::GaitSequence*>& seqs)
      -> std::vector<gait::IuvaFrame> {
    const auto* seq = seqs[sample_rng.uniform_int(static_cast<int>(seqs.size()))];
    const int start = sample_rng.uniform_int(seq->size() - lw + 1);
    std::vector<gait::IuvaFrame> w(seq->frames.begin() + start,
                                   seq->frames.begin() + start + lw);
    if (cfg.augment) w = augment_window(w, cfg.augment_scale, sample_rng).frames;
    return w;
  };

  struct Sample {
    std::string source_id;
    std::vector<gait::IuvaFrame> window_s, window_t;
  };
  std::optional<Sample> frozen;  // overfit probe

  TrainResult result;
  const bool cycle_only = m.cfg.ablation == Ablation::cycle_only;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      const double epoch_frac = epoch + double(step) / steps_per_epoch;
      const double lr = learning_rate_at(cfg, epoch_frac);

      Sample smp;
      if (frozen) {
        smp = *frozen;
      } else {
        smp.source_id = source_ids[sample_rng.uniform_int(int(source_ids.size()))];
        smp.window_s = pick_window(source_seqs[smp.source_id]);
        smp.window_t = pick_window(target_seqs);
        if (cfg.overfit_single_batch) frozen = smp;
      }

      // ---- generator update
      tape.reset();
      auto dummy = tape.input(Tensor<S>::zeros({1}));
      auto mem_t = cycle_only ? dummy
                              : m.g_st.encode_keys(tape, m.cfg, keysets.at(target_id),
                                                   nullptr);
      auto mem_s = cycle_only ? dummy
                              : m.g_ts.encode_keys(tape, m.cfg,
                                                   keysets.at(smp.source_id), nullptr);
      std::vector<ad::Var<S>> win_s, win_t;
      for (const auto& f : smp.window_s)
        win_s.push_back(tape.input(model::frame_to_tensor<S>(f)));
      for (const auto& f : smp.window_t)
        win_t.push_back(tape.input(model::frame_to_tensor<S>(f)));

      auto fake_t = m.g_st.apply(tape, m.cfg, mem_t, win_s, true, nullptr);
      auto fake_s = m.g_ts.apply(tape, m.cfg, mem_s, win_t, true, nullptr);
      auto idt_t = m.g_st.apply(tape, m.cfg, mem_t, win_t, true, nullptr);
      auto idt_s = m.g_ts.apply(tape, m.cfg, mem_s, win_s, true, nullptr);
      auto cyc_s = m.g_ts.apply(tape, m.cfg, mem_s, fake_t, true, nullptr);
      auto cyc_t = m.g_st.apply(tape, m.cfg, mem_t, fake_s, true, nullptr);

      auto mean_of = [&](std::vector<ad::Var<S>> terms) {
        auto acc = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) acc = ad::add(tape, acc, terms[i]);
        return ad::scale(tape, acc, S(1) / S(terms.size()));
      };
      std::vector<ad::Var<S>> idt_terms, cyc_terms;
      for (int i = 0; i < lw; ++i) {
        idt_terms.push_back(ad::add(tape, ad::l1_loss(tape, idt_t[i], win_t[i]),
                                    ad::l1_loss(tape, idt_s[i], win_s[i])));
        cyc_terms.push_back(ad::add(tape, ad::mse_loss(tape, cyc_s[i], win_s[i]),
                                    ad::mse_loss(tape, cyc_t[i], win_t[i])));
      }
      auto l_idt = mean_of(idt_terms);
      auto l_cyc = mean_of(cyc_terms);
      auto l_adv_g = loss_adversarial_generator<S>(
          tape,
          [&](Tape<S>& tp, ad::Var<S> x) { return m.d_st.forward(tp, x); },
          [&](Tape<S>& tp, ad::Var<S> x) { return m.d_ts.forward(tp, x); },
          fake_t.back(), fake_s.back());
      auto l_per = embed ? loss_perceptual<S>(tape, embed, cyc_s.back(), win_s.back(),
                                              cyc_t.back(), win_t.back())
                         : tape.input(Tensor<S>::zeros({1}));
      auto g_total = total_loss(tape, l_idt, l_adv_g, l_cyc, l_per, weights);

      LossRow row;
      row.epoch = epoch;
      row.step = epoch * steps_per_epoch + step;
      row.lr = lr;
      row.parts.idt = tape.value(l_idt)[0];
      row.parts.adv = tape.value(l_adv_g)[0];
      row.parts.cyc = tape.value(l_cyc)[0];
      row.parts.per = tape.value(l_per)[0];
      row.total = tape.value(g_total)[0];
      if (!std::isfinite(row.total))
        throw NumericError("train: non-finite generator loss at step " +
                           std::to_string(row.step));

      // Keep the detached fakes for the discriminator update.
      Tensor<S> fake_t_last = tape.value(fake_t.back());
      Tensor<S> fake_s_last = tape.value(fake_s.back());

      tape.backward(g_total);
      adam_g.step(tape, lr);

      // ---- discriminator update (fakes detached)
      tape.reset();
      auto l_d = loss_adversarial<S>(
          tape, [&](Tape<S>& tp, ad::Var<S> x) { return m.d_st.forward(tp, x); },
          [&](Tape<S>& tp, ad::Var<S> x) { return m.d_ts.forward(tp, x); },
          tape.input(std::move(fake_t_last)),
          tape.input(model::frame_to_tensor<S>(smp.window_t.back())),
          tape.input(std::move(fake_s_last)),
          tape.input(model::frame_to_tensor<S>(smp.window_s.back())));
      row.d_loss = tape.value(l_d)[0];
      if (!std::isfinite(row.d_loss))
        throw NumericError("train: non-finite discriminator loss at step " +
                           std::to_string(row.step));
      tape.backward(l_d);
      adam_d.step(tape, lr);
      tape.reset();

      if (step % std::max(1, cfg.log_every_steps) == 0 ||
          step + 1 == steps_per_epoch)
        result.curve.push_back(row);
      if (result.curve.size() == 1) result.initial_total = row.total;
      result.final_total = row.total;
    }

    if ((epoch + 1) % std::max(1, cfg.checkpoint_every_epochs) == 0 &&
        epoch + 1 < cfg.epochs) {
      char name[40];
      std::snprintf(name, sizeof(name), "ck_epoch%03d.ckpt", epoch + 1);
      save_checkpoint(m, out_dir / "checkpoints" / name, checkpoint_metadata);
    }
  }

  result.checkpoint = out_dir / "checkpoints" / "ck_final.ckpt";
  json meta = checkpoint_metadata;
  meta["target_subject"] = target_id;
  meta["train_config"] = cfg.to_json();
  save_checkpoint(m, result.checkpoint, meta);
  write_loss_curve(result.curve, out_dir / "logs" / "loss.csv");
  return result;
}

}  // namespace ctrgan::train
