#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrgan/errors.hpp"
#include "ctrgan/keys.hpp"
#include "ctrgan/nn.hpp"
#include "ctrgan/sequence.hpp"

namespace ctrgan::model {

using nlohmann::json;

// Table-4 configuration levels: cycle_only bypasses the transformer entirely
// (encoder features go straight to the frame decoder), attention enables
// encoder self-attention and cross-attention, time_attention adds decoder
// self-attention over the query window.
enum class Ablation { cycle_only, attention, time_attention };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
  int canvas = 64;
  int in_channels = 4;
  // Frame encoder: conv channels/strides followed by one max-pool.
  std::vector<int> enc_channels{16, 32, 48, 64, 64};
  std::vector<int> enc_strides{2, 2, 2, 1, 1};
  int pool_stride = 2;
  // Frame decoder: one conv per 2x upsample back to full resolution.
  std::vector<int> dec_channels{48, 24, 12, 8};
  int kernel = 3;
  int token_dim = 256;
  int n_heads = 4;
  int n_blocks_encoder = 2;
  int n_blocks_decoder = 2;
  int ffn_mult = 2;
  int window = 3;  // l_w
  Ablation ablation = Ablation::time_attention;
  double leaky_slope = 0.1;
  // Patch discriminator.
  std::vector<int> disc_channels{16, 32, 64, 64, 1};
  std::vector<int> disc_strides{2, 2, 2, 1, 1};
  int disc_kernel = 4;

  // 64x64 desk preset (defaults above): features 64 x canvas/16 x canvas/16.
  static ModelConfig desk();
  // 256x256 preset: features 256 x canvas/64 x canvas/64.
  static ModelConfig paper();

  int downsample() const;
  int grid() const { return canvas / downsample(); }
  int feature_channels() const { return enc_channels.back(); }
  int flat_dim() const { return feature_channels() * grid() * grid(); }
  void validate() const;

  json to_json() const;
  static ModelConfig from_json(const json& j);
};

// Attention weights captured during one generator application.
struct AttentionRecord {
  std::vector<Tensord> encoder_self;  // per encoder block: [heads, m, m]
  std::vector<Tensord> decoder_self;  // per decoder block: [heads, l_w, l_w]
  std::vector<Tensord> cross;         // per decoder block: [heads, l_w, m]
};

// IUVA <-> network tensor. The part-index channel is scaled to [0,1].
template <typename S>
Tensor<S> frame_to_tensor(const gait::IuvaFrame& f) {
  const int h = f.height(), w = f.width();
  Tensor<S> t({4, h, w});
  S* d = t.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      d[(0 * h + y) * w + x] = static_cast<S>(f.I(y, x) / gait::kMaxPartIndex);
      d[(1 * h + y) * w + x] = static_cast<S>(f.U(y, x));
      d[(2 * h + y) * w + x] = static_cast<S>(f.V(y, x));
      d[(3 * h + y) * w + x] = static_cast<S>(f.A(y, x));
    }
  return t;
}

template <typename S>
gait::IuvaFrame tensor_to_frame(const Tensor<S>& t) {
  if (t.rank() != 3 || t.dim(0) != 4)
    throw DataError("tensor_to_frame: expected [4,H,W]");
  const int h = t.dim(1), w = t.dim(2);
  gait::IuvaFrame f;
  f.I.setZero(h, w);
  f.U.setZero(h, w);
  f.V.setZero(h, w);
  f.A.setZero(h, w);
  const S* d = t.data();
  auto clamp01 = [](S v) { return std::min(S(1), std::max(S(0), v)); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.I(y, x) = std::round(static_cast<float>(clamp01(d[(0 * h + y) * w + x])) *
                             gait::kMaxPartIndex);
      f.U(y, x) = static_cast<float>(clamp01(d[(1 * h + y) * w + x]));
      f.V(y, x) = static_cast<float>(clamp01(d[(2 * h + y) * w + x]));
      f.A(y, x) = static_cast<float>(clamp01(d[(3 * h + y) * w + x]));
    }
  return f;
}

// ---- frame encoder / decoder ------------------------------------------------

template <typename S>
struct FrameEncoder {
  std::vector<nn::Conv2dLayer<S>> convs;
  int pool_stride = 1;
  S slope = S(0.1);

  static FrameEncoder init(Tape<S>& tape, nn::ParamRegistry<S>& reg, Rng& rng,
                           const std::string& name, const ModelConfig& cfg) {
    FrameEncoder e;
    int in = cfg.in_channels;
    for (size_t i = 0; i < cfg.enc_channels.size(); ++i) {
      e.convs.push_back(nn::Conv2dLayer<S>::init(
          tape, reg, rng, name + ".conv" + std::to_string(i), in,
          cfg.enc_channels[i], cfg.kernel, cfg.enc_strides[i]));
      in = cfg.enc_channels[i];
    }
    e.pool_stride = cfg.pool_stride;
    e.slope = static_cast<S>(cfg.leaky_slope);
    return e;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x) const {
    for (const auto& c : convs) x = ad::leaky_relu(tape, c.forward(tape, x), slope);
    if (pool_stride > 1) x = ad::maxpool2d(tape, x, pool_stride, pool_stride);
    return x;
  }
};

template <typename S>
struct FrameDecoder {
  std::vector<nn::Conv2dLayer<S>> convs;
  nn::Conv2dLayer<S> out_conv;
  S slope = S(0.1);

  static FrameDecoder init(Tape<S>& tape, nn::ParamRegistry<S>& reg, Rng& rng,
                           const std::string& name, const ModelConfig& cfg) {
    FrameDecoder d;
    int in = cfg.feature_channels();
    for (size_t i = 0; i < cfg.dec_channels.size(); ++i) {
      d.convs.push_back(nn::Conv2dLayer<S>::init(
          tape, reg, rng, name + ".conv" + std::to_string(i), in,
          cfg.dec_channels[i], cfg.kernel, 1));
      in = cfg.dec_channels[i];
    }
    d.out_conv = nn::Conv2dLayer<S>::init(tape, reg, rng, name + ".out", in,
                                          cfg.in_channels, cfg.kernel, 1, 1.0);
    d.slope = static_cast<S>(cfg.leaky_slope);
    return d;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x) const {
    for (const auto& c : convs) {
      x = ad::upsample2d(tape, x, 2);
      x = ad::leaky_relu(tape, c.forward(tape, x), slope);
    }
    return ad::sigmoid(tape, out_conv.forward(tape, x));
  }
};

// ---- transformer stacks ------------------------------------------------------

template <typename S>
struct EncoderBlock {
  nn::LayerNormLayer<S> ln1, ln2;
  nn::MultiHeadAttention<S> self_attn;
  nn::FeedForward<S> ffn;

  static EncoderBlock init(Tape<S>& tape, nn::ParamRegistry<S>& reg, Rng& rng,
                           const std::string& name, const ModelConfig& cfg) {
    EncoderBlock b;
    b.ln1 = nn::LayerNormLayer<S>::init(tape, reg, name + ".ln1", cfg.token_dim);
    b.ln2 = nn::LayerNormLayer<S>::init(tape, reg, name + ".ln2", cfg.token_dim);
    b.self_attn = nn::MultiHeadAttention<S>::init(tape, reg, rng, name + ".self",
                                                  cfg.token_dim, cfg.n_heads);
    b.ffn = nn::FeedForward<S>::init(tape, reg, rng, name + ".ffn", cfg.token_dim,
                                     cfg.token_dim * cfg.ffn_mult);
    return b;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x, Tensord* rec) const {
    auto n1 = ln1.forward(tape, x);
    x = ad::add(tape, x, self_attn.forward(tape, n1, n1, rec));
    x = ad::add(tape, x, ffn.forward(tape, ln2.forward(tape, x)));
    return x;
  }
};

template <typename S>
struct DecoderBlock {
  nn::LayerNormLayer<S> ln1, ln2, ln3;
  nn::MultiHeadAttention<S> self_attn, cross_attn;
  nn::FeedForward<S> ffn;

  static DecoderBlock init(Tape<S>& tape, nn::ParamRegistry<S>& reg, Rng& rng,
                           const std::string& name, const ModelConfig& cfg) {
    DecoderBlock b;
    b.ln1 = nn::LayerNormLayer<S>::init(tape, reg, name + ".ln1", cfg.token_dim);
    b.ln2 = nn::LayerNormLayer<S>::init(tape, reg, name + ".ln2", cfg.token_dim);
    b.ln3 = nn::LayerNormLayer<S>::init(tape, reg, name + ".ln3", cfg.token_dim);
    b.self_attn = nn::MultiHeadAttention<S>::init(tape, reg, rng, name + ".self",
                                                  cfg.token_dim, cfg.n_heads);
    b.cross_attn = nn::MultiHeadAttention<S>::init(tape, reg, rng, name + ".cross",
                                                   cfg.token_dim, cfg.n_heads);
    b.ffn = nn::FeedForward<S>::init(tape, reg, rng, name + ".ffn", cfg.token_dim,
                                     cfg.token_dim * cfg.ffn_mult);
    return b;
  }

  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> x, ad::Var<S> memory, bool use_self,
                     Tensord* rec_self, Tensord* rec_cross) const {
    if (use_self) {
      auto n1 = ln1.forward(tape, x);
      x = ad::add(tape, x, self_attn.forward(tape, n1, n1, rec_self));
    }
    x = ad::add(tape, x,
                cross_attn.forward(tape, ln2.forward(tape, x), memory, rec_cross));
    x = ad::add(tape, x, ffn.forward(tape, ln3.forward(tape, x)));
    return x;
  }
};

// ---- generator ----------------------------------------------------------------

// One translation direction: frame encoder F, token projections, transformer
// encoder over the key tokens, transformer decoder over the query window,
// frame decoder H.
template <typename S>
struct Generator {
  FrameEncoder<S> F;
  nn::LinearLayer<S> to_token, from_token;
  std::vector<EncoderBlock<S>> enc_blocks;
  std::vector<DecoderBlock<S>> dec_blocks;
  nn::LayerNormLayer<S> enc_final_ln, dec_final_ln;
  FrameDecoder<S> H;
  std::string expected_subject;  // KeySet conditioning check; empty = any

  static Generator init(Tape<S>& tape, nn::ParamRegistry<S>& reg, Rng& rng,
                        const std::string& name, const ModelConfig& cfg) {
    Generator g;
    g.F = FrameEncoder<S>::init(tape, reg, rng, name + ".F", cfg);
    g.to_token = nn::LinearLayer<S>::init(tape, reg, rng, name + ".to_token",
                                          cfg.flat_dim(), cfg.token_dim);
    g.from_token = nn::LinearLayer<S>::init(tape, reg, rng, name + ".from_token",
                                            cfg.token_dim, cfg.flat_dim());
    for (int i = 0; i < cfg.n_blocks_encoder; ++i)
      g.enc_blocks.push_back(EncoderBlock<S>::init(
          tape, reg, rng, name + ".enc" + std::to_string(i), cfg));
    for (int i = 0; i < cfg.n_blocks_decoder; ++i)
      g.dec_blocks.push_back(DecoderBlock<S>::init(
          tape, reg, rng, name + ".dec" + std::to_string(i), cfg));
    g.enc_final_ln = nn::LayerNormLayer<S>::init(tape, reg, name + ".enc_ln", cfg.token_dim);
    g.dec_final_ln = nn::LayerNormLayer<S>::init(tape, reg, name + ".dec_ln", cfg.token_dim);
    g.H = FrameDecoder<S>::init(tape, reg, rng, name + ".H", cfg);
    return g;
  }

  // One temporal token per frame tensor; no positional encoding (the gait
  // cycle supplies the order).
  ad::Var<S> tokenize(Tape<S>& tape, const ModelConfig& cfg,
                      const std::vector<ad::Var<S>>& tensors) const {
    std::vector<ad::Var<S>> rows;
    rows.reserve(tensors.size());
    for (auto t : tensors) rows.push_back(ad::reshape(tape, t, {1, cfg.flat_dim()}));
    auto stacked = rows.size() == 1 ? rows[0] : ad::concat_rows(tape, rows);
    return to_token.forward(tape, stacked);
  }

  ad::Var<S> encode_keys(Tape<S>& tape, const ModelConfig& cfg,
                         const keys::KeySet& ks, AttentionRecord* rec) const {
    if (!expected_subject.empty() && ks.subject_id != expected_subject)
      throw DataError("generator expects keys of subject '" + expected_subject +
                      "' but got '" + ks.subject_id + "'");
    std::vector<ad::Var<S>> fts;
    fts.reserve(ks.keys.size());
    for (const auto& frame : ks.keys)
      fts.push_back(F.forward(tape, tape.input(frame_to_tensor<S>(frame))));
    auto tokens = tokenize(tape, cfg, fts);
    for (size_t i = 0; i < enc_blocks.size(); ++i) {
      Tensord* r = nullptr;
      if (rec) {
        rec->encoder_self.emplace_back();
        r = &rec->encoder_self.back();
      }
      tokens = enc_blocks[i].forward(tape, tokens, r);
    }
    return enc_final_ln.forward(tape, tokens);
  }

  // Runs the decoder over an encoded window and returns one decoded frame
  // tensor per requested output position (all l_w positions, or just the
  // last). In cycle_only the attention path is bypassed per configuration.
  std::vector<ad::Var<S>> apply(Tape<S>& tape, const ModelConfig& cfg,
                                ad::Var<S> memory,
                                const std::vector<ad::Var<S>>& window,
                                bool decode_all, AttentionRecord* rec) const {
    if (static_cast<int>(window.size()) != cfg.window)
      throw DataError("generator: window length " + std::to_string(window.size()) +
                      " != l_w " + std::to_string(cfg.window));

    std::vector<ad::Var<S>> outputs;
    if (cfg.ablation == Ablation::cycle_only) {
      // Encoder features pass straight to H.
      const int first = decode_all ? 0 : cfg.window - 1;
      for (int i = first; i < cfg.window; ++i)
        outputs.push_back(H.forward(tape, F.forward(tape, window[i])));
      return outputs;
    }

    std::vector<ad::Var<S>> fts;
    fts.reserve(window.size());
    for (auto w : window) fts.push_back(F.forward(tape, w));
    auto tokens = tokenize(tape, cfg, fts);
    const bool use_self = cfg.ablation == Ablation::time_attention;
    for (size_t i = 0; i < dec_blocks.size(); ++i) {
      Tensord* rs = nullptr;
      Tensord* rc = nullptr;
      if (rec) {
        if (use_self) {
          rec->decoder_self.emplace_back();
          rs = &rec->decoder_self.back();
        }
        rec->cross.emplace_back();
        rc = &rec->cross.back();
      }
      tokens = dec_blocks[i].forward(tape, tokens, memory, use_self, rs, rc);
    }
    tokens = dec_final_ln.forward(tape, tokens);

    const int first = decode_all ? 0 : cfg.window - 1;
    for (int i = first; i < cfg.window; ++i) {
      auto tok = ad::slice_rows(tape, tokens, i, 1);
      auto ft = ad::reshape(tape, from_token.forward(tape, tok),
                            {cfg.feature_channels(), cfg.grid(), cfg.grid()});
      outputs.push_back(H.forward(tape, ft));
    }
    return outputs;
  }
};

template <typename S>
struct Discriminator {
  std::vector<nn::Conv2dLayer<S>> convs;
  S slope = S(0.2);

  static Discriminator init(Tape<S>& tape, nn::ParamRegistry<S>& reg, Rng& rng,
                            const std::string& name, const ModelConfig& cfg) {
    Discriminator d;
    int in = cfg.in_channels;
    for (size_t i = 0; i < cfg.disc_channels.size(); ++i) {
      d.convs.push_back(nn::Conv2dLayer<S>::init(
          tape, reg, rng, name + ".conv" + std::to_string(i), in,
          cfg.disc_channels[i], cfg.disc_kernel, cfg.disc_strides[i]));
      in = cfg.disc_channels[i];
    }
    return d;
  }

  // Patch-level score map.
  ad::Var<S> forward(Tape<S>& tape, ad::Var<S> frame) const {
    auto x = frame;
    for (size_t i = 0; i < convs.size(); ++i) {
      x = convs[i].forward(tape, x);
      if (i + 1 < convs.size()) x = ad::leaky_relu(tape, x, slope);
    }
    return x;
  }
};

// ---- model bundle ---------------------------------------------------------

template <typename S>
struct CtrGanModel {
  ModelConfig cfg;
  Tape<S> tape;
  nn::ParamRegistry<S> params;
  Generator<S> g_st, g_ts;
  Discriminator<S> d_st, d_ts;
  uint64_t init_seed = 0;

  std::vector<typename Tape<S>::Var> params_with_prefix(const std::string& p) const {
    std::vector<typename Tape<S>::Var> out;
    for (const auto& [name, v] : params.entries)
      if (name.rfind(p, 0) == 0) out.push_back(v);
    return out;
  }
  std::vector<typename Tape<S>::Var> generator_params() const {
    auto a = params_with_prefix("g_st.");
    auto b = params_with_prefix("g_ts.");
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  std::vector<typename Tape<S>::Var> discriminator_params() const {
    auto a = params_with_prefix("d_st.");
    auto b = params_with_prefix("d_ts.");
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
};

template <typename S>
std::unique_ptr<CtrGanModel<S>> make_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  auto m = std::make_unique<CtrGanModel<S>>();
  m->cfg = cfg;
  m->init_seed = seed;
  Rng rng = Rng::derive(seed, "model_init");
  m->g_st = Generator<S>::init(m->tape, m->params, rng, "g_st", cfg);
  m->g_ts = Generator<S>::init(m->tape, m->params, rng, "g_ts", cfg);
  m->d_st = Discriminator<S>::init(m->tape, m->params, rng, "d_st", cfg);
  m->d_ts = Discriminator<S>::init(m->tape, m->params, rng, "d_ts", cfg);
  return m;
}

// ---- spec-level operations --------------------------------------------------

// Translates one window; returns the frame aligned with the last window
// position plus the attention record of this application.
template <typename S>
std::pair<gait::IuvaFrame, AttentionRecord> generator_forward(
    CtrGanModel<S>& model, const Generator<S>& gen, const keys::KeySet& ks,
    const std::vector<gait::IuvaFrame>& window) {
  AttentionRecord rec;
  auto& tape = model.tape;
  const size_t watermark = tape.size();
  auto memory = model.cfg.ablation == Ablation::cycle_only
                    ? tape.input(Tensor<S>::zeros({1}))
                    : gen.encode_keys(tape, model.cfg, ks, &rec);
  std::vector<ad::Var<S>> win;
  win.reserve(window.size());
  for (const auto& f : window) win.push_back(tape.input(frame_to_tensor<S>(f)));
  auto outs = gen.apply(tape, model.cfg, memory, win, /*decode_all=*/false, &rec);
  gait::IuvaFrame out = tensor_to_frame(tape.value(outs.back()));
  (void)watermark;
  tape.reset();
  return {std::move(out), std::move(rec)};
}

// Sliding-window translation over a whole sequence (window advances one
// frame per step, so the output is l_w-1 frames shorter). Key tokens are
// encoded once and re-injected as constants per window.
template <typename S>
std::pair<gait::GaitSequence, std::vector<AttentionRecord>> translate_sequence(
    CtrGanModel<S>& model, const Generator<S>& gen, const keys::KeySet& ks,
    const gait::GaitSequence& seq) {
  const int lw = model.cfg.window;
  if (seq.size() < lw)
    throw DataError("translate_sequence: input shorter than the window");

  auto& tape = model.tape;
  tape.reset();
  Tensor<S> memory_values;
  AttentionRecord key_rec;
  const bool cycle_only = model.cfg.ablation == Ablation::cycle_only;
  if (!cycle_only) {
    auto memory = gen.encode_keys(tape, model.cfg, ks, &key_rec);
    memory_values = tape.value(memory);
    tape.reset();
  }

  gait::GaitSequence out;
  out.subject_id = ks.subject_id;
  out.view = seq.view;
  out.fps = seq.fps;
  std::vector<AttentionRecord> records;
  std::vector<Tensor<S>> window_tensors;
  for (int i = 0; i < lw; ++i)
    window_tensors.push_back(frame_to_tensor<S>(seq.frames[i]));

  for (int start = 0; start + lw <= seq.size(); ++start) {
    AttentionRecord rec;
    rec.encoder_self = key_rec.encoder_self;
    auto memory = cycle_only ? tape.input(Tensor<S>::zeros({1}))
                             : tape.input(memory_values);
    std::vector<ad::Var<S>> win;
    for (int i = 0; i < lw; ++i) win.push_back(tape.input(window_tensors[i]));
    auto outs = gen.apply(tape, model.cfg, memory, win, false, &rec);
    out.frames.push_back(tensor_to_frame(tape.value(outs.back())));
    records.push_back(std::move(rec));
    tape.reset();

    if (start + lw < seq.size()) {
      for (int i = 0; i + 1 < lw; ++i) window_tensors[i] = std::move(window_tensors[i + 1]);
      window_tensors[lw - 1] = frame_to_tensor<S>(seq.frames[start + lw]);
    }
  }
  return {std::move(out), std::move(records)};
}

template <typename S>
Tensor<S> discriminator_forward(CtrGanModel<S>& model, const Discriminator<S>& d,
                                const gait::IuvaFrame& frame) {
  auto& tape = model.tape;
  auto score = d.forward(tape, tape.input(frame_to_tensor<S>(frame)));
  Tensor<S> out = tape.value(score);
  if (!out.all_finite()) throw NumericError("discriminator produced non-finite scores");
  tape.reset();
  return out;
}

// Cross-attention mass assigned to one key over time: mean over heads and
// query positions of the last decoder block's attention, per output frame.
Eigen::VectorXd attention_trace(const std::vector<AttentionRecord>& records,
                                int key_index);

}  // namespace ctrgan::model
