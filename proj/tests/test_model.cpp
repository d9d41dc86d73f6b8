#include <doctest.h>

#include <filesystem>

#include "ctrgan/checkpoint.hpp"
#include "ctrgan/gradcheck.hpp"
#include "ctrgan/model.hpp"

using namespace ctrgan;
using namespace ctrgan::model;
using gait::GaitSequence;
using gait::IuvaFrame;
using gait::WalkerSpec;
using keys::KeySet;

namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.canvas = 8;
  c.enc_channels = {2, 2};
  c.enc_strides = {2, 1};
  c.pool_stride = 2;
  c.dec_channels = {2, 2};
  c.token_dim = 4;
  c.n_heads = 2;
  c.n_blocks_encoder = 1;
  c.n_blocks_decoder = 1;
  c.ffn_mult = 1;
  c.window = 3;
  c.disc_channels = {2, 2, 1};
  c.disc_strides = {2, 1, 1};
  return c;
}

IuvaFrame random_frame(Rng& rng, int size) {
  IuvaFrame f;
  f.I.setZero(size, size);
  f.U.setZero(size, size);
  f.V.setZero(size, size);
  f.A.setZero(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool fg = rng.uniform() < 0.4;
      f.I(y, x) = fg ? float(1 + rng.uniform_int(7)) : 0.0f;
      f.U(y, x) = fg ? float(rng.uniform()) : 0.0f;
      f.V(y, x) = fg ? float(rng.uniform()) : 0.0f;
      f.A(y, x) = fg ? 1.0f : 0.0f;
    }
  return f;
}

KeySet random_keyset(Rng& rng, int m, int size, const std::string& subject) {
  KeySet ks;
  ks.subject_id = subject;
  for (int i = 0; i < m; ++i) {
    ks.keys.push_back(random_frame(rng, size));
    ks.key_indices.push_back(i);
    ks.centroids.push_back(Eigen::VectorXd::Zero(2));
  }
  return ks;
}

std::vector<IuvaFrame> random_window(Rng& rng, int n, int size) {
  std::vector<IuvaFrame> w;
  for (int i = 0; i < n; ++i) w.push_back(random_frame(rng, size));
  return w;
}

}  // namespace

TEST_CASE("encode_frame: paper config maps 256x256x4 to 256x4x4") {
  auto m = make_model<float>(ModelConfig::paper(), 1);
  auto x = m->tape.input(Tensorf::zeros({4, 256, 256}));
  auto y = m->g_st.F.forward(m->tape, x);
  CHECK(m->tape.value(y).shape() == std::vector<int>{256, 4, 4});
  m->tape.reset();
}

TEST_CASE("encode_frame: desk config maps 64x64x4 to 64x4x4") {
  auto m = make_model<float>(ModelConfig::desk(), 1);
  auto x = m->tape.input(Tensorf::zeros({4, 64, 64}));
  auto y = m->g_st.F.forward(m->tape, x);
  CHECK(m->tape.value(y).shape() == std::vector<int>{64, 4, 4});
  m->tape.reset();
}

TEST_CASE("encode_frame: zero input reproduces the bias-only response") {
  // Oracle: with 1x1 kernels every layer's response to a constant map is a
  // hand-computable constant per channel.
  ModelConfig cfg = toy_config();
  cfg.kernel = 1;
  auto m = make_model<double>(cfg, 5);
  // give the biases distinctive values
  for (const auto& [name, v] : m->params.entries)
    if (name.rfind("g_st.F", 0) == 0 && name.ends_with(".b"))
      for (Eigen::Index i = 0; i < m->tape.value(v).numel(); ++i)
        m->tape.value_mut(v)[i] = 0.05 * double(i + 1);

  auto x = m->tape.input(Tensord::zeros({4, 8, 8}));
  auto y = m->g_st.F.forward(m->tape, x);
  const auto& out = m->tape.value(y);
  REQUIRE(out.shape() == std::vector<int>{2, 2, 2});
  CHECK(out.all_finite());

  // manual constant propagation through conv(1x1)+leaky and the pool
  auto w0 = m->tape.value(m->g_st.F.convs[0].w);
  auto b0 = m->tape.value(m->g_st.F.convs[0].b);
  auto w1 = m->tape.value(m->g_st.F.convs[1].w);
  auto b1 = m->tape.value(m->g_st.F.convs[1].b);
  auto lrelu = [&](double v) { return v > 0 ? v : cfg.leaky_slope * v; };
  Eigen::Vector2d c0;
  for (int oc = 0; oc < 2; ++oc) c0[oc] = lrelu(b0[oc]);
  Eigen::Vector2d c1;
  for (int oc = 0; oc < 2; ++oc) {
    double acc = b1[oc];
    for (int ic = 0; ic < 2; ++ic) acc += w1[oc * 2 + ic] * c0[ic];
    c1[oc] = lrelu(acc);
  }
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i)
      CHECK(out[c * 4 + i] == doctest::Approx(c1[c]).epsilon(1e-12));
  m->tape.reset();
}

TEST_CASE("decode(encode(x)) restores the frame shape; autoencode loss is finite") {
  auto m = make_model<float>(toy_config(), 2);
  Rng rng(3);
  auto frame = random_frame(rng, 8);
  auto x = m->tape.input(frame_to_tensor<float>(frame));
  auto ft = m->g_st.F.forward(m->tape, x);
  auto back = m->g_st.H.forward(m->tape, ft);
  CHECK(m->tape.value(back).shape() == std::vector<int>{4, 8, 8});
  auto loss = ad::l1_loss(m->tape, back, x);
  CHECK(std::isfinite(double(m->tape.value(loss)[0])));
  CHECK(m->tape.value(loss)[0] > 0.0f);
  m->tape.reset();
}

TEST_CASE("tokenize: one temporal token per frame, no positional encoding") {
  auto m = make_model<double>(toy_config(), 7);
  auto& tp = m->tape;
  Rng rng(4);
  std::vector<ad::Var<double>> fts;
  for (int i = 0; i < 3; ++i) {
    Tensord t({2, 2, 2});
    for (Eigen::Index k = 0; k < 8; ++k) t[k] = rng.normal();
    fts.push_back(tp.input(std::move(t)));
  }
  auto tokens = m->g_st.tokenize(tp, m->cfg, fts);
  REQUIRE(tp.value(tokens).shape() == std::vector<int>{3, 4});

  // permuting the frames permutes the tokens identically
  auto permuted = m->g_st.tokenize(tp, m->cfg, {fts[2], fts[0], fts[1]});
  const auto tm = tp.value(tokens).mat(3, 4);
  const auto pm = tp.value(permuted).mat(3, 4);
  CHECK((pm.row(0) - tm.row(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pm.row(1) - tm.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pm.row(2) - tm.row(1)).cwiseAbs().maxCoeff() == 0.0);

  // zero tensors produce identical bias rows
  std::vector<ad::Var<double>> zeros = {tp.input(Tensord::zeros({2, 2, 2})),
                                        tp.input(Tensord::zeros({2, 2, 2}))};
  auto ztokens = m->g_st.tokenize(tp, m->cfg, zeros);
  const auto zm = tp.value(ztokens).mat(2, 4);
  CHECK((zm.row(0) - zm.row(1)).cwiseAbs().maxCoeff() == 0.0);
  tp.reset();
}

TEST_CASE("generator_forward: output frame plus attention maps of the right shapes") {
  ModelConfig cfg = toy_config();
  cfg.n_blocks_encoder = 2;
  cfg.n_blocks_decoder = 2;
  auto m = make_model<float>(cfg, 11);
  Rng rng(8);
  auto ks = random_keyset(rng, 5, 8, "tgt");
  auto window = random_window(rng, 3, 8);

  auto [frame, rec] = generator_forward(*m, m->g_st, ks, window);
  CHECK(frame.height() == 8);
  CHECK(frame.width() == 8);
  REQUIRE(rec.encoder_self.size() == 2);
  REQUIRE(rec.decoder_self.size() == 2);
  REQUIRE(rec.cross.size() == 2);
  CHECK(rec.encoder_self[0].shape() == std::vector<int>{2, 5, 5});
  CHECK(rec.decoder_self[0].shape() == std::vector<int>{2, 3, 3});
  CHECK(rec.cross[0].shape() == std::vector<int>{2, 3, 5});

  // every attention row is a distribution
  for (const auto* group : {&rec.encoder_self, &rec.decoder_self, &rec.cross})
    for (const auto& a : *group) {
      const int rows = a.dim(0) * a.dim(1);
      const int cols = a.dim(2);
      for (int r = 0; r < rows; ++r) {
        double sum = 0, mn = 1;
        for (int c = 0; c < cols; ++c) {
          sum += a[r * cols + c];
          mn = std::min(mn, a[r * cols + c]);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(mn >= 0.0);
      }
    }
}

TEST_CASE("generator_forward: keyset subject mismatch raises") {
  auto m = make_model<float>(toy_config(), 1);
  m->g_st.expected_subject = "target";
  Rng rng(2);
  auto ks = random_keyset(rng, 3, 8, "someone_else");
  auto window = random_window(rng, 3, 8);
  CHECK_THROWS_AS(generator_forward(*m, m->g_st, ks, window), DataError);
}

TEST_CASE("ablations: cycle_only and time_attention differ on identical weights") {
  ModelConfig a = toy_config();
  a.ablation = Ablation::cycle_only;
  ModelConfig b = toy_config();
  b.ablation = Ablation::time_attention;
  auto ma = make_model<float>(a, 33);
  auto mb = make_model<float>(b, 33);  // same seed, same weights
  Rng rng(5);
  auto ks = random_keyset(rng, 4, 8, "t");
  auto window = random_window(rng, 3, 8);
  auto [fa, ra] = generator_forward(*ma, ma->g_st, ks, window);
  auto [fb, rb] = generator_forward(*mb, mb->g_st, ks, window);
  CHECK(ra.cross.empty());
  CHECK_FALSE(rb.cross.empty());
  float max_diff = 0;
  max_diff = std::max(max_diff, (fa.U - fb.U).abs().maxCoeff());
  max_diff = std::max(max_diff, (fa.A - fb.A).abs().maxCoeff());
  CHECK(max_diff > 1e-6f);
}

TEST_CASE("translate_sequence: length arithmetic and constant-input invariance") {
  auto m = make_model<float>(toy_config(), 6);
  Rng rng(7);
  auto ks = random_keyset(rng, 4, 8, "t");

  GaitSequence seq;
  seq.subject_id = "s";
  seq.fps = 8;
  auto frame = random_frame(rng, 8);
  for (int i = 0; i < 40; ++i) seq.frames.push_back(frame);  // constant sequence
  auto [out, records] = translate_sequence(*m, m->g_st, ks, seq);
  CHECK(out.size() == 38);  // 40 - 3 + 1
  CHECK(records.size() == 38);
  for (int i = 1; i < out.size(); ++i) CHECK(out.frames[i].equals(out.frames[0], 0.0f));
}

TEST_CASE("translate_sequence: shifting a periodic input shifts the output exactly") {
  auto m = make_model<float>(toy_config(), 16);
  Rng rng(9);
  auto ks = random_keyset(rng, 4, 8, "t");

  const int period = 5, n = 20, shift = 2;
  std::vector<IuvaFrame> cycle = random_window(rng, period, 8);
  GaitSequence seq, shifted;
  seq.fps = shifted.fps = 8;
  for (int i = 0; i < n; ++i) seq.frames.push_back(cycle[i % period]);
  for (int i = 0; i < n; ++i) shifted.frames.push_back(cycle[(i + shift) % period]);

  auto [out, r1] = translate_sequence(*m, m->g_st, ks, seq);
  auto [out_shifted, r2] = translate_sequence(*m, m->g_st, ks, shifted);
  for (int i = 0; i + shift < out.size(); ++i)
    CHECK(out_shifted.frames[i].equals(out.frames[i + shift], 0.0f));
}

TEST_CASE("discriminator: default desk geometry yields a 6x6 patch map") {
  // Derived from the declared strides: 64 ->32 ->16 ->8 ->7 ->6.
  auto m = make_model<float>(ModelConfig::desk(), 3);
  Rng rng(12);
  auto score = discriminator_forward(*m, m->d_st, random_frame(rng, 64));
  CHECK(score.shape() == std::vector<int>{1, 6, 6});
}

TEST_CASE("discriminator: zero input gives the bias response, finite everywhere") {
  auto m = make_model<float>(toy_config(), 3);
  IuvaFrame zero;
  zero.I.setZero(8, 8);
  zero.U.setZero(8, 8);
  zero.V.setZero(8, 8);
  zero.A.setZero(8, 8);
  auto a = discriminator_forward(*m, m->d_st, zero);
  auto b = discriminator_forward(*m, m->d_st, zero);
  CHECK(a.all_finite());
  CHECK((a.flat() - b.flat()).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("attention_trace: uniform attention gives a constant 1/m trace") {
  std::vector<AttentionRecord> records;
  for (int t = 0; t < 6; ++t) {
    AttentionRecord r;
    r.cross.push_back(Tensord::constant({2, 3, 4}, 0.25));
    records.push_back(std::move(r));
  }
  auto trace = attention_trace(records, 1);
  REQUIRE(trace.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(trace[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gradcheck: frame encoder and decoder") {
  ModelConfig cfg = toy_config();
  Rng rng(21);
  Tape<double> probe;  // independent input fixture
  auto m = make_model<double>(cfg, 21);
  auto params = m->params.vars();
  // restrict to the g_st encoder+decoder parameters
  std::vector<Tape<double>::Var> subset;
  for (const auto& [name, v] : m->params.entries)
    if (name.rfind("g_st.F", 0) == 0 || name.rfind("g_st.H", 0) == 0)
      subset.push_back(v);

  Tensord input = frame_to_tensor<double>(random_frame(rng, 8));
  auto rep = grad_check<double>(
      m->tape, subset,
      [&](Tape<double>& t) {
        auto x = t.input(input);
        auto y = m->g_st.H.forward(t, m->g_st.F.forward(t, x));
        return ad::mse_to_const(t, y, 0.3);
      },
      1e-4);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradcheck: discriminator") {
  ModelConfig cfg = toy_config();
  auto m = make_model<double>(cfg, 22);
  Rng rng(23);
  std::vector<Tape<double>::Var> subset;
  for (const auto& [name, v] : m->params.entries)
    if (name.rfind("d_st.", 0) == 0) subset.push_back(v);
  Tensord input = frame_to_tensor<double>(random_frame(rng, 8));
  auto rep = grad_check<double>(
      m->tape, subset,
      [&](Tape<double>& t) {
        auto score = m->d_st.forward(t, t.input(input));
        return ad::mse_to_const(t, score, 1.0);
      },
      1e-4);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("checkpoint: save/load round trip preserves weights and outputs") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "ctrgan_test_ck" / "model.ckpt";
  fs::remove_all(path.parent_path());

  auto m = make_model<float>(toy_config(), 77);
  m->g_st.expected_subject = "tgt";
  json meta = {{"note", "unit"}};
  save_checkpoint(*m, path, meta);

  CheckpointInfo info;
  auto back = load_checkpoint<float>(path, &info);
  CHECK(info.metadata.at("note") == "unit");
  CHECK(back->g_st.expected_subject == "tgt");
  CHECK(info.content_id.size() == 16);
  REQUIRE(back->params.entries.size() == m->params.entries.size());
  for (size_t i = 0; i < m->params.entries.size(); ++i) {
    const auto& a = m->tape.value(m->params.entries[i].second);
    const auto& b = back->tape.value(back->params.entries[i].second);
    CHECK((a.flat() - b.flat()).cwiseAbs().maxCoeff() == 0.0f);
  }

  Rng rng(6);
  auto ks = random_keyset(rng, 3, 8, "tgt");
  auto window = random_window(rng, 3, 8);
  auto [f1, r1] = generator_forward(*m, m->g_st, ks, window);
  auto [f2, r2] = generator_forward(*back, back->g_st, ks, window);
  CHECK(f1.equals(f2, 0.0f));
}
