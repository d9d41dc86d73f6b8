#include <doctest.h>

#include <filesystem>

#include "ctrgan/frame.hpp"
#include "ctrgan/renderer.hpp"

using namespace ctrgan;
using namespace ctrgan::render;
using gait::GaitSequence;
using gait::RgbImage;
using gait::WalkerSpec;

namespace {

GaitSequence paired_walker(uint64_t seed, int n, int canvas = 32) {
  WalkerSpec spec;
  spec.seed = seed;
  spec.gait_frequency = 1.0;
  GaitSequence s = synth_walker(spec, n, canvas, 8.0);
  s.subject_id = "tgt";
  return s;
}

}  // namespace

TEST_CASE("identity renderer: canvas-sized, visualizable output") {
  auto seq = paired_walker(1, 2);
  IdentityRenderer r;
  RgbImage img = r.render(seq.frames[0]);
  CHECK(img.height() == 32);
  CHECK(img.width() == 32);
  CHECK(img.r.maxCoeff() <= 1.0f);
  CHECK(img.r.minCoeff() >= 0.0f);
  // foreground pixels carry color, background stays black
  bool any_color = (img.b > 0.01f).any();
  CHECK(any_color);
  CHECK(img.b(0, 0) == 0.0f);
}

TEST_CASE("nearest-real renderer: every output frame exists in the footage") {
  auto footage = paired_walker(2, 12);
  NearestRealRenderer r(footage);
  auto query = paired_walker(3, 5);
  for (const auto& f : query.frames) {
    const RgbImage out = r.render(f);
    bool found = false;
    for (const auto& real : r.footage())
      if ((out.r - real.r).abs().maxCoeff() == 0.0f &&
          (out.g - real.g).abs().maxCoeff() == 0.0f &&
          (out.b - real.b).abs().maxCoeff() == 0.0f) {
        found = true;
        break;
      }
    CHECK(found);
  }
}

TEST_CASE("conv renderer: untrained loss finite, output shape matches canvas") {
  auto seq = paired_walker(4, 4);
  ConvRenderer r(32, 7);
  CHECK(std::isfinite(r.reconstruction_l1(seq)));
  const RgbImage out = r.render(seq.frames[0]);
  CHECK(out.height() == 32);
  CHECK(out.width() == 32);
}

TEST_CASE("conv renderer: overfits 8 frames to L1 below 0.02") {
  auto seq = paired_walker(5, 8);
  RendererTrainConfig cfg;
  cfg.steps = 700;
  cfg.batch = 2;
  cfg.lr = 3e-3;
  ConvRenderer r(32, 1);
  r.train(seq, cfg);
  CHECK(r.reconstruction_l1(seq) < 0.02);
}

TEST_CASE("conv renderer: held-out reconstruction below 0.1; silhouette kept") {
  auto all = paired_walker(6, 32);
  GaitSequence train = all, held;
  train.frames.assign(all.frames.begin(), all.frames.begin() + 24);
  train.rgb_frames.assign(all.rgb_frames.begin(), all.rgb_frames.begin() + 24);
  held.subject_id = all.subject_id;
  held.fps = all.fps;
  held.frames.assign(all.frames.begin() + 24, all.frames.end());
  held.rgb_frames.assign(all.rgb_frames.begin() + 24, all.rgb_frames.end());

  RendererTrainConfig cfg;
  cfg.steps = 700;
  cfg.batch = 2;
  cfg.lr = 3e-3;
  auto r = train_renderer(train, cfg);
  CHECK(r->reconstruction_l1(held) < 0.1);

  // the rendered silhouette stays within 5% IoU of the input alpha
  for (int i = 0; i < 4; ++i) {
    const RgbImage out = r->render(train.frames[i]);
    gait::Silhouette rendered;
    rendered.mask = (((out.r + out.g + out.b) / 3.0f) > 0.05f).cast<uint8_t>();
    const auto input_mask = gait::silhouette_from_alpha(train.frames[i]);
    CHECK(gait::silhouette_iou(rendered, input_mask) >= 0.95);
  }
}

TEST_CASE("render_sequence: length preserving and deterministic") {
  auto seq = paired_walker(8, 6);
  IdentityRenderer r;
  auto a = render_sequence(r, seq);
  auto b = render_sequence(r, seq);
  REQUIRE(a.size() == 6);
  for (size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].r - b[i].r).abs().maxCoeff() == 0.0f);
}

TEST_CASE("conv renderer: save/load round trip") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "ctrgan_renderer.bin";
  auto seq = paired_walker(9, 4);
  ConvRenderer r(32, 3);
  r.save(path);
  auto back = ConvRenderer::load(path);
  const RgbImage a = r.render(seq.frames[0]);
  const RgbImage b = back->render(seq.frames[0]);
  CHECK((a.r - b.r).abs().maxCoeff() == 0.0f);
  CHECK((a.g - b.g).abs().maxCoeff() == 0.0f);
}
