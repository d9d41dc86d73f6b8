#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctrgan/dataset.hpp"
#include "ctrgan/errors.hpp"
#include "ctrgan/frame.hpp"
#include "ctrgan/pam.hpp"
#include "ctrgan/sequence.hpp"
#include "ctrgan/signal.hpp"

using namespace ctrgan;
using namespace ctrgan::gait;
namespace fs = std::filesystem;

namespace {

IuvaFrame block_frame(int h, int w, int x0, int y0, int bw, int bh) {
  IuvaFrame f;
  f.I.setZero(h, w);
  f.U.setZero(h, w);
  f.V.setZero(h, w);
  f.A.setZero(h, w);
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x) {
      f.I(y, x) = 1.0f;
      f.U(y, x) = 0.5f;
      f.V(y, x) = 0.25f;
      f.A(y, x) = 1.0f;
    }
  return f;
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ctrgan_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("crop_and_center: 352x240 subject at left edge lands centered on 256 canvas") {
  IuvaFrame f = block_frame(240, 352, 0, 80, 60, 120);
  IuvaFrame out = crop_and_center(f, 256);
  CHECK(out.height() == 256);
  CHECK(out.width() == 256);
  auto bb = subject_bbox(out);
  REQUIRE(bb.has_value());
  CHECK(bb->center_x() == doctest::Approx(128.0).epsilon(0.01));
  CHECK(bb->center_y() == doctest::Approx(128.0).epsilon(0.01));
}

TEST_CASE("crop_and_center: already centered square frame is returned unchanged") {
  IuvaFrame f = block_frame(64, 64, 22, 17, 20, 30);
  IuvaFrame out = crop_and_center(f, 64);
  CHECK(out.equals(f, 0.0f));
}

TEST_CASE("crop_and_center: corner bbox recentered, bbox recomputed on output") {
  // Oracle: recompute the bounding box of the output and check its center.
  IuvaFrame f = block_frame(64, 64, 0, 0, 10, 20);
  IuvaFrame out = crop_and_center(f, 64);
  auto bb = subject_bbox(out);
  REQUIRE(bb.has_value());
  CHECK(bb->center_x() == doctest::Approx(32.0).epsilon(0.01));
  CHECK(bb->center_y() == doctest::Approx(32.0).epsilon(0.01));
  CHECK(bb->width() == 10);
  CHECK(bb->height() == 20);
  // padding stays background
  CHECK(out.I(0, 0) == 0.0f);
  CHECK(out.A(0, 0) == 0.0f);
}

TEST_CASE("crop_and_center: oversized subject is rescaled with aspect preserved") {
  IuvaFrame f = block_frame(120, 120, 5, 10, 40, 100);
  IuvaFrame out = crop_and_center(f, 64);
  auto bb = subject_bbox(out);
  REQUIRE(bb.has_value());
  CHECK(bb->height() <= 62);
  CHECK(bb->height() >= 56);
  // aspect 40/100 carried over
  const double aspect = double(bb->width()) / bb->height();
  CHECK(aspect == doctest::Approx(0.4).epsilon(0.15));
  CHECK(std::abs(bb->center_x() - 32.0) <= 1.5);
  CHECK(std::abs(bb->center_y() - 32.0) <= 1.5);
}

TEST_CASE("crop_and_center: empty-subject frame raises") {
  IuvaFrame f = block_frame(32, 32, 4, 4, 4, 4);
  f.A.setZero();
  CHECK_THROWS_AS(crop_and_center(f, 32), DataError);
}

TEST_CASE("crop_and_center is idempotent") {
  IuvaFrame f = block_frame(80, 50, 3, 9, 17, 33);
  IuvaFrame once = crop_and_center(f, 64);
  IuvaFrame twice = crop_and_center(once, 64);
  CHECK(twice.equals(once, 1e-6f));
}

TEST_CASE("silhouette_from_alpha: binary alpha reproduces the mask") {
  IuvaFrame f = block_frame(16, 16, 2, 3, 5, 6);
  Silhouette s = silhouette_from_alpha(f);
  CHECK_FALSE(s.constant_alpha_warning);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      CHECK(int(s.mask(y, x)) == int(f.A(y, x)));
}

TEST_CASE("silhouette_from_alpha: constant alpha gives empty mask and warning") {
  IuvaFrame f = block_frame(8, 8, 0, 0, 8, 8);
  f.A.setConstant(0.7f);
  Silhouette s = silhouette_from_alpha(f);
  CHECK(s.constant_alpha_warning);
  CHECK(s.area() == 0);
}

TEST_CASE("silhouette_from_alpha: linear ramp sets exactly the upper half") {
  // Oracle: direct count of pixels above the midpoint threshold.
  const int n = 10, m = 10;
  IuvaFrame f = block_frame(n, m, 0, 0, m, n);
  int k = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < m; ++x) f.A(y, x) = float(k++) / float(n * m - 1);
  Silhouette s = silhouette_from_alpha(f);
  CHECK(s.area() == n * m / 2);
}

TEST_CASE("synth_walker: width spectrum peaks at the doubled gait bin") {
  WalkerSpec spec;
  spec.gait_frequency = 1.0;
  spec.stride_amplitude = 0.5;
  spec.bob_amplitude = 1.0;
  GaitSequence seq = synth_walker(spec, 40, 64, 20.0);
  // Oracle: DFT of the silhouette-width signal. 40 frames at 20 fps hold two
  // gait cycles; leg crossings may double the frequency, so accept bin 2 or 4.
  const int peak = dominant_frequency_bin(width_signal(seq));
  CHECK((peak == 2 || peak == 4));
}

TEST_CASE("synth_walker: deterministic given the same spec and seed") {
  WalkerSpec spec;
  spec.seed = 42;
  GaitSequence a = synth_walker(spec, 12, 64, 20.0);
  GaitSequence b = synth_walker(spec, 12, 64, 20.0);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.frames[i].equals(b.frames[i], 0.0f));
    CHECK(((a.rgb_frames[i].r - b.rgb_frames[i].r).abs() == 0.0f).all());
  }
}

TEST_CASE("synth_walker: vanishing stride freezes the figure") {
  WalkerSpec spec;
  spec.stride_amplitude = 1e-4;
  spec.bob_amplitude = 0.0;
  GaitSequence seq = synth_walker(spec, 10, 64, 20.0);
  const double area = silhouette_from_alpha(seq.frames[0]).area();
  for (int i = 1; i < seq.size(); ++i) {
    const double diff =
        (seq.frames[i].A - seq.frames[i - 1].A).abs().cast<double>().sum();
    CHECK(diff < 0.01 * area);
  }
}

TEST_CASE("synth_walker: sequence is periodic with the gait period") {
  WalkerSpec spec;
  spec.gait_frequency = 1.0;
  GaitSequence seq = synth_walker(spec, 20, 64, 8.0);
  const int period = 8;  // fps / gait_frequency
  for (int i = 0; i + period < seq.size(); ++i) {
    const double iou = silhouette_iou(silhouette_from_alpha(seq.frames[i]),
                                      silhouette_from_alpha(seq.frames[i + period]));
    CHECK(iou >= 0.95);
  }
}

TEST_CASE("synth_walker frames: silhouette equals the part map exactly") {
  WalkerSpec spec;
  GaitSequence seq = synth_walker(spec, 6, 64, 20.0);
  for (const auto& f : seq.frames) {
    f.validate();
    Silhouette s = silhouette_from_alpha(f);
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x) {
        CHECK(int(s.mask(y, x)) == int(f.I(y, x) > 0.0f));
        // background/foreground coupling
        CHECK((f.I(y, x) == 0.0f) == (f.A(y, x) < 0.5f));
      }
  }
}

TEST_CASE("sequence io: save then load round-trips exactly") {
  const fs::path dir = temp_dir("roundtrip");
  WalkerSpec spec;
  spec.seed = 7;
  GaitSequence seq = synth_walker(spec, 5, 64, 20.0);
  seq.subject_id = "s00";
  seq.view = "v0";
  save_sequence(seq, dir / "s00" / "v0");
  GaitSequence back = load_sequence(dir / "s00" / "v0", "s00", "v0", seq.fps);
  REQUIRE(back.size() == seq.size());
  for (int i = 0; i < seq.size(); ++i) {
    CHECK(back.frames[i].equals(seq.frames[i], 0.0f));
    CHECK(((back.rgb_frames[i].g - seq.rgb_frames[i].g).abs() == 0.0f).all());
  }
}

TEST_CASE("sequence io: 16-bit storage also round-trips 8-bit-quantized data") {
  const fs::path dir = temp_dir("deep16");
  WalkerSpec spec;
  GaitSequence seq = synth_walker(spec, 2, 64, 20.0);
  save_frame_pam(seq.frames[0], dir / "frame_000000.pam", 16);
  IuvaFrame back = load_frame_pam(dir / "frame_000000.pam");
  CHECK(back.equals(seq.frames[0], 0.0f));
}

TEST_CASE("sequence io: gap in frame numbering is reported by name") {
  const fs::path dir = temp_dir("gap");
  WalkerSpec spec;
  GaitSequence seq = synth_walker(spec, 4, 64, 20.0);
  seq.rgb_frames.clear();
  save_sequence(seq, dir);
  fs::remove(dir / "frame_000002.pam");
  try {
    load_sequence(dir);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("frame_000002") != std::string::npos);
  }
}

TEST_CASE("sequence io: dimension mismatch is reported by file") {
  const fs::path dir = temp_dir("dims");
  WalkerSpec spec;
  GaitSequence a = synth_walker(spec, 1, 64, 20.0);
  GaitSequence b = synth_walker(spec, 1, 80, 20.0);
  save_frame_pam(a.frames[0], dir / "frame_000000.pam");
  save_frame_pam(b.frames[0], dir / "frame_000001.pam");
  try {
    load_sequence(dir);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("frame_000001") != std::string::npos);
  }
}

TEST_CASE("dataset: manifest-driven load of 2 subjects x 2 views") {
  const fs::path root = temp_dir("manifest");
  std::vector<GaitSequence> seqs;
  for (const std::string& id : {"s00", "s01"})
    for (const std::string& view : {"v0", "v1"}) {
      WalkerSpec spec;
      spec.seed = id == "s00" ? 1 : 2;
      spec.phase_offset = view == "v0" ? 0.0 : 1.0;
      GaitSequence s = synth_walker(spec, 6, 64, 20.0);
      s.subject_id = id;
      s.view = view;
      seqs.push_back(std::move(s));
    }
  save_dataset(seqs, root);
  DatasetManifest m = read_manifest(root);
  REQUIRE(m.sequences.size() == 4);
  auto loaded = load_dataset(m);
  REQUIRE(loaded.size() == 4);
  CHECK(loaded[0].subject_id == "s00");
  CHECK(loaded[0].view == "v0");
  CHECK(loaded[3].subject_id == "s01");
  CHECK(loaded[3].view == "v1");
  CHECK(m.subject_ids().size() == 2);
  CHECK(dataset_hash(m).size() == 16);
}

TEST_CASE("dataset: duplicate manifest entries are rejected") {
  const fs::path root = temp_dir("dup");
  fs::create_directories(root);
  std::ofstream(root / "manifest")
      << R"({"schema_version":1,"bitdepth":8,"sequences":[)"
      << R"({"subject_id":"a","view":"v","frame_count":1,"fps":20.0,"role":"train","has_rgb":false},)"
      << R"({"subject_id":"a","view":"v","frame_count":1,"fps":20.0,"role":"train","has_rgb":false}]})";
  CHECK_THROWS_AS(read_manifest(root), DataError);
}
