#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "ctrgan/errors.hpp"
#include "ctrgan/keys.hpp"
#include "ctrgan/random.hpp"

using namespace ctrgan;
using namespace ctrgan::keys;
using ctrgan::gait::GaitSequence;
using ctrgan::gait::WalkerSpec;

namespace {

std::vector<FeatureVector> scalars(const std::vector<double>& xs) {
  std::vector<FeatureVector> out;
  for (double x : xs) {
    FeatureVector v(1);
    v[0] = x;
    out.push_back(v);
  }
  return out;
}

// Exhaustive-partition optimum for tiny 2-means instances.
double best_two_partition_inertia(const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  double best = std::numeric_limits<double>::max();
  for (int mask = 1; mask < (1 << n) - 1; ++mask) {
    double s0 = 0, s1 = 0;
    int c0 = 0, c1 = 0;
    for (int i = 0; i < n; ++i)
      (mask >> i & 1 ? s1 : s0) += xs[i], (mask >> i & 1 ? c1 : c0) += 1;
    const double m0 = s0 / c0, m1 = s1 / c1;
    double inertia = 0;
    for (int i = 0; i < n; ++i) {
      const double m = mask >> i & 1 ? m1 : m0;
      inertia += (xs[i] - m) * (xs[i] - m);
    }
    best = std::min(best, inertia);
  }
  return best;
}

GaitSequence toy_sequence(int n, uint64_t seed = 0) {
  WalkerSpec spec;
  spec.seed = seed;
  spec.gait_frequency = 1.0;
  GaitSequence s = synth_walker(spec, n, 64, 8.0);
  s.subject_id = "toy";
  return s;
}

}  // namespace

TEST_CASE("extract_features: output length is min(d, N-1, d_raw)") {
  MomentsExtractor ex;
  GaitSequence seq = toy_sequence(10);
  auto feats = extract_features(seq, ex, 100);  // paper default d
  REQUIRE(feats.size() == 10);
  CHECK(feats[0].size() == 9);  // min(100, 10-1, 64)
  auto feats2 = extract_features(seq, ex, 3);
  CHECK(feats2[0].size() == 3);
}

TEST_CASE("extract_features: identical frames reduce to zero vectors") {
  MomentsExtractor ex;
  GaitSequence one = toy_sequence(1);
  GaitSequence seq;
  seq.subject_id = "const";
  seq.fps = 8.0;
  for (int i = 0; i < 5; ++i) seq.frames.push_back(one.frames[0]);
  auto feats = extract_features(seq, ex, 4);
  for (const auto& f : feats) CHECK(f.norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("extract_features: rank-2 projection captures the top eigenvalue mass") {
  // Oracle: independent eigendecomposition of the raw covariance.
  MomentsExtractor ex;
  GaitSequence seq = toy_sequence(5);
  Eigen::MatrixXd raw(5, ex.dimension());
  for (int i = 0; i < 5; ++i) raw.row(i) = ex.extract(seq.frames[i]).transpose();
  Eigen::MatrixXd centered = raw.rowwise() - raw.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / 4.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto ev = eig.eigenvalues();
  const double top2 = ev[ev.size() - 1] + ev[ev.size() - 2];

  auto feats = extract_features(seq, ex, 2);
  Eigen::MatrixXd proj(5, 2);
  for (int i = 0; i < 5; ++i) proj.row(i) = feats[i].transpose();
  Eigen::MatrixXd pc = proj.rowwise() - proj.colwise().mean();
  const double captured = (pc.transpose() * pc / 4.0).trace();
  CHECK(captured == doctest::Approx(top2).epsilon(1e-9));
}

TEST_CASE("extract_features: errors on bad arguments") {
  MomentsExtractor ex;
  GaitSequence seq = toy_sequence(5);
  CHECK_THROWS_AS(extract_features(seq, ex, 0), DataError);
  GaitSequence single = toy_sequence(1);
  CHECK_THROWS_AS(extract_features(single, ex, 2), DataError);
}

TEST_CASE("cluster_features: m equal to point count returns the points") {
  auto pts = scalars({1.0, 2.0, 5.0, 9.0});
  auto cents = cluster_features(pts, 4, 0);
  CHECK(kmeans_inertia(pts, cents) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cluster_features: two separated triples find {0.1, 10.0}") {
  auto pts = scalars({0.0, 0.1, 0.2, 9.9, 10.0, 10.1});
  auto cents = cluster_features(pts, 2, 0);
  REQUIRE(cents.size() == 2);
  std::vector<double> c = {cents[0][0], cents[1][0]};
  std::sort(c.begin(), c.end());
  CHECK(c[0] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(c[1] == doctest::Approx(10.0).epsilon(1e-9));
  // Oracle: exhaustive partition optimum.
  const double opt = best_two_partition_inertia({0.0, 0.1, 0.2, 9.9, 10.0, 10.1});
  CHECK(kmeans_inertia(pts, cents) == doctest::Approx(opt).epsilon(1e-9));
}

TEST_CASE("cluster_features: matches exhaustive optimum on random 1-d fixtures") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> xs;
    const double gap = 3.0 + 5.0 * rng.uniform();
    for (int i = 0; i < 3; ++i) xs.push_back(rng.normal() * 0.4);
    for (int i = 0; i < 3; ++i) xs.push_back(gap + rng.normal() * 0.4);
    auto cents = cluster_features(scalars(xs), 2, trial);
    CHECK(kmeans_inertia(scalars(xs), cents) ==
          doctest::Approx(best_two_partition_inertia(xs)).epsilon(1e-6));
  }
}

TEST_CASE("cluster_features: deterministic given seed, errors when m > n") {
  auto pts = scalars({0.0, 1.0, 2.0, 3.0});
  auto a = cluster_features(pts, 2, 7);
  auto b = cluster_features(pts, 2, 7);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i][0] == b[i][0]);
  CHECK_THROWS_AS(cluster_features(pts, 5, 0), DataError);
}

TEST_CASE("select_keys: exact-match centroids select their frames") {
  GaitSequence seq = toy_sequence(6);
  auto feats = scalars({0.0, 1.0, 2.0, 3.0, 4.0, 5.0});
  auto ks = select_keys(seq, feats, scalars({3.0, 1.0}));
  REQUIRE(ks.size() == 2);
  CHECK(ks.key_indices[0] == 3);
  CHECK(ks.key_indices[1] == 1);
  CHECK(ks.keys[0].equals(seq.frames[3], 0.0f));
}

TEST_CASE("select_keys: distance ties break to the lowest frame index") {
  GaitSequence seq = toy_sequence(3);
  auto feats = scalars({0.0, 0.1, 10.0});
  auto ks = select_keys(seq, feats, scalars({0.05}));
  CHECK(ks.key_indices[0] == 0);
}

TEST_CASE("select_keys: matches brute-force argmin on random fixtures") {
  Rng rng(5);
  GaitSequence seq = toy_sequence(20);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<FeatureVector> feats;
    for (int i = 0; i < 20; ++i) {
      FeatureVector v(3);
      for (int j = 0; j < 3; ++j) v[j] = rng.normal();
      feats.push_back(v);
    }
    std::vector<FeatureVector> cents;
    for (int k = 0; k < 4; ++k) {
      FeatureVector v(3);
      for (int j = 0; j < 3; ++j) v[j] = rng.normal();
      cents.push_back(v);
    }
    auto ks = select_keys(seq, feats, cents);
    for (int k = 0; k < 4; ++k) {
      // Oracle: independent linear scan.
      int arg = 0;
      double best = std::numeric_limits<double>::max();
      for (int j = 0; j < 20; ++j) {
        const double d = (feats[j] - cents[k]).norm();
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      CHECK(ks.key_indices[k] == arg);
    }
  }
}

TEST_CASE("select_keys: permuting frames leaves the selected frame set unchanged") {
  Rng rng(17);
  GaitSequence seq = toy_sequence(12);
  std::vector<FeatureVector> feats;
  for (int i = 0; i < 12; ++i) {
    FeatureVector v(2);
    v << rng.normal(), rng.normal();
    feats.push_back(v);
  }
  std::vector<FeatureVector> cents = {feats[2], feats[7], feats[11]};

  auto base = select_keys(seq, feats, cents);

  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  GaitSequence pseq = seq;
  std::vector<FeatureVector> pfeats(12, FeatureVector(2));
  for (int i = 0; i < 12; ++i) {
    pseq.frames[i] = seq.frames[perm[i]];
    pfeats[i] = feats[perm[i]];
  }
  auto permuted = select_keys(pseq, pfeats, cents);

  for (int k = 0; k < 3; ++k) {
    CHECK(permuted.key_indices[k] == 11 - base.key_indices[k]);
    CHECK(permuted.keys[k].equals(base.keys[k], 0.0f));
  }
}

TEST_CASE("keys pipeline: Voronoi property and end-to-end determinism") {
  MomentsExtractor ex;
  GaitSequence seq = toy_sequence(24, 3);
  auto a = build_keyset(seq, ex, 4, 6, 0);
  auto b = build_keyset(seq, ex, 4, 6, 0);
  REQUIRE(a.size() == 4);
  CHECK(a.key_indices == b.key_indices);

  auto feats = extract_features(seq, ex, 6);
  auto cents = cluster_features(feats, 4, 0);
  auto ks = select_keys(seq, feats, cents);
  for (int k = 0; k < ks.size(); ++k) {
    const auto& f = feats[ks.key_indices[k]];
    const double own = (f - cents[k]).norm();
    for (int j = 0; j < 4; ++j)
      CHECK(own <= (f - cents[j]).norm() + 1e-12);
  }
}

TEST_CASE("keyset: save and load round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ctrgan_test_keyset";
  fs::remove_all(dir);
  MomentsExtractor ex;
  GaitSequence seq = toy_sequence(16, 9);
  auto ks = build_keyset(seq, ex, 3, 5, 1);
  save_keyset(ks, dir);
  auto back = load_keyset(dir);
  CHECK(back.subject_id == ks.subject_id);
  CHECK(back.key_indices == ks.key_indices);
  REQUIRE(back.centroids.size() == ks.centroids.size());
  for (size_t i = 0; i < ks.centroids.size(); ++i)
    CHECK((back.centroids[i] - ks.centroids[i]).norm() < 1e-12);
  for (int i = 0; i < ks.size(); ++i) CHECK(back.keys[i].equals(ks.keys[i], 0.0f));
}
