#include "ctrgan/keys.hpp"

#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "ctrgan/errors.hpp"
#include "ctrgan/pam.hpp"
#include "ctrgan/random.hpp"

namespace ctrgan::keys {

using nlohmann::json;
namespace fs = std::filesystem;

void KeySet::validate() const {
  const size_t m = keys.size();
  if (m == 0) throw DataError("KeySet: empty");
  if (key_indices.size() != m || centroids.size() != m)
    throw DataError("KeySet: keys/key_indices/centroids length mismatch");
}

namespace {

double sq_dist(const FeatureVector& a, const FeatureVector& b) {
  return (a - b).squaredNorm();
}

std::vector<FeatureVector> kmeans_once(const std::vector<FeatureVector>& pts, int m,
                                       Rng& rng, const KMeansOptions& opts,
                                       double* inertia_out) {
  const int n = static_cast<int>(pts.size());

  // k-means++ seeding
  std::vector<FeatureVector> centroids;
  centroids.reserve(m);
  centroids.push_back(pts[rng.uniform_int(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < m) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centroids) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    int pick;
    if (total <= 0) {
      pick = rng.uniform_int(n);  // all points coincide with centroids
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(pts[pick]);
  }

  std::vector<int> assign(n, -1);
  double prev_inertia = std::numeric_limits<double>::max();
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    double inertia = 0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      int arg = 0;
      for (int k = 0; k < m; ++k) {
        const double d = sq_dist(pts[i], centroids[k]);
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      assign[i] = arg;
      inertia += best;
    }

    std::vector<FeatureVector> sums(m, FeatureVector::Zero(pts[0].size()));
    std::vector<int> counts(m, 0);
    for (int i = 0; i < n; ++i) {
      sums[assign[i]] += pts[i];
      ++counts[assign[i]];
    }
    for (int k = 0; k < m; ++k) {
      if (counts[k] > 0) {
        centroids[k] = sums[k] / counts[k];
      } else {
        // Reassign an empty cluster to the point farthest from its centroid.
        double far_d = -1;
        int far_i = 0;
        for (int i = 0; i < n; ++i) {
          const double d = sq_dist(pts[i], centroids[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        centroids[k] = pts[far_i];
      }
    }

    if (prev_inertia < std::numeric_limits<double>::max()) {
      const double rel = std::abs(prev_inertia - inertia) /
                         std::max(inertia, std::numeric_limits<double>::min());
      if (rel < opts.relative_tolerance) {
        prev_inertia = inertia;
        break;
      }
    }
    prev_inertia = inertia;
  }
  *inertia_out = kmeans_inertia(pts, centroids);
  return centroids;
}

}  // namespace

double kmeans_inertia(const std::vector<FeatureVector>& features,
                      const std::vector<FeatureVector>& centroids) {
  double total = 0;
  for (const auto& p : features) {
    double best = std::numeric_limits<double>::max();
    for (const auto& c : centroids) best = std::min(best, sq_dist(p, c));
    total += best;
  }
  return total;
}

std::vector<FeatureVector> cluster_features(const std::vector<FeatureVector>& features,
                                            int m, uint64_t seed,
                                            const KMeansOptions& opts) {
  if (m < 1) throw DataError("cluster_features: m must be >= 1");
  if (static_cast<int>(features.size()) < m)
    throw DataError("cluster_features: fewer points (" +
                    std::to_string(features.size()) + ") than clusters (" +
                    std::to_string(m) + ")");

  Rng rng = Rng::derive(seed, "kmeans");
  std::vector<FeatureVector> best;
  double best_inertia = std::numeric_limits<double>::max();
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    double inertia = 0;
    auto c = kmeans_once(features, m, rng, opts, &inertia);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(c);
    }
  }
  return best;
}

KeySet select_keys(const gait::GaitSequence& seq,
                   const std::vector<FeatureVector>& features,
                   const std::vector<FeatureVector>& centroids) {
  if (static_cast<int>(features.size()) != seq.size())
    throw DataError("select_keys: features not aligned with frames");
  if (centroids.empty()) throw DataError("select_keys: no centroids");

  KeySet ks;
  ks.subject_id = seq.subject_id;
  std::set<int> used;
  for (const auto& c : centroids) {
    double best = std::numeric_limits<double>::max();
    int arg = 0;
    for (int j = 0; j < static_cast<int>(features.size()); ++j) {
      const double d = (features[j] - c).norm();
      if (d < best) {  // strict: ties keep the lowest frame index
        best = d;
        arg = j;
      }
    }
    if (!used.insert(arg).second) ks.duplicate_keys = true;
    ks.keys.push_back(seq.frames[arg]);
    ks.key_indices.push_back(arg);
    ks.centroids.push_back(c);
  }
  return ks;
}

KeySet build_keyset(const gait::GaitSequence& seq, const FeatureExtractor& extractor,
                    int m, int d, uint64_t seed) {
  const auto features = extract_features(seq, extractor, d);
  const auto centroids = cluster_features(features, m, seed);
  return select_keys(seq, features, centroids);
}

void save_keyset(const KeySet& ks, const fs::path& dir) {
  ks.validate();
  fs::create_directories(dir);
  json j;
  j["schema_version"] = 1;
  j["subject_id"] = ks.subject_id;
  j["m"] = ks.size();
  j["key_indices"] = ks.key_indices;
  j["duplicate_keys"] = ks.duplicate_keys;
  j["centroids"] = json::array();
  for (const auto& c : ks.centroids) {
    std::vector<double> v(c.data(), c.data() + c.size());
    j["centroids"].push_back(v);
  }
  std::ofstream(dir / "keyset.json") << j.dump(2) << "\n";
  for (int i = 0; i < ks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "key_%03d.pam", i);
    gait::save_frame_pam(ks.keys[i], dir / name);
  }
}

KeySet load_keyset(const fs::path& dir) {
  std::ifstream in(dir / "keyset.json");
  if (!in) throw DataError("no keyset.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed keyset.json: " + std::string(e.what()));
  }
  KeySet ks;
  ks.subject_id = j.at("subject_id").get<std::string>();
  ks.key_indices = j.at("key_indices").get<std::vector<int>>();
  ks.duplicate_keys = j.value("duplicate_keys", false);
  for (const auto& c : j.at("centroids")) {
    const auto v = c.get<std::vector<double>>();
    ks.centroids.push_back(Eigen::Map<const FeatureVector>(v.data(), v.size()));
  }
  const int m = j.at("m").get<int>();
  for (int i = 0; i < m; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "key_%03d.pam", i);
    ks.keys.push_back(gait::load_frame_pam(dir / name));
  }
  ks.validate();
  return ks;
}

}  // namespace ctrgan::keys
