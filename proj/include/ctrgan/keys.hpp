#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctrgan/features.hpp"
#include "ctrgan/sequence.hpp"

namespace ctrgan::keys {

// The m exemplar pose frames of one subject: the cluster-nearest frames in
// feature space, used as the static conditioning set of the generator.
struct KeySet {
  std::string subject_id;
  std::vector<gait::IuvaFrame> keys;
  std::vector<int> key_indices;          // source-frame index of each key
  std::vector<FeatureVector> centroids;  // cluster centers, aligned with keys
  bool duplicate_keys = false;           // two centroids shared a nearest frame

  int size() const { return static_cast<int>(keys.size()); }
  void validate() const;
};

struct KMeansOptions {
  int max_iterations = 300;
  double relative_tolerance = 1e-6;
  int restarts = 10;  // best-inertia k-means++ restart count
};

// k-means with k-means++ seeding; deterministic given seed. Throws when
// there are fewer points than clusters.
std::vector<FeatureVector> cluster_features(const std::vector<FeatureVector>& features,
                                            int m, uint64_t seed,
                                            const KMeansOptions& opts = {});

double kmeans_inertia(const std::vector<FeatureVector>& features,
                      const std::vector<FeatureVector>& centroids);

// For each centroid, the frame whose feature vector minimizes the Euclidean
// distance (ties -> lowest frame index).
KeySet select_keys(const gait::GaitSequence& seq,
                   const std::vector<FeatureVector>& features,
                   const std::vector<FeatureVector>& centroids);

// Full per-subject pipeline: extract, reduce, cluster, select.
KeySet build_keyset(const gait::GaitSequence& seq, const FeatureExtractor& extractor,
                    int m, int d, uint64_t seed);

// Key frames as PAM files plus a structured index file (keyset.json).
void save_keyset(const KeySet& ks, const std::filesystem::path& dir);
KeySet load_keyset(const std::filesystem::path& dir);

}  // namespace ctrgan::keys
