#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctrgan/sequence.hpp"

namespace ctrgan::keys {

using FeatureVector = Eigen::VectorXd;

// Per-frame descriptor source. Implementations must be deterministic in the
// frame content.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual int dimension() const = 0;
  virtual FeatureVector extract(const gait::IuvaFrame& frame) const = 0;
};

// Desk-scale descriptor (64 values): 7 log-squashed Hu moments of the
// silhouette, 28-band row and column occupancy profiles, and the foreground
// fraction. Needs no pretrained weights and still separates pose phases.
class MomentsExtractor : public FeatureExtractor {
 public:
  std::string name() const override { return "moments"; }
  int dimension() const override { return 64; }
  FeatureVector extract(const gait::IuvaFrame& frame) const override;
};

// Plug-in point for pretrained deep features: a linear map (JSON file with
// "rows", "cols", "matrix") applied to the frame resampled to 16x16x4.
class DeepExtractor : public FeatureExtractor {
 public:
  explicit DeepExtractor(const std::filesystem::path& weights_file);
  std::string name() const override { return "deep"; }
  int dimension() const override { return static_cast<int>(weights_.rows()); }
  FeatureVector extract(const gait::IuvaFrame& frame) const override;

 private:
  Eigen::MatrixXd weights_;
};

std::unique_ptr<FeatureExtractor> make_extractor(
    const std::string& spec_string,
    const std::filesystem::path& weights_file = {});

// PCA with the fixed sign convention (largest-magnitude loading positive).
// Returns the projection of the centered rows onto the leading
// min(d, rows-1, cols) principal axes.
struct PcaResult {
  Eigen::MatrixXd projected;   // N x k
  Eigen::MatrixXd components;  // k x d_raw
  Eigen::VectorXd mean;        // d_raw
  Eigen::VectorXd eigenvalues; // k, descending
};
PcaResult pca_reduce(const Eigen::MatrixXd& rows, int d);

// Per-frame reduced feature vectors for a sequence (raw extraction followed
// by a per-sequence PCA fit). |seq| must be >= 2 and d >= 1.
std::vector<FeatureVector> extract_features(const gait::GaitSequence& seq,
                                            const FeatureExtractor& extractor,
                                            int d);

}  // namespace ctrgan::keys
