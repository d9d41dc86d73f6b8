#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctrgan/sequence.hpp"

namespace ctrgan::eval {

// Sequence-level gait signature source (stand-in slot for pretrained gait
// recognition models).
class GaitEmbedder {
 public:
  virtual ~GaitEmbedder() = default;
  virtual std::string name() const = 0;
  virtual int dimension() const = 0;
  virtual Eigen::VectorXd embed(const gait::GaitSequence& seq) const = 0;
};

// Desk-scale embedder: gait-energy image (mean silhouette resized to 16x16,
// flattened) concatenated with the first 8 DFT magnitude bins of the
// silhouette-width signal, L2-normalized.
class BaselineGaitEmbedder : public GaitEmbedder {
 public:
  std::string name() const override { return "baseline"; }
  int dimension() const override { return 16 * 16 + 8; }
  Eigen::VectorXd embed(const gait::GaitSequence& seq) const override;
};

// "external:PATH": a linear map (JSON: rows, cols==264, matrix) applied to
// the baseline descriptor before normalization; the seam for plugging in
// exported features of a real gait recognizer.
class ExternalLinearEmbedder : public GaitEmbedder {
 public:
  explicit ExternalLinearEmbedder(const std::filesystem::path& file);
  std::string name() const override { return "external"; }
  int dimension() const override { return static_cast<int>(weights_.rows()); }
  Eigen::VectorXd embed(const gait::GaitSequence& seq) const override;

 private:
  Eigen::MatrixXd weights_;
};

std::unique_ptr<GaitEmbedder> make_embedder(const std::string& spec_string);

// Raw (pre-normalization) baseline descriptor; exposed for the external
// embedder and for tests.
Eigen::VectorXd baseline_gait_descriptor(const gait::GaitSequence& seq);

// D = || M(ref) - M(gen) ||_2
double gait_distance(const GaitEmbedder& m, const gait::GaitSequence& ref,
                     const gait::GaitSequence& gen);

struct IdentifyResult {
  std::string subject_id;
  int ref_index = -1;
  double distance = 0;      // mean distance of the winning reference over clips
  int n_clips = 0;
  std::vector<int> counts;  // top-3 votes per reference
};

// Splits gen into overlapping clips (stride floor(clip_len/2)); per clip the
// references ranked by distance and the 3 nearest earn one count each;
// winner has the highest count, ties broken by smaller mean distance, then
// lower reference index.
IdentifyResult identify_subject(const GaitEmbedder& m,
                                const std::vector<gait::GaitSequence>& refs,
                                const gait::GaitSequence& gen, int clip_len);

// Percentage of generated sequences identified as the target subject.
double target_accuracy(const GaitEmbedder& m,
                       const std::vector<gait::GaitSequence>& refs,
                       const std::vector<gait::GaitSequence>& generated,
                       const std::string& target_id, int clip_len);

// ---- appearance metrics ------------------------------------------------------

using FrameMetric = std::function<double(const gait::RgbImage&, const gait::RgbImage&)>;

// E_CD: per generated frame the best match over the reference frames
// (max for similarity metrics, min for distances), averaged.
double chamfer_quality(const FrameMetric& q, const std::vector<gait::RgbImage>& generated,
                       const std::vector<gait::RgbImage>& reference, bool maximize);

// Windowed SSIM on a single channel; 11x11 Gaussian window, sigma 1.5,
// constants for unit dynamic range (the 8-bit constants scaled to [0,1]).
double ssim_gray(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, int window = 11,
                 double sigma = 1.5);
// Mean over the three channels.
double ssim(const gait::RgbImage& a, const gait::RgbImage& b, int window = 11,
            double sigma = 1.5);

using ImageEmbedder = std::function<Eigen::VectorXd(const gait::RgbImage&)>;
using ImageClassifier = std::function<Eigen::VectorXd(const gait::RgbImage&)>;

// Frechet distance between Gaussian fits of the two embedded sets. The
// matrix square root comes from an eigendecomposition of the symmetrized
// product with negative eigenvalues clipped to zero; the clipped mass is
// reported through clipped_out when requested.
double fid(const ImageEmbedder& embed, const std::vector<gait::RgbImage>& set_a,
           const std::vector<gait::RgbImage>& set_b, double* clipped_out = nullptr);

// exp of the mean KL divergence between per-image class distributions and
// their marginal.
double inception_score(const ImageClassifier& classify,
                       const std::vector<gait::RgbImage>& set);

// Default desk embedder for FID: 8x8 area-averaged luma, flattened.
Eigen::VectorXd luma_patch_embedding(const gait::RgbImage& img);
// Default desk classifier for IS: normalized part-histogram surrogate from
// luma quantization (8 bins).
Eigen::VectorXd luma_histogram_classifier(const gait::RgbImage& img);

// R(A,B): mean silhouette IoU over all frame pairs of the two sequences.
double retargeting_iou(const gait::GaitSequence& seq_a, const gait::GaitSequence& seq_b);

// ---- distance matrices ---------------------------------------------------------

struct DistanceMatrix {
  std::vector<std::string> row_labels;  // generated clips
  std::vector<std::string> col_labels;  // reference sequences
  Eigen::MatrixXd values;

  void to_csv(const std::filesystem::path& path) const;
  // Normalized heatmap (dark = small distance), Fig-6 style.
  void to_heatmap_pgm(const std::filesystem::path& path) const;
};

DistanceMatrix distance_matrix(const GaitEmbedder& m,
                               const std::vector<gait::GaitSequence>& generated,
                               const std::vector<gait::GaitSequence>& refs);

}  // namespace ctrgan::eval
