#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctrgan/dataset.hpp"
#include "ctrgan/nn.hpp"

namespace ctrgan::detect {

constexpr int kLabelGenerated = 0;
constexpr int kLabelReal = 1;

struct Video {
  std::string subject_id;
  std::string name;
  int label = kLabelReal;
  std::vector<gait::RgbImage> frames;
};

// Frame-labeled videos split by SUBJECT: 25% of subjects (floored) held out
// for testing, classes balanced within +-10% per split where footage allows.
struct DetectorDataset {
  std::vector<Video> train, test;
  std::vector<std::string> train_subjects, test_subjects;
  std::vector<std::string> warnings;  // subjects excluded for missing a class

  void assert_subject_disjoint() const;
  int frame_count(const std::vector<Video>& split, int label) const;
};

// Core split logic on in-memory videos; deterministic given split_seed.
DetectorDataset split_detector_dataset(std::vector<Video> videos, uint64_t split_seed);

// Loads real (label 1) and generated (label 0) dataset roots by manifest and
// splits them. Subjects are matched by id across the two roots.
DetectorDataset build_detector_dataset(const std::filesystem::path& real_root,
                                       const std::filesystem::path& generated_root,
                                       uint64_t split_seed);

struct DetectorConfig {
  int canvas = 64;  // frames are resampled to this size
  int epochs = 20;
  int batch = 16;
  double lr = 1e-3;
  double val_fraction = 0.15;
  int patience = 3;  // early stop after this many epochs without val gain
  uint64_t seed = 0;
  bool freeze_backbone = false;
  std::filesystem::path backbone_file;  // transfer-learning entry point
};

// Small conv classifier (4 conv blocks, global average pooling, one-logit
// head). The backbone can be initialized from a saved detector and frozen,
// mirroring the fine-tune-the-last-layer setup.
class DetectorModel {
 public:
  explicit DetectorModel(const DetectorConfig& cfg);

  double threshold = 0.5;

  // P(real) for one frame.
  double predict_frame(const gait::RgbImage& frame) const;
  const DetectorConfig& config() const { return cfg_; }

  std::vector<Tape<float>::Var> backbone_params() const;
  std::vector<Tape<float>::Var> head_params() const;
  std::vector<std::pair<std::string, Tensorf>> snapshot() const;

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<DetectorModel> load(const std::filesystem::path& path);

  // Training entry point; returns best validation accuracy.
  double fit(const DetectorDataset& ds);

 private:
  friend struct DetectorTrainAccess;
  ad::Var<float> logits(Tape<float>& tape, ad::Var<float> input) const;
  Tensorf frame_tensor(const gait::RgbImage& frame) const;

  DetectorConfig cfg_;
  mutable Tape<float> tape_;
  nn::ParamRegistry<float> params_;
  std::vector<nn::Conv2dLayer<float>> convs_;
  nn::LinearLayer<float> head_;
};

std::unique_ptr<DetectorModel> train_detector(const DetectorDataset& ds,
                                              const DetectorConfig& cfg);

struct Verdict {
  std::string label;  // "real" | "generated"
  double confidence = 0;
  std::vector<double> frame_probs_real;
};

// Per-frame majority vote; ties go to "generated"; confidence is the mean
// probability of the winning class.
Verdict vote_on_probs(const std::vector<double>& frame_probs_real, double threshold);

Verdict detect(const DetectorModel& model, const std::vector<gait::RgbImage>& video);

struct DetectorEvaluation {
  double video_accuracy = 0;  // percent over eligible test videos
  double frame_accuracy = 0;  // percent over all test frames
  int n_videos = 0;
  int n_skipped_short = 0;  // videos under 8 frames, excluded from video level
};

DetectorEvaluation evaluate_detector(const DetectorModel& model,
                                     const std::vector<Video>& test_split);

}  // namespace ctrgan::detect
