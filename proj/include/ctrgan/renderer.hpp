#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctrgan/features.hpp"
#include "ctrgan/nn.hpp"
#include "ctrgan/sequence.hpp"

namespace ctrgan::render {

// Pose-to-appearance stage. The heavy pose-to-video baselines live outside
// this artifact; everything behind this interface is swappable.
class Renderer {
 public:
  virtual ~Renderer() = default;
  virtual std::string name() const = 0;
  virtual gait::RgbImage render(const gait::IuvaFrame& frame) const = 0;
};

// Direct IUV visualization: R=U*A, G=V*A, B=(I/24)*A.
class IdentityRenderer : public Renderer {
 public:
  std::string name() const override { return "identity"; }
  gait::RgbImage render(const gait::IuvaFrame& frame) const override;
};

// Nearest-real-frame lookup by pose features; always returns a frame of the
// target's real footage, so downstream appearance metrics see real pixels.
class NearestRealRenderer : public Renderer {
 public:
  explicit NearestRealRenderer(const gait::GaitSequence& target_footage);
  std::string name() const override { return "nn"; }
  gait::RgbImage render(const gait::IuvaFrame& frame) const override;
  const std::vector<gait::RgbImage>& footage() const { return rgb_; }

 private:
  keys::MomentsExtractor extractor_;
  std::vector<Eigen::VectorXd> features_;
  std::vector<gait::RgbImage> rgb_;
};

struct RendererTrainConfig {
  int steps = 600;
  int batch = 2;
  double lr = 2e-3;
  uint64_t seed = 0;
};

// Small conv encoder-decoder trained with per-pixel L1 on the target's own
// paired pose->RGB frames.
class ConvRenderer : public Renderer {
 public:
  explicit ConvRenderer(int canvas, uint64_t seed = 0);
  std::string name() const override { return "conv"; }
  gait::RgbImage render(const gait::IuvaFrame& frame) const override;

  // Returns the final training L1.
  double train(const gait::GaitSequence& paired, const RendererTrainConfig& cfg);
  double reconstruction_l1(const gait::GaitSequence& paired) const;

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<ConvRenderer> load(const std::filesystem::path& path);

 private:
  ad::Var<float> forward(Tape<float>& tape, ad::Var<float> input) const;

  int canvas_;
  mutable Tape<float> tape_;
  nn::ParamRegistry<float> params_;
  std::vector<nn::Conv2dLayer<float>> down_, up_;
  nn::Conv2dLayer<float> out_conv_;
};

// Trains the built-in conv renderer on a paired sequence (throws when
// rgb_frames are missing).
std::unique_ptr<ConvRenderer> train_renderer(const gait::GaitSequence& target_seq,
                                             const RendererTrainConfig& cfg = {});

// Length-preserving, deterministic frame-by-frame rendering.
std::vector<gait::RgbImage> render_sequence(const Renderer& r,
                                            const gait::GaitSequence& seq);

std::unique_ptr<Renderer> make_renderer(const std::string& kind,
                                        const gait::GaitSequence* target_footage,
                                        const std::filesystem::path& conv_weights = {});

}  // namespace ctrgan::render
