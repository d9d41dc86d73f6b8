#include "ctrgan/renderer.hpp"

#include <fstream>

#include "ctrgan/errors.hpp"
#include "ctrgan/model.hpp"

namespace ctrgan::render {

using gait::GaitSequence;
using gait::IuvaFrame;
using gait::RgbImage;

RgbImage IdentityRenderer::render(const IuvaFrame& frame) const {
  RgbImage img;
  img.r = frame.U * frame.A;
  img.g = frame.V * frame.A;
  img.b = (frame.I / float(gait::kMaxPartIndex)) * frame.A;
  return img;
}

NearestRealRenderer::NearestRealRenderer(const GaitSequence& target_footage) {
  if (!target_footage.has_rgb())
    throw DataError("nn renderer needs target footage with rgb frames");
  for (int i = 0; i < target_footage.size(); ++i) {
    features_.push_back(extractor_.extract(target_footage.frames[i]));
    rgb_.push_back(target_footage.rgb_frames[i]);
  }
}

RgbImage NearestRealRenderer::render(const IuvaFrame& frame) const {
  const Eigen::VectorXd f = extractor_.extract(frame);
  int best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (size_t i = 0; i < features_.size(); ++i) {
    const double d = (features_[i] - f).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return rgb_[best];
}

ConvRenderer::ConvRenderer(int canvas, uint64_t seed) : canvas_(canvas) {
  Rng rng = Rng::derive(seed, "conv_renderer");
  down_.push_back(nn::Conv2dLayer<float>::init(tape_, params_, rng, "down0", 4, 16, 3, 2));
  down_.push_back(nn::Conv2dLayer<float>::init(tape_, params_, rng, "down1", 16, 32, 3, 2));
  down_.push_back(nn::Conv2dLayer<float>::init(tape_, params_, rng, "mid", 32, 32, 3, 1));
  up_.push_back(nn::Conv2dLayer<float>::init(tape_, params_, rng, "up0", 32, 16, 3, 1));
  up_.push_back(nn::Conv2dLayer<float>::init(tape_, params_, rng, "up1", 16, 8, 3, 1));
  out_conv_ = nn::Conv2dLayer<float>::init(tape_, params_, rng, "out", 8, 3, 3, 1, 1.0);
}

ad::Var<float> ConvRenderer::forward(Tape<float>& tape, ad::Var<float> x) const {
  for (const auto& c : down_) x = ad::leaky_relu(tape, c.forward(tape, x), 0.1f);
  for (const auto& c : up_) {
    x = ad::upsample2d(tape, x, 2);
    x = ad::leaky_relu(tape, c.forward(tape, x), 0.1f);
  }
  return ad::sigmoid(tape, out_conv_.forward(tape, x));
}

RgbImage ConvRenderer::render(const IuvaFrame& frame) const {
  if (frame.height() != canvas_ || frame.width() != canvas_)
    throw DataError("conv renderer: frame size differs from training canvas");
  auto x = tape_.input(model::frame_to_tensor<float>(frame));
  const Tensorf out = tape_.value(forward(tape_, x));
  tape_.reset();
  RgbImage img;
  img.r.setZero(canvas_, canvas_);
  img.g.setZero(canvas_, canvas_);
  img.b.setZero(canvas_, canvas_);
  const float* d = out.data();
  for (int y = 0; y < canvas_; ++y)
    for (int x2 = 0; x2 < canvas_; ++x2) {
      img.r(y, x2) = d[(0 * canvas_ + y) * canvas_ + x2];
      img.g(y, x2) = d[(1 * canvas_ + y) * canvas_ + x2];
      img.b(y, x2) = d[(2 * canvas_ + y) * canvas_ + x2];
    }
  return img;
}

namespace {

Tensorf rgb_to_tensor(const RgbImage& img) {
  const int h = img.height(), w = img.width();
  Tensorf t({3, h, w});
  float* d = t.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      d[(0 * h + y) * w + x] = img.r(y, x);
      d[(1 * h + y) * w + x] = img.g(y, x);
      d[(2 * h + y) * w + x] = img.b(y, x);
    }
  return t;
}

}  // namespace

double ConvRenderer::train(const GaitSequence& paired, const RendererTrainConfig& cfg) {
  if (!paired.has_rgb()) throw DataError("train_renderer: rgb_frames missing");
  if (paired.frames.front().height() != canvas_)
    throw DataError("train_renderer: sequence canvas mismatch");

  std::vector<Tensorf> inputs, targets;
  for (int i = 0; i < paired.size(); ++i) {
    inputs.push_back(model::frame_to_tensor<float>(paired.frames[i]));
    targets.push_back(rgb_to_tensor(paired.rgb_frames[i]));
  }
  Rng rng = Rng::derive(cfg.seed, "renderer_train");
  nn::AdamOptimizer<float> adam(params_.vars(), 0.9, 0.999);
  double last = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<ad::Var<float>> losses;
    for (int b = 0; b < cfg.batch; ++b) {
      const int i = rng.uniform_int(paired.size());
      auto x = tape_.input(inputs[i]);
      losses.push_back(ad::l1_loss(tape_, forward(tape_, x), tape_.input(targets[i])));
    }
    auto acc = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) acc = ad::add(tape_, acc, losses[i]);
    auto loss = ad::scale(tape_, acc, 1.0f / losses.size());
    last = tape_.value(loss)[0];
    if (!std::isfinite(last)) throw NumericError("renderer training diverged");
    tape_.backward(loss);
    adam.step(tape_, cfg.lr);
    tape_.reset();
  }
  return last;
}

double ConvRenderer::reconstruction_l1(const GaitSequence& paired) const {
  if (!paired.has_rgb()) throw DataError("reconstruction_l1: rgb_frames missing");
  double acc = 0;
  for (int i = 0; i < paired.size(); ++i) {
    const RgbImage out = render(paired.frames[i]);
    acc += double(((out.r - paired.rgb_frames[i].r).abs() +
                   (out.g - paired.rgb_frames[i].g).abs() +
                   (out.b - paired.rgb_frames[i].b).abs())
                      .mean()) /
           3.0;
  }
  return acc / paired.size();
}

void ConvRenderer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write renderer: " + path.string());
  const uint32_t magic = 0x43524e44;  // "CRND"
  out.write(reinterpret_cast<const char*>(&magic), 4);
  const int32_t canvas = canvas_;
  out.write(reinterpret_cast<const char*>(&canvas), 4);
  for (const auto& [name, v] : params_.entries) {
    const auto& t = tape_.value(v);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      const float f = t[i];
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
}

std::unique_ptr<ConvRenderer> ConvRenderer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open renderer: " + path.string());
  uint32_t magic = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  if (magic != 0x43524e44) throw DataError("not a renderer file: " + path.string());
  int32_t canvas = 0;
  in.read(reinterpret_cast<char*>(&canvas), 4);
  auto r = std::make_unique<ConvRenderer>(canvas);
  for (auto& [name, v] : r->params_.entries) {
    auto& t = r->tape_.value_mut(v);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), 4);
      t[i] = f;
    }
  }
  if (!in) throw DataError("truncated renderer file: " + path.string());
  return r;
}

std::unique_ptr<ConvRenderer> train_renderer(const GaitSequence& target_seq,
                                             const RendererTrainConfig& cfg) {
  auto r = std::make_unique<ConvRenderer>(target_seq.frames.front().height(), cfg.seed);
  r->train(target_seq, cfg);
  return r;
}

std::vector<RgbImage> render_sequence(const Renderer& r, const GaitSequence& seq) {
  std::vector<RgbImage> out;
  out.reserve(static_cast<size_t>(seq.size()));
  for (const auto& f : seq.frames) out.push_back(r.render(f));
  return out;
}

std::unique_ptr<Renderer> make_renderer(const std::string& kind,
                                        const GaitSequence* target_footage,
                                        const std::filesystem::path& conv_weights) {
  if (kind == "identity") return std::make_unique<IdentityRenderer>();
  if (kind == "nn") {
    if (!target_footage)
      throw DataError("renderer 'nn' needs target footage (--target-footage)");
    return std::make_unique<NearestRealRenderer>(*target_footage);
  }
  if (kind == "conv") {
    if (!conv_weights.empty()) return ConvRenderer::load(conv_weights);
    if (!target_footage)
      throw DataError("renderer 'conv' needs target footage to train on");
    return train_renderer(*target_footage);
  }
  throw DataError("unknown renderer: " + kind + " (expected conv|nn|identity)");
}

}  // namespace ctrgan::render
