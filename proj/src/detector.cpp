#include "ctrgan/detector.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "ctrgan/errors.hpp"

namespace ctrgan::detect {

using gait::RgbImage;

void DetectorDataset::assert_subject_disjoint() const {
  std::set<std::string> tr(train_subjects.begin(), train_subjects.end());
  for (const auto& s : test_subjects)
    if (tr.count(s))
      throw DataError("detector dataset: subject '" + s + "' appears in both splits");
}

int DetectorDataset::frame_count(const std::vector<Video>& split, int label) const {
  int n = 0;
  for (const auto& v : split)
    if (v.label == label) n += static_cast<int>(v.frames.size());
  return n;
}

namespace {

// Trim the larger class until the per-split frame balance is within 10%.
void balance_split(std::vector<Video>& split) {
  auto count = [&](int label) {
    int n = 0;
    for (const auto& v : split)
      if (v.label == label) n += static_cast<int>(v.frames.size());
    return n;
  };
  for (int guard = 0; guard < 10000; ++guard) {
    const int real = count(kLabelReal);
    const int fake = count(kLabelGenerated);
    if (real == 0 || fake == 0) return;  // nothing to balance against
    const int hi = std::max(real, fake), lo = std::min(real, fake);
    if (hi - lo <= hi / 10) return;
    const int trim_label = real > fake ? kLabelReal : kLabelGenerated;
    // drop one frame from the longest video of the heavy class
    Video* longest = nullptr;
    for (auto& v : split)
      if (v.label == trim_label && (!longest || v.frames.size() > longest->frames.size()))
        longest = &v;
    if (!longest || longest->frames.size() <= 1) return;
    longest->frames.pop_back();
  }
}

}  // namespace

DetectorDataset split_detector_dataset(std::vector<Video> videos, uint64_t split_seed) {
  // subjects that have both classes
  std::map<std::string, std::pair<bool, bool>> has;
  for (const auto& v : videos) {
    auto& h = has[v.subject_id];
    (v.label == kLabelReal ? h.first : h.second) = true;
  }
  DetectorDataset ds;
  std::vector<std::string> subjects;
  for (const auto& [id, h] : has) {
    if (h.first && h.second) {
      subjects.push_back(id);
    } else {
      ds.warnings.push_back("subject '" + id + "' lacks " +
                            (h.first ? "generated" : "real") + " footage; excluded");
    }
  }
  if (subjects.size() < 2)
    throw DataError("detector dataset: need at least 2 subjects with both classes");

  // deterministic shuffle
  Rng rng = Rng::derive(split_seed, "detector_split");
  for (int i = static_cast<int>(subjects.size()) - 1; i > 0; --i)
    std::swap(subjects[i], subjects[rng.uniform_int(i + 1)]);

  const int n_test = std::max(1, static_cast<int>(subjects.size()) / 4);
  std::set<std::string> test_set(subjects.begin(), subjects.begin() + n_test);
  ds.test_subjects.assign(test_set.begin(), test_set.end());
  for (size_t i = n_test; i < subjects.size(); ++i)
    ds.train_subjects.push_back(subjects[i]);
  std::sort(ds.train_subjects.begin(), ds.train_subjects.end());

  for (auto& v : videos) {
    if (!has[v.subject_id].first || !has[v.subject_id].second) continue;
    (test_set.count(v.subject_id) ? ds.test : ds.train).push_back(std::move(v));
  }
  balance_split(ds.train);
  balance_split(ds.test);
  ds.assert_subject_disjoint();
  return ds;
}

DetectorDataset build_detector_dataset(const std::filesystem::path& real_root,
                                       const std::filesystem::path& generated_root,
                                       uint64_t split_seed) {
  std::vector<Video> videos;
  auto load_side = [&](const std::filesystem::path& root, int label) {
    const auto manifest = gait::read_manifest(root);
    for (const auto& ref : manifest.sequences) {
      auto seq = gait::load_dataset_sequence(manifest, ref);
      if (!seq.has_rgb())
        throw DataError("detector dataset: sequence " + ref.subject_id + "/" +
                        ref.view + " has no rgb frames");
      Video v;
      v.subject_id = ref.subject_id;
      v.name = ref.subject_id + "/" + ref.view;
      v.label = label;
      v.frames = std::move(seq.rgb_frames);
      videos.push_back(std::move(v));
    }
  };
  load_side(real_root, kLabelReal);
  load_side(generated_root, kLabelGenerated);
  return split_detector_dataset(std::move(videos), split_seed);
}

// ---- model -----------------------------------------------------------------

DetectorModel::DetectorModel(const DetectorConfig& cfg) : cfg_(cfg) {
  Rng rng = Rng::derive(cfg.seed, "detector_init");
  const int chans[5] = {3, 8, 16, 32, 32};
  for (int i = 0; i < 4; ++i)
    convs_.push_back(nn::Conv2dLayer<float>::init(
        tape_, params_, rng, "backbone.conv" + std::to_string(i), chans[i],
        chans[i + 1], 3, 2));
  head_ = nn::LinearLayer<float>::init(tape_, params_, rng, "head.fc", 32, 1);

  if (!cfg.backbone_file.empty()) {
    auto donor = DetectorModel::load(cfg.backbone_file);
    for (size_t i = 0; i < params_.entries.size(); ++i) {
      const auto& [name, v] = params_.entries[i];
      if (name.rfind("backbone.", 0) != 0) continue;
      tape_.value_mut(v) = donor->tape_.value(donor->params_.entries[i].second);
    }
  }
}

std::vector<Tape<float>::Var> DetectorModel::backbone_params() const {
  std::vector<Tape<float>::Var> out;
  for (const auto& [name, v] : params_.entries)
    if (name.rfind("backbone.", 0) == 0) out.push_back(v);
  return out;
}

std::vector<Tape<float>::Var> DetectorModel::head_params() const {
  std::vector<Tape<float>::Var> out;
  for (const auto& [name, v] : params_.entries)
    if (name.rfind("head.", 0) == 0) out.push_back(v);
  return out;
}

std::vector<std::pair<std::string, Tensorf>> DetectorModel::snapshot() const {
  std::vector<std::pair<std::string, Tensorf>> out;
  for (const auto& [name, v] : params_.entries) out.push_back({name, tape_.value(v)});
  return out;
}

Tensorf DetectorModel::frame_tensor(const RgbImage& frame) const {
  const int c = cfg_.canvas;
  const int h = frame.height(), w = frame.width();
  Tensorf t({3, c, c});
  float* d = t.data();
  for (int y = 0; y < c; ++y)
    for (int x = 0; x < c; ++x) {
      // area-style resample per channel
      const int y0 = y * h / c, y1 = std::max(y0 + 1, (y + 1) * h / c);
      const int x0 = x * w / c, x1 = std::max(x0 + 1, (x + 1) * w / c);
      const double area = double(y1 - y0) * (x1 - x0);
      double r = 0, g = 0, b = 0;
      for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) {
          r += frame.r(yy, xx);
          g += frame.g(yy, xx);
          b += frame.b(yy, xx);
        }
      d[(0 * c + y) * c + x] = float(r / area);
      d[(1 * c + y) * c + x] = float(g / area);
      d[(2 * c + y) * c + x] = float(b / area);
    }
  return t;
}

ad::Var<float> DetectorModel::logits(Tape<float>& tape, ad::Var<float> x) const {
  for (const auto& c : convs_) x = ad::leaky_relu(tape, c.forward(tape, x), 0.1f);
  // global average pooling
  const auto& shape = tape.value(x).shape();
  const int C = shape[0], N = shape[1] * shape[2];
  auto rows = ad::reshape(tape, x, {C, N});
  auto ones = tape.input(Tensorf::constant({N, 1}, 1.0f / N));
  auto pooled = ad::reshape(tape, ad::matmul(tape, rows, ones), {1, C});
  return head_.forward(tape, pooled);
}

double DetectorModel::predict_frame(const RgbImage& frame) const {
  auto z = logits(tape_, tape_.input(frame_tensor(frame)));
  const double logit = tape_.value(z)[0];
  tape_.reset();
  return 1.0 / (1.0 + std::exp(-logit));
}

double DetectorModel::fit(const DetectorDataset& ds) {
  struct Item {
    const Video* video;
    int frame;
  };
  std::vector<Item> pool;
  for (const auto& v : ds.train)
    for (size_t i = 0; i < v.frames.size(); ++i)
      pool.push_back({&v, static_cast<int>(i)});
  if (pool.empty()) throw DataError("train_detector: empty training split");

  Rng rng = Rng::derive(cfg_.seed, "detector_train");
  // deterministic shuffle, then carve off the validation tail
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
    std::swap(pool[i], pool[static_cast<size_t>(rng.uniform_int(i + 1))]);
  const int n_val = std::max(1, int(pool.size() * cfg_.val_fraction));
  std::vector<Item> val(pool.end() - n_val, pool.end());
  pool.resize(pool.size() - n_val);

  const auto trainable = cfg_.freeze_backbone ? head_params() : params_.vars();
  nn::AdamOptimizer<float> adam(trainable, 0.9, 0.999);

  auto val_accuracy = [&]() {
    int hit = 0;
    for (const auto& it : val) {
      const double p = predict_frame(it.video->frames[it.frame]);
      const int pred = p > threshold ? kLabelReal : kLabelGenerated;
      if (pred == it.video->label) ++hit;
    }
    return double(hit) / val.size();
  };

  double best_val = -1;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    const int steps = std::max(1, int(pool.size()) / cfg_.batch);
    for (int step = 0; step < steps; ++step) {
      std::vector<ad::Var<float>> losses;
      for (int b = 0; b < cfg_.batch; ++b) {
        const auto& it = pool[static_cast<size_t>(rng.uniform_int(int(pool.size())))];
        auto z = logits(tape_, tape_.input(frame_tensor(it.video->frames[it.frame])));
        losses.push_back(ad::bce_with_logits(tape_, z, float(it.video->label)));
      }
      auto acc = losses[0];
      for (size_t i = 1; i < losses.size(); ++i) acc = ad::add(tape_, acc, losses[i]);
      auto loss = ad::scale(tape_, acc, 1.0f / losses.size());
      if (!std::isfinite(double(tape_.value(loss)[0])))
        throw NumericError("detector training diverged");
      tape_.backward(loss);
      adam.step(tape_, cfg_.lr);
      tape_.reset();
    }
    const double acc = val_accuracy();
    if (acc > best_val + 1e-9) {
      best_val = acc;
      since_best = 0;
    } else if (++since_best >= cfg_.patience) {
      break;  // validation accuracy plateau
    }
  }
  return best_val;
}

void DetectorModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write detector: " + path.string());
  const uint32_t magic = 0x43444554;  // "CDET"
  out.write(reinterpret_cast<const char*>(&magic), 4);
  const int32_t canvas = cfg_.canvas;
  out.write(reinterpret_cast<const char*>(&canvas), 4);
  const double thr = threshold;
  out.write(reinterpret_cast<const char*>(&thr), 8);
  for (const auto& [name, v] : params_.entries) {
    const auto& t = tape_.value(v);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      const float f = t[i];
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
}

std::unique_ptr<DetectorModel> DetectorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open detector: " + path.string());
  uint32_t magic = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  if (magic != 0x43444554) throw DataError("not a detector file: " + path.string());
  int32_t canvas = 0;
  in.read(reinterpret_cast<char*>(&canvas), 4);
  DetectorConfig cfg;
  cfg.canvas = canvas;
  auto m = std::make_unique<DetectorModel>(cfg);
  in.read(reinterpret_cast<char*>(&m->threshold), 8);
  for (auto& [name, v] : m->params_.entries) {
    auto& t = m->tape_.value_mut(v);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), 4);
      t[i] = f;
    }
  }
  if (!in) throw DataError("truncated detector file: " + path.string());
  return m;
}

std::unique_ptr<DetectorModel> train_detector(const DetectorDataset& ds,
                                              const DetectorConfig& cfg) {
  auto m = std::make_unique<DetectorModel>(cfg);
  m->fit(ds);
  return m;
}

Verdict vote_on_probs(const std::vector<double>& frame_probs_real, double threshold) {
  if (frame_probs_real.empty()) throw DataError("detect: empty video");
  int real_votes = 0;
  for (double p : frame_probs_real)
    if (p > threshold) ++real_votes;
  const int n = static_cast<int>(frame_probs_real.size());
  Verdict v;
  v.frame_probs_real = frame_probs_real;
  // ties are treated as generated
  const bool is_real = real_votes * 2 > n;
  v.label = is_real ? "real" : "generated";
  double conf = 0;
  for (double p : frame_probs_real) conf += is_real ? p : 1.0 - p;
  v.confidence = conf / n;
  return v;
}

Verdict detect(const DetectorModel& model, const std::vector<RgbImage>& video) {
  std::vector<double> probs;
  probs.reserve(video.size());
  for (const auto& f : video) probs.push_back(model.predict_frame(f));
  return vote_on_probs(probs, model.threshold);
}

DetectorEvaluation evaluate_detector(const DetectorModel& model,
                                     const std::vector<Video>& test_split) {
  DetectorEvaluation ev;
  int video_hits = 0, frame_hits = 0, frames = 0;
  for (const auto& v : test_split) {
    std::vector<double> probs;
    for (const auto& f : v.frames) {
      const double p = model.predict_frame(f);
      probs.push_back(p);
      const int pred = p > model.threshold ? kLabelReal : kLabelGenerated;
      if (pred == v.label) ++frame_hits;
      ++frames;
    }
    if (static_cast<int>(v.frames.size()) < 8) {
      ++ev.n_skipped_short;  // majority vote unstable on very short videos
      continue;
    }
    const Verdict verdict = vote_on_probs(probs, model.threshold);
    const int pred = verdict.label == "real" ? kLabelReal : kLabelGenerated;
    if (pred == v.label) ++video_hits;
    ++ev.n_videos;
  }
  if (ev.n_videos > 0) ev.video_accuracy = 100.0 * video_hits / ev.n_videos;
  if (frames > 0) ev.frame_accuracy = 100.0 * frame_hits / frames;
  return ev;
}

}  // namespace ctrgan::detect
