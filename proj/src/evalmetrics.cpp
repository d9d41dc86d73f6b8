#include "ctrgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ctrgan/errors.hpp"
#include "ctrgan/frame.hpp"
#include "ctrgan/pam.hpp"
#include "ctrgan/signal.hpp"

namespace ctrgan::eval {

using gait::GaitSequence;
using gait::RgbImage;

namespace {

Eigen::ArrayXXd resize_gray(const Eigen::ArrayXXd& src, int oh, int ow) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  Eigen::ArrayXXd out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const int y0 = y * h / oh, y1 = std::max(y0 + 1, (y + 1) * h / oh);
      const int x0 = x * w / ow, x1 = std::max(x0 + 1, (x + 1) * w / ow);
      out(y, x) = src.block(y0, x0, y1 - y0, x1 - x0).mean();
    }
  return out;
}

Eigen::ArrayXXd luma(const RgbImage& img) {
  return ((img.r + img.g + img.b) / 3.0f).cast<double>();
}

}  // namespace

Eigen::VectorXd baseline_gait_descriptor(const GaitSequence& seq) {
  if (seq.frames.empty()) throw DataError("baseline embedder: empty sequence");
  const int h = seq.frames.front().height();
  const int w = seq.frames.front().width();

  Eigen::ArrayXXd gei = Eigen::ArrayXXd::Zero(h, w);
  Eigen::VectorXd widths(seq.size());
  for (int i = 0; i < seq.size(); ++i) {
    const auto s = gait::silhouette_from_alpha(seq.frames[i]);
    gei += s.mask.cast<double>();
    widths[i] = gait::silhouette_width(s);
  }
  gei /= seq.size();
  const Eigen::ArrayXXd gei16 = resize_gray(gei, 16, 16);

  Eigen::VectorXd out(16 * 16 + 8);
  int at = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) out[at++] = gei16(y, x);

  const Eigen::VectorXd mag = dft_magnitude(widths);
  for (int k = 1; k <= 8; ++k) out[at++] = k < mag.size() ? mag[k] : 0.0;
  return out;
}

Eigen::VectorXd BaselineGaitEmbedder::embed(const GaitSequence& seq) const {
  Eigen::VectorXd d = baseline_gait_descriptor(seq);
  const double n = d.norm();
  return n > 0 ? Eigen::VectorXd(d / n) : d;
}

ExternalLinearEmbedder::ExternalLinearEmbedder(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("external embedder: cannot open " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("external embedder: malformed JSON: " + std::string(e.what()));
  }
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  if (cols != 16 * 16 + 8)
    throw DataError("external embedder: cols must be 264 (baseline descriptor)");
  weights_.resize(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      weights_(r, c) = j.at("matrix").at(r).at(c).get<double>();
}

Eigen::VectorXd ExternalLinearEmbedder::embed(const GaitSequence& seq) const {
  Eigen::VectorXd d = weights_ * baseline_gait_descriptor(seq);
  const double n = d.norm();
  return n > 0 ? Eigen::VectorXd(d / n) : d;
}

std::unique_ptr<GaitEmbedder> make_embedder(const std::string& spec_string) {
  if (spec_string == "baseline") return std::make_unique<BaselineGaitEmbedder>();
  if (spec_string.rfind("external:", 0) == 0)
    return std::make_unique<ExternalLinearEmbedder>(spec_string.substr(9));
  throw DataError("unknown embedder: " + spec_string +
                  " (expected baseline|external:PATH)");
}

double gait_distance(const GaitEmbedder& m, const GaitSequence& ref,
                     const GaitSequence& gen) {
  return (m.embed(ref) - m.embed(gen)).norm();
}

IdentifyResult identify_subject(const GaitEmbedder& m,
                                const std::vector<GaitSequence>& refs,
                                const GaitSequence& gen, int clip_len) {
  if (refs.empty()) throw DataError("identify_subject: no reference sequences");
  if (clip_len < 1 || gen.size() < clip_len)
    throw DataError("identify_subject: generated sequence shorter than clip length");

  std::vector<Eigen::VectorXd> ref_embeds;
  ref_embeds.reserve(refs.size());
  for (const auto& r : refs) ref_embeds.push_back(m.embed(r));

  const int stride = std::max(1, clip_len / 2);
  const int n_refs = static_cast<int>(refs.size());
  std::vector<int> counts(n_refs, 0);
  std::vector<double> dist_sums(n_refs, 0.0);
  int n_clips = 0;

  for (int start = 0; start + clip_len <= gen.size(); start += stride) {
    GaitSequence clip;
    clip.subject_id = gen.subject_id;
    clip.fps = gen.fps;
    clip.frames.assign(gen.frames.begin() + start,
                       gen.frames.begin() + start + clip_len);
    const Eigen::VectorXd e = m.embed(clip);

    std::vector<std::pair<double, int>> ranked;
    for (int r = 0; r < n_refs; ++r) {
      const double d = (ref_embeds[r] - e).norm();
      ranked.push_back({d, r});
      dist_sums[r] += d;
    }
    std::sort(ranked.begin(), ranked.end());
    for (int k = 0; k < std::min(3, n_refs); ++k) ++counts[ranked[k].second];
    ++n_clips;
  }

  IdentifyResult best;
  best.n_clips = n_clips;
  best.counts = counts;
  int best_count = -1;
  double best_mean = 0;
  for (int r = 0; r < n_refs; ++r) {
    const double mean = dist_sums[r] / n_clips;
    const bool wins = counts[r] > best_count ||
                      (counts[r] == best_count && mean < best_mean);
    if (wins) {
      best_count = counts[r];
      best_mean = mean;
      best.ref_index = r;
    }
  }
  best.subject_id = refs[best.ref_index].subject_id;
  best.distance = best_mean;
  return best;
}

double target_accuracy(const GaitEmbedder& m, const std::vector<GaitSequence>& refs,
                       const std::vector<GaitSequence>& generated,
                       const std::string& target_id, int clip_len) {
  if (generated.empty()) throw DataError("target_accuracy: no generated sequences");
  int hits = 0;
  for (const auto& g : generated)
    if (identify_subject(m, refs, g, clip_len).subject_id == target_id) ++hits;
  return 100.0 * hits / generated.size();
}

double chamfer_quality(const FrameMetric& q, const std::vector<RgbImage>& generated,
                       const std::vector<RgbImage>& reference, bool maximize) {
  if (generated.empty() || reference.empty())
    throw DataError("chamfer_quality: empty sequence");
  double acc = 0;
  for (const auto& g : generated) {
    double best = maximize ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
    for (const auto& r : reference) {
      const double v = q(g, r);
      best = maximize ? std::max(best, v) : std::min(best, v);
    }
    acc += best;
  }
  return acc / generated.size();
}

double ssim_gray(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, int window,
                 double sigma) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DataError("ssim: image shapes differ");
  if (a.rows() < window || a.cols() < window)
    throw DataError("ssim: image smaller than the window");

  Eigen::ArrayXXd g(window, window);
  const double c = (window - 1) / 2.0;
  for (int y = 0; y < window; ++y)
    for (int x = 0; x < window; ++x)
      g(y, x) = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2 * sigma * sigma));
  g /= g.sum();

  const double c1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
  const double c2 = 0.03 * 0.03;
  double acc = 0;
  int n = 0;
  for (int y = 0; y + window <= a.rows(); ++y)
    for (int x = 0; x + window <= a.cols(); ++x) {
      const auto wa = a.block(y, x, window, window);
      const auto wb = b.block(y, x, window, window);
      const double mu_a = (g * wa).sum();
      const double mu_b = (g * wb).sum();
      const double var_a = (g * (wa - mu_a).square()).sum();
      const double var_b = (g * (wb - mu_b).square()).sum();
      const double cov = (g * (wa - mu_a) * (wb - mu_b)).sum();
      acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++n;
    }
  return acc / n;
}

double ssim(const RgbImage& a, const RgbImage& b, int window, double sigma) {
  return (ssim_gray(a.r.cast<double>(), b.r.cast<double>(), window, sigma) +
          ssim_gray(a.g.cast<double>(), b.g.cast<double>(), window, sigma) +
          ssim_gray(a.b.cast<double>(), b.b.cast<double>(), window, sigma)) /
         3.0;
}

namespace {

// Eigendecomposition square root with negative eigenvalues clipped at zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double* clipped) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NumericError("fid: eigensolver failed");
  Eigen::VectorXd ev = eig.eigenvalues();
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] < 0) {
      if (clipped) *clipped += -ev[i];
      ev[i] = 0;
    }
  return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

double fid(const ImageEmbedder& embed, const std::vector<RgbImage>& set_a,
           const std::vector<RgbImage>& set_b, double* clipped_out) {
  if (set_a.size() < 2 || set_b.size() < 2)
    throw DataError("fid: need at least 2 images per set (covariance undefined)");

  auto moments = [&](const std::vector<RgbImage>& set, Eigen::VectorXd& mu,
                     Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(set.size());
    Eigen::MatrixXd rows(n, embed(set[0]).size());
    for (int i = 0; i < n; ++i) rows.row(i) = embed(set[i]).transpose();
    mu = rows.colwise().mean();
    Eigen::MatrixXd centered = rows.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / double(n - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(set_a, mu_a, cov_a);
  moments(set_b, mu_b, cov_b);

  double clipped = 0;
  const Eigen::MatrixXd root_a = psd_sqrt(cov_a, &clipped);
  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  const Eigen::MatrixXd cross = psd_sqrt(inner, &clipped);
  if (clipped_out) *clipped_out = clipped;

  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
                       2.0 * cross.trace();
  return std::max(0.0, value);
}

double inception_score(const ImageClassifier& classify,
                       const std::vector<RgbImage>& set) {
  if (set.empty()) throw DataError("inception_score: empty set");
  std::vector<Eigen::VectorXd> probs;
  probs.reserve(set.size());
  for (const auto& img : set) probs.push_back(classify(img));
  Eigen::VectorXd marginal = Eigen::VectorXd::Zero(probs[0].size());
  for (const auto& p : probs) marginal += p;
  marginal /= probs.size();

  double mean_kl = 0;
  for (const auto& p : probs) {
    double kl = 0;
    for (int i = 0; i < p.size(); ++i)
      if (p[i] > 0 && marginal[i] > 0) kl += p[i] * std::log(p[i] / marginal[i]);
    mean_kl += kl;
  }
  return std::exp(mean_kl / probs.size());
}

Eigen::VectorXd luma_patch_embedding(const RgbImage& img) {
  const Eigen::ArrayXXd p = resize_gray(luma(img), 8, 8);
  Eigen::VectorXd out(64);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) out[y * 8 + x] = p(y, x);
  return out;
}

Eigen::VectorXd luma_histogram_classifier(const RgbImage& img) {
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(8);
  const Eigen::ArrayXXd l = luma(img);
  for (Eigen::Index y = 0; y < l.rows(); ++y)
    for (Eigen::Index x = 0; x < l.cols(); ++x) {
      int bin = std::min(7, int(l(y, x) * 8.0));
      hist[bin] += 1.0;
    }
  return hist / hist.sum();
}

double retargeting_iou(const GaitSequence& seq_a, const GaitSequence& seq_b) {
  if (seq_a.frames.empty() || seq_b.frames.empty())
    throw DataError("retargeting_iou: empty sequence");
  std::vector<gait::Silhouette> sa, sb;
  for (const auto& f : seq_a.frames) sa.push_back(gait::silhouette_from_alpha(f));
  for (const auto& f : seq_b.frames) sb.push_back(gait::silhouette_from_alpha(f));
  double acc = 0;
  for (const auto& a : sa)
    for (const auto& b : sb) acc += gait::silhouette_iou(a, b);
  return acc / (double(sa.size()) * sb.size());
}

void DistanceMatrix::to_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write distance matrix: " + path.string());
  out << "generated";
  for (const auto& c : col_labels) out << "," << c;
  out << "\n";
  char buf[64];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << row_labels[static_cast<size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.9g", values(r, c));
      out << buf;
    }
    out << "\n";
  }
}

void DistanceMatrix::to_heatmap_pgm(const std::filesystem::path& path) const {
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  Eigen::ArrayXXd norm = hi > lo
                             ? ((values.array() - lo) / (hi - lo)).eval()
                             : Eigen::ArrayXXd::Zero(values.rows(), values.cols());
  gait::save_heatmap_pgm(norm, path);
}

DistanceMatrix distance_matrix(const GaitEmbedder& m,
                               const std::vector<GaitSequence>& generated,
                               const std::vector<GaitSequence>& refs) {
  DistanceMatrix dm;
  dm.values.resize(generated.size(), refs.size());
  for (const auto& r : refs) dm.col_labels.push_back(r.subject_id + "/" + r.view);
  for (size_t i = 0; i < generated.size(); ++i) {
    dm.row_labels.push_back(generated[i].subject_id + "/" + generated[i].view);
    for (size_t j = 0; j < refs.size(); ++j)
      dm.values(i, j) = gait_distance(m, refs[j], generated[i]);
  }
  return dm;
}

}  // namespace ctrgan::eval
