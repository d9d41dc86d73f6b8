#include "ctrgan/features.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctrgan/errors.hpp"
#include "ctrgan/frame.hpp"

namespace ctrgan::keys {

using gait::IuvaFrame;
using gait::Silhouette;

namespace {

// Hu's seven invariant moments of a binary mask, squashed with
// sign(h) * log1p(|h| * 1e6) / 16 to a comparable numeric range.
Eigen::Matrix<double, 7, 1> hu_moments(const Silhouette& s) {
  const int h = static_cast<int>(s.mask.rows());
  const int w = static_cast<int>(s.mask.cols());
  double m00 = 0, m10 = 0, m01 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (s.mask(y, x)) {
        m00 += 1;
        m10 += x;
        m01 += y;
      }
  Eigen::Matrix<double, 7, 1> out;
  out.setZero();
  if (m00 < 1.0) return out;
  const double cx = m10 / m00, cy = m01 / m00;

  auto mu = [&](int p, int q) {
    double acc = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (s.mask(y, x)) acc += std::pow(x - cx, p) * std::pow(y - cy, q);
    return acc;
  };
  auto eta = [&](int p, int q) {
    return mu(p, q) / std::pow(m00, 1.0 + (p + q) / 2.0);
  };
  const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
  const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);

  out[0] = n20 + n02;
  out[1] = std::pow(n20 - n02, 2) + 4 * n11 * n11;
  out[2] = std::pow(n30 - 3 * n12, 2) + std::pow(3 * n21 - n03, 2);
  out[3] = std::pow(n30 + n12, 2) + std::pow(n21 + n03, 2);
  out[4] = (n30 - 3 * n12) * (n30 + n12) *
               (std::pow(n30 + n12, 2) - 3 * std::pow(n21 + n03, 2)) +
           (3 * n21 - n03) * (n21 + n03) *
               (3 * std::pow(n30 + n12, 2) - std::pow(n21 + n03, 2));
  out[5] = (n20 - n02) * (std::pow(n30 + n12, 2) - std::pow(n21 + n03, 2)) +
           4 * n11 * (n30 + n12) * (n21 + n03);
  out[6] = (3 * n21 - n03) * (n30 + n12) *
               (std::pow(n30 + n12, 2) - 3 * std::pow(n21 + n03, 2)) -
           (n30 - 3 * n12) * (n21 + n03) *
               (3 * std::pow(n30 + n12, 2) - std::pow(n21 + n03, 2));

  for (int i = 0; i < 7; ++i) {
    const double v = out[i];
    out[i] = (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0)) * std::log1p(std::abs(v) * 1e6) / 16.0;
  }
  return out;
}

}  // namespace

FeatureVector MomentsExtractor::extract(const IuvaFrame& frame) const {
  const Silhouette s = gait::silhouette_from_alpha(frame);
  const int h = frame.height(), w = frame.width();
  FeatureVector f(64);
  f.setZero();
  f.head<7>() = hu_moments(s);

  constexpr int kBands = 28;
  double total = std::max(1.0, double(s.area()));
  for (int band = 0; band < kBands; ++band) {
    const int y0 = band * h / kBands, y1 = (band + 1) * h / kBands;
    const int x0 = band * w / kBands, x1 = (band + 1) * w / kBands;
    double row_count = 0, col_count = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x) row_count += s.mask(y, x);
    for (int x = x0; x < x1; ++x)
      for (int y = 0; y < h; ++y) col_count += s.mask(y, x);
    f[7 + band] = row_count / total;
    f[7 + kBands + band] = col_count / total;
  }
  f[63] = s.area() / double(h * w);
  return f;
}

DeepExtractor::DeepExtractor(const std::filesystem::path& weights_file) {
  std::ifstream in(weights_file);
  if (!in)
    throw DataError("deep extractor requires a readable weights file: " +
                    weights_file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("deep extractor weights malformed: " + std::string(e.what()));
  }
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  if (cols != 16 * 16 * 4)
    throw DataError("deep extractor weights must have cols == 1024 (16x16x4 input)");
  weights_.resize(rows, cols);
  const auto& m = j.at("matrix");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) weights_(r, c) = m.at(r).at(c).get<double>();
}

FeatureVector DeepExtractor::extract(const IuvaFrame& frame) const {
  // Area-style resample to 16x16 per channel, then a linear map.
  const int h = frame.height(), w = frame.width();
  Eigen::VectorXd flat(16 * 16 * 4);
  const gait::Plane* planes[4] = {&frame.I, &frame.U, &frame.V, &frame.A};
  int at = 0;
  for (const auto* plane : planes)
    for (int by = 0; by < 16; ++by)
      for (int bx = 0; bx < 16; ++bx) {
        const int y0 = by * h / 16, y1 = std::max(y0 + 1, (by + 1) * h / 16);
        const int x0 = bx * w / 16, x1 = std::max(x0 + 1, (bx + 1) * w / 16);
        double acc = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) acc += (*plane)(y, x);
        flat[at++] = acc / double((y1 - y0) * (x1 - x0));
      }
  return weights_ * flat;
}

std::unique_ptr<FeatureExtractor> make_extractor(
    const std::string& spec_string, const std::filesystem::path& weights_file) {
  if (spec_string == "moments") return std::make_unique<MomentsExtractor>();
  if (spec_string == "deep") {
    if (weights_file.empty())
      throw DataError(
          "extractor 'deep' needs pretrained weights; pass --extractor-weights");
    return std::make_unique<DeepExtractor>(weights_file);
  }
  throw DataError("unknown extractor: " + spec_string);
}

PcaResult pca_reduce(const Eigen::MatrixXd& rows, int d) {
  if (d <= 0) throw DataError("pca_reduce: d must be positive");
  const int n = static_cast<int>(rows.rows());
  const int draw = static_cast<int>(rows.cols());
  if (n < 2) throw DataError("pca_reduce: need at least 2 samples");

  PcaResult r;
  r.mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - r.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("pca_reduce: eigensolver failed");

  const int k = std::min({d, n - 1, draw});
  r.components.resize(k, draw);
  r.eigenvalues.resize(k);
  for (int i = 0; i < k; ++i) {
    // Eigen returns ascending eigenvalues; take from the top.
    Eigen::VectorXd v = eig.eigenvectors().col(draw - 1 - i);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;  // sign convention
    r.components.row(i) = v.transpose();
    r.eigenvalues[i] = std::max(0.0, eig.eigenvalues()[draw - 1 - i]);
  }
  r.projected = centered * r.components.transpose();
  return r;
}

std::vector<FeatureVector> extract_features(const gait::GaitSequence& seq,
                                            const FeatureExtractor& extractor,
                                            int d) {
  if (seq.size() < 2)
    throw DataError("extract_features: need at least 2 frames (covariance undefined)");
  if (d <= 0) throw DataError("extract_features: d must be positive");

  Eigen::MatrixXd raw(seq.size(), extractor.dimension());
  for (int i = 0; i < seq.size(); ++i)
    raw.row(i) = extractor.extract(seq.frames[i]).transpose();
  const PcaResult pca = pca_reduce(raw, d);

  std::vector<FeatureVector> out;
  out.reserve(static_cast<size_t>(seq.size()));
  for (int i = 0; i < seq.size(); ++i) out.push_back(pca.projected.row(i).transpose());
  return out;
}

}  // namespace ctrgan::keys
