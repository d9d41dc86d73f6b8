#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace ctrgan::gait {

using Plane = Eigen::ArrayXXf;  // indexed (row/y, col/x)

constexpr int kMaxPartIndex = 24;  // DensePose chart count; 0 is background

// Pose frame: part-index map I (0 = background, 1..24 body parts),
// within-part surface coordinates U/V in [0,1], foreground alpha A in [0,1].
struct IuvaFrame {
  Plane I, U, V, A;

  int height() const { return static_cast<int>(I.rows()); }
  int width() const { return static_cast<int>(I.cols()); }
  bool square() const { return height() == width(); }

  // Throws DataError when channel shapes or value ranges are inconsistent.
  void validate() const;

  bool equals(const IuvaFrame& o, float tol = 0.0f) const;
};

struct RgbImage {
  Plane r, g, b;
  int height() const { return static_cast<int>(r.rows()); }
  int width() const { return static_cast<int>(r.cols()); }
};

struct Silhouette {
  Eigen::Array<uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;
  // Set when the alpha map was constant and no threshold exists.
  bool constant_alpha_warning = false;

  int area() const { return static_cast<int>(mask.cast<int>().sum()); }
};

struct BoundingBox {
  int x0, y0, x1, y1;  // inclusive pixel bounds
  double center_x() const { return 0.5 * (x0 + x1 + 1); }
  double center_y() const { return 0.5 * (y0 + y1 + 1); }
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
};

// Bounding box of {A >= 0.5}; empty optional when no pixel qualifies.
std::optional<BoundingBox> subject_bbox(const IuvaFrame& frame);

// Re-centers the subject on a square canvas. The subject is translated so
// its bounding-box center lands on the canvas center and is only rescaled
// (aspect preserved, nearest-neighbor on I, bilinear on U/V/A) when it would
// not fit. Padding is background: I=0, A=0. Throws DataError when the frame
// has no subject pixel.
IuvaFrame crop_and_center(const IuvaFrame& frame, int canvas);

// Resamples to new_h x new_w: nearest-neighbor on the categorical I channel,
// bilinear on U/V/A.
IuvaFrame resample_frame(const IuvaFrame& frame, int new_h, int new_w);

// Binary silhouette with threshold min(A) + (max(A)-min(A))/2. A constant
// alpha map yields an all-zero mask with the warning flag set.
Silhouette silhouette_from_alpha(const IuvaFrame& frame);

// Column-occupancy width of a silhouette, normalized by image width.
double silhouette_width(const Silhouette& s);

double silhouette_iou(const Silhouette& a, const Silhouette& b);

}  // namespace ctrgan::gait
