#include "ctrgan/frame.hpp"

#include <algorithm>
#include <cmath>

#include "ctrgan/errors.hpp"

namespace ctrgan::gait {

void IuvaFrame::validate() const {
  const auto rows = I.rows();
  const auto cols = I.cols();
  if (rows == 0 || cols == 0) throw DataError("IuvaFrame: empty frame");
  for (const Plane* p : {&U, &V, &A})
    if (p->rows() != rows || p->cols() != cols)
      throw DataError("IuvaFrame: channel shape mismatch");
  if ((I < 0.0f).any() || (I > float(kMaxPartIndex)).any())
    throw DataError("IuvaFrame: part index out of range");
  if ((I != I.round()).any()) throw DataError("IuvaFrame: non-integral part index");
  for (const Plane* p : {&U, &V, &A})
    if ((*p < 0.0f).any() || (*p > 1.0f).any() || !p->isFinite().all())
      throw DataError("IuvaFrame: channel value outside [0,1]");
}

bool IuvaFrame::equals(const IuvaFrame& o, float tol) const {
  if (height() != o.height() || width() != o.width()) return false;
  auto close = [tol](const Plane& a, const Plane& b) {
    return ((a - b).abs() <= tol).all();
  };
  return close(I, o.I) && close(U, o.U) && close(V, o.V) && close(A, o.A);
}

std::optional<BoundingBox> subject_bbox(const IuvaFrame& frame) {
  int x0 = frame.width(), x1 = -1, y0 = frame.height(), y1 = -1;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
      if (frame.A(y, x) >= 0.5f) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return std::nullopt;
  return BoundingBox{x0, y0, x1, y1};
}

namespace {

float bilinear(const Plane& p, double x, double y) {
  const int w = static_cast<int>(p.cols());
  const int h = static_cast<int>(p.rows());
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto at = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
    return p(yy, xx);
  };
  const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                   fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  return static_cast<float>(v);
}

float nearest(const Plane& p, double x, double y) {
  const int xx = static_cast<int>(std::lround(x));
  const int yy = static_cast<int>(std::lround(y));
  if (xx < 0 || xx >= p.cols() || yy < 0 || yy >= p.rows()) return 0.0f;
  return p(yy, xx);
}

}  // namespace

IuvaFrame crop_and_center(const IuvaFrame& frame, int canvas) {
  if (canvas <= 0) throw DataError("crop_and_center: canvas must be positive");
  const auto bbox = subject_bbox(frame);
  if (!bbox)
    throw DataError("crop_and_center: frame has no subject pixel (A >= 0.5)");

  // Rescale only when the subject would not fit; 0.95 leaves a margin so the
  // translated subject stays fully inside the canvas.
  const double fit = 0.95 * canvas;
  double scale = 1.0;
  const int extent = std::max(bbox->width(), bbox->height());
  if (extent > fit) scale = fit / extent;

  const double target = canvas / 2.0;
  // Integer (or closest-integer) source offset keeps the no-rescale path an
  // exact pixel copy, which makes the operation idempotent.
  const double sx0 = bbox->center_x() - target / scale;
  const double sy0 = bbox->center_y() - target / scale;
  // Half-up rounding: a bbox with odd extent sits half a pixel off center
  // either way, and this choice is stable under re-application.
  const bool pure_shift = scale == 1.0;
  const double ox = pure_shift ? std::floor(sx0 + 0.5) : sx0;
  const double oy = pure_shift ? std::floor(sy0 + 0.5) : sy0;

  IuvaFrame out;
  out.I.setZero(canvas, canvas);
  out.U.setZero(canvas, canvas);
  out.V.setZero(canvas, canvas);
  out.A.setZero(canvas, canvas);
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      // Pixel-center sampling: output pixel x covers [x, x+1).
      const double ix = ox + (x + 0.5) / scale - 0.5;
      const double iy = oy + (y + 0.5) / scale - 0.5;
      const float a = bilinear(frame.A, ix, iy);
      const float i = nearest(frame.I, ix, iy);
      if (i == 0.0f && a < 0.5f && a == 0.0f) continue;  // keep background zeros
      out.I(y, x) = i;
      out.U(y, x) = bilinear(frame.U, ix, iy);
      out.V(y, x) = bilinear(frame.V, ix, iy);
      out.A(y, x) = a;
    }
  }
  return out;
}

IuvaFrame resample_frame(const IuvaFrame& frame, int new_h, int new_w) {
  if (new_h <= 0 || new_w <= 0) throw DataError("resample_frame: bad size");
  const double sy = double(frame.height()) / new_h;
  const double sx = double(frame.width()) / new_w;
  IuvaFrame out;
  out.I.setZero(new_h, new_w);
  out.U.setZero(new_h, new_w);
  out.V.setZero(new_h, new_w);
  out.A.setZero(new_h, new_w);
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x) {
      const double ix = (x + 0.5) * sx - 0.5;
      const double iy = (y + 0.5) * sy - 0.5;
      out.I(y, x) = nearest(frame.I, ix, iy);
      out.U(y, x) = bilinear(frame.U, ix, iy);
      out.V(y, x) = bilinear(frame.V, ix, iy);
      out.A(y, x) = bilinear(frame.A, ix, iy);
    }
  return out;
}

Silhouette silhouette_from_alpha(const IuvaFrame& frame) {
  Silhouette s;
  const float lo = frame.A.minCoeff();
  const float hi = frame.A.maxCoeff();
  s.mask.setZero(frame.height(), frame.width());
  if (hi == lo) {
    s.constant_alpha_warning = true;
    return s;
  }
  const float threshold = lo + (hi - lo) / 2.0f;
  s.mask = (frame.A > threshold).cast<uint8_t>();
  return s;
}

double silhouette_width(const Silhouette& s) {
  const int w = static_cast<int>(s.mask.cols());
  if (w == 0) return 0.0;
  int occupied = 0;
  for (int x = 0; x < w; ++x)
    if ((s.mask.col(x) != 0).any()) ++occupied;
  return static_cast<double>(occupied) / w;
}

double silhouette_iou(const Silhouette& a, const Silhouette& b) {
  if (a.mask.rows() != b.mask.rows() || a.mask.cols() != b.mask.cols())
    throw DataError("silhouette_iou: shape mismatch");
  const auto am = a.mask.cast<int>();
  const auto bm = b.mask.cast<int>();
  const int inter = (am * bm).sum();
  const int uni = ((am + bm) > 0).cast<int>().sum();
  if (uni == 0) return 1.0;  // both empty: identical masks
  return static_cast<double>(inter) / uni;
}

}  // namespace ctrgan::gait
