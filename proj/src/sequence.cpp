#include "ctrgan/sequence.hpp"

#include <algorithm>
#include <cmath>

#include "ctrgan/errors.hpp"
#include "ctrgan/random.hpp"

namespace ctrgan::gait {

void GaitSequence::validate() const {
  if (frames.empty()) throw DataError("GaitSequence: no frames");
  const int h = frames.front().height();
  const int w = frames.front().width();
  for (const auto& f : frames)
    if (f.height() != h || f.width() != w)
      throw DataError("GaitSequence: frame dimensions differ within sequence");
  if (!rgb_frames.empty() && rgb_frames.size() != frames.size())
    throw DataError("GaitSequence: rgb_frames length differs from frames");
  if (fps <= 0.0) throw DataError("GaitSequence: fps must be positive");
}

void WalkerSpec::validate() const {
  const double half_pi = 1.5707963267948966;
  if (!(gait_frequency > 0.0) || !std::isfinite(gait_frequency))
    throw DataError("WalkerSpec: gait_frequency must be positive");
  if (!(stride_amplitude > 0.0) || !(stride_amplitude < half_pi))
    throw DataError("WalkerSpec: stride_amplitude must lie in (0, pi/2)");
  for (double v : {arm_swing_ratio, bob_amplitude, phase_offset, body_scale})
    if (!std::isfinite(v)) throw DataError("WalkerSpec: non-finite parameter");
  if (body_scale <= 0.0) throw DataError("WalkerSpec: body_scale must be positive");
}

namespace {

// Part indices used by the synthetic walker (subset of the 24-chart scheme).
enum Part : int {
  kTorso = 1,
  kHead = 2,
  kRightLeg = 3,
  kLeftLeg = 4,
  kRightArm = 5,
  kLeftArm = 6,
  kPelvis = 7,
};

struct Vec2 {
  double x, y;
};

struct Paint {
  Plane* I;
  Plane* U;
  Plane* V;
  Plane* A;
  int canvas;

  void set(int x, int y, int part, double u, double v) {
    if (x < 0 || x >= canvas || y < 0 || y >= canvas) return;
    (*I)(y, x) = static_cast<float>(part);
    (*U)(y, x) = static_cast<float>(std::clamp(u, 0.0, 1.0));
    (*V)(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    (*A)(y, x) = 1.0f;
  }

  // Thick segment. U runs along the axis, V across it.
  void capsule(Vec2 a, Vec2 b, double halfwidth, int part) {
    const double minx = std::min(a.x, b.x) - halfwidth - 1;
    const double maxx = std::max(a.x, b.x) + halfwidth + 1;
    const double miny = std::min(a.y, b.y) - halfwidth - 1;
    const double maxy = std::max(a.y, b.y) + halfwidth + 1;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = std::max(dx * dx + dy * dy, 1e-12);
    for (int y = std::max(0, (int)std::floor(miny)); y <= std::min(canvas - 1, (int)std::ceil(maxy)); ++y) {
      for (int x = std::max(0, (int)std::floor(minx)); x <= std::min(canvas - 1, (int)std::ceil(maxx)); ++x) {
        const double px = x - a.x, py = y - a.y;
        const double t = std::clamp((px * dx + py * dy) / len2, 0.0, 1.0);
        const double cx = a.x + t * dx, cy = a.y + t * dy;
        const double ex = x - cx, ey = y - cy;
        const double d = std::sqrt(ex * ex + ey * ey);
        if (d > halfwidth) continue;
        const double side = (ex * dy - ey * dx) / std::sqrt(len2);  // signed across-axis
        set(x, y, part, t, 0.5 + 0.5 * side / halfwidth);
      }
    }
  }

  void ellipse(Vec2 c, double rx, double ry, int part) {
    for (int y = std::max(0, (int)std::floor(c.y - ry)); y <= std::min(canvas - 1, (int)std::ceil(c.y + ry)); ++y) {
      for (int x = std::max(0, (int)std::floor(c.x - rx)); x <= std::min(canvas - 1, (int)std::ceil(c.x + rx)); ++x) {
        const double nx = (x - c.x) / rx, ny = (y - c.y) / ry;
        if (nx * nx + ny * ny > 1.0) continue;
        set(x, y, part, 0.5 + 0.5 * nx, 0.5 + 0.5 * ny);
      }
    }
  }
};

float q8(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0); }

}  // namespace

GaitSequence synth_walker(const WalkerSpec& spec, int n_frames, int canvas,
                          double fps) {
  spec.validate();
  if (n_frames < 1) throw DataError("synth_walker: n_frames must be >= 1");
  if (canvas < 16) throw DataError("synth_walker: canvas too small");

  Rng rng = Rng::derive(spec.seed, "synth_walker");
  const double unit = canvas * spec.body_scale;
  // Small per-subject proportion jitter so equal-parameter subjects are not
  // pixel-identical clones.
  auto jitter = [&rng]() { return 1.0 + 0.05 * (rng.uniform() - 0.5); };
  const double torso_len = 0.23 * unit * jitter();
  const double torso_hw = 0.060 * unit * jitter();
  const double head_r = 0.055 * unit * jitter();
  const double leg_len = 0.29 * unit * jitter();
  const double arm_len = 0.23 * unit * jitter();
  const double leg_hw = 0.030 * unit;
  const double arm_hw = 0.024 * unit;
  const double pelvis_rx = 0.075 * unit;
  const double pelvis_ry = 0.045 * unit;

  // Per-part palette for the paired RGB frames.
  Eigen::Matrix<double, 8, 3> palette;
  palette.setZero();
  for (int p = 1; p <= 7; ++p)
    for (int c = 0; c < 3; ++c) palette(p, c) = 0.25 + 0.75 * rng.uniform();

  GaitSequence seq;
  seq.fps = fps;
  seq.frames.reserve(n_frames);
  seq.rgb_frames.reserve(n_frames);

  const double two_pi = 6.283185307179586476925286766559;
  const double cx = canvas / 2.0;

  for (int f = 0; f < n_frames; ++f) {
    const double t = f / fps;
    const double phase = two_pi * spec.gait_frequency * t + spec.phase_offset;
    const double swing = std::sin(phase);
    const double bob = spec.bob_amplitude * 0.5 * (1.0 - std::cos(2.0 * phase));

    const double hip_y = 0.54 * canvas + bob;
    const Vec2 hip{cx, hip_y};
    const Vec2 shoulder{cx, hip_y - torso_len};

    auto limb_end = [](Vec2 from, double len, double angle) {
      return Vec2{from.x + len * std::sin(angle), from.y + len * std::cos(angle)};
    };
    const double leg_angle_r = spec.stride_amplitude * swing;
    const double leg_angle_l = -leg_angle_r;
    const double arm_angle_r = -spec.arm_swing_ratio * spec.stride_amplitude * swing;
    const double arm_angle_l = -arm_angle_r;

    IuvaFrame fr;
    fr.I.setZero(canvas, canvas);
    fr.U.setZero(canvas, canvas);
    fr.V.setZero(canvas, canvas);
    fr.A.setZero(canvas, canvas);
    Paint paint{&fr.I, &fr.U, &fr.V, &fr.A, canvas};

    // Far-to-near paint order; later parts overwrite earlier ones.
    paint.capsule(shoulder, limb_end(shoulder, arm_len, arm_angle_l), arm_hw, kLeftArm);
    paint.capsule(hip, limb_end(hip, leg_len, leg_angle_l), leg_hw, kLeftLeg);
    paint.capsule(hip, shoulder, torso_hw, kTorso);
    paint.ellipse(hip, pelvis_rx, pelvis_ry, kPelvis);
    paint.ellipse({cx, shoulder.y - 1.35 * head_r}, head_r, head_r, kHead);
    paint.capsule(hip, limb_end(hip, leg_len, leg_angle_r), leg_hw, kRightLeg);
    paint.capsule(shoulder, limb_end(shoulder, arm_len, arm_angle_r), arm_hw, kRightArm);

    // 8-bit quantize U/V so disk round trips reproduce frames exactly.
    for (Plane* p : {&fr.U, &fr.V})
      *p = p->unaryExpr([](float v) { return q8(v); });

    RgbImage rgb;
    rgb.r.setZero(canvas, canvas);
    rgb.g.setZero(canvas, canvas);
    rgb.b.setZero(canvas, canvas);
    for (int y = 0; y < canvas; ++y)
      for (int x = 0; x < canvas; ++x) {
        const int part = static_cast<int>(fr.I(y, x));
        if (part == 0) continue;
        const double shade = 0.55 + 0.45 * fr.U(y, x);
        rgb.r(y, x) = q8(palette(part, 0) * shade);
        rgb.g(y, x) = q8(palette(part, 1) * shade);
        rgb.b(y, x) = q8(palette(part, 2) * shade);
      }

    seq.frames.push_back(std::move(fr));
    seq.rgb_frames.push_back(std::move(rgb));
  }
  return seq;
}

Eigen::VectorXd width_signal(const GaitSequence& seq) {
  Eigen::VectorXd w(seq.size());
  for (int i = 0; i < seq.size(); ++i)
    w[i] = silhouette_width(silhouette_from_alpha(seq.frames[i]));
  return w;
}

}  // namespace ctrgan::gait
