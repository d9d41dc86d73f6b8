#pragma once

#include <string>
#include <vector>

#include "ctrgan/frame.hpp"

namespace ctrgan::gait {

// Ordered pose frames of one subject from one viewpoint, optionally paired
// with RGB appearance frames of identical length.
struct GaitSequence {
  std::string subject_id;
  std::string view;
  double fps = 20.0;
  std::vector<IuvaFrame> frames;
  std::vector<RgbImage> rgb_frames;  // empty or same length as frames

  int size() const { return static_cast<int>(frames.size()); }
  bool has_rgb() const { return !rgb_frames.empty(); }
  void validate() const;
};

// Parameters of a synthetic walking figure. Two walkers are treated as
// distinguishable subjects when gait_frequency or stride_amplitude differ
// by at least 10%.
struct WalkerSpec {
  double gait_frequency = 1.0;   // cycles / second, > 0
  double stride_amplitude = 0.5; // leg swing in radians, (0, pi/2)
  double arm_swing_ratio = 0.7;
  double bob_amplitude = 1.0;    // vertical bounce in pixels
  double phase_offset = 0.0;     // radians
  double body_scale = 1.0;
  uint64_t seed = 0;

  void validate() const;
};

// Articulated 2-d figure (torso, pelvis, head, 2 arms, 2 legs; 7 distinct
// part indices) walking in place. Limb angles follow
// stride_amplitude * sin(2*pi*gait_frequency*t + phase_offset). U/V hold
// normalized within-part coordinates, A is the union mask (binary), and all
// channels are 8-bit quantized so file round trips are exact. Deterministic
// in (spec, n_frames, canvas, fps). Also produces paired RGB frames with a
// seed-derived per-part palette.
GaitSequence synth_walker(const WalkerSpec& spec, int n_frames, int canvas,
                          double fps = 20.0);

// Per-frame normalized silhouette widths; the basic gait signal.
Eigen::VectorXd width_signal(const GaitSequence& seq);

}  // namespace ctrgan::gait
