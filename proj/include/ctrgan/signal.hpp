#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace ctrgan {

// Magnitude spectrum |X_k| for k = 0 .. N/2 of a real signal. Plain O(N^2)
// DFT; series here are a few hundred samples at most.
inline Eigen::VectorXd dft_magnitude(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  if (n == 0) throw std::invalid_argument("dft_magnitude: empty signal");
  const int half = n / 2;
  Eigen::VectorXd mag(half + 1);
  const double two_pi = 6.283185307179586476925286766559;
  for (int k = 0; k <= half; ++k) {
    double re = 0.0, im = 0.0;
    for (int t = 0; t < n; ++t) {
      const double a = two_pi * k * t / n;
      re += x[t] * std::cos(a);
      im -= x[t] * std::sin(a);
    }
    mag[k] = std::hypot(re, im) / n;
  }
  return mag;
}

// Index of the strongest non-DC bin after mean removal. Returns 0 for a
// constant signal (no oscillatory energy).
inline int dominant_frequency_bin(const Eigen::VectorXd& x) {
  Eigen::VectorXd centered = x.array() - x.mean();
  if (centered.cwiseAbs().maxCoeff() < 1e-12) return 0;
  const Eigen::VectorXd mag = dft_magnitude(centered);
  int best = 1;
  for (int k = 2; k < mag.size(); ++k)
    if (mag[k] > mag[best]) best = k;
  return best;
}

// Bin that frequency_hz falls into for a length-n signal sampled at fps.
inline int frequency_to_bin(double frequency_hz, int n, double fps) {
  return static_cast<int>(std::lround(frequency_hz * n / fps));
}

}  // namespace ctrgan
