#pragma once

#include <filesystem>
#include <string>

#include "ctrgan/frame.hpp"

namespace ctrgan::gait {

// IUVA frames are stored as 4-channel Netpbm PAM (P7) files, sample order
// I,U,V,A. The part-index channel holds raw indices; U/V/A are scaled to
// maxval. bitdepth is 8 or 16 (16-bit samples big-endian per Netpbm).
void save_frame_pam(const IuvaFrame& frame, const std::filesystem::path& path,
                    int bitdepth = 8);
IuvaFrame load_frame_pam(const std::filesystem::path& path);

// RGB frames as binary PPM (P6), 8-bit.
void save_image_ppm(const RgbImage& img, const std::filesystem::path& path);
RgbImage load_image_ppm(const std::filesystem::path& path);

// Grayscale PGM (P5) from values in [0,1]; used for heatmap exports.
void save_heatmap_pgm(const Eigen::ArrayXXd& values,
                      const std::filesystem::path& path);

}  // namespace ctrgan::gait
