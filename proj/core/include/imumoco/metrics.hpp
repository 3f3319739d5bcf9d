#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imumoco/image.hpp"
#include "imumoco/moco.hpp"
#include "imumoco/types.hpp"

namespace imumoco::metrics {

/// Voxel selection on a volume grid.
struct Mask {
  VolumeSpec spec;
  std::vector<std::uint8_t> data;

  Mask() = default;
  explicit Mask(const VolumeSpec& s, std::uint8_t value = 0) : spec(s), data(s.size(), value) {}
  std::size_t count() const;
};

/// Maps [lo, hi] linearly to [0, 1] and clamps.
Volume scale_volume(const Volume& v, double lo, double hi);

struct SsimParams {
  double sigma = 1.5;
  int radius = 5;  // 11 taps per axis
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Local SSIM map with a separable Gaussian window. Near the border the
/// window is truncated and renormalised per axis.
Volume ssim_map(const Volume& a, const Volume& b, const SsimParams& p = {});

/// Mean local SSIM over the mask (whole grid when mask is null).
double ssim3d(const Volume& a, const Volume& b, const Mask* mask = nullptr, const SsimParams& p = {});

double rmse(const Volume& a, const Volume& b, const Mask* mask = nullptr);

struct RegionMasks {
  Mask leg;
  Mask shank;
  Mask thigh;
};

/// Leg = ground truth > 0, split by the plane through the knee whose normal
/// is the mean of the two segment directions (thigh side = towards the hip).
RegionMasks region_masks(const Volume& ground_truth, const moco::Joints& reference);

struct MetricReport {
  std::string region;
  double ssim = 0.0;
  double rmse = 0.0;
};

struct MotionComponents {
  Vec3 translation_mm;
  Vec3 euler_deg;  // x, y, z with R = Rz Ry Rx
  bool gimbal = false;
};

std::vector<MotionComponents> decompose_motion(const moco::MotionSeries& m);

struct MotionError {
  Vec3 translation_axes_mm = Vec3::Zero();
  Vec3 rotation_axes_deg = Vec3::Zero();
  double translation_mm = 0.0;  // mean over axes
  double rotation_deg = 0.0;
};

/// Per-axis RMSE over views of the decomposed components, averaged over axes.
MotionError motion_rmse(const moco::MotionSeries& ref, const moco::MotionSeries& test);

}  // namespace imumoco::metrics
