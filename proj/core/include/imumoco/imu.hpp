#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imumoco/phantom.hpp"
#include "imumoco/types.hpp"

namespace imumoco::imu {

/// Rigid sensor attachment to a body segment.
struct SensorMount {
  phantom::Segment segment = phantom::Segment::Shank;
  Vec3 position = Vec3::Zero();         // p_Sen in the segment frame, m
  Mat3 orientation = Mat3::Identity();  // R_off, sensor axes in the segment frame
};

/// Shank sensor 14 cm distal to the knee on the segment axis.
SensorMount default_shank_mount();
/// Thigh sensor 25 cm distal to the hip on the segment axis.
SensorMount default_thigh_mount();

/// Sensor world pose at frame t: [R_seg R_off | r_seg + R_seg p_Sen].
Affine4 sensor_pose(const phantom::SegmentKinematics& kin, const SensorMount& mount, std::size_t t);
std::vector<Affine4> sensor_poses(const phantom::SegmentKinematics& kin, const SensorMount& mount);

/// Specific force (m/s^2) and angular rate (rad/s) in sensor axes.
struct ImuSeries {
  double rate_hz = 120.0;
  std::vector<Vec3> acc;
  std::vector<Vec3> gyro;

  std::size_t size() const { return acc.size(); }
  double dt() const { return 1.0 / rate_hz; }
};

/// Ideal IMU signals of a mounted sensor.
///
/// Samples are aligned to the integration interval [t, t+1]: the rate is the
/// axial vector of the skew part of R(t)^T (R(t+1) - R(t)) / dt and the
/// specific force is R(t)^T (r''_Seg + R''_seg p_Sen - g) with the segment
/// derivatives taken at t+1. With this alignment the left-point strapdown
/// update reproduces the sensor track up to O(dt^2) instead of O(dt).
/// The last sample reuses the backward interval.
ImuSeries simulate_imu(const phantom::SegmentKinematics& kin, const SensorMount& mount,
                       const Vec3& gravity = gravity_vector());

/// Sensor-frame velocity at frame 0 consistent with simulate_imu.
Vec3 true_initial_velocity(const phantom::SegmentKinematics& kin, const SensorMount& mount);

/// White Gaussian noise: sigma = base / 10^f per sensor type.
struct NoiseSpec {
  double rms_acc_base = 1.8e-3 * kStandardGravity;  // m/s^2 per axis
  double rms_gyro_base_deg = 0.07;                  // deg/s per axis
  int f_a = 0;
  int f_g = 0;
  std::uint64_t seed = 0;

  double sigma_acc() const;
  double sigma_gyro() const;  // rad/s
};

/// Returns a noisy copy; identical seeds give identical output.
ImuSeries add_noise(const ImuSeries& series, const NoiseSpec& spec);

/// Projection-to-IMU sample correspondence.
struct SyncMap {
  double imu_rate_hz = 120.0;
  double proj_rate_hz = 15.5;
  std::vector<std::size_t> index;  // t_i

  /// IMU samples between the first two projections.
  std::size_t n() const { return index.size() > 1 ? index[1] - index[0] : 0; }
};

/// t_i = round(i * imu_rate / proj_rate). Throws SyncError on bad rates and
/// CoverageError if `series_length` (when nonzero) is too short.
SyncMap build_sync_map(double imu_rate_hz, double proj_rate_hz, std::size_t n_proj, std::size_t series_length = 0);

/// CSV with header `t,ax,ay,az,gx,gy,gz`, SI units.
void save_imu_csv(const ImuSeries& series, const std::string& path);
ImuSeries load_imu_csv(const std::string& path);

}  // namespace imumoco::imu
