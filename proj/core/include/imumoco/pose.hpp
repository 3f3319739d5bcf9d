#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "imumoco/geometry.hpp"
#include "imumoco/imu.hpp"
#include "imumoco/types.hpp"

namespace imumoco::pose {

/// Per-sample motion in the sensor frame: rotation increment and displacement.
struct LocalDelta {
  Mat3 G = Mat3::Identity();
  Vec3 d = Vec3::Zero();  // m

  Affine4 matrix() const { return make_pose(G, d); }
};

/// World poses S(t), one per IMU sample.
struct PoseTrack {
  std::vector<Affine4> poses;
  std::vector<LocalDelta> deltas;  // deltas[t] maps S(t) to S(t+1)
  Vec3 v0 = Vec3::Zero();          // sensor-frame velocity at t = 0, m/s

  std::size_t size() const { return poses.size(); }
};

inline constexpr std::size_t kReorthonormalizeEvery = 256;

/// Strapdown integration with explicit time step:
///   G = exp([w dt]x), v(t+1) = G^T (v(t) + (a(t) + R(t)^T g) dt),
///   d(t) = v(t) dt, S(t+1) = S(t) [G | d].
/// Integrates `samples` poses (0 = whole series). Throws IntegrationError on
/// non-finite samples.
PoseTrack integrate_poses(const imu::ImuSeries& series, const Affine4& s0, const Vec3& v0,
                          const Vec3& gravity = gravity_vector(), std::size_t samples = 0);

/// Four sensor-fixed points and their detector positions in one projection.
struct FiducialModel {
  std::array<Vec3, 4> points;   // sensor frame, m
  std::array<Vec2, 4> tracked;  // pixels

  /// Origin plus the three axis tips at distance `arm` (m).
  static FiducialModel canonical(double arm);
};

/// Default arm length of the canonical fiducial layout.
inline constexpr double kDefaultFiducialArm = 0.02;

struct InitialPose {
  Affine4 pose = Affine4::Identity();
  std::array<Vec3, 4> world_points;
  double residual = 0.0;  // constraint residual norm, m
  int iterations = 0;
  bool on_detector = true;
};

/// Projects the model points of a sensor at `pose` with p.
std::array<Vec2, 4> project_fiducials(const FiducialModel& model, const Affine4& pose, const ProjectionMatrix& p);

/// Recovers the sensor pose from the tracked fiducial positions.
/// Unknowns are the four depths along the pixel rays; residuals are the
/// pairwise model distances and the signed volume of the point set.
InitialPose estimate_initial_pose(const FiducialModel& model, const ProjectionMatrix& p,
                                  const geometry::ScanGeometry& geom);

/// Initial sensor-frame velocity from the pose observed at the second
/// projection: integrates n samples with v0 = 0 and returns
/// -(t' - t) / (n dt), t' and t being the translations of S(0)^-1 S'(n) and
/// S(0)^-1 S_n.
Vec3 estimate_initial_velocity(const Affine4& s0, const Affine4& s_n_observed, const imu::ImuSeries& series,
                               const imu::SyncMap& sync, const Vec3& gravity = gravity_vector());

/// CSV `t,x,y,z,qw,qx,qy,qz` (m, unit quaternion).
void save_pose_csv(const PoseTrack& track, double rate_hz, const std::string& path);

}  // namespace imumoco::pose
