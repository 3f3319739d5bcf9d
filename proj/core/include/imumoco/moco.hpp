#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "imumoco/geometry.hpp"
#include "imumoco/image.hpp"
#include "imumoco/imu.hpp"
#include "imumoco/pose.hpp"
#include "imumoco/types.hpp"

namespace imumoco::moco {

/// Per-view motion M(i) of the object relative to the reference view 0.
struct MotionSeries {
  std::vector<Affine4> m;

  std::size_t size() const { return m.size(); }
};

/// M(i) = S(t_i) S(t_0)^-1, so a point x0 of the reference pose sits at
/// M(i) x0 when view i is acquired. M(0) = I.
MotionSeries rigid_motion_series(const pose::PoseTrack& track, const imu::SyncMap& sync);

/// P^(i) = P(i) M(i).
geometry::ScanGeometry correct_projection_matrices(const geometry::ScanGeometry& geom, const MotionSeries& motion);

/// CSV `view,tx_mm,ty_mm,tz_mm,rx_deg,ry_deg,rz_deg`.
void save_motion_csv(const MotionSeries& motion, const std::string& path);

struct Joints {
  Vec3 ankle = Vec3::Zero();
  Vec3 knee = Vec3::Zero();
  Vec3 hip = Vec3::Zero();
};

/// Joint positions in the sensor frame of one segment's IMU.
struct JointOffsets {
  Vec3 proximal = Vec3::Zero();
  Vec3 distal = Vec3::Zero();
};

/// Offsets of the proximal joint (segment origin) and the distal joint
/// (0, -length, 0) as seen from the sensor.
JointOffsets joint_offsets(const imu::SensorMount& mount, double segment_length);

/// Knee and ankle from the shank (tibia) sensor, hip from the thigh (femur) sensor.
Joints joints_from_imu_poses(const Affine4& tibia, const Affine4& femur, const JointOffsets& shank,
                             const JointOffsets& thigh);

struct MocoConfig {
  double alpha = 0.8;     // shrink of hip/ankle towards the knee
  double epsilon = 1e-8;  // added to squared control-point distances
};

struct ControlPoints2D {
  std::vector<Vec2> p;  // reference
  std::vector<Vec2> q;  // current
  bool off_detector = false;
};

struct ControlPoints3D {
  std::vector<Vec3> p;
  std::vector<Vec3> q;
};

/// h' and a' moved towards the knee: (1 - alpha) x + alpha k.
Joints shrink_towards_knee(const Joints& j, double alpha);

/// Reference (view 0) and current shrunken joints projected with p_i.
ControlPoints2D control_points_2d(const Joints& current, const Joints& reference, const ProjectionMatrix& p_i,
                                  const geometry::ScanGeometry& geom, const MocoConfig& cfg = {});

/// Reference and current joints as 3D control points (ankle, knee, hip).
ControlPoints3D control_points_3d(const Joints& current, const Joints& reference);

/// Similarity MLS map of Schaefer et al.:
///   f(v) = |v - p*| (sum_j q^_j A_j) / |sum_j q^_j A_j| + q*,
///   A_j = w_j [p^_j; -p^_j_perp] [v - p*; -(v - p*)_perp]^T,  perp(x, y) = (-y, x).
Vec2 mls_transform_2d(const Vec2& v, const ControlPoints2D& cps, double epsilon = 1e-8);

/// Output pixel v takes the input sampled (bilinear, clamped) at f(v).
Image2D mls_warp_2d(const Image2D& image, const ControlPoints2D& cps, double epsilon = 1e-8);

/// Rigid MLS: f(v) = V U^T (v - p*) + q*, U S V^T = sum_j w_j p^_j q^_j^T,
/// reflection removed by flipping the least singular direction. Three points
/// use a closed-form planar solution. Throws DegenerateRotationError for
/// collinear control points.
Vec3 mls_transform_3d(const Vec3& v, const ControlPoints3D& cps, double epsilon = 1e-8);

/// Precomputed three-point rigid MLS for repeated queries with fixed control
/// points. Both point sets are planar, so the weighted fit reduces to a 2D
/// rotation between plane frames; of the two in-plane fits (normal kept or
/// flipped, both proper in 3D) the better one is taken.
class RigidMls3D {
 public:
  explicit RigidMls3D(const ControlPoints3D& cps, double epsilon = 1e-8);
  Vec3 operator()(const Vec3& v) const;

 private:
  std::array<Vec3, 3> p_;
  std::array<Vec3, 3> q_;
  std::array<Vec2, 3> x_;  // p in the p-plane frame
  std::array<Vec2, 3> y_;  // q in the q-plane frame
  Mat3 frame_p_;
  Mat3 frame_q_;
  double epsilon_;
};

/// General SVD path for any m >= 3 (reference for the closed form).
Vec3 mls_transform_3d_svd(const Vec3& v, const ControlPoints3D& cps, double epsilon = 1e-8);

}  // namespace imumoco::moco
