#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace imumoco {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
/// 4x4 rigid pose / motion matrix, last row (0, 0, 0, 1).
using Affine4 = Eigen::Matrix4d;
/// Maps homogeneous world coordinates (m) to homogeneous detector pixels.
using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kStandardGravity = 9.80665;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// World gravity vector; y is the vertical axis.
inline Vec3 gravity_vector() { return {0.0, -kStandardGravity, 0.0}; }

Affine4 make_pose(const Mat3& rotation, const Vec3& translation);
inline Mat3 rotation_of(const Affine4& pose) { return pose.topLeftCorner<3, 3>(); }
inline Vec3 translation_of(const Affine4& pose) { return pose.topRightCorner<3, 1>(); }

/// Inverse of a rigid transform, computed from the transposed rotation block.
Affine4 invert_rigid(const Affine4& pose);

inline Vec3 transform_point(const Affine4& pose, const Vec3& x) {
  return pose.topLeftCorner<3, 3>() * x + pose.topRightCorner<3, 1>();
}

Mat3 skew(const Vec3& w);
/// Axial vector of the skew-symmetric part of m.
Vec3 vee(const Mat3& m);

/// Rodrigues' closed form of the SO(3) exponential map.
Mat3 exp_so3(const Vec3& rotation_vector);
Vec3 log_so3(const Mat3& rotation);

/// Nearest rotation matrix (polar decomposition).
Mat3 orthonormalize(const Mat3& m);

/// max |R^T R - I|
double orthonormality_error(const Mat3& r);

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Angles (x, y, z) with R = Rz(z) Ry(y) Rx(x). At |y| = 90 deg the x angle is
/// set to 0 and `gimbal` (if given) is raised.
Vec3 euler_xyz(const Mat3& r, bool* gimbal = nullptr);
Mat3 from_euler_xyz(const Vec3& angles);

/// Angle (rad) of the relative rotation a^T b.
double rotation_angle_between(const Mat3& a, const Mat3& b);

/// Translation plus unit quaternion (w, x, y, z).
struct PoseQuat {
  Vec3 translation;
  Eigen::Quaterniond rotation;
};
PoseQuat to_pose_quat(const Affine4& pose);

}  // namespace imumoco
