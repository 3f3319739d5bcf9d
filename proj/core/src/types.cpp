#include "imumoco/types.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace imumoco {

Affine4 make_pose(const Mat3& rotation, const Vec3& translation) {
  Affine4 pose = Affine4::Identity();
  pose.topLeftCorner<3, 3>() = rotation;
  pose.topRightCorner<3, 1>() = translation;
  return pose;
}

Affine4 invert_rigid(const Affine4& pose) {
  const Mat3 rt = rotation_of(pose).transpose();
  return make_pose(rt, -rt * translation_of(pose));
}

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1))}; }

Mat3 exp_so3(const Vec3& rotation_vector) {
  const double theta = rotation_vector.norm();
  const Mat3 w = skew(rotation_vector);
  if (theta < 1e-12) return Mat3::Identity() + w;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * w + b * w * w;
}

Vec3 log_so3(const Mat3& rotation) {
  const double c = std::clamp(0.5 * (rotation.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(c);
  const Vec3 axial = vee(rotation);  // sin(theta) * axis
  if (theta < 1e-7) return axial;
  if (theta > kPi - 1e-6) {
    // Near pi the skew part vanishes; read the axis from R + I.
    const Mat3 b = 0.5 * (rotation + Mat3::Identity());
    Eigen::Index k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    if (axis.dot(axial) < 0.0) axis = -axis;
    return theta * axis.normalized();
  }
  return theta / std::sin(theta) * axial;
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

double orthonormality_error(const Mat3& r) { return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(); }

Mat3 rot_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Mat3 rot_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Mat3 rot_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

Vec3 euler_xyz(const Mat3& r, bool* gimbal) {
  const double cy = std::hypot(r(0, 0), r(1, 0));
  const double y = std::atan2(-r(2, 0), cy);
  const bool locked = cy < 1e-9;
  if (gimbal) *gimbal = locked;
  if (locked) return {0.0, y, std::atan2(-r(0, 1), r(1, 1))};
  return {std::atan2(r(2, 1), r(2, 2)), y, std::atan2(r(1, 0), r(0, 0))};
}

Mat3 from_euler_xyz(const Vec3& angles) { return rot_z(angles.z()) * rot_y(angles.y()) * rot_x(angles.x()); }

double rotation_angle_between(const Mat3& a, const Mat3& b) { return log_so3(a.transpose() * b).norm(); }

PoseQuat to_pose_quat(const Affine4& pose) {
  Eigen::Quaterniond q(rotation_of(pose));
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return {translation_of(pose), q};
}

}  // namespace imumoco
