#include <gtest/gtest.h>

#include <random>

#include "imumoco/types.hpp"

using namespace imumoco;

TEST(Types, ExpLogRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 w = Vec3(u(rng), u(rng), u(rng)) * 1.5;
    const Mat3 r = exp_so3(w);
    EXPECT_LT(orthonormality_error(r), 1e-14);
    EXPECT_LT((log_so3(r) - w).norm(), 1e-10);
  }
}

TEST(Types, ExpMatchesAngleAxis) {
  const Vec3 axis = Vec3(1, 2, -0.5).normalized();
  const Mat3 ref = Eigen::AngleAxisd(0.7, axis).toRotationMatrix();
  EXPECT_LT((exp_so3(axis * 0.7) - ref).norm(), 1e-14);
}

TEST(Types, LogNearPi) {
  const Vec3 axis = Vec3(0.3, -0.4, 0.8).normalized();
  const Vec3 w = log_so3(Eigen::AngleAxisd(kPi - 1e-9, axis).toRotationMatrix());
  EXPECT_NEAR(w.norm(), kPi, 1e-6);
  EXPECT_GT(std::abs(w.normalized().dot(axis)), 1.0 - 1e-9);
}

TEST(Types, InvertRigid) {
  const Affine4 p = make_pose(exp_so3(Vec3(0.1, -0.2, 0.3)), Vec3(1, 2, 3));
  EXPECT_LT((invert_rigid(p) * p - Affine4::Identity()).norm(), 1e-14);
}

TEST(Types, EulerRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int k = 0; k < 200; ++k) {
    const Vec3 e(u(rng), u(rng), u(rng));
    bool gimbal = true;
    EXPECT_LT((euler_xyz(from_euler_xyz(e), &gimbal) - e).norm(), 1e-12);
    EXPECT_FALSE(gimbal);
  }
}

TEST(Types, EulerConventionIsZYX) {
  const Mat3 r = rot_z(0.3) * rot_y(-0.2) * rot_x(0.1);
  EXPECT_LT((euler_xyz(r) - Vec3(0.1, -0.2, 0.3)).norm(), 1e-14);
}

TEST(Types, EulerGimbal) {
  bool gimbal = false;
  const Mat3 r = rot_z(0.4) * rot_y(kPi / 2) * rot_x(0.0);
  const Vec3 e = euler_xyz(r, &gimbal);
  EXPECT_TRUE(gimbal);
  EXPECT_EQ(e.x(), 0.0);
  EXPECT_LT((from_euler_xyz(e) - r).norm(), 1e-9);
}

TEST(Types, OrthonormalizeKeepsRotation) {
  const Mat3 r = exp_so3(Vec3(0.2, 0.1, -0.3));
  Mat3 noisy = r;
  noisy(0, 1) += 1e-6;
  const Mat3 o = orthonormalize(noisy);
  EXPECT_LT(orthonormality_error(o), 1e-14);
  EXPECT_NEAR(o.determinant(), 1.0, 1e-14);
  EXPECT_LT((o - r).norm(), 1e-6);
}
