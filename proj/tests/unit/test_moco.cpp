#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "imumoco/errors.hpp"
#include "imumoco/moco.hpp"

using namespace imumoco;
using namespace imumoco::moco;

namespace {

// Similarity MLS written directly from its definition with 2x2 matrix blocks.
Vec2 mls2d_oracle(const Vec2& v, const std::vector<Vec2>& p, const std::vector<Vec2>& q, double eps) {
  const auto perp = [](const Vec2& x) { return Vec2(-x.y(), x.x()); };
  std::vector<double> w(p.size());
  double ws = 0.0;
  Vec2 ps = Vec2::Zero(), qs = Vec2::Zero();
  for (std::size_t j = 0; j < p.size(); ++j) {
    w[j] = 1.0 / ((p[j] - v).squaredNorm() + eps);
    ws += w[j];
    ps += w[j] * p[j];
    qs += w[j] * q[j];
  }
  ps /= ws;
  qs /= ws;
  const Vec2 d = v - ps;
  Eigen::Matrix2d right;
  right.col(0) = d;
  right.col(1) = -perp(d);
  Eigen::RowVector2d sum = Eigen::RowVector2d::Zero();
  for (std::size_t j = 0; j < p.size(); ++j) {
    const Vec2 ph = p[j] - ps;
    Eigen::Matrix2d left;
    left.row(0) = ph.transpose();
    left.row(1) = -perp(ph).transpose();
    const Eigen::Matrix2d a = w[j] * left * right.transpose();
    sum += (q[j] - qs).transpose() * a;
  }
  return d.norm() * sum.transpose() / sum.norm() + qs;
}

// Rigid MLS with a plain SVD of the weighted covariance.
Vec3 mls3d_oracle(const Vec3& v, const std::vector<Vec3>& p, const std::vector<Vec3>& q, double eps) {
  double ws = 0.0;
  Vec3 ps = Vec3::Zero(), qs = Vec3::Zero();
  std::vector<double> w(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    w[j] = 1.0 / ((p[j] - v).squaredNorm() + eps);
    ws += w[j];
    ps += w[j] * p[j];
    qs += w[j] * q[j];
  }
  ps /= ws;
  qs /= ws;
  Mat3 m = Mat3::Zero();
  for (std::size_t j = 0; j < p.size(); ++j) m += w[j] * (p[j] - ps) * (q[j] - qs).transpose();
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 vv = svd.matrixV();
  const Mat3 u = svd.matrixU();
  if ((vv * u.transpose()).determinant() < 0) vv.col(2) *= -1.0;
  return vv * u.transpose() * (v - ps) + qs;
}

Affine4 random_rigid(std::mt19937_64& rng, double angle, double shift) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return make_pose(exp_so3(Vec3(u(rng), u(rng), u(rng)) * angle), Vec3(u(rng), u(rng), u(rng)) * shift);
}

pose::PoseTrack track_of(const std::vector<Affine4>& poses) {
  pose::PoseTrack t;
  t.poses = poses;
  return t;
}

Image2D test_image(std::size_t rows, std::size_t cols) {
  Image2D img(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) img.at(r, c) = std::sin(0.3 * c) + 0.01 * r * r + 0.5 * ((r + c) % 3);
  return img;
}

}  // namespace

TEST(RigidSeries, StaticTrackIsIdentity) {
  const auto sync = imu::build_sync_map(120, 15.5, 10);
  const Affine4 s = make_pose(exp_so3(Vec3(0.1, 0.2, 0.3)), Vec3(1, 2, 3));
  const auto m = rigid_motion_series(track_of(std::vector<Affine4>(sync.index.back() + 1, s)), sync);
  ASSERT_EQ(m.size(), 10u);
  for (const auto& x : m.m) EXPECT_LT((x - Affine4::Identity()).norm(), 1e-14);
}

TEST(RigidSeries, PureTranslationAccumulates) {
  const auto sync = imu::build_sync_map(120, 15.5, 10);
  const Vec3 d(0.001, -0.002, 0.0005);
  const Mat3 r = exp_so3(Vec3(0.3, -0.2, 0.1));
  std::vector<Affine4> poses;
  // Sensor moves by d per projection interval in world coordinates.
  for (std::size_t t = 0; t <= sync.index.back(); ++t) {
    double frac = 0.0;
    for (std::size_t i = 0; i + 1 < sync.index.size(); ++i)
      if (t >= sync.index[i])
        frac = i + static_cast<double>(t - sync.index[i]) / static_cast<double>(sync.index[i + 1] - sync.index[i]);
    poses.push_back(make_pose(r, Vec3(0.1, 0.2, 0.3) + frac * d));
  }
  const auto m = rigid_motion_series(track_of(poses), sync);
  EXPECT_EQ(m.m[0], Affine4::Identity());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_LT((translation_of(m.m[i]) - static_cast<double>(i) * d).norm(), 1e-14);
    EXPECT_LT((rotation_of(m.m[i]) - Mat3::Identity()).norm(), 1e-14);
  }
}

TEST(CorrectMatrices, IdentityIsBitExact) {
  const auto g = geometry::build_circular_trajectory(geometry::desk_profile());
  MotionSeries m;
  m.m.assign(g.n_proj, Affine4::Identity());
  const auto h = correct_projection_matrices(g, m);
  for (std::size_t i = 0; i < g.n_proj; ++i) EXPECT_EQ(h.matrices[i], g.matrices[i]);
}

TEST(CorrectMatrices, MovedPointProjectsLikeReference) {
  const auto g = geometry::build_circular_trajectory(geometry::desk_profile());
  std::mt19937_64 rng(4);
  MotionSeries m;
  for (std::size_t i = 0; i < g.n_proj; ++i) m.m.push_back(random_rigid(rng, 0.05, 0.01));
  const auto h = correct_projection_matrices(g, m);
  std::uniform_real_distribution<double> u(-0.08, 0.08);
  for (std::size_t i = 0; i < g.n_proj; i += 7) {
    const Vec3 x0(u(rng), u(rng), u(rng));
    const Vec2 a = geometry::project_point(g.matrices[i], transform_point(m.m[i], x0));
    const Vec2 b = geometry::project_point(h.matrices[i], x0);
    EXPECT_LT((a - b).norm(), 1e-9);
  }
}

TEST(Joints, KneeAboveShankSensor) {
  const auto off = joint_offsets(imu::default_shank_mount(), 0.40);
  const Joints j = joints_from_imu_poses(Affine4::Identity(), Affine4::Identity(), off,
                                         joint_offsets(imu::default_thigh_mount(), 0.42));
  EXPECT_LT((j.knee - Vec3(0, 0.14, 0)).norm(), 1e-15);
  EXPECT_LT((j.ankle - Vec3(0, -0.26, 0)).norm(), 1e-15);
  EXPECT_LT((j.hip - Vec3(0, 0.25, 0)).norm(), 1e-15);
}

TEST(Joints, KneeConsistentBetweenSensors) {
  phantom::SwayParams p;
  p.flexion_drift_deg = 3.0;
  const auto tracks = phantom::synthesize_sway_tracks(p);
  const auto kin = phantom::forward_kinematics(tracks);
  const auto sm = imu::default_shank_mount(), tm = imu::default_thigh_mount();
  const auto so = joint_offsets(sm, kin.shank.length), to = joint_offsets(tm, kin.thigh.length);
  for (std::size_t t = 0; t < tracks.size(); t += 37) {
    const Affine4 tib = imu::sensor_pose(kin.shank, sm, t), fem = imu::sensor_pose(kin.thigh, tm, t);
    const Joints j = joints_from_imu_poses(tib, fem, so, to);
    EXPECT_LT((transform_point(fem, to.distal) - j.knee).norm(), 1e-6);
    EXPECT_LT((j.knee - tracks.knee[t]).norm(), 1e-9);
    EXPECT_LT((j.hip - tracks.hip[t]).norm(), 1e-9);
    EXPECT_LT((j.ankle - tracks.ankle[t]).norm(), 1e-9);
  }
}

TEST(Joints, TranslationEquivariance) {
  std::mt19937_64 rng(8);
  const Affine4 a = random_rigid(rng, 0.5, 0.1), b = random_rigid(rng, 0.5, 0.1);
  const auto so = joint_offsets(imu::default_shank_mount(), 0.4), to = joint_offsets(imu::default_thigh_mount(), 0.42);
  const Vec3 d(0.01, -0.02, 0.03);
  Affine4 a2 = a, b2 = b;
  a2.topRightCorner<3, 1>() += d;
  b2.topRightCorner<3, 1>() += d;
  const Joints j = joints_from_imu_poses(a, b, so, to), k = joints_from_imu_poses(a2, b2, so, to);
  EXPECT_LT((k.ankle - j.ankle - d).norm(), 1e-15);
  EXPECT_LT((k.knee - j.knee - d).norm(), 1e-15);
  EXPECT_LT((k.hip - j.hip - d).norm(), 1e-15);
}

TEST(ControlPoints, ShrinkTowardsKnee) {
  const Joints s = shrink_towards_knee({Vec3(0, -1, 0), Vec3::Zero(), Vec3(0, 1, 0)}, 0.8);
  EXPECT_LT((s.hip - Vec3(0, 0.2, 0)).norm(), 1e-15);
  EXPECT_LT((s.ankle - Vec3(0, -0.2, 0)).norm(), 1e-15);
  EXPECT_EQ(s.knee, Vec3::Zero());
}

TEST(ControlPoints, NoMotionGivesEqualSets) {
  const auto g = geometry::build_circular_trajectory(geometry::desk_profile());
  const Joints j{Vec3(0.01, -0.3, 0.02), Vec3(0, 0, 0.01), Vec3(-0.02, 0.35, 0)};
  const auto c = control_points_2d(j, j, g.matrices[12], g);
  EXPECT_EQ(c.p, c.q);
  const auto d = control_points_3d(j, j);
  EXPECT_EQ(d.p, d.q);
}

TEST(ControlPoints, ProjectionMatchesPinhole) {
  const auto g = geometry::build_circular_trajectory(geometry::desk_profile());
  const Joints ref{Vec3(0.01, -0.3, 0.02), Vec3(0, 0, 0.01), Vec3(-0.02, 0.35, 0)};
  Joints cur = ref;
  cur.knee += Vec3(0.003, 0, 0);
  const auto c = control_points_2d(cur, ref, g.matrices[0], g);
  // View 0: source on -x, u along +z, v along -y.
  const auto pin = [&](const Vec3& x) {
    const double depth = x.x() + g.sid;
    const double f = g.sdd / g.pixel;
    return Vec2(g.center_u() + f * x.z() / depth, g.center_v() - f * x.y() / depth);
  };
  const Vec3 a1 = 0.2 * ref.ankle + 0.8 * ref.knee;
  EXPECT_LT((c.p[0] - pin(a1)).norm(), 1e-6);
  EXPECT_LT((c.p[1] - pin(ref.knee)).norm(), 1e-6);
  EXPECT_LT((c.q[1] - pin(cur.knee)).norm(), 1e-6);
  EXPECT_TRUE(c.off_detector == false);
}

TEST(Mls2D, IdentityWhenUnmoved) {
  ControlPoints2D c{{Vec2(10, 10), Vec2(40, 20), Vec2(25, 50)}, {Vec2(10, 10), Vec2(40, 20), Vec2(25, 50)}};
  const Image2D img = test_image(60, 50);
  const Image2D out = mls_warp_2d(img, c);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) max_diff = std::max(max_diff, std::abs(out.data[i] - img.data[i]));
  EXPECT_LT(max_diff, 1e-9);
}

TEST(Mls2D, IntegerShiftTranslatesImage) {
  ControlPoints2D c{{Vec2(10, 10), Vec2(40, 20), Vec2(25, 50)}, {}};
  for (const auto& p : c.p) c.q.push_back(p + Vec2(3, -2));
  const Image2D img = test_image(60, 50);
  const Image2D out = mls_warp_2d(img, c);
  for (std::size_t r = 5; r < 55; ++r)
    for (std::size_t col = 5; col < 45; ++col) EXPECT_NEAR(out.at(r, col), img.at(r - 2, col + 3), 1e-9);
}

TEST(Mls2D, CommonRotationMatchesOracle) {
  std::vector<Vec2> p{Vec2(100, 80), Vec2(160, 120), Vec2(120, 200)};
  const Vec2 c = (p[0] + p[1] + p[2]) / 3.0;
  const Eigen::Rotation2Dd rot(0.3);
  ControlPoints2D cps{p, {}};
  for (const auto& x : p) cps.q.push_back(rot * (x - c) + c);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 300.0);
  for (int k = 0; k < 1000; ++k) {
    const Vec2 v(u(rng), u(rng));
    const Vec2 f = mls_transform_2d(v, cps);
    EXPECT_LT((f - mls2d_oracle(v, cps.p, cps.q, 1e-8)).norm(), 1e-6);
    EXPECT_LT((f - (rot * (v - c) + c)).norm(), 1e-6);
  }
}

TEST(Mls2D, GeneralPointsMatchOracle) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 300.0), s(-5.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    ControlPoints2D cps;
    for (int j = 0; j < 3; ++j) {
      cps.p.emplace_back(u(rng), u(rng));
      cps.q.push_back(cps.p.back() + Vec2(s(rng), s(rng)));
    }
    for (int k = 0; k < 100; ++k) {
      const Vec2 v(u(rng), u(rng));
      EXPECT_LT((mls_transform_2d(v, cps) - mls2d_oracle(v, cps.p, cps.q, 1e-8)).norm(), 1e-6);
    }
  }
}

TEST(Mls3D, IdentityWhenUnmoved) {
  const ControlPoints3D c{{Vec3(0, -0.3, 0), Vec3::Zero(), Vec3(0.01, 0.3, 0)},
                          {Vec3(0, -0.3, 0), Vec3::Zero(), Vec3(0.01, 0.3, 0)}};
  for (const Vec3& v : {Vec3(0.05, 0.1, 0.02), Vec3(-0.1, -0.2, 0.03)})
    EXPECT_LT((mls_transform_3d(v, c) - v).norm(), 1e-15);
}

TEST(Mls3D, CommonRigidTransformIsExact) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    const Affine4 t = random_rigid(rng, 1.0, 0.05);
    ControlPoints3D c;
    for (int j = 0; j < 3; ++j) {
      c.p.emplace_back(u(rng), u(rng), u(rng));
      c.q.push_back(transform_point(t, c.p.back()));
    }
    const RigidMls3D field(c);
    for (int k = 0; k < 50; ++k) {
      const Vec3 v(u(rng), u(rng), u(rng));
      EXPECT_LT((field(v) - transform_point(t, v)).norm(), 1e-9);
      EXPECT_LT((mls_transform_3d_svd(v, c) - transform_point(t, v)).norm(), 1e-9);
    }
  }
}

TEST(Mls3D, PerturbedPointMatchesOracle) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.2, 0.2), e(-0.01, 0.01), a(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    ControlPoints3D c;
    for (int j = 0; j < 3; ++j) c.p.emplace_back(u(rng), u(rng), u(rng));
    c.q = c.p;
    c.q[trial % 3] += Vec3(e(rng), e(rng), e(rng));
    // Query inside the control triangle.
    double l1 = a(rng), l2 = a(rng);
    if (l1 + l2 > 1.0) {
      l1 = 1.0 - l1;
      l2 = 1.0 - l2;
    }
    const Vec3 v = c.p[0] + l1 * (c.p[1] - c.p[0]) + l2 * (c.p[2] - c.p[0]) + Vec3(e(rng), e(rng), e(rng));
    EXPECT_LT((mls_transform_3d(v, c) - mls3d_oracle(v, c.p, c.q, 1e-8)).norm(), 1e-12) << trial;
  }
}

TEST(Mls3D, CollinearPointsRejected) {
  const ControlPoints3D c{{Vec3(0, -1, 0), Vec3::Zero(), Vec3(0, 1, 0)},
                          {Vec3(0, -1, 0), Vec3::Zero(), Vec3(0.1, 1, 0)}};
  EXPECT_THROW(mls_transform_3d(Vec3(0.1, 0.2, 0.3), c), DegenerateRotationError);
  EXPECT_THROW(mls_transform_3d_svd(Vec3(0.1, 0.2, 0.3), c), DegenerateRotationError);
}
