#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "imumoco/errors.hpp"
#include "imumoco/pose.hpp"

using namespace imumoco;
using namespace imumoco::pose;

namespace {

struct Rmse {
  double position = 0.0;  // m
  double angle = 0.0;     // rad
};

Rmse track_error(const PoseTrack& track, const std::vector<Affine4>& truth) {
  double sp = 0.0, sa = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    sp += (translation_of(track.poses[t]) - translation_of(truth[t])).squaredNorm();
    sa += std::pow(rotation_angle_between(rotation_of(track.poses[t]), rotation_of(truth[t])), 2);
  }
  const double n = static_cast<double>(truth.size());
  return {std::sqrt(sp / n), std::sqrt(sa / n)};
}

phantom::LegKinematics sway(double rate_hz = 120.0, double mod_deg = 0.5, double mod_hz = 0.2) {
  phantom::SwayParams p;
  p.rate_hz = rate_hz;
  p.flexion_mod_amp_deg = mod_deg;
  p.flexion_mod_freq_hz = mod_hz;
  return phantom::forward_kinematics(phantom::synthesize_sway_tracks(p));
}

imu::ImuSeries constant_series(std::size_t n, const Vec3& acc, const Vec3& gyro = Vec3::Zero()) {
  imu::ImuSeries s;
  s.acc.assign(n, acc);
  s.gyro.assign(n, gyro);
  return s;
}

}  // namespace

TEST(Integrate, StaticSeriesKeepsPose) {
  const Affine4 s0 = make_pose(Mat3::Identity(), Vec3(0.1, 0.2, 0.3));
  const auto track = integrate_poses(constant_series(500, Vec3(0, kStandardGravity, 0)), s0, Vec3::Zero());
  for (const auto& p : track.poses) EXPECT_LT((p - s0).norm(), 1e-12);
}

TEST(Integrate, ConstantAccelerationDiscreteSum) {
  const double alpha = 0.3;
  const std::size_t n = 50;
  const auto s = constant_series(n + 1, Vec3(alpha, kStandardGravity, 0));
  const auto track = integrate_poses(s, Affine4::Identity(), Vec3::Zero());
  const double dt = s.dt();
  EXPECT_NEAR(translation_of(track.poses[n]).x(), alpha * dt * dt * n * (n - 1) / 2.0, 1e-15);
  EXPECT_NEAR(translation_of(track.poses[n]).y(), 0.0, 1e-15);
}

TEST(Integrate, SwayRoundTrip) {
  const auto kin = sway();
  for (const auto& [seg, mount] :
       {std::pair{&kin.shank, imu::default_shank_mount()}, std::pair{&kin.thigh, imu::default_thigh_mount()}}) {
    const auto series = imu::simulate_imu(*seg, mount);
    const auto truth = imu::sensor_poses(*seg, mount);
    const auto track = integrate_poses(series, truth[0], imu::true_initial_velocity(*seg, mount));
    const auto e = track_error(track, truth);
    EXPECT_LT(e.position, 1e-4);
    EXPECT_LT(rad_to_deg(e.angle), 0.01);
  }
}

TEST(Integrate, HalvingTimeStepQuartersError) {
  double err[2];
  for (int k = 0; k < 2; ++k) {
    const auto kin = sway(120.0 * (k + 1), 15.0, 1.0);
    const auto mount = imu::default_shank_mount();
    const auto series = imu::simulate_imu(kin.shank, mount);
    const auto truth = imu::sensor_poses(kin.shank, mount);
    const auto track = integrate_poses(series, truth[0], imu::true_initial_velocity(kin.shank, mount));
    err[k] = track_error(track, truth).position;
  }
  EXPECT_GT(err[0] / err[1], 3.5) << err[0] << " vs " << err[1];
}

TEST(Integrate, RejectsNonFinite) {
  auto s = constant_series(10, Vec3(0, kStandardGravity, 0));
  s.gyro[4].x() = std::nan("");
  try {
    integrate_poses(s, Affine4::Identity(), Vec3::Zero());
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.sample(), 4u);
  }
}

TEST(Integrate, StaysOrthonormal) {
  const auto s = constant_series(5000, Vec3(0, kStandardGravity, 0), Vec3(1.3, -0.7, 2.1));
  const auto track = integrate_poses(s, Affine4::Identity(), Vec3::Zero(), Vec3::Zero());
  for (std::size_t t = 0; t < track.size(); t += 97)
    EXPECT_LT(orthonormality_error(rotation_of(track.poses[t])), 1e-12);
}

class Fiducials : public ::testing::Test {
 protected:
  geometry::ScanGeometry geom = geometry::build_circular_trajectory(geometry::paper_profile());
  FiducialModel model = FiducialModel::canonical(kDefaultFiducialArm);

  InitialPose solve(const Affine4& pose, std::size_t view = 0) {
    FiducialModel m = model;
    m.tracked = project_fiducials(model, pose, geom.matrices[view]);
    return estimate_initial_pose(m, geom.matrices[view], geom);
  }
};

TEST_F(Fiducials, IdentityAtIsocenter) {
  const Affine4 pose = make_pose(Mat3::Identity(), geom.rotation_center);
  const auto r = solve(pose, 30);
  EXPECT_LT((r.pose - pose).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(r.on_detector);
}

TEST_F(Fiducials, TipOnPrincipalRayIsIllConditioned) {
  // In view 0 the origin and the x tip lie on one ray.
  EXPECT_THROW(solve(make_pose(Mat3::Identity(), geom.rotation_center), 0), ConditioningError);
}

TEST_F(Fiducials, RandomPosesRoundTrip) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> pos(-0.08, 0.08), ang(-kPi, kPi);
  for (int k = 0; k < 100; ++k) {
    const Vec3 axis = Vec3(pos(rng), pos(rng), pos(rng)).normalized();
    const Affine4 pose = make_pose(exp_so3(axis * ang(rng)), Vec3(pos(rng), pos(rng), pos(rng)));
    const auto r = solve(pose, static_cast<std::size_t>(k) % geom.n_proj);
    EXPECT_LT((translation_of(r.pose) - translation_of(pose)).norm(), 1e-6) << k;
    EXPECT_LT(rotation_angle_between(rotation_of(r.pose), rotation_of(pose)), 1e-6) << k;
  }
}

TEST_F(Fiducials, DepthAlongPrincipalRayIsResolved) {
  const Affine4 a = make_pose(exp_so3(Vec3(0.2, 0.4, -0.1)), geom.rotation_center);
  Affine4 b = a;
  b.topRightCorner<3, 1>() += Vec3(0.010, 0, 0);  // view 0 looks along +x
  const auto ra = solve(a), rb = solve(b);
  EXPECT_LT((translation_of(ra.pose) - translation_of(a)).norm(), 1e-4);
  EXPECT_LT((translation_of(rb.pose) - translation_of(b)).norm(), 1e-4);
  EXPECT_NEAR(translation_of(rb.pose).x() - translation_of(ra.pose).x(), 0.010, 1e-4);
}

TEST_F(Fiducials, OffDetectorIsFlagged) {
  const auto r = solve(make_pose(Mat3::Identity(), Vec3(0, 0.3, 0)));
  EXPECT_FALSE(r.on_detector);
  EXPECT_LT((translation_of(r.pose) - Vec3(0, 0.3, 0)).norm(), 1e-6);
}

TEST_F(Fiducials, CoplanarModelRejected) {
  FiducialModel m = model;
  m.points[3] = Vec3(0.01, 0.01, 0);
  m.tracked = project_fiducials(m, Affine4::Identity(), geom.matrices[0]);
  EXPECT_THROW(estimate_initial_pose(m, geom.matrices[0], geom), ConditioningError);
}

TEST(InitialVelocity, ZeroWhenObservedMatchesZeroVelocityTrack) {
  const auto s = constant_series(40, Vec3(0.2, kStandardGravity, 0.1), Vec3(0.1, 0.2, 0.3));
  const auto sync = imu::build_sync_map(120.0, 15.5, 4);
  const Affine4 s0 = make_pose(exp_so3(Vec3(0.1, 0, 0)), Vec3(0.01, 0.02, 0));
  const auto track = integrate_poses(s, s0, Vec3::Zero());
  EXPECT_LT(estimate_initial_velocity(s0, track.poses[sync.n()], s, sync).norm(), 1e-12);
}

TEST(InitialVelocity, ErrorEntersLinearly) {
  const auto s = constant_series(40, Vec3(0.2, kStandardGravity, 0.1));
  const std::size_t n = 8;
  const Vec3 v(0.01, -0.02, 0.005), e(0.003, 0.001, -0.002);
  const auto a = integrate_poses(s, Affine4::Identity(), v);
  const auto b = integrate_poses(s, Affine4::Identity(), v + e);
  const Vec3 diff = translation_of(b.poses[n]) - translation_of(a.poses[n]);
  EXPECT_LT((diff - static_cast<double>(n) * e * s.dt()).norm(), 1e-12);
}

TEST(InitialVelocity, RecoversTrueVelocity) {
  const auto kin = sway();
  const auto sync = imu::build_sync_map(120.0, 15.5, 124);
  for (const auto& [seg, mount] :
       {std::pair{&kin.shank, imu::default_shank_mount()}, std::pair{&kin.thigh, imu::default_thigh_mount()}}) {
    const auto series = imu::simulate_imu(*seg, mount);
    const Affine4 s0 = imu::sensor_pose(*seg, mount, sync.index[0]);
    const Affine4 sn = imu::sensor_pose(*seg, mount, sync.index[1]);
    const Vec3 v = estimate_initial_velocity(s0, sn, series, sync);
    EXPECT_LT((v - imu::true_initial_velocity(*seg, mount)).norm(), 1e-9);
  }
}
