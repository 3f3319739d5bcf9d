#include "imumoco/pose.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "imumoco/errors.hpp"
#include "imumoco/image.hpp"

namespace imumoco::pose {

PoseTrack integrate_poses(const imu::ImuSeries& series, const Affine4& s0, const Vec3& v0, const Vec3& gravity,
                          std::size_t samples) {
  const std::size_t n = samples == 0 ? series.size() : samples;
  if (n == 0 || n > series.size()) throw IntegrationError("requested sample count exceeds series", n);
  if (series.gyro.size() != series.acc.size()) throw IntegrationError("gyro/acc length mismatch", 0);
  const double dt = series.dt();

  PoseTrack track;
  track.v0 = v0;
  track.poses.reserve(n);
  track.deltas.reserve(n - 1);
  track.poses.push_back(s0);

  Affine4 s = s0;
  Vec3 v = v0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const Vec3& a = series.acc[t];
    const Vec3& w = series.gyro[t];
    if (!a.allFinite() || !w.allFinite()) throw IntegrationError("non-finite IMU sample", t);
    const Mat3 g_inc = exp_so3(w * dt);
    const Mat3 r = rotation_of(s);
    LocalDelta delta{g_inc, v * dt};
    v = g_inc.transpose() * (v + (a + r.transpose() * gravity) * dt);
    s = s * delta.matrix();
    if ((t + 1) % kReorthonormalizeEvery == 0) s.topLeftCorner<3, 3>() = orthonormalize(rotation_of(s));
    if (!s.allFinite()) throw IntegrationError("pose diverged", t);
    track.deltas.push_back(delta);
    track.poses.push_back(s);
  }
  return track;
}

FiducialModel FiducialModel::canonical(double arm) {
  if (!(arm > 0.0)) throw ConfigError("fiducial arm length must be positive");
  FiducialModel m;
  m.points = {Vec3::Zero(), Vec3(arm, 0.0, 0.0), Vec3(0.0, arm, 0.0), Vec3(0.0, 0.0, arm)};
  for (auto& t : m.tracked) t.setZero();
  return m;
}

std::array<Vec2, 4> project_fiducials(const FiducialModel& model, const Affine4& pose, const ProjectionMatrix& p) {
  std::array<Vec2, 4> out;
  for (std::size_t k = 0; k < 4; ++k) out[k] = geometry::project_point(p, transform_point(pose, model.points[k]));
  return out;
}

namespace {

double signed_volume(const std::array<Vec3, 4>& x) { return (x[1] - x[0]).dot((x[2] - x[0]).cross(x[3] - x[0])); }

constexpr std::array<std::array<int, 2>, 6> kPairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
using Residual = Eigen::Matrix<double, 7, 1>;
using Jacobian = Eigen::Matrix<double, 7, 4>;

struct Problem {
  Vec3 origin;
  std::array<Vec3, 4> dir;
  std::array<double, 6> dist;
  double volume;
  double volume_scale;  // 1 / scale^2 so that the volume residual is in metres

  std::array<Vec3, 4> points(const Vec4& depth) const {
    std::array<Vec3, 4> x;
    for (std::size_t k = 0; k < 4; ++k) x[k] = origin + depth[static_cast<int>(k)] * dir[k];
    return x;
  }

  Residual residual(const Vec4& depth, Jacobian* jac) const {
    const auto x = points(depth);
    Residual r;
    if (jac) jac->setZero();
    for (std::size_t e = 0; e < 6; ++e) {
      const auto [i, j] = kPairs[e];
      const Vec3 diff = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
      const double len = diff.norm();
      r[static_cast<int>(e)] = len - dist[e];
      if (jac && len > 0.0) {
        const Vec3 u = diff / len;
        (*jac)(static_cast<int>(e), i) = u.dot(dir[static_cast<std::size_t>(i)]);
        (*jac)(static_cast<int>(e), j) = -u.dot(dir[static_cast<std::size_t>(j)]);
      }
    }
    const Vec3 a = x[1] - x[0], b = x[2] - x[0], c = x[3] - x[0];
    r[6] = (a.dot(b.cross(c)) - volume) * volume_scale;
    if (jac) {
      const Vec3 g1 = b.cross(c), g2 = c.cross(a), g3 = a.cross(b);
      const Vec3 g0 = -(g1 + g2 + g3);
      const std::array<Vec3, 4> grad = {g0, g1, g2, g3};
      for (std::size_t k = 0; k < 4; ++k) (*jac)(6, static_cast<int>(k)) = grad[k].dot(dir[k]) * volume_scale;
    }
    return r;
  }
};

struct Solution {
  Vec4 depth;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

constexpr int kMaxIterations = 200;
constexpr double kTolerance = 1e-10;

/// Levenberg-Marquardt; keeps iterating past the tolerance while the residual still drops.
Solution solve_from(const Problem& prob, const Vec4& start) {
  Solution sol{start, 0.0, 0};
  Jacobian jac;
  Residual r = prob.residual(sol.depth, &jac);
  double cost = r.squaredNorm();
  double lambda = 1e-6;
  int stalls = 0;
  for (int it = 0; it < kMaxIterations; ++it) {
    sol.iterations = it + 1;
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Vec4 jtr = jac.transpose() * r;
    Eigen::Matrix4d a = jtj;
    a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
    const Vec4 step = a.ldlt().solve(-jtr);
    const Vec4 trial = sol.depth + step;
    Jacobian trial_jac;
    const Residual trial_r = prob.residual(trial, &trial_jac);
    const double trial_cost = trial_r.squaredNorm();
    if (trial_cost < cost) {
      sol.depth = trial;
      r = trial_r;
      jac = trial_jac;
      lambda = std::max(lambda * 0.1, 1e-12);
      const bool converged = std::sqrt(trial_cost) < kTolerance;
      const bool tiny = cost - trial_cost <= 1e-6 * cost;
      cost = trial_cost;
      if (converged && tiny && ++stalls >= 2) break;
    } else {
      lambda *= 10.0;
      if (std::sqrt(cost) < kTolerance && lambda > 1e3) break;
      if (lambda > 1e12) break;
    }
  }
  sol.residual = std::sqrt(cost);
  return sol;
}

/// Least-squares rigid transform mapping model points onto world points.
Affine4 fit_rigid(const std::array<Vec3, 4>& model, const std::array<Vec3, 4>& world) {
  Vec3 cm = Vec3::Zero(), cw = Vec3::Zero();
  for (std::size_t k = 0; k < 4; ++k) {
    cm += model[k] / 4.0;
    cw += world[k] / 4.0;
  }
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < 4; ++k) h += (model[k] - cm) * (world[k] - cw).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return make_pose(r, cw - r * cm);
}

}  // namespace

InitialPose estimate_initial_pose(const FiducialModel& model, const ProjectionMatrix& p,
                                  const geometry::ScanGeometry& geom) {
  Problem prob;
  double scale = 0.0;
  for (std::size_t e = 0; e < 6; ++e) {
    const auto [i, j] = kPairs[e];
    prob.dist[e] = (model.points[static_cast<std::size_t>(i)] - model.points[static_cast<std::size_t>(j)]).norm();
    scale = std::max(scale, prob.dist[e]);
  }
  prob.volume = signed_volume(model.points);
  if (!(scale > 0.0) || std::abs(prob.volume) < 1e-9 * scale * scale * scale)
    throw ConditioningError("fiducial model points are coplanar");
  prob.volume_scale = 1.0 / (scale * scale);

  InitialPose out;
  for (std::size_t k = 0; k < 4; ++k) {
    const Vec2& uv = model.tracked[k];
    if (!uv.allFinite()) throw InitializationError("non-finite tracked fiducial position");
    const auto ray = geometry::matrix_ray(p, uv.x(), uv.y());
    prob.origin = ray.origin;
    prob.dir[k] = ray.direction;
    const double cols = static_cast<double>(geom.det_cols), rows = static_cast<double>(geom.det_rows);
    if (uv.x() < -0.5 || uv.y() < -0.5 || uv.x() > cols - 0.5 || uv.y() > rows - 0.5) out.on_detector = false;
  }
  for (std::size_t e = 0; e < 6; ++e) {
    const auto [i, j] = kPairs[e];
    if ((prob.dir[static_cast<std::size_t>(i)] - prob.dir[static_cast<std::size_t>(j)]).norm() < 1e-12)
      throw ConditioningError("two fiducials project onto the same pixel");
  }

  // Multi-start over the depth ordering of the three outer points resolves the
  // near-mirror ambiguity of a small, distant point set.
  const double base = geom.sid > 0.0 ? geom.sid : 1.0;
  Solution best;
  for (int mask = -1; mask < 8; ++mask) {
    Vec4 start = Vec4::Constant(base);
    if (mask >= 0)
      for (int k = 0; k < 3; ++k) start[k + 1] += ((mask >> k) & 1 ? 0.5 : -0.5) * scale;
    const Solution s = solve_from(prob, start);
    if (s.residual < best.residual) best = s;
  }
  if (!(best.residual < kTolerance))
    throw InitializationError("fiducial solver did not converge (residual " + std::to_string(best.residual) + " m)");

  Jacobian jac;
  prob.residual(best.depth, &jac);
  Eigen::JacobiSVD<Jacobian> svd(jac);
  const auto sv = svd.singularValues();
  if (!(sv[3] > 1e-12 * sv[0])) throw ConditioningError("fiducial rays are nearly degenerate");

  out.world_points = prob.points(best.depth);
  out.pose = fit_rigid(model.points, out.world_points);
  out.residual = best.residual;
  out.iterations = best.iterations;
  return out;
}

Vec3 estimate_initial_velocity(const Affine4& s0, const Affine4& s_n_observed, const imu::ImuSeries& series,
                               const imu::SyncMap& sync, const Vec3& gravity) {
  const std::size_t n = sync.n();
  if (n < 1) throw SyncError("need at least one IMU sample between the first two projections");
  if (series.size() < n + 1) throw CoverageError("IMU series shorter than the initialization window");
  const PoseTrack zero = integrate_poses(series, s0, Vec3::Zero(), gravity, n + 1);
  const Affine4 inv0 = invert_rigid(s0);
  const Vec3 t_prime = translation_of(inv0 * zero.poses[n]);
  const Vec3 t_obs = translation_of(inv0 * s_n_observed);
  return -(t_prime - t_obs) / (static_cast<double>(n) * series.dt());
}

void save_pose_csv(const PoseTrack& track, double rate_hz, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "t,x,y,z,qw,qx,qy,qz\n";
  for (std::size_t t = 0; t < track.size(); ++t) {
    const PoseQuat pq = to_pose_quat(track.poses[t]);
    out << static_cast<double>(t) / rate_hz << ',' << pq.translation.x() << ',' << pq.translation.y() << ','
        << pq.translation.z() << ',' << pq.rotation.w() << ',' << pq.rotation.x() << ',' << pq.rotation.y() << ','
        << pq.rotation.z() << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace imumoco::pose
