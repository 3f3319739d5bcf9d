#include "imumoco/moco.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "imumoco/errors.hpp"

namespace imumoco::moco {

MotionSeries rigid_motion_series(const pose::PoseTrack& track, const imu::SyncMap& sync) {
  if (sync.index.empty()) throw CoverageError("empty sync map");
  MotionSeries out;
  out.m.reserve(sync.index.size());
  const std::size_t t0 = sync.index.front();
  if (sync.index.back() >= track.size())
    throw CoverageError("pose track has " + std::to_string(track.size()) + " samples, sync map needs " +
                        std::to_string(sync.index.back() + 1));
  const Affine4 inv0 = invert_rigid(track.poses[t0]);
  for (const std::size_t t : sync.index)
    out.m.push_back(t == t0 ? Affine4::Identity() : Affine4(track.poses[t] * inv0));
  return out;
}

geometry::ScanGeometry correct_projection_matrices(const geometry::ScanGeometry& geom, const MotionSeries& motion) {
  if (motion.size() != geom.matrices.size())
    throw ConfigError("motion series has " + std::to_string(motion.size()) + " entries for " +
                      std::to_string(geom.matrices.size()) + " views");
  geometry::ScanGeometry out = geom;
  for (std::size_t i = 0; i < motion.size(); ++i) {
    if (motion.m[i] == Affine4::Identity()) continue;
    out.matrices[i] = geom.matrices[i] * motion.m[i];
  }
  return out;
}

void save_motion_csv(const MotionSeries& motion, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "view,tx_mm,ty_mm,tz_mm,rx_deg,ry_deg,rz_deg\n";
  for (std::size_t i = 0; i < motion.size(); ++i) {
    const Vec3 t = translation_of(motion.m[i]) * 1e3;
    const Vec3 e = euler_xyz(rotation_of(motion.m[i]));
    out << i << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << rad_to_deg(e.x()) << ',' << rad_to_deg(e.y())
        << ',' << rad_to_deg(e.z()) << '\n';
  }
  write_file_atomic(path, out.str());
}

JointOffsets joint_offsets(const imu::SensorMount& mount, double segment_length) {
  const Mat3 rt = mount.orientation.transpose();
  return {rt * (Vec3::Zero() - mount.position), rt * (Vec3(0.0, -segment_length, 0.0) - mount.position)};
}

Joints joints_from_imu_poses(const Affine4& tibia, const Affine4& femur, const JointOffsets& shank,
                             const JointOffsets& thigh) {
  return {transform_point(tibia, shank.distal), transform_point(tibia, shank.proximal),
          transform_point(femur, thigh.proximal)};
}

Joints shrink_towards_knee(const Joints& j, double alpha) {
  return {(1.0 - alpha) * j.ankle + alpha * j.knee, j.knee, (1.0 - alpha) * j.hip + alpha * j.knee};
}

ControlPoints2D control_points_2d(const Joints& current, const Joints& reference, const ProjectionMatrix& p_i,
                                  const geometry::ScanGeometry& geom, const MocoConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const Joints ref = shrink_towards_knee(reference, cfg.alpha);
  const Joints cur = shrink_towards_knee(current, cfg.alpha);
  ControlPoints2D cps;
  for (const Vec3* x : {&ref.ankle, &ref.knee, &ref.hip}) cps.p.push_back(geometry::project_point(p_i, *x));
  for (const Vec3* x : {&cur.ankle, &cur.knee, &cur.hip}) cps.q.push_back(geometry::project_point(p_i, *x));
  const double cols = static_cast<double>(geom.det_cols), rows = static_cast<double>(geom.det_rows);
  for (const auto* set : {&cps.p, &cps.q})
    for (const Vec2& x : *set)
      if (x.x() < 0.0 || x.y() < 0.0 || x.x() > cols - 1.0 || x.y() > rows - 1.0) cps.off_detector = true;
  return cps;
}

ControlPoints3D control_points_3d(const Joints& current, const Joints& reference) {
  return {{reference.ankle, reference.knee, reference.hip}, {current.ankle, current.knee, current.hip}};
}

namespace {

Vec2 perp(const Vec2& x) { return {-x.y(), x.x()}; }

}  // namespace

Vec2 mls_transform_2d(const Vec2& v, const ControlPoints2D& cps, double epsilon) {
  const std::size_t m = cps.p.size();
  if (m == 0 || cps.q.size() != m) throw ShapeError("control point sets must be non-empty and equal in size");
  double wsum = 0.0;
  Vec2 ps = Vec2::Zero(), qs = Vec2::Zero();
  // Few control points: a small fixed buffer avoids allocation per pixel.
  double wbuf[8];
  std::vector<double> wheap;
  double* w = wbuf;
  if (m > 8) {
    wheap.resize(m);
    w = wheap.data();
  }
  for (std::size_t j = 0; j < m; ++j) {
    w[j] = 1.0 / ((cps.p[j] - v).squaredNorm() + epsilon);
    wsum += w[j];
    ps += w[j] * cps.p[j];
    qs += w[j] * cps.q[j];
  }
  ps /= wsum;
  qs /= wsum;
  const Vec2 d = v - ps;
  const double len = d.norm();
  const Vec2 dp = -perp(d);
  Vec2 acc = Vec2::Zero();
  for (std::size_t j = 0; j < m; ++j) {
    const Vec2 ph = cps.p[j] - ps;
    const Vec2 qh = cps.q[j] - qs;
    // Row vector q^ times w [p^; -p^_perp] [d; -d_perp]^T.
    const Vec2 mid(qh.dot(ph), -qh.dot(perp(ph)));
    acc += w[j] * (mid.x() * d + mid.y() * dp);
  }
  const double an = acc.norm();
  if (!(an > 0.0) || !(len > 0.0)) return qs;
  return len * acc / an + qs;
}

Image2D mls_warp_2d(const Image2D& image, const ControlPoints2D& cps, double epsilon) {
  Image2D out(image.rows, image.cols);
  const auto rows = static_cast<long>(image.rows);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const auto row = static_cast<std::size_t>(r);
    for (std::size_t c = 0; c < image.cols; ++c) {
      const Vec2 src = mls_transform_2d(Vec2(static_cast<double>(c), static_cast<double>(row)), cps, epsilon);
      out.at(row, c) = sample_bilinear_clamped(image, src.x(), src.y());
    }
  }
  return out;
}

namespace {

void check_not_collinear(const std::vector<Vec3>& pts, const char* which) {
  double scale = 0.0;
  for (const auto& x : pts) scale = std::max(scale, (x - pts[0]).norm());
  double best = 0.0;
  for (std::size_t a = 1; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b)
      best = std::max(best, (pts[a] - pts[0]).cross(pts[b] - pts[0]).norm());
  if (!(scale > 0.0) || best <= 1e-12 * scale * scale)
    throw DegenerateRotationError(std::string(which) + " control points are collinear");
}

Mat3 plane_frame(const std::array<Vec3, 3>& x) {
  const Vec3 e1 = (x[1] - x[0]).normalized();
  const Vec3 n = (x[1] - x[0]).cross(x[2] - x[0]).normalized();
  Mat3 f;
  f.col(0) = e1;
  f.col(1) = n.cross(e1);
  f.col(2) = n;
  return f;
}

}  // namespace

Vec3 mls_transform_3d_svd(const Vec3& v, const ControlPoints3D& cps, double epsilon) {
  const std::size_t m = cps.p.size();
  if (m < 3 || cps.q.size() != m) throw ShapeError("3D MLS needs at least 3 matched control points");
  check_not_collinear(cps.p, "reference");
  check_not_collinear(cps.q, "current");
  std::vector<double> w(m);
  double wsum = 0.0;
  Vec3 ps = Vec3::Zero(), qs = Vec3::Zero();
  for (std::size_t j = 0; j < m; ++j) {
    w[j] = 1.0 / ((cps.p[j] - v).squaredNorm() + epsilon);
    wsum += w[j];
    ps += w[j] * cps.p[j];
    qs += w[j] * cps.q[j];
  }
  ps /= wsum;
  qs /= wsum;
  Mat3 h = Mat3::Zero();
  for (std::size_t j = 0; j < m; ++j) h += w[j] * (cps.p[j] - ps) * (cps.q[j] - qs).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 v_mat = svd.matrixV();
  if ((v_mat * svd.matrixU().transpose()).determinant() < 0.0) v_mat.col(2) = -v_mat.col(2);
  return v_mat * svd.matrixU().transpose() * (v - ps) + qs;
}

RigidMls3D::RigidMls3D(const ControlPoints3D& cps, double epsilon) : epsilon_(epsilon) {
  if (cps.p.size() != 3 || cps.q.size() != 3) throw ShapeError("closed-form 3D MLS needs exactly 3 control points");
  check_not_collinear(cps.p, "reference");
  check_not_collinear(cps.q, "current");
  for (std::size_t j = 0; j < 3; ++j) {
    p_[j] = cps.p[j];
    q_[j] = cps.q[j];
  }
  frame_p_ = plane_frame(p_);
  frame_q_ = plane_frame(q_);
  for (std::size_t j = 0; j < 3; ++j) {
    x_[j] = (frame_p_.transpose() * (p_[j] - p_[0])).head<2>();
    y_[j] = (frame_q_.transpose() * (q_[j] - q_[0])).head<2>();
  }
}

Vec3 RigidMls3D::operator()(const Vec3& v) const {
  double w[3];
  double wsum = 0.0;
  Vec3 ps = Vec3::Zero(), qs = Vec3::Zero();
  Vec2 xs = Vec2::Zero(), ys = Vec2::Zero();
  for (std::size_t j = 0; j < 3; ++j) {
    w[j] = 1.0 / ((p_[j] - v).squaredNorm() + epsilon_);
    wsum += w[j];
    ps += w[j] * p_[j];
    qs += w[j] * q_[j];
    xs += w[j] * x_[j];
    ys += w[j] * y_[j];
  }
  ps /= wsum;
  qs /= wsum;
  xs /= wsum;
  ys /= wsum;
  // Proper fit: rotation in the plane. Mirrored fit: second in-plane axis and
  // normal of the q frame flipped.
  double c = 0.0, s = 0.0, cm = 0.0, sm = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const Vec2 a = x_[j] - xs;
    const Vec2 b = y_[j] - ys;
    c += w[j] * a.dot(b);
    s += w[j] * (a.x() * b.y() - a.y() * b.x());
    cm += w[j] * (a.x() * b.x() - a.y() * b.y());
    sm += w[j] * (-a.x() * b.y() - a.y() * b.x());
  }
  const bool mirrored = cm * cm + sm * sm > c * c + s * s;
  const double theta = mirrored ? std::atan2(sm, cm) : std::atan2(s, c);
  const Vec3 local = frame_p_.transpose() * (v - ps);
  const double ct = std::cos(theta), st = std::sin(theta);
  Vec3 rotated(ct * local.x() - st * local.y(), st * local.x() + ct * local.y(), local.z());
  if (mirrored) {
    rotated.y() = -rotated.y();
    rotated.z() = -rotated.z();
  }
  return frame_q_ * rotated + qs;
}

Vec3 mls_transform_3d(const Vec3& v, const ControlPoints3D& cps, double epsilon) {
  if (cps.p.size() == 3 && cps.q.size() == 3) return RigidMls3D(cps, epsilon)(v);
  return mls_transform_3d_svd(v, cps, epsilon);
}

}  // namespace imumoco::moco
