#include "imumoco/geometry.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "imumoco/errors.hpp"

namespace imumoco::geometry {

ScanConfig paper_profile() {
  ScanConfig cfg;
  cfg.n_proj = 248;
  cfg.angular_increment_deg = 0.8;
  cfg.det_cols = 620;
  cfg.det_rows = 480;
  cfg.pixel_mm = 0.616;
  cfg.frame_rate_hz = 31.0;
  return cfg;
}

ScanConfig desk_profile() { return ScanConfig{}; }

ScanConfig profile_by_name(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw ConfigError("unknown geometry profile '" + name + "' (expected paper|desk)");
}

double ScanGeometry::fan_angle() const { return 2.0 * std::atan(0.5 * static_cast<double>(det_cols) * pixel / sdd); }

ScanGeometry build_circular_trajectory(const ScanConfig& cfg) {
  if (cfg.n_proj == 0 || cfg.det_cols == 0 || cfg.det_rows == 0) throw ConfigError("scan counts must be positive");
  if (!(cfg.angular_increment_deg > 0.0) || !(cfg.pixel_mm > 0.0) || !(cfg.frame_rate_hz > 0.0))
    throw ConfigError("angular increment, pixel pitch and frame rate must be positive");
  if (!(cfg.sid_mm > 0.0) || !(cfg.sdd_mm > cfg.sid_mm)) throw ConfigError("distances must satisfy sdd > sid > 0");

  ScanGeometry g;
  g.n_proj = cfg.n_proj;
  g.angular_increment = deg_to_rad(cfg.angular_increment_deg);
  g.sdd = cfg.sdd_mm * 1e-3;
  g.sid = cfg.sid_mm * 1e-3;
  g.det_cols = cfg.det_cols;
  g.det_rows = cfg.det_rows;
  g.pixel = cfg.pixel_mm * 1e-3;
  g.rotation_center = cfg.rotation_center_mm * 1e-3;
  g.frame_rate_hz = cfg.frame_rate_hz;

  Mat3 k = Mat3::Identity();
  k(0, 0) = k(1, 1) = g.focal_pixels();
  k(0, 2) = g.center_u();
  k(1, 2) = g.center_v();

  g.matrices.reserve(g.n_proj);
  for (std::size_t i = 0; i < g.n_proj; ++i) {
    const Mat3 gantry = rot_y(g.gantry_angle(i));
    const Vec3 d = gantry * Vec3::UnitX();
    const Vec3 u_axis = gantry * Vec3::UnitZ();
    const Vec3 v_axis = -Vec3::UnitY();
    const Vec3 source = g.rotation_center - g.sid * d;

    Mat3 rc;
    rc.row(0) = u_axis.transpose();
    rc.row(1) = v_axis.transpose();
    rc.row(2) = d.transpose();

    ProjectionMatrix p;
    p.leftCols<3>() = k * rc;
    p.col(3) = -(k * rc * source);
    g.matrices.push_back(p);
  }
  return g;
}

Vec2 project_point(const ProjectionMatrix& p, const Vec3& x) {
  const Vec3 h = p.leftCols<3>() * x + p.col(3);
  if (std::abs(h.z()) < 1e-12) throw DegenerateProjectionError("point lies in the principal plane of the projection");
  return {h.x() / h.z(), h.y() / h.z()};
}

Vec3 source_position(const ProjectionMatrix& p) { return -p.leftCols<3>().lu().solve(Vec3(p.col(3))); }

Ray matrix_ray(const ProjectionMatrix& p, double u, double v) {
  const Eigen::PartialPivLU<Mat3> lu(p.leftCols<3>());
  Vec3 dir = lu.solve(Vec3(u, v, 1.0));
  if (p.row(2).head<3>().dot(dir) < 0.0) dir = -dir;
  return {-lu.solve(Vec3(p.col(3))), dir.normalized()};
}

Ray pixel_ray(const ScanGeometry& geom, std::size_t view, double u, double v) {
  if (view >= geom.matrices.size()) throw std::out_of_range("view index " + std::to_string(view) + " out of range");
  return matrix_ray(geom.matrices[view], u, v);
}

Decomposition decompose(const ProjectionMatrix& p) {
  const Mat3 m = p.leftCols<3>();
  Mat3 flip = Mat3::Zero();
  flip(0, 2) = flip(1, 1) = flip(2, 0) = 1.0;

  // RQ via QR of the row-reversed transpose.
  Eigen::HouseholderQR<Mat3> qr((flip * m).transpose());
  const Mat3 q = qr.householderQ();
  const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
  Mat3 k = flip * r.transpose() * flip;
  Mat3 rot = flip * q.transpose();

  for (int i = 0; i < 3; ++i) {
    if (k(i, i) < 0.0) {
      k.col(i) = -k.col(i);
      rot.row(i) = -rot.row(i);
    }
  }
  if (rot.determinant() < 0.0) {
    rot = -rot;
    k = -k;
  }
  const double scale = k(2, 2);
  return {k / scale, rot, source_position(p)};
}

namespace {

constexpr double kMmPerM = 1000.0;

Eigen::Matrix4d mm_scaling(double factor) {
  Eigen::Matrix4d s = Eigen::Matrix4d::Identity();
  s(0, 0) = s(1, 1) = s(2, 2) = factor;
  return s;
}

}  // namespace

nlohmann::json to_json(const ScanGeometry& g) {
  nlohmann::json doc;
  doc["n_proj"] = g.n_proj;
  doc["angular_increment_deg"] = rad_to_deg(g.angular_increment);
  doc["sdd_mm"] = g.sdd * kMmPerM;
  doc["sid_mm"] = g.sid * kMmPerM;
  doc["det_cols"] = g.det_cols;
  doc["det_rows"] = g.det_rows;
  doc["pixel_mm"] = g.pixel * kMmPerM;
  doc["rotation_center_mm"] = {g.rotation_center.x() * kMmPerM, g.rotation_center.y() * kMmPerM,
                               g.rotation_center.z() * kMmPerM};
  doc["frame_rate_hz"] = g.frame_rate_hz;
  // Matrices map world millimetres to pixels.
  auto& mats = doc["matrices"] = nlohmann::json::array();
  const Eigen::Matrix4d to_m = mm_scaling(1.0 / kMmPerM);
  for (const auto& p : g.matrices) {
    const ProjectionMatrix pmm = p * to_m;
    std::vector<double> flat;
    flat.reserve(12);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) flat.push_back(pmm(r, c));
    mats.push_back(flat);
  }
  return doc;
}

ScanGeometry geometry_from_json(const nlohmann::json& doc) {
  try {
    ScanGeometry g;
    g.n_proj = doc.at("n_proj").get<std::size_t>();
    g.angular_increment = deg_to_rad(doc.at("angular_increment_deg").get<double>());
    g.sdd = doc.at("sdd_mm").get<double>() / kMmPerM;
    g.sid = doc.at("sid_mm").get<double>() / kMmPerM;
    g.det_cols = doc.at("det_cols").get<std::size_t>();
    g.det_rows = doc.at("det_rows").get<std::size_t>();
    g.pixel = doc.at("pixel_mm").get<double>() / kMmPerM;
    const auto c = doc.at("rotation_center_mm").get<std::vector<double>>();
    if (c.size() != 3) throw FormatError("rotation_center_mm must have 3 entries");
    g.rotation_center = Vec3(c[0], c[1], c[2]) / kMmPerM;
    g.frame_rate_hz = doc.at("frame_rate_hz").get<double>();
    const Eigen::Matrix4d to_mm = mm_scaling(kMmPerM);
    for (const auto& m : doc.at("matrices")) {
      const auto flat = m.get<std::vector<double>>();
      if (flat.size() != 12) throw FormatError("projection matrix must have 12 entries");
      ProjectionMatrix pmm;
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 4; ++col) pmm(r, col) = flat[static_cast<std::size_t>(r * 4 + col)];
      g.matrices.push_back(pmm * to_mm);
    }
    if (g.matrices.size() != g.n_proj) throw FormatError("matrix count does not match n_proj");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("geometry json: ") + e.what());
  }
}

void save_geometry(const ScanGeometry& geom, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << to_json(geom).dump(1) << '\n';
}

ScanGeometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return geometry_from_json(doc);
}

}  // namespace imumoco::geometry
