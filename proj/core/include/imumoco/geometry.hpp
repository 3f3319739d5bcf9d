#pragma once

#include <cstddef>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "imumoco/types.hpp"

namespace imumoco::geometry {

/// Scan parameters as configured by the user: millimetres and degrees.
struct ScanConfig {
  std::size_t n_proj = 124;
  double angular_increment_deg = 1.6;
  double sdd_mm = 1198.0;
  double sid_mm = 780.0;
  std::size_t det_cols = 310;
  std::size_t det_rows = 240;
  double pixel_mm = 1.232;
  Vec3 rotation_center_mm = Vec3::Zero();
  double frame_rate_hz = 15.5;
};

/// Full-resolution C-arm protocol: 248 views x 0.8 deg at 31 Hz, 620x480 px @ 0.616 mm.
ScanConfig paper_profile();
/// Half resolution in every dimension, same distances and scan duration.
ScanConfig desk_profile();
ScanConfig profile_by_name(const std::string& name);

/// Circular short-scan trajectory around the vertical (y) axis.
///
/// Internal units are SI: metres and radians. The detector u axis (columns) is
/// tangential to the trajectory, v (rows) runs along -y. Every projection
/// matrix is normalised so that its third row is (d^T, -d.s) with d the unit
/// principal direction and s the source, i.e. the homogeneous w is the depth
/// of a point along the principal ray in metres.
struct ScanGeometry {
  std::size_t n_proj = 0;
  double angular_increment = 0.0;  // rad
  double sdd = 0.0;                // m
  double sid = 0.0;                // m
  std::size_t det_cols = 0;
  std::size_t det_rows = 0;
  double pixel = 0.0;  // m
  Vec3 rotation_center = Vec3::Zero();
  double frame_rate_hz = 0.0;
  std::vector<ProjectionMatrix> matrices;

  double gantry_angle(std::size_t view) const { return static_cast<double>(view) * angular_increment; }
  double total_arc() const { return static_cast<double>(n_proj) * angular_increment; }
  /// Full fan angle in the trajectory plane, measured to the detector edge.
  double fan_angle() const;
  double center_u() const { return 0.5 * (static_cast<double>(det_cols) - 1.0); }
  double center_v() const { return 0.5 * (static_cast<double>(det_rows) - 1.0); }
  double focal_pixels() const { return sdd / pixel; }
};

ScanGeometry build_circular_trajectory(const ScanConfig& cfg);

/// Dehomogenised pixel position (u = column, v = row) of x under p.
Vec2 project_point(const ProjectionMatrix& p, const Vec3& x);

/// Homogeneous depth of x under p (metres for normalised matrices).
inline double projection_depth(const ProjectionMatrix& p, const Vec3& x) { return p.row(2).head<3>().dot(x) + p(2, 3); }

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
};

/// Camera centre (null space of p).
Vec3 source_position(const ProjectionMatrix& p);

/// Ray from the camera centre of p through pixel (u, v); works for any
/// matrix including motion-corrected ones.
Ray matrix_ray(const ProjectionMatrix& p, double u, double v);

/// Ray from the source of view i through pixel (u, v).
Ray pixel_ray(const ScanGeometry& geom, std::size_t view, double u, double v);

struct Decomposition {
  Mat3 intrinsics;  // upper triangular, positive diagonal, K(2,2) = 1
  Mat3 rotation;    // rows: u axis, v axis, principal direction
  Vec3 source;
};

/// RQ decomposition of the left 3x3 block plus camera centre.
Decomposition decompose(const ProjectionMatrix& p);

nlohmann::json to_json(const ScanGeometry& geom);
ScanGeometry geometry_from_json(const nlohmann::json& doc);
void save_geometry(const ScanGeometry& geom, const std::string& path);
ScanGeometry load_geometry(const std::string& path);

}  // namespace imumoco::geometry
