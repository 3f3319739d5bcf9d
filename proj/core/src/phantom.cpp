#include "imumoco/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "csv_util.hpp"
#include "imumoco/errors.hpp"

namespace imumoco::phantom {

void validate_tracks(const JointTracks& tracks, double tolerance) {
  const std::size_t n = tracks.knee.size();
  if (tracks.hip.size() != n || tracks.ankle.size() != n) throw KinematicsError("joint tracks have unequal lengths");
  if (n < 2) throw KinematicsError("joint tracks need at least 2 frames");
  if (!(tracks.sample_rate_hz > 0.0)) throw KinematicsError("sample rate must be positive");
  const double thigh0 = (tracks.hip[0] - tracks.knee[0]).norm();
  const double shank0 = (tracks.knee[0] - tracks.ankle[0]).norm();
  for (std::size_t t = 0; t < n; ++t) {
    const double thigh = (tracks.hip[t] - tracks.knee[t]).norm();
    const double shank = (tracks.knee[t] - tracks.ankle[t]).norm();
    if (!std::isfinite(thigh) || !std::isfinite(shank))
      throw KinematicsError("non-finite joint position at frame " + std::to_string(t));
    if (std::abs(thigh - thigh0) > tolerance || std::abs(shank - shank0) > tolerance)
      throw KinematicsError("segment length changes at frame " + std::to_string(t) + " (thigh " +
                            std::to_string(thigh) + " m vs " + std::to_string(thigh0) + " m, shank " +
                            std::to_string(shank) + " m vs " + std::to_string(shank0) + " m)");
  }
}

namespace {

double uniform_phase(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 * kPi; }

}  // namespace

JointTracks synthesize_sway_tracks(const SwayParams& p) {
  if (!(p.duration_s > 0.0) || !(p.rate_hz > 0.0)) throw ConfigError("duration and rate must be positive");
  if ((p.sway_amplitude.array() < 0.0).any() || p.flexion_mod_amp_deg < 0.0)
    throw ConfigError("sway amplitudes must be non-negative");
  if (!(p.thigh_length > 0.0) || !(p.shank_length > 0.0)) throw ConfigError("segment lengths must be positive");
  const auto n = static_cast<std::size_t>(std::llround(p.duration_s * p.rate_hz));
  if (n < 2) throw ConfigError("sway duration yields fewer than 2 frames");

  std::mt19937_64 gen(p.seed);
  std::array<double, 3> phase_main{}, phase_harm{};
  for (int a = 0; a < 3; ++a) {
    phase_main[a] = uniform_phase(gen);
    phase_harm[a] = uniform_phase(gen);
  }
  const double phase_flex = uniform_phase(gen);

  const double squat = deg_to_rad(p.squat_angle_deg);
  const double half0 = 0.5 * squat;
  const Vec3 ankle_base = p.knee_position - p.shank_length * Vec3(std::sin(half0), std::cos(half0), 0.0);

  JointTracks tracks;
  tracks.sample_rate_hz = p.rate_hz;
  tracks.hip.reserve(n);
  tracks.knee.reserve(n);
  tracks.ankle.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / p.rate_hz;
    const double flexion =
        squat + deg_to_rad(p.flexion_mod_amp_deg) * std::sin(2.0 * kPi * p.flexion_mod_freq_hz * t + phase_flex) +
        deg_to_rad(p.flexion_drift_deg) * t / p.duration_s;
    Vec3 sway;
    for (int a = 0; a < 3; ++a) {
      const double f = p.sway_frequency[a];
      sway[a] = p.sway_amplitude[a] *
                (std::sin(2.0 * kPi * f * t + phase_main[a]) + 0.5 * std::sin(2.0 * kPi * 1.7 * f * t + phase_harm[a]));
    }
    // Shank leans forward and thigh backward by half the flexion each.
    const double half = 0.5 * flexion;
    const Vec3 ankle = ankle_base + sway;
    const Vec3 knee = ankle + p.shank_length * Vec3(std::sin(half), std::cos(half), 0.0);
    const Vec3 hip = knee + p.thigh_length * Vec3(-std::sin(half), std::cos(half), 0.0);
    tracks.ankle.push_back(ankle);
    tracks.knee.push_back(knee);
    tracks.hip.push_back(hip);
  }
  return tracks;
}

void save_tracks_csv(const JointTracks& tracks, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "# units: m\n";
  out << "t,hip_x,hip_y,hip_z,knee_x,knee_y,knee_z,ankle_x,ankle_y,ankle_z\n";
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    out << static_cast<double>(t) / tracks.sample_rate_hz;
    for (const Vec3* v : {&tracks.hip[t], &tracks.knee[t], &tracks.ankle[t]})
      out << ',' << v->x() << ',' << v->y() << ',' << v->z();
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

JointTracks load_tracks_csv(const std::string& path, double rigid_tolerance) {
  using detail::parse_number;
  using detail::split_csv;
  using detail::trim;
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  static const std::vector<std::string> kHeader = {"t",      "hip_x",  "hip_y",   "hip_z",   "knee_x",
                                                   "knee_y", "knee_z", "ankle_x", "ankle_y", "ankle_z"};
  double scale = 1.0;
  bool have_header = false;
  std::vector<double> times;
  JointTracks tracks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const auto pos = s.find("units:");
      if (pos != std::string::npos) {
        const std::string unit = trim(s.substr(pos + 6));
        if (unit == "mm")
          scale = 1e-3;
        else if (unit == "m")
          scale = 1.0;
        else
          throw FormatError("unknown unit '" + unit + "'", line_no);
      }
      continue;
    }
    const auto cells = split_csv(s);
    if (!have_header) {
      if (cells != kHeader) throw FormatError("unexpected header", line_no);
      have_header = true;
      continue;
    }
    if (cells.size() != kHeader.size())
      throw FormatError("expected 10 columns, found " + std::to_string(cells.size()), line_no);
    std::array<double, 10> v{};
    for (std::size_t c = 0; c < cells.size(); ++c) v[c] = parse_number(cells[c], line_no);
    times.push_back(v[0]);
    tracks.hip.emplace_back(Vec3(v[1], v[2], v[3]) * scale);
    tracks.knee.emplace_back(Vec3(v[4], v[5], v[6]) * scale);
    tracks.ankle.emplace_back(Vec3(v[7], v[8], v[9]) * scale);
  }
  if (!have_header) throw FormatError(path + ": missing header");
  if (times.size() < 2) throw FormatError(path + ": need at least 2 frames");
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw FormatError("time column must increase", 0);
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-6 * dt + 1e-12)
      throw FormatError(path + ": non-uniform sampling at frame " + std::to_string(i));
  }
  tracks.sample_rate_hz = 1.0 / dt;
  if (std::abs(tracks.sample_rate_hz - std::round(tracks.sample_rate_hz)) < 1e-6)
    tracks.sample_rate_hz = std::round(tracks.sample_rate_hz);
  try {
    validate_tracks(tracks, rigid_tolerance);
  } catch (const KinematicsError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return tracks;
}

Mat3 segment_frame(const Vec3& proximal, const Vec3& distal) {
  const Vec3 axis = proximal - distal;
  const double len = axis.norm();
  if (!(len > 1e-9)) throw KinematicsError("zero-length segment");
  const Vec3 y = axis / len;
  Vec3 x = Vec3::UnitX() - Vec3::UnitX().dot(y) * y;
  const double xn = x.norm();
  if (!(xn > 1e-6)) throw KinematicsError("segment axis parallel to world x; roll undefined");
  x /= xn;
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = x.cross(y);
  return r;
}

template <typename T>
std::vector<T> first_derivative(const std::vector<T>& f, double dt) {
  const std::size_t n = f.size();
  std::vector<T> d(n);
  if (n < 2) {
    for (auto& v : d) v = f[0] * 0.0;
    return d;
  }
  if (n == 2) {
    d[0] = d[1] = (f[1] - f[0]) / dt;
    return d;
  }
  for (std::size_t t = 1; t + 1 < n; ++t) d[t] = (f[t + 1] - f[t - 1]) / (2.0 * dt);
  d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
  d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt);
  return d;
}

template <typename T>
std::vector<T> second_derivative(const std::vector<T>& f, double dt) {
  const std::size_t n = f.size();
  std::vector<T> d(n);
  const double h2 = dt * dt;
  if (n < 3) {
    for (auto& v : d) v = f[0] * 0.0;
    return d;
  }
  for (std::size_t t = 1; t + 1 < n; ++t) d[t] = (f[t + 1] - 2.0 * f[t] + f[t - 1]) / h2;
  if (n == 3) {
    d[0] = d[2] = d[1];
    return d;
  }
  d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
  d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
  return d;
}

template std::vector<Vec3> first_derivative(const std::vector<Vec3>&, double);
template std::vector<Mat3> first_derivative(const std::vector<Mat3>&, double);
template std::vector<Vec3> second_derivative(const std::vector<Vec3>&, double);
template std::vector<Mat3> second_derivative(const std::vector<Mat3>&, double);

namespace {

SegmentKinematics segment_kinematics(const std::vector<Vec3>& proximal, const std::vector<Vec3>& distal, double rate) {
  SegmentKinematics k;
  k.sample_rate_hz = rate;
  k.length = (proximal[0] - distal[0]).norm();
  const std::size_t n = proximal.size();
  k.rotation.reserve(n);
  for (std::size_t t = 0; t < n; ++t) k.rotation.push_back(segment_frame(proximal[t], distal[t]));
  k.origin = proximal;
  const double dt = 1.0 / rate;
  k.rotation_dot = first_derivative(k.rotation, dt);
  k.rotation_ddot = second_derivative(k.rotation, dt);
  k.origin_dot = first_derivative(k.origin, dt);
  k.origin_ddot = second_derivative(k.origin, dt);
  return k;
}

}  // namespace

LegKinematics forward_kinematics(const JointTracks& tracks) {
  const std::size_t n = tracks.knee.size();
  if (tracks.hip.size() != n || tracks.ankle.size() != n || n < 2) throw KinematicsError("invalid joint tracks");
  return {segment_kinematics(tracks.hip, tracks.knee, tracks.sample_rate_hz),
          segment_kinematics(tracks.knee, tracks.ankle, tracks.sample_rate_hz)};
}

// ---------------------------------------------------------------------------
// Phantom

namespace {

Primitive cylinder(std::string name, Segment seg, Tissue tissue, const Vec3& center, double rx, double rz, double y_low,
                   double y_high, double mu) {
  Primitive p;
  p.name = std::move(name);
  p.segment = seg;
  p.shape = Shape::Cylinder;
  p.tissue = tissue;
  p.placement = make_pose(Mat3::Identity(), Vec3(center.x(), 0.5 * (y_low + y_high), center.z()));
  p.half_extent = Vec3(rx, 0.5 * (y_high - y_low), rz);
  p.mu = mu;
  return p;
}

Primitive ellipsoid(std::string name, Segment seg, Tissue tissue, const Vec3& center, const Vec3& semi_axes,
                    double mu) {
  Primitive p;
  p.name = std::move(name);
  p.segment = seg;
  p.shape = Shape::Ellipsoid;
  p.tissue = tissue;
  p.placement = make_pose(Mat3::Identity(), center);
  p.half_extent = semi_axes;
  p.mu = mu;
  return p;
}

}  // namespace

Primitive make_sphere(const Vec3& center, double radius, double mu, Tissue tissue, Segment segment) {
  return ellipsoid("sphere", segment, tissue, center, Vec3::Constant(radius), mu);
}

LegPhantom default_leg_phantom(double lt, double ls) {
  using S = Segment;
  using T = Tissue;
  LegPhantom ph;
  auto& v = ph.primitives;
  // Thigh frame: origin at the hip, knee at (0, -lt, 0).
  v.push_back(cylinder("thigh_soft", S::Thigh, T::Soft, Vec3::Zero(), 0.060, 0.055, -lt, -lt + 0.32, kMuSoft));
  v.push_back(cylinder("femur_shaft", S::Thigh, T::Bone, Vec3::Zero(), 0.014, 0.014, -lt + 0.03, -lt + 0.30, kMuBone));
  v.push_back(
      ellipsoid("femur_condyles", S::Thigh, T::Bone, Vec3(0.0, -lt + 0.03, 0.0), Vec3(0.038, 0.028, 0.045), kMuBone));
  v.push_back(
      cylinder("femur_marrow", S::Thigh, T::Marrow, Vec3::Zero(), 0.008, 0.008, -lt + 0.07, -lt + 0.28, kMuMarrow));
  v.push_back(
      ellipsoid("patella", S::Thigh, T::Bone, Vec3(0.040, -lt + 0.025, 0.0), Vec3(0.010, 0.020, 0.018), kMuBone));
  // Shank frame: origin at the knee, ankle at (0, -ls, 0).
  v.push_back(cylinder("shank_soft", S::Shank, T::Soft, Vec3::Zero(), 0.050, 0.048, -ls + 0.06, 0.0, kMuSoft));
  v.push_back(ellipsoid("knee_soft", S::Shank, T::Soft, Vec3::Zero(), Vec3(0.058, 0.065, 0.056), kMuSoft));
  v.push_back(
      ellipsoid("tibia_plateau", S::Shank, T::Bone, Vec3(0.0, -0.025, 0.0), Vec3(0.034, 0.020, 0.040), kMuBone));
  v.push_back(cylinder("tibia_shaft", S::Shank, T::Bone, Vec3::Zero(), 0.015, 0.015, -ls + 0.10, -0.03, kMuBone));
  v.push_back(cylinder("tibia_marrow", S::Shank, T::Marrow, Vec3::Zero(), 0.007, 0.007, -ls + 0.14, -0.07, kMuMarrow));
  v.push_back(
      cylinder("fibula", S::Shank, T::Bone, Vec3(-0.012, 0.0, 0.026), 0.006, 0.006, -ls + 0.10, -0.04, kMuBone));
  return ph;
}

namespace {

/// Primitive resolved to world space for one set of segment poses.
struct PlacedPrimitive {
  Shape shape;
  int layer;
  double mu;
  Mat3 rt;        // world -> local rotation
  Vec3 center;    // world
  Vec3 inv_axes;  // 1 / half extents (ellipsoid), 1/rx, 1/h, 1/rz (cylinder)
  double half_length;
  double bound_radius;
};

std::vector<PlacedPrimitive> place(const LegPhantom& phantom, const SegmentPoses& poses) {
  std::vector<PlacedPrimitive> out;
  out.reserve(phantom.primitives.size());
  for (const auto& p : phantom.primitives) {
    const Affine4 world = (p.segment == Segment::Thigh ? poses.thigh : poses.shank) * p.placement;
    PlacedPrimitive q;
    q.shape = p.shape;
    q.layer = static_cast<int>(p.tissue);
    q.mu = p.mu;
    q.rt = rotation_of(world).transpose();
    q.center = translation_of(world);
    q.inv_axes = p.half_extent.cwiseInverse();
    q.half_length = p.half_extent.y();
    q.bound_radius = p.half_extent.norm();
    out.push_back(q);
  }
  return out;
}

struct Interval {
  double t0, t1;
  int layer;
  double mu;
};

/// Roots of a t^2 + 2 b t + c = 0; false when there is no chord.
bool quadratic_chord(double a, double b, double c, double& t0, double& t1) {
  if (a < 1e-300) {
    if (c > 0.0) return false;
    t0 = -std::numeric_limits<double>::infinity();
    t1 = std::numeric_limits<double>::infinity();
    return true;
  }
  const double disc = b * b - a * c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  t0 = (-b - s) / a;
  t1 = (-b + s) / a;
  return true;
}

bool intersect(const PlacedPrimitive& q, const Vec3& origin, const Vec3& dir, double& t0, double& t1) {
  const Vec3 rel = origin - q.center;
  // Bounding sphere rejection.
  const double along = rel.dot(dir);
  if (rel.squaredNorm() - along * along > q.bound_radius * q.bound_radius) return false;

  const Vec3 o = q.rt * rel;
  const Vec3 d = q.rt * dir;
  if (q.shape == Shape::Ellipsoid) {
    const Vec3 os = o.cwiseProduct(q.inv_axes);
    const Vec3 ds = d.cwiseProduct(q.inv_axes);
    return quadratic_chord(ds.squaredNorm(), os.dot(ds), os.squaredNorm() - 1.0, t0, t1);
  }
  const double ix = q.inv_axes.x(), iz = q.inv_axes.z();
  const double ox = o.x() * ix, oz = o.z() * iz, dx = d.x() * ix, dz = d.z() * iz;
  if (!quadratic_chord(dx * dx + dz * dz, ox * dx + oz * dz, ox * ox + oz * oz - 1.0, t0, t1)) return false;
  const double h = q.half_length;
  if (std::abs(d.y()) < 1e-300) {
    if (std::abs(o.y()) > h) return false;
  } else {
    double ta = (-h - o.y()) / d.y();
    double tb = (h - o.y()) / d.y();
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

double integrate_intervals(std::vector<Interval>& iv) {
  if (iv.empty()) return 0.0;
  if (iv.size() == 1) return (iv[0].t1 - iv[0].t0) * iv[0].mu;
  std::vector<double> cuts;
  cuts.reserve(iv.size() * 2);
  for (const auto& x : iv) {
    cuts.push_back(x.t0);
    cuts.push_back(x.t1);
  }
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c], b = cuts[c + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    int best_layer = -1;
    double best_mu = 0.0;
    for (const auto& x : iv) {
      if (x.t0 <= mid && mid <= x.t1 && (x.layer > best_layer || (x.layer == best_layer && x.mu > best_mu))) {
        best_layer = x.layer;
        best_mu = x.mu;
      }
    }
    if (best_layer >= 0) sum += (b - a) * best_mu;
  }
  return sum;
}

double integrate_ray(const std::vector<PlacedPrimitive>& placed, const Vec3& origin, const Vec3& dir,
                     std::vector<Interval>& scratch) {
  scratch.clear();
  for (const auto& q : placed) {
    double t0, t1;
    if (!intersect(q, origin, dir, t0, t1)) continue;
    t0 = std::max(t0, 0.0);
    if (t1 > t0) scratch.push_back({t0, t1, q.layer, q.mu});
  }
  return integrate_intervals(scratch);
}

bool contains(const PlacedPrimitive& q, const Vec3& x) {
  const Vec3 l = q.rt * (x - q.center);
  if (q.shape == Shape::Ellipsoid) return l.cwiseProduct(q.inv_axes).squaredNorm() <= 1.0;
  const double px = l.x() * q.inv_axes.x(), pz = l.z() * q.inv_axes.z();
  return px * px + pz * pz <= 1.0 && std::abs(l.y()) <= q.half_length;
}

double attenuation_placed(const std::vector<PlacedPrimitive>& placed, const Vec3& x) {
  int best_layer = -1;
  double best_mu = 0.0;
  for (const auto& q : placed) {
    if ((q.layer > best_layer || (q.layer == best_layer && q.mu > best_mu)) && contains(q, x)) {
      best_layer = q.layer;
      best_mu = q.mu;
    }
  }
  return best_mu;
}

}  // namespace

double line_integral(const LegPhantom& phantom, const SegmentPoses& poses, const geometry::Ray& ray) {
  const auto placed = place(phantom, poses);
  std::vector<Interval> scratch;
  return integrate_ray(placed, ray.origin, ray.direction.normalized(), scratch);
}

Image2D render_projection(const LegPhantom& phantom, const SegmentPoses& poses, const ProjectionMatrix& p,
                          const geometry::ScanGeometry& geom) {
  const auto placed = place(phantom, poses);
  Image2D img(geom.det_rows, geom.det_cols);
  const Eigen::PartialPivLU<Mat3> lu(p.leftCols<3>());
  const Mat3 minv = lu.inverse();
  const Vec3 source = -(minv * p.col(3));
  // Orientation so that rays point towards positive depth.
  const double sign = p.row(2).head<3>().dot(minv * Vec3(geom.center_u(), geom.center_v(), 1.0)) < 0.0 ? -1.0 : 1.0;
  const auto rows = static_cast<long>(geom.det_rows);

#pragma omp parallel for schedule(dynamic, 4)
  for (long r = 0; r < rows; ++r) {
    std::vector<Interval> scratch;
    scratch.reserve(32);
    const auto row = static_cast<std::size_t>(r);
    for (std::size_t c = 0; c < geom.det_cols; ++c) {
      const Vec3 dir = (sign * (minv * Vec3(static_cast<double>(c), static_cast<double>(row), 1.0))).normalized();
      img.at(row, c) = integrate_ray(placed, source, dir, scratch);
    }
  }
  return img;
}

ProjectionStack render_stack(const LegPhantom& phantom, const std::vector<SegmentPoses>& poses,
                             const geometry::ScanGeometry& geom) {
  if (poses.size() != geom.n_proj) throw ShapeError("one pose set per view required");
  ProjectionStack stack(geom.n_proj, geom.det_rows, geom.det_cols, geom.pixel * 1e3);
  for (std::size_t i = 0; i < geom.n_proj; ++i)
    stack.set_image(i, render_projection(phantom, poses[i], geom.matrices[i], geom));
  return stack;
}

double attenuation_at(const LegPhantom& phantom, const SegmentPoses& poses, const Vec3& x) {
  return attenuation_placed(place(phantom, poses), x);
}

Volume voxelize(const LegPhantom& phantom, const SegmentPoses& poses, const VolumeSpec& spec) {
  const auto placed = place(phantom, poses);
  Volume vol(spec);
  const auto nz = static_cast<long>(spec.nz);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < spec.ny; ++j)
      for (std::size_t i = 0; i < spec.nx; ++i)
        vol.at(i, j, static_cast<std::size_t>(k)) =
            attenuation_placed(placed, spec.voxel_center(i, j, static_cast<std::size_t>(k)));
  return vol;
}

}  // namespace imumoco::phantom
