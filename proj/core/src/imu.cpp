#include "imumoco/imu.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "csv_util.hpp"
#include "imumoco/errors.hpp"
#include "imumoco/image.hpp"

namespace imumoco::imu {

SensorMount default_shank_mount() { return {phantom::Segment::Shank, Vec3(0.0, -0.14, 0.0), Mat3::Identity()}; }

SensorMount default_thigh_mount() { return {phantom::Segment::Thigh, Vec3(0.0, -0.25, 0.0), Mat3::Identity()}; }

Affine4 sensor_pose(const phantom::SegmentKinematics& kin, const SensorMount& mount, std::size_t t) {
  const Mat3& r = kin.rotation[t];
  return make_pose(r * mount.orientation, kin.origin[t] + r * mount.position);
}

std::vector<Affine4> sensor_poses(const phantom::SegmentKinematics& kin, const SensorMount& mount) {
  std::vector<Affine4> out;
  out.reserve(kin.size());
  for (std::size_t t = 0; t < kin.size(); ++t) out.push_back(sensor_pose(kin, mount, t));
  return out;
}

ImuSeries simulate_imu(const phantom::SegmentKinematics& kin, const SensorMount& mount, const Vec3& gravity) {
  const std::size_t n = kin.size();
  if (n < 2 || kin.rotation_ddot.size() != n || kin.origin_ddot.size() != n)
    throw KinematicsError("kinematics derivatives missing");
  const double dt = kin.dt();
  ImuSeries s;
  s.rate_hz = kin.sample_rate_hz;
  s.acc.resize(n);
  s.gyro.resize(n);
  auto sensor_rot = [&](std::size_t t) -> Mat3 { return kin.rotation[t] * mount.orientation; };
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t a = t + 1 < n ? t : t - 1;  // interval [a, a+1]
    const Mat3 r0 = sensor_rot(a);
    const Mat3 r1 = sensor_rot(a + 1);
    s.gyro[t] = vee(r0.transpose() * (r1 - r0)) / dt;
    const std::size_t k = std::min(t + 1, n - 1);
    const Vec3 world_acc = kin.origin_ddot[k] + kin.rotation_ddot[k] * mount.position;
    s.acc[t] = sensor_rot(t).transpose() * (world_acc - gravity);
  }
  return s;
}

Vec3 true_initial_velocity(const phantom::SegmentKinematics& kin, const SensorMount& mount) {
  const Vec3 p0 = kin.origin[0] + kin.rotation[0] * mount.position;
  const Vec3 p1 = kin.origin[1] + kin.rotation[1] * mount.position;
  return (kin.rotation[0] * mount.orientation).transpose() * (p1 - p0) / kin.dt();
}

double NoiseSpec::sigma_acc() const { return rms_acc_base / std::pow(10.0, f_a); }
double NoiseSpec::sigma_gyro() const { return deg_to_rad(rms_gyro_base_deg) / std::pow(10.0, f_g); }

ImuSeries add_noise(const ImuSeries& series, const NoiseSpec& spec) {
  if (spec.f_a < 0 || spec.f_g < 0) throw ConfigError("noise exponents must be non-negative");
  ImuSeries out = series;
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> acc(0.0, spec.sigma_acc());
  std::normal_distribution<double> gyro(0.0, spec.sigma_gyro());
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (int k = 0; k < 3; ++k) out.acc[t][k] += acc(gen);
    for (int k = 0; k < 3; ++k) out.gyro[t][k] += gyro(gen);
  }
  return out;
}

SyncMap build_sync_map(double imu_rate_hz, double proj_rate_hz, std::size_t n_proj, std::size_t series_length) {
  if (!(proj_rate_hz > 0.0) || !(imu_rate_hz >= proj_rate_hz)) throw SyncError("need imu_rate >= proj_rate > 0");
  if (n_proj == 0) throw SyncError("no projections");
  SyncMap m;
  m.imu_rate_hz = imu_rate_hz;
  m.proj_rate_hz = proj_rate_hz;
  m.index.reserve(n_proj);
  const double ratio = imu_rate_hz / proj_rate_hz;
  for (std::size_t i = 0; i < n_proj; ++i)
    m.index.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(i) * ratio)));
  if (series_length != 0 && m.index.back() >= series_length)
    throw CoverageError("IMU series has " + std::to_string(series_length) + " samples, projection " +
                        std::to_string(n_proj - 1) + " needs sample " + std::to_string(m.index.back()));
  return m;
}

void save_imu_csv(const ImuSeries& series, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "t,ax,ay,az,gx,gy,gz\n";
  for (std::size_t t = 0; t < series.size(); ++t) {
    out << static_cast<double>(t) / series.rate_hz;
    for (int k = 0; k < 3; ++k) out << ',' << series.acc[t][k];
    for (int k = 0; k < 3; ++k) out << ',' << series.gyro[t][k];
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

ImuSeries load_imu_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  static const std::vector<std::string> kHeader = {"t", "ax", "ay", "az", "gx", "gy", "gz"};
  ImuSeries s;
  std::vector<double> times;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto cells = detail::split_csv(trimmed);
    if (!have_header) {
      if (cells != kHeader) throw FormatError("unexpected header", line_no);
      have_header = true;
      continue;
    }
    if (cells.size() != kHeader.size()) throw FormatError("expected 7 columns", line_no);
    std::array<double, 7> v{};
    for (std::size_t c = 0; c < 7; ++c) v[c] = detail::parse_number(cells[c], line_no);
    times.push_back(v[0]);
    s.acc.emplace_back(v[1], v[2], v[3]);
    s.gyro.emplace_back(v[4], v[5], v[6]);
  }
  if (times.size() < 2) throw FormatError(path + ": need at least 2 samples");
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw FormatError(path + ": time column must increase");
  s.rate_hz = 1.0 / dt;
  if (std::abs(s.rate_hz - std::round(s.rate_hz)) < 1e-6) s.rate_hz = std::round(s.rate_hz);
  return s;
}

}  // namespace imumoco::imu
