#include "imumoco/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "csv_util.hpp"
#include "imumoco/errors.hpp"

namespace imumoco::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_vec3(const json& obj, const char* key, Vec3& out, const std::string& where) {
  if (!obj.contains(key)) return;
  std::vector<double> v;
  read(obj, key, v, where);
  if (v.size() != 3) throw ConfigError(where + "." + key + " needs 3 numbers");
  out = Vec3(v[0], v[1], v[2]);
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

void validate(const ExperimentConfig& cfg) {
  if (cfg.version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(cfg.version));
  geometry::profile_by_name(cfg.profile);
  if (cfg.methods.empty()) throw ConfigError("at least one method is required");
  for (const auto& m : cfg.methods) recon::method_from_string(m);
  if (cfg.motion.source != "synthetic" && cfg.motion.source != "csv")
    throw ConfigError("motion.source must be synthetic or csv");
  if (cfg.motion.source == "csv" && cfg.motion.csv_path.empty()) throw ConfigError("motion.csv_path is required");
  if (!(cfg.motion.duration_s > 0.0)) throw ConfigError("motion.duration_s must be positive");
  if ((cfg.motion.sway_amplitude_mm.array() < 0.0).any()) throw ConfigError("sway amplitudes must be non-negative");
  if (cfg.noise.trials < 1 || cfg.sweep.trials < 1) throw ConfigError("trials must be at least 1");
  if (cfg.noise.f_a < 0 || cfg.noise.f_g < 0) throw ConfigError("noise exponents must be non-negative");
  if (cfg.sweep.f_a.empty() || cfg.sweep.f_g.empty()) throw ConfigError("sweep grid must be non-empty");
  for (int f : cfg.sweep.f_a)
    if (f < 0) throw ConfigError("sweep exponents must be non-negative");
  for (int f : cfg.sweep.f_g)
    if (f < 0) throw ConfigError("sweep exponents must be non-negative");
  if (cfg.volume.size == 0 || !(cfg.volume.spacing_mm > 0.0)) throw ConfigError("invalid volume grid");
  if (!(cfg.fiducial_arm_mm > 0.0)) throw ConfigError("fiducial_arm_mm must be positive");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (cfg.threads < 0) throw ConfigError("threads must be non-negative");
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig cfg;
  reject_unknown(doc,
                 {"version", "profile", "seed", "motion", "noise", "methods", "volume", "fiducial_arm_mm", "alpha",
                  "sweep", "output_dir", "threads"},
                 "config");
  read(doc, "version", cfg.version, "config");
  read(doc, "profile", cfg.profile, "config");
  read(doc, "seed", cfg.seed, "config");
  read(doc, "methods", cfg.methods, "config");
  read(doc, "fiducial_arm_mm", cfg.fiducial_arm_mm, "config");
  read(doc, "alpha", cfg.alpha, "config");
  read(doc, "output_dir", cfg.output_dir, "config");
  read(doc, "threads", cfg.threads, "config");
  if (doc.contains("motion")) {
    const auto& m = doc["motion"];
    reject_unknown(m,
                   {"source", "csv_path", "static", "duration_s", "squat_angle_deg", "sway_amplitude_mm",
                    "sway_frequency_hz", "flexion_mod_amp_deg", "flexion_mod_freq_hz", "flexion_drift_deg"},
                   "motion");
    read(m, "source", cfg.motion.source, "motion");
    read(m, "csv_path", cfg.motion.csv_path, "motion");
    read(m, "static", cfg.motion.static_pose, "motion");
    read(m, "duration_s", cfg.motion.duration_s, "motion");
    read(m, "squat_angle_deg", cfg.motion.squat_angle_deg, "motion");
    read_vec3(m, "sway_amplitude_mm", cfg.motion.sway_amplitude_mm, "motion");
    read_vec3(m, "sway_frequency_hz", cfg.motion.sway_frequency_hz, "motion");
    read(m, "flexion_mod_amp_deg", cfg.motion.flexion_mod_amp_deg, "motion");
    read(m, "flexion_mod_freq_hz", cfg.motion.flexion_mod_freq_hz, "motion");
    read(m, "flexion_drift_deg", cfg.motion.flexion_drift_deg, "motion");
  }
  if (doc.contains("noise")) {
    const auto& n = doc["noise"];
    reject_unknown(n, {"enabled", "f_a", "f_g", "trials"}, "noise");
    read(n, "enabled", cfg.noise.enabled, "noise");
    read(n, "f_a", cfg.noise.f_a, "noise");
    read(n, "f_g", cfg.noise.f_g, "noise");
    read(n, "trials", cfg.noise.trials, "noise");
  }
  if (doc.contains("volume")) {
    const auto& v = doc["volume"];
    reject_unknown(v, {"size", "spacing_mm"}, "volume");
    read(v, "size", cfg.volume.size, "volume");
    read(v, "spacing_mm", cfg.volume.spacing_mm, "volume");
  }
  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    reject_unknown(s, {"f_a", "f_g", "trials"}, "sweep");
    read(s, "f_a", cfg.sweep.f_a, "sweep");
    read(s, "f_g", cfg.sweep.f_g, "sweep");
    read(s, "trials", cfg.sweep.trials, "sweep");
  }
  validate(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["version"] = cfg.version;
  doc["profile"] = cfg.profile;
  doc["seed"] = cfg.seed;
  doc["motion"] = {{"source", cfg.motion.source},
                   {"csv_path", cfg.motion.csv_path},
                   {"static", cfg.motion.static_pose},
                   {"duration_s", cfg.motion.duration_s},
                   {"squat_angle_deg", cfg.motion.squat_angle_deg},
                   {"sway_amplitude_mm", vec3_json(cfg.motion.sway_amplitude_mm)},
                   {"sway_frequency_hz", vec3_json(cfg.motion.sway_frequency_hz)},
                   {"flexion_mod_amp_deg", cfg.motion.flexion_mod_amp_deg},
                   {"flexion_mod_freq_hz", cfg.motion.flexion_mod_freq_hz},
                   {"flexion_drift_deg", cfg.motion.flexion_drift_deg}};
  doc["noise"] = {
      {"enabled", cfg.noise.enabled}, {"f_a", cfg.noise.f_a}, {"f_g", cfg.noise.f_g}, {"trials", cfg.noise.trials}};
  doc["methods"] = cfg.methods;
  doc["volume"] = {{"size", cfg.volume.size}, {"spacing_mm", cfg.volume.spacing_mm}};
  doc["fiducial_arm_mm"] = cfg.fiducial_arm_mm;
  doc["alpha"] = cfg.alpha;
  doc["sweep"] = {{"f_a", cfg.sweep.f_a}, {"f_g", cfg.sweep.f_g}, {"trials", cfg.sweep.trials}};
  doc["output_dir"] = cfg.output_dir;
  doc["threads"] = cfg.threads;
  return doc;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(doc);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& label) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = master ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// In-memory pipeline

phantom::SwayParams sway_params(const ExperimentConfig& cfg) {
  phantom::SwayParams p;
  const auto& m = cfg.motion;
  p.duration_s = m.duration_s;
  p.squat_angle_deg = m.squat_angle_deg;
  p.sway_amplitude = m.sway_amplitude_mm * 1e-3;
  p.sway_frequency = m.sway_frequency_hz;
  p.flexion_mod_amp_deg = m.flexion_mod_amp_deg;
  p.flexion_mod_freq_hz = m.flexion_mod_freq_hz;
  p.flexion_drift_deg = m.flexion_drift_deg;
  p.seed = derive_seed(cfg.seed, "motion");
  if (m.static_pose) {
    p.sway_amplitude.setZero();
    p.flexion_mod_amp_deg = 0.0;
    p.flexion_drift_deg = 0.0;
  }
  return p;
}

namespace {

FiducialObservation observe(const pose::FiducialModel& model, const phantom::SegmentKinematics& kin,
                            const imu::SensorMount& mount, const imu::SyncMap& sync,
                            const geometry::ScanGeometry& geom) {
  FiducialObservation obs{model, model};
  obs.view0.tracked = pose::project_fiducials(model, imu::sensor_pose(kin, mount, sync.index[0]), geom.matrices[0]);
  obs.view1.tracked = pose::project_fiducials(model, imu::sensor_pose(kin, mount, sync.index[1]), geom.matrices[1]);
  return obs;
}

const phantom::SegmentKinematics& segment_of(const phantom::LegKinematics& kin, const imu::SensorMount& mount) {
  return mount.segment == phantom::Segment::Thigh ? kin.thigh : kin.shank;
}

}  // namespace

Simulation simulate_scan(const ExperimentConfig& cfg, bool render) {
  validate(cfg);
  Simulation sim;
  sim.geom = geometry::build_circular_trajectory(geometry::profile_by_name(cfg.profile));
  sim.tracks = cfg.motion.source == "csv" ? phantom::load_tracks_csv(cfg.motion.csv_path)
                                          : phantom::synthesize_sway_tracks(sway_params(cfg));
  sim.kin = phantom::forward_kinematics(sim.tracks);
  sim.phantom = phantom::default_leg_phantom(sim.kin.thigh.length, sim.kin.shank.length);
  sim.sync = imu::build_sync_map(sim.tracks.sample_rate_hz, sim.geom.frame_rate_hz, sim.geom.n_proj, sim.tracks.size());
  sim.shank_mount = imu::default_shank_mount();
  sim.thigh_mount = imu::default_thigh_mount();
  sim.shank_imu = imu::simulate_imu(segment_of(sim.kin, sim.shank_mount), sim.shank_mount);
  sim.thigh_imu = imu::simulate_imu(segment_of(sim.kin, sim.thigh_mount), sim.thigh_mount);
  const auto model = pose::FiducialModel::canonical(cfg.fiducial_arm_mm * 1e-3);
  sim.shank_fiducials = observe(model, segment_of(sim.kin, sim.shank_mount), sim.shank_mount, sim.sync, sim.geom);
  sim.thigh_fiducials = observe(model, segment_of(sim.kin, sim.thigh_mount), sim.thigh_mount, sim.sync, sim.geom);
  sim.volume = centered_volume(cfg.volume.size, cfg.volume.spacing_mm * 1e-3, sim.geom.rotation_center);
  const std::size_t t0 = sim.sync.index[0];
  sim.reference_joints = {sim.tracks.ankle[t0], sim.tracks.knee[t0], sim.tracks.hip[t0]};
  if (render) {
    std::vector<phantom::SegmentPoses> moving, fixed;
    for (const std::size_t t : sim.sync.index) {
      moving.push_back(phantom::poses_at(sim.kin, t));
      fixed.push_back(phantom::poses_at(sim.kin, t0));
    }
    sim.projections = phantom::render_stack(sim.phantom, moving, sim.geom);
    sim.reference_projections = phantom::render_stack(sim.phantom, fixed, sim.geom);
    sim.ground_truth = phantom::voxelize(sim.phantom, phantom::poses_at(sim.kin, t0), sim.volume);
  }
  return sim;
}

SensorEstimate estimate_sensor(const FiducialObservation& fid, const imu::ImuSeries& series, const Simulation& sim) {
  SensorEstimate est;
  est.initial = pose::estimate_initial_pose(fid.view0, sim.geom.matrices[0], sim.geom);
  est.second = pose::estimate_initial_pose(fid.view1, sim.geom.matrices[1], sim.geom);
  est.v0 = pose::estimate_initial_velocity(est.initial.pose, est.second.pose, series, sim.sync);
  est.track = pose::integrate_poses(series, est.initial.pose, est.v0);
  return est;
}

namespace {

MotionEstimate assemble(const Simulation& sim, SensorEstimate shank, SensorEstimate thigh) {
  MotionEstimate est;
  est.shank = std::move(shank);
  est.thigh = std::move(thigh);
  est.rigid = moco::rigid_motion_series(est.shank.track, sim.sync);
  const auto shank_off = moco::joint_offsets(sim.shank_mount, sim.kin.shank.length);
  const auto thigh_off = moco::joint_offsets(sim.thigh_mount, sim.kin.thigh.length);
  est.joints.reserve(sim.sync.index.size());
  for (const std::size_t t : sim.sync.index)
    est.joints.push_back(
        moco::joints_from_imu_poses(est.shank.track.poses[t], est.thigh.track.poses[t], shank_off, thigh_off));
  return est;
}

}  // namespace

MotionEstimate estimate_motion(const Simulation& sim, const imu::ImuSeries& shank, const imu::ImuSeries& thigh) {
  return assemble(sim, estimate_sensor(sim.shank_fiducials, shank, sim),
                  estimate_sensor(sim.thigh_fiducials, thigh, sim));
}

std::pair<imu::ImuSeries, imu::ImuSeries> noisy_series(const Simulation& sim, int f_a, int f_g, std::uint64_t master,
                                                       int trial) {
  imu::NoiseSpec spec;
  spec.f_a = f_a;
  spec.f_g = f_g;
  spec.seed = derive_seed(master, "noise/shank/" + std::to_string(trial));
  auto shank = imu::add_noise(sim.shank_imu, spec);
  spec.seed = derive_seed(master, "noise/thigh/" + std::to_string(trial));
  auto thigh = imu::add_noise(sim.thigh_imu, spec);
  return {std::move(shank), std::move(thigh)};
}

Volume reconstruct_reference(const Simulation& sim) {
  return recon::fbp(sim.reference_projections, sim.geom, sim.volume);
}

Volume reconstruct_method(const Simulation& sim, const MotionEstimate& est, recon::Method method,
                          const ExperimentConfig& cfg) {
  recon::ReconInputs in;
  in.stack = &sim.projections;
  in.geom = &sim.geom;
  in.volume = sim.volume;
  in.motion = &est.rigid;
  in.joints = &est.joints;
  in.moco.alpha = cfg.alpha;
  return recon::reconstruct(method, in);
}

std::vector<metrics::MetricReport> evaluate(const Volume& volume, const Volume& reference,
                                            const metrics::RegionMasks& masks) {
  const Volume a = metrics::scale_volume(volume, 0.0, phantom::kMuBone);
  const Volume b = metrics::scale_volume(reference, 0.0, phantom::kMuBone);
  Volume map(a.spec);
  if (a.data == b.data)
    std::fill(map.data.begin(), map.data.end(), 1.0);
  else
    map = metrics::ssim_map(a, b);
  std::vector<metrics::MetricReport> out;
  const std::pair<const char*, const metrics::Mask*> regions[] = {
      {"whole", &masks.leg}, {"shank", &masks.shank}, {"thigh", &masks.thigh}};
  for (const auto& [name, mask] : regions) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < map.data.size(); ++i)
      if (mask->data[i]) {
        sum += map.data[i];
        ++count;
      }
    if (count == 0) throw ShapeError(std::string("empty region mask: ") + name);
    out.push_back({name, sum / static_cast<double>(count), metrics::rmse(a, b, mask)});
  }
  return out;
}

std::vector<SweepCell> noise_sweep(const Simulation& sim, const ExperimentConfig& cfg) {
  const MotionEstimate clean = estimate_motion(sim, sim.shank_imu, sim.thigh_imu);
  std::vector<SweepCell> cells;
  for (const int fa : cfg.sweep.f_a)
    for (const int fg : cfg.sweep.f_g) cells.push_back({fa, fg, {}});
  const auto n = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long c = 0; c < n; ++c) {
    auto& cell = cells[static_cast<std::size_t>(c)];
    metrics::MotionError sum;
    for (int trial = 0; trial < cfg.sweep.trials; ++trial) {
      const auto [shank, thigh] = noisy_series(sim, cell.f_a, cell.f_g, cfg.seed, trial);
      // Only the shank sensor drives the rigid motion series.
      const SensorEstimate est = estimate_sensor(sim.shank_fiducials, shank, sim);
      const auto err = metrics::motion_rmse(clean.rigid, moco::rigid_motion_series(est.track, sim.sync));
      sum.translation_axes_mm += err.translation_axes_mm;
      sum.rotation_axes_deg += err.rotation_axes_deg;
      sum.translation_mm += err.translation_mm;
      sum.rotation_deg += err.rotation_deg;
    }
    const double t = static_cast<double>(cfg.sweep.trials);
    cell.error.translation_axes_mm = sum.translation_axes_mm / t;
    cell.error.rotation_axes_deg = sum.rotation_axes_deg / t;
    cell.error.translation_mm = sum.translation_mm / t;
    cell.error.rotation_deg = sum.rotation_deg / t;
  }
  return cells;
}

namespace {

std::string format_value(double v) {
  std::ostringstream s;
  if (v != 0.0 && (std::abs(v) < 1e-3 || std::abs(v) >= 1e5))
    s << std::scientific << std::setprecision(3) << v;
  else
    s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

}  // namespace

std::string sweep_table_csv(const std::vector<SweepCell>& cells, const SweepConfig& sweep) {
  std::ostringstream out;
  out << "f_a\\f_g";
  for (const int fg : sweep.f_g) out << ',' << fg;
  out << '\n';
  for (const int fa : sweep.f_a) {
    out << fa;
    for (const int fg : sweep.f_g) {
      const auto it =
          std::find_if(cells.begin(), cells.end(), [&](const SweepCell& c) { return c.f_a == fa && c.f_g == fg; });
      out << ',';
      if (it != cells.end())
        out << format_value(it->error.translation_mm) << " / " << format_value(it->error.rotation_deg);
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// File-based stages

namespace {

std::string path_in(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void write_json(const std::string& path, const json& doc) { write_file_atomic(path, doc.dump(1) + "\n"); }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing artifact " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

json mat4_json(const Affine4& m) {
  json a = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  return a;
}

Affine4 mat4_from_json(const json& a) {
  const auto v = a.get<std::vector<double>>();
  if (v.size() != 16) throw FormatError("4x4 matrix needs 16 entries");
  Affine4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(4 * r + c)];
  return m;
}

json fiducials_json(const FiducialObservation& obs) {
  auto pts = [](const pose::FiducialModel& m) {
    json a = json::array();
    for (const auto& x : m.tracked) a.push_back({x.x(), x.y()});
    return a;
  };
  json model = json::array();
  for (const auto& p : obs.view0.points) model.push_back({p.x() * 1e3, p.y() * 1e3, p.z() * 1e3});
  return {{"model_mm", model}, {"view0_px", pts(obs.view0)}, {"view1_px", pts(obs.view1)}};
}

FiducialObservation fiducials_from_json(const json& doc) {
  FiducialObservation obs;
  const auto model = doc.at("model_mm").get<std::vector<std::vector<double>>>();
  const auto v0 = doc.at("view0_px").get<std::vector<std::vector<double>>>();
  const auto v1 = doc.at("view1_px").get<std::vector<std::vector<double>>>();
  if (model.size() != 4 || v0.size() != 4 || v1.size() != 4) throw FormatError("fiducials need 4 points");
  for (std::size_t k = 0; k < 4; ++k) {
    if (model[k].size() != 3 || v0[k].size() != 2 || v1[k].size() != 2) throw FormatError("bad fiducial entry");
    const Vec3 p = Vec3(model[k][0], model[k][1], model[k][2]) * 1e-3;
    obs.view0.points[k] = obs.view1.points[k] = p;
    obs.view0.tracked[k] = Vec2(v0[k][0], v0[k][1]);
    obs.view1.tracked[k] = Vec2(v1[k][0], v1[k][1]);
  }
  return obs;
}

/// Scan description rebuilt from the config with recorded artifacts loaded from disk.
Simulation load_simulation(const ExperimentConfig& cfg, bool images) {
  Simulation sim = simulate_scan(cfg, false);
  sim.geom = geometry::load_geometry(path_in(cfg, "geometry.json"));
  sim.shank_imu = imu::load_imu_csv(path_in(cfg, "imu_shank.csv"));
  sim.thigh_imu = imu::load_imu_csv(path_in(cfg, "imu_thigh.csv"));
  const json fid = read_json_file(path_in(cfg, "fiducials.json"));
  try {
    sim.shank_fiducials = fiducials_from_json(fid.at("shank"));
    sim.thigh_fiducials = fiducials_from_json(fid.at("thigh"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("fiducials.json: ") + e.what());
  }
  if (images) {
    sim.projections = load_stack(path_in(cfg, "projections.raw"));
    sim.reference_projections = load_stack(path_in(cfg, "projections_reference.raw"));
    sim.ground_truth = load_volume(path_in(cfg, "ground_truth.raw"));
  }
  return sim;
}

std::pair<imu::ImuSeries, imu::ImuSeries> stage_series(const Simulation& sim, const ExperimentConfig& cfg) {
  if (!cfg.noise.enabled) return {sim.shank_imu, sim.thigh_imu};
  return noisy_series(sim, cfg.noise.f_a, cfg.noise.f_g, cfg.seed, 0);
}

json sensor_init_json(const SensorEstimate& e) {
  return {{"S0", mat4_json(e.initial.pose)},
          {"Sn", mat4_json(e.second.pose)},
          {"v0_m_per_s", vec3_json(e.v0)},
          {"residual_m", {e.initial.residual, e.second.residual}},
          {"fiducials_on_detector", e.initial.on_detector && e.second.on_detector}};
}

MotionEstimate load_motion(const Simulation& sim, const ExperimentConfig& cfg) {
  const json init = read_json_file(path_in(cfg, "init.json"));
  const auto series = stage_series(sim, cfg);
  auto sensor = [&](const char* name, const imu::ImuSeries& s) {
    SensorEstimate e;
    try {
      const auto& j = init.at(name);
      e.initial.pose = mat4_from_json(j.at("S0"));
      e.second.pose = mat4_from_json(j.at("Sn"));
      const auto v = j.at("v0_m_per_s").get<std::vector<double>>();
      if (v.size() != 3) throw FormatError("v0 needs 3 entries");
      e.v0 = Vec3(v[0], v[1], v[2]);
    } catch (const json::exception& ex) {
      throw FormatError(std::string("init.json: ") + ex.what());
    }
    e.track = pose::integrate_poses(s, e.initial.pose, e.v0);
    return e;
  };
  return assemble(sim, sensor("shank", series.first), sensor("thigh", series.second));
}

void save_joints_csv(const std::vector<moco::Joints>& joints, const imu::SyncMap& sync, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "view,sample,ankle_x,ankle_y,ankle_z,knee_x,knee_y,knee_z,hip_x,hip_y,hip_z\n";
  for (std::size_t i = 0; i < joints.size(); ++i) {
    out << i << ',' << sync.index[i];
    for (const Vec3* v : {&joints[i].ankle, &joints[i].knee, &joints[i].hip})
      out << ',' << v->x() << ',' << v->y() << ',' << v->z();
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<moco::Joints> load_joints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing artifact " + path);
  std::vector<moco::Joints> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 11) throw FormatError("joints.csv: expected 11 columns", line_no);
    double v[9];
    for (int k = 0; k < 9; ++k) v[k] = detail::parse_number(cells[static_cast<std::size_t>(k + 2)], line_no);
    out.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]), Vec3(v[6], v[7], v[8])});
  }
  return out;
}

json motion_json(const moco::MotionSeries& m) {
  json a = json::array();
  for (const auto& x : m.m) a.push_back(mat4_json(x));
  return a;
}

moco::MotionSeries motion_from_json(const json& a) {
  moco::MotionSeries m;
  for (const auto& x : a) m.m.push_back(mat4_from_json(x));
  return m;
}

std::string volume_name(recon::Method m) { return "volume_" + recon::to_string(m) + ".raw"; }

std::vector<recon::Method> methods_of(const ExperimentConfig& cfg) {
  std::vector<recon::Method> out;
  for (const auto& name : cfg.methods) {
    const auto m = recon::method_from_string(name);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

std::string format_metric(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(9) << v;
  return s.str();
}

}  // namespace

void stage_simulate(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  const Simulation sim = simulate_scan(cfg, true);
  write_json(path_in(cfg, "config.json"), config_to_json(cfg));
  geometry::save_geometry(sim.geom, path_in(cfg, "geometry.json"));
  phantom::save_tracks_csv(sim.tracks, path_in(cfg, "tracks.csv"));
  save_stack(sim.projections, path_in(cfg, "projections.raw"));
  save_stack(sim.reference_projections, path_in(cfg, "projections_reference.raw"));
  imu::save_imu_csv(sim.shank_imu, path_in(cfg, "imu_shank.csv"));
  imu::save_imu_csv(sim.thigh_imu, path_in(cfg, "imu_thigh.csv"));
  write_json(path_in(cfg, "fiducials.json"),
             {{"shank", fiducials_json(sim.shank_fiducials)}, {"thigh", fiducials_json(sim.thigh_fiducials)}});
  save_volume(sim.ground_truth, path_in(cfg, "ground_truth.raw"));
}

void stage_init(const ExperimentConfig& cfg) {
  const Simulation sim = load_simulation(cfg, false);
  const auto series = stage_series(sim, cfg);
  if (cfg.noise.enabled) {
    imu::save_imu_csv(series.first, path_in(cfg, "imu_shank_noisy.csv"));
    imu::save_imu_csv(series.second, path_in(cfg, "imu_thigh_noisy.csv"));
  }
  auto init = [&](const FiducialObservation& fid, const imu::ImuSeries& s) {
    SensorEstimate e;
    e.initial = pose::estimate_initial_pose(fid.view0, sim.geom.matrices[0], sim.geom);
    e.second = pose::estimate_initial_pose(fid.view1, sim.geom.matrices[1], sim.geom);
    e.v0 = pose::estimate_initial_velocity(e.initial.pose, e.second.pose, s, sim.sync);
    return e;
  };
  write_json(path_in(cfg, "init.json"), {{"shank", sensor_init_json(init(sim.shank_fiducials, series.first))},
                                         {"thigh", sensor_init_json(init(sim.thigh_fiducials, series.second))},
                                         {"sync_n", sim.sync.n()}});
}

void stage_correct(const ExperimentConfig& cfg) {
  const Simulation sim = load_simulation(cfg, false);
  const MotionEstimate est = load_motion(sim, cfg);
  pose::save_pose_csv(est.shank.track, sim.shank_imu.rate_hz, path_in(cfg, "poses_shank.csv"));
  pose::save_pose_csv(est.thigh.track, sim.thigh_imu.rate_hz, path_in(cfg, "poses_thigh.csv"));
  moco::save_motion_csv(est.rigid, path_in(cfg, "motion_rigid.csv"));
  write_json(path_in(cfg, "motion_rigid.json"), motion_json(est.rigid));
  save_joints_csv(est.joints, sim.sync, path_in(cfg, "joints.csv"));
  geometry::save_geometry(moco::correct_projection_matrices(sim.geom, est.rigid), path_in(cfg, "geometry_rigid.json"));
}

void stage_reconstruct(const ExperimentConfig& cfg) {
  const Simulation sim = load_simulation(cfg, true);
  MotionEstimate est;
  est.rigid = motion_from_json(read_json_file(path_in(cfg, "motion_rigid.json")));
  est.joints = load_joints_csv(path_in(cfg, "joints.csv"));
  const std::size_t mid = sim.volume.ny / 2;
  const Volume ref = reconstruct_reference(sim);
  save_volume(ref, path_in(cfg, "volume_reference.raw"));
  save_slice_pgm(metrics::scale_volume(ref, 0.0, phantom::kMuBone), mid, path_in(cfg, "slice_reference.pgm"));
  for (const auto m : methods_of(cfg)) {
    const Volume v = reconstruct_method(sim, est, m, cfg);
    save_volume(v, path_in(cfg, volume_name(m)));
    save_slice_pgm(metrics::scale_volume(v, 0.0, phantom::kMuBone), mid,
                   path_in(cfg, "slice_" + recon::to_string(m) + ".pgm"));
  }
}

void stage_evaluate(const ExperimentConfig& cfg) {
  const Volume gt = load_volume(path_in(cfg, "ground_truth.raw"));
  const Volume ref = load_volume(path_in(cfg, "volume_reference.raw"));
  const Simulation sim = simulate_scan(cfg, false);
  const auto masks = metrics::region_masks(gt, sim.reference_joints);
  const std::string id = cfg.profile + "-seed" + std::to_string(cfg.seed);
  std::ostringstream csv;
  csv << "experiment,method,region,ssim,rmse\n";
  json summary = {{"experiment", id}, {"results", json::array()}};
  for (const auto m : methods_of(cfg)) {
    const Volume v = load_volume(path_in(cfg, volume_name(m)));
    for (const auto& r : evaluate(v, ref, masks)) {
      csv << id << ',' << recon::to_string(m) << ',' << r.region << ',' << format_metric(r.ssim) << ','
          << format_metric(r.rmse) << '\n';
      summary["results"].push_back(
          {{"method", recon::to_string(m)}, {"region", r.region}, {"ssim", r.ssim}, {"rmse", r.rmse}});
    }
  }
  write_file_atomic(path_in(cfg, "metrics.csv"), csv.str());
  write_json(path_in(cfg, "metrics.json"), summary);
}

void stage_noise_sweep(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  const Simulation sim = simulate_scan(cfg, false);
  const auto cells = noise_sweep(sim, cfg);
  write_file_atomic(path_in(cfg, "noise_sweep.csv"), sweep_table_csv(cells, cfg.sweep));
  json doc = json::array();
  for (const auto& c : cells)
    doc.push_back({{"f_a", c.f_a},
                   {"f_g", c.f_g},
                   {"translation_mm", c.error.translation_mm},
                   {"rotation_deg", c.error.rotation_deg},
                   {"translation_axes_mm", vec3_json(c.error.translation_axes_mm)},
                   {"rotation_axes_deg", vec3_json(c.error.rotation_axes_deg)}});
  write_json(path_in(cfg, "noise_sweep.json"), {{"trials", cfg.sweep.trials}, {"cells", doc}});
}

void run_pipeline(const ExperimentConfig& cfg) {
  auto run = [](const char* stage, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  };
  run("simulate", [&] { stage_simulate(cfg); });
  run("init", [&] { stage_init(cfg); });
  run("correct", [&] { stage_correct(cfg); });
  run("reconstruct", [&] { stage_reconstruct(cfg); });
  run("evaluate", [&] { stage_evaluate(cfg); });
  run("noise-sweep", [&] { stage_noise_sweep(cfg); });

  json files = json::array();
  auto add = [&](const std::string& name, const std::string& kind) {
    files.push_back({{"path", name}, {"kind", kind}});
  };
  add("config.json", "json");
  add("geometry.json", "json");
  add("tracks.csv", "csv");
  add("projections.raw", "raw");
  add("projections.json", "json");
  add("projections_reference.raw", "raw");
  add("projections_reference.json", "json");
  add("imu_shank.csv", "csv");
  add("imu_thigh.csv", "csv");
  if (cfg.noise.enabled) {
    add("imu_shank_noisy.csv", "csv");
    add("imu_thigh_noisy.csv", "csv");
  }
  add("fiducials.json", "json");
  add("ground_truth.raw", "raw");
  add("ground_truth.json", "json");
  add("init.json", "json");
  add("poses_shank.csv", "csv");
  add("poses_thigh.csv", "csv");
  add("motion_rigid.csv", "csv");
  add("motion_rigid.json", "json");
  add("joints.csv", "csv");
  add("geometry_rigid.json", "json");
  add("volume_reference.raw", "raw");
  add("volume_reference.json", "json");
  add("slice_reference.pgm", "pgm");
  for (const auto m : methods_of(cfg)) {
    add(volume_name(m), "raw");
    add("volume_" + recon::to_string(m) + ".json", "json");
    add("slice_" + recon::to_string(m) + ".pgm", "pgm");
  }
  add("metrics.csv", "csv");
  add("metrics.json", "json");
  add("noise_sweep.csv", "csv");
  add("noise_sweep.json", "json");
  write_json(path_in(cfg, "manifest.json"), {{"version", kConfigVersion}, {"artifacts", files}});
}

}  // namespace imumoco::experiment
