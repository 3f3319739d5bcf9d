#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "imumoco/geometry.hpp"
#include "imumoco/image.hpp"
#include "imumoco/imu.hpp"
#include "imumoco/metrics.hpp"
#include "imumoco/moco.hpp"
#include "imumoco/phantom.hpp"
#include "imumoco/pose.hpp"
#include "imumoco/recon.hpp"

namespace imumoco::experiment {

inline constexpr int kConfigVersion = 1;

struct MotionConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string csv_path;
  bool static_pose = false;
  double duration_s = 8.0;
  double squat_angle_deg = 30.0;
  Vec3 sway_amplitude_mm = Vec3(2.0, 1.0, 2.0);
  Vec3 sway_frequency_hz = Vec3(0.23, 0.31, 0.17);
  double flexion_mod_amp_deg = 0.5;
  double flexion_mod_freq_hz = 0.2;
  double flexion_drift_deg = 0.0;

  bool operator==(const MotionConfig&) const = default;
};

struct NoiseConfig {
  bool enabled = false;
  int f_a = 0;
  int f_g = 0;
  int trials = 1;

  bool operator==(const NoiseConfig&) const = default;
};

struct SweepConfig {
  std::vector<int> f_a = {0, 1, 2, 3, 4, 5};
  std::vector<int> f_g = {0, 1, 2, 3, 4, 5};
  int trials = 5;

  bool operator==(const SweepConfig&) const = default;
};

struct VolumeConfig {
  std::size_t size = 128;
  double spacing_mm = 1.0;

  bool operator==(const VolumeConfig&) const = default;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string profile = "desk";
  std::uint64_t seed = 1;
  MotionConfig motion;
  NoiseConfig noise;
  std::vector<std::string> methods = {"uncorrected", "rigid", "mls2d", "mls3d"};
  VolumeConfig volume;
  double fiducial_arm_mm = 20.0;
  double alpha = 0.8;
  SweepConfig sweep;
  std::string output_dir = "out";
  int threads = 0;  // 0 = runtime default

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& cfg);

/// Stage seed derived from the master seed and a label (splitmix64 of
/// master xor FNV-1a(label)); adding labels never perturbs existing ones.
std::uint64_t derive_seed(std::uint64_t master, const std::string& label);

/// Fiducial observations of one sensor in the first two projections.
struct FiducialObservation {
  pose::FiducialModel view0;
  pose::FiducialModel view1;
};

struct Simulation {
  geometry::ScanGeometry geom;
  phantom::JointTracks tracks;
  phantom::LegKinematics kin;
  phantom::LegPhantom phantom;
  imu::SyncMap sync;
  imu::SensorMount shank_mount;
  imu::SensorMount thigh_mount;
  imu::ImuSeries shank_imu;  // noise-free
  imu::ImuSeries thigh_imu;
  FiducialObservation shank_fiducials;
  FiducialObservation thigh_fiducials;
  ProjectionStack projections;            // moving subject
  ProjectionStack reference_projections;  // pose of view 0 held
  VolumeSpec volume;
  Volume ground_truth;
  moco::Joints reference_joints;
};

/// Tracks, kinematics, IMU signals, fiducial observations and projections.
/// With `render` false the projections and ground truth are left empty.
Simulation simulate_scan(const ExperimentConfig& cfg, bool render = true);

phantom::SwayParams sway_params(const ExperimentConfig& cfg);

struct SensorEstimate {
  pose::InitialPose initial;
  pose::InitialPose second;
  Vec3 v0 = Vec3::Zero();
  pose::PoseTrack track;
};

struct MotionEstimate {
  SensorEstimate shank;
  SensorEstimate thigh;
  moco::MotionSeries rigid;
  std::vector<moco::Joints> joints;  // per view
};

SensorEstimate estimate_sensor(const FiducialObservation& fid, const imu::ImuSeries& series, const Simulation& sim);

/// Initialization from fiducials, strapdown integration of both sensors,
/// rigid motion from the shank sensor and joint positions per view.
MotionEstimate estimate_motion(const Simulation& sim, const imu::ImuSeries& shank, const imu::ImuSeries& thigh);

/// Noisy copies of both series for one trial.
std::pair<imu::ImuSeries, imu::ImuSeries> noisy_series(const Simulation& sim, int f_a, int f_g, std::uint64_t master,
                                                       int trial);

Volume reconstruct_reference(const Simulation& sim);
Volume reconstruct_method(const Simulation& sim, const MotionEstimate& est, recon::Method method,
                          const ExperimentConfig& cfg);

/// SSIM and RMSE against the reference on the whole leg, shank and thigh,
/// after scaling both volumes to [0, 1] with the window [0, mu_bone].
std::vector<metrics::MetricReport> evaluate(const Volume& volume, const Volume& reference,
                                            const metrics::RegionMasks& masks);

struct SweepCell {
  int f_a = 0;
  int f_g = 0;
  metrics::MotionError error;  // averaged over trials
};

/// Rigid motion error between noise-free and noisy estimation per (f_a, f_g).
std::vector<SweepCell> noise_sweep(const Simulation& sim, const ExperimentConfig& cfg);

/// Table with rows f_a, columns f_g and cells "t_mm / r_deg".
std::string sweep_table_csv(const std::vector<SweepCell>& cells, const SweepConfig& sweep);

// File-based stages working in cfg.output_dir.
void stage_simulate(const ExperimentConfig& cfg);
void stage_init(const ExperimentConfig& cfg);
void stage_correct(const ExperimentConfig& cfg);
void stage_reconstruct(const ExperimentConfig& cfg);
void stage_evaluate(const ExperimentConfig& cfg);
void stage_noise_sweep(const ExperimentConfig& cfg);
/// All stages plus manifest.json listing every artifact.
void run_pipeline(const ExperimentConfig& cfg);

}  // namespace imumoco::experiment
