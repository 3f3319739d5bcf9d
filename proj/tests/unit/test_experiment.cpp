#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "imumoco/errors.hpp"
#include "imumoco/experiment.hpp"

using namespace imumoco;
using namespace imumoco::experiment;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(const std::string& dir) {
  ExperimentConfig cfg;
  cfg.volume.size = 40;
  cfg.volume.spacing_mm = 4.0;
  cfg.output_dir = (fs::temp_directory_path() / dir).string();
  fs::remove_all(cfg.output_dir);
  return cfg;
}

const ExperimentConfig& pipeline_run() {
  static const ExperimentConfig cfg = [] {
    auto c = small_config("imumoco_test_pipeline");
    run_pipeline(c);
    return c;
  }();
  return cfg;
}

}  // namespace

TEST(Config, RoundTrip) {
  ExperimentConfig cfg;
  cfg.profile = "paper";
  cfg.seed = 12345678901234ull;
  cfg.motion.static_pose = true;
  cfg.motion.sway_amplitude_mm = Vec3(1.5, 0.25, 3.0);
  cfg.motion.flexion_drift_deg = 2.5;
  cfg.noise.enabled = true;
  cfg.noise.f_a = 4;
  cfg.noise.f_g = 5;
  cfg.methods = {"rigid", "mls3d"};
  cfg.volume.size = 96;
  cfg.sweep.f_a = {3, 4};
  cfg.sweep.trials = 2;
  cfg.alpha = 0.7;
  cfg.threads = 3;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  EXPECT_EQ(config_from_json(json::parse(config_to_json(cfg).dump())), cfg);
}

TEST(Config, DefaultsFromEmptyDocument) { EXPECT_EQ(config_from_json(json::object()), ExperimentConfig{}); }

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"motion", {{"speed", 2}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"noise", {{"sigma", 2}}}}), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json(json{{"version", 2}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"methods", json::array()}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"methods", {"rigid", "magic"}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"profile", "huge"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"seed", "one"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"noise", {{"trials", 0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sweep", {{"f_a", json::array()}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"motion", {{"source", "csv"}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Seeds, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "motion"), derive_seed(1, "motion"));
  EXPECT_NE(derive_seed(1, "motion"), derive_seed(2, "motion"));
  EXPECT_NE(derive_seed(1, "motion"), derive_seed(1, "noise/shank/0"));
  EXPECT_NE(derive_seed(1, "noise/shank/0"), derive_seed(1, "noise/thigh/0"));
}

TEST(Simulation, StaticScanMatchesReference) {
  auto cfg = small_config("imumoco_test_static");
  cfg.motion.static_pose = true;
  cfg.methods = {"uncorrected"};
  const auto sim = simulate_scan(cfg);
  EXPECT_EQ(sim.projections.data, sim.reference_projections.data);
  const MotionEstimate est = estimate_motion(sim, sim.shank_imu, sim.thigh_imu);
  const auto vol = reconstruct_method(sim, est, recon::Method::None, cfg);
  const auto report =
      evaluate(vol, reconstruct_reference(sim), metrics::region_masks(sim.ground_truth, sim.reference_joints));
  ASSERT_EQ(report.size(), 3u);
  for (const auto& r : report) EXPECT_GT(r.ssim, 0.999) << r.region;
}

TEST(Simulation, EstimatedMotionMatchesTruth) {
  auto cfg = small_config("imumoco_test_truth");
  const auto sim = simulate_scan(cfg, false);
  const MotionEstimate est = estimate_motion(sim, sim.shank_imu, sim.thigh_imu);
  const std::size_t t0 = sim.sync.index[0];
  for (std::size_t i = 0; i < sim.sync.index.size(); i += 11) {
    const std::size_t t = sim.sync.index[i];
    const Affine4 truth = imu::sensor_pose(sim.kin.shank, sim.shank_mount, t) *
                          invert_rigid(imu::sensor_pose(sim.kin.shank, sim.shank_mount, t0));
    EXPECT_LT((translation_of(est.rigid.m[i]) - translation_of(truth)).norm(), 1e-4) << i;
    EXPECT_LT((est.joints[i].knee - sim.tracks.knee[t]).norm(), 1e-4) << i;
  }
}

TEST(NoiseSweep, CleanVersusCleanIsZero) {
  auto cfg = small_config("imumoco_test_sweep0");
  const auto sim = simulate_scan(cfg, false);
  const auto a = estimate_motion(sim, sim.shank_imu, sim.thigh_imu);
  const auto b = estimate_motion(sim, sim.shank_imu, sim.thigh_imu);
  const auto e = metrics::motion_rmse(a.rigid, b.rigid);
  EXPECT_EQ(e.translation_mm, 0.0);
  EXPECT_EQ(e.rotation_deg, 0.0);
}

TEST(NoiseSweep, TrendAndTable) {
  auto cfg = small_config("imumoco_test_sweep");
  cfg.sweep.f_a = {0, 4, 5};
  cfg.sweep.f_g = {4, 5, 0};
  const auto sim = simulate_scan(cfg, false);
  const auto cells = noise_sweep(sim, cfg);
  ASSERT_EQ(cells.size(), 9u);
  const auto cell = [&](int fa, int fg) {
    for (const auto& c : cells)
      if (c.f_a == fa && c.f_g == fg) return c.error;
    throw std::runtime_error("missing cell");
  };
  EXPECT_LE(cell(5, 5).translation_mm, cell(4, 4).translation_mm);
  EXPECT_LE(cell(5, 5).rotation_deg, cell(4, 4).rotation_deg);
  EXPECT_GE(cell(0, 0).translation_mm, 1e3 * cell(5, 5).translation_mm);
  const std::string table = sweep_table_csv(cells, cfg.sweep);
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "f_a\\f_g,4,5,0");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '/'), 3) << line;
  }
  EXPECT_EQ(rows, 3);
}

TEST(Pipeline, MetricsTableShape) {
  const auto& cfg = pipeline_run();
  std::istringstream in(read_file(fs::path(cfg.output_dir) / "metrics.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "experiment,method,region,ssim,rmse");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 12);
}

TEST(Pipeline, ManifestArtifactsExistAndParse) {
  const auto& cfg = pipeline_run();
  const fs::path dir(cfg.output_dir);
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  ASSERT_FALSE(manifest.at("artifacts").empty());
  for (const auto& a : manifest.at("artifacts")) {
    const fs::path p = dir / a.at("path").get<std::string>();
    ASSERT_TRUE(fs::exists(p)) << p;
    const std::string kind = a.at("kind");
    const std::string body = read_file(p);
    if (kind == "json") {
      EXPECT_TRUE(json::accept(body)) << p;
    } else if (kind == "csv") {
      EXPECT_NE(body.find('\n'), std::string::npos) << p;
      EXPECT_NE(body.find(','), std::string::npos) << p;
    } else if (kind == "pgm") {
      EXPECT_EQ(body.substr(0, 2), "P5") << p;
    } else if (kind == "raw") {
      const json side = json::parse(read_file(sidecar_path(p.string())));
      std::size_t n = 1;
      if (side.contains("dims"))
        for (const auto& d : side.at("dims")) n *= d.get<std::size_t>();
      else
        n = side.at("views").get<std::size_t>() * side.at("rows").get<std::size_t>() *
            side.at("cols").get<std::size_t>();
      EXPECT_EQ(body.size(), 4 * n) << p;
    } else {
      ADD_FAILURE() << "unknown kind " << kind;
    }
  }
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto& first = pipeline_run();
  auto cfg = first;
  cfg.output_dir = first.output_dir + "_again";
  fs::remove_all(cfg.output_dir);
  stage_simulate(cfg);
  stage_init(cfg);
  stage_correct(cfg);
  stage_reconstruct(cfg);
  stage_evaluate(cfg);
  const fs::path a(first.output_dir), b(cfg.output_dir);
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "motion_rigid.csv"), read_file(b / "motion_rigid.csv"));
}

TEST(Pipeline, CorrectionImprovesOnUncorrected) {
  const auto& cfg = pipeline_run();
  const json m = json::parse(read_file(fs::path(cfg.output_dir) / "metrics.json"));
  double unc = 0.0;
  for (const auto& r : m.at("results"))
    if (r.at("method") == "uncorrected" && r.at("region") == "whole") unc = r.at("ssim");
  for (const auto& r : m.at("results")) {
    if (r.at("method") != "uncorrected" && r.at("region") == "whole") {
      EXPECT_GT(r.at("ssim").get<double>(), unc);
    }
  }
}

TEST(Pipeline, MissingArtifactIsAStageError) {
  auto cfg = small_config("imumoco_test_missing");
  EXPECT_THROW(stage_init(cfg), Error);
}

#ifdef IMUMOCO_CLI_PATH
namespace {
int run_cli(const std::string& args) {
  const std::string cmd = std::string(IMUMOCO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
}  // namespace

TEST(Cli, ExitCodes) {
  const fs::path bad = fs::temp_directory_path() / "imumoco_test_bad_config.json";
  std::ofstream(bad) << R"({"version": 1, "unexpected": true})";
  EXPECT_EQ(run_cli("--config " + bad.string() + " simulate"), 2);
  EXPECT_EQ(run_cli("--profile nonsense simulate"), 2);
  EXPECT_EQ(run_cli("--methods rigid,magic --out /tmp simulate"), 2);
  const fs::path empty = fs::temp_directory_path() / "imumoco_test_cli_empty";
  fs::remove_all(empty);
  EXPECT_EQ(run_cli("--out " + empty.string() + " init"), 3);
  EXPECT_EQ(run_cli("--help"), 0);
}
#endif
