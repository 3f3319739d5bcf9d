#include <omp.h>

#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "imumoco/errors.hpp"
#include "imumoco/experiment.hpp"

namespace ex = imumoco::experiment;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> methods;
  std::optional<int> threads;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (const char c : s + ",") {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (c != ' ') {
      item += c;
    }
  }
  return out;
}

ex::ExperimentConfig resolve(const Overrides& o) {
  ex::ExperimentConfig cfg = o.config_path.empty() ? ex::ExperimentConfig{} : ex::load_config(o.config_path);
  if (o.out) cfg.output_dir = *o.out;
  if (o.profile) cfg.profile = *o.profile;
  if (o.seed) cfg.seed = *o.seed;
  if (o.methods) cfg.methods = split_list(*o.methods);
  if (o.threads) cfg.threads = *o.threads;
  ex::validate(cfg);
  return cfg;
}

int run_stage(const char* stage, const Overrides& o, const std::function<void(const ex::ExperimentConfig&)>& fn) {
  ex::ExperimentConfig cfg;
  try {
    cfg = resolve(o);
  } catch (const imumoco::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  try {
    fn(cfg);
  } catch (const imumoco::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const imumoco::StageError& e) {
    std::cerr << "stage " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "stage " << stage << ": " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IMU-based motion compensation for weight-bearing cone-beam CT"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--profile", o.profile, "Geometry profile")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--methods", o.methods, "Comma separated list of uncorrected,rigid,mls2d,mls3d");
  app.add_option("--threads", o.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

  struct Stage {
    const char* name;
    const char* help;
    void (*fn)(const ex::ExperimentConfig&);
  };
  const Stage stages[] = {
      {"simulate", "Phantom, projections, IMU signals and fiducial observations", ex::stage_simulate},
      {"init", "Initial pose and velocity from the first two projections", ex::stage_init},
      {"correct", "Pose tracks, rigid motion series and joint positions", ex::stage_correct},
      {"reconstruct", "Reference and per-method reconstructions", ex::stage_reconstruct},
      {"evaluate", "SSIM and RMSE per method and region", ex::stage_evaluate},
      {"noise-sweep", "Motion error over a grid of IMU noise levels", ex::stage_noise_sweep},
      {"pipeline", "All stages and a manifest", ex::run_pipeline},
  };
  int status = 0;
  for (const auto& s : stages) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->callback([&status, &o, s] { status = run_stage(s.name, o, s.fn); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  return status;
}
