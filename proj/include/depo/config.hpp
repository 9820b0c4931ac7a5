#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "depo/driver.hpp"
#include "depo/world.hpp"

namespace depo {

// All constraint violations found in a config file, not just the first.
struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> violations_in);
  std::vector<std::string> violations;
};

struct WorldConfig {
  int M = 16;
  int K = 4;
  int d = 4;
  int raw_dim = 0;
  double S = 3.5;
  double R_max = 7.0;
  FeatureGenerator generator = FeatureGenerator::kGaussian;
  std::uint64_t seed = 42;
};

struct TrainConfigSection {
  int T = 2000;
  double beta = 0.03;
  double alpha = -1.0;       // ignored when alpha_sqrt_T
  bool alpha_sqrt_T = true;  // "sqrtT": resolves to ceil(sqrt(T))
  double lambda = 1.0;
  int H = 50;
  double c_b = 0.02;
  double epsilon = 1e-3;
  int buffer_capacity = 512;
  int gd_steps = 50;
  double gd_lr = 0.5;
  double delta = 0.1;
  WidthMode width_mode = WidthMode::kProxy;
  ObjectiveMode objective_mode = ObjectiveMode::kExactBonus;
  bool pre_update_radius = false;
  bool track_refreshed_regret = false;
  int probe_pairs = 0;
};

struct ExperimentConfig {
  WorldConfig world;
  TrainConfigSection train;
  std::vector<ArmKind> arms{ArmKind::kDepo};
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "depo_out";
};

// Parses the key = value section file at `path`; throws ConfigError listing
// every violated constraint. An empty file yields the defaults.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// "sqrtT" resolves to ceil(sqrt(T)).
double resolved_alpha(const TrainConfigSection& train);

// Materializes the world section: theta_plus is drawn from the world seed
// with ||theta*||_2 = S (so ||theta_plus||_2 = S / sqrt(2)).
WorldSpec world_spec_from_config(const WorldConfig& wc);

RunConfig run_config_from(const ExperimentConfig& cfg);

}  // namespace depo
