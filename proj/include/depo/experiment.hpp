#pragma once

#include <string>
#include <vector>

#include "depo/config.hpp"
#include "depo/driver.hpp"

namespace depo {

struct ArmAggregate {
  ArmKind arm = ArmKind::kDepo;
  int num_seeds = 0;
  // Cumulative regret at rounds ceil(T/4), ceil(T/2), T.
  double mean_quarter = 0.0, std_quarter = 0.0;
  double mean_half = 0.0, std_half = 0.0;
  double mean_full = 0.0, std_full = 0.0;
};

struct ExperimentResult {
  int exit_code = 0;
  std::vector<std::string> failures;  // hard invariant violations
  std::vector<ArmAggregate> aggregates;
  std::string output_dir;
};

// Runs arms x seeds, writes one CSV + JSON summary per run, per-arm
// aggregates and a cross-arm comparison table under cfg.output_dir.
// `jobs` caps parallel runs; `first_seed_only` restricts to the first seed.
// DEPO_SEED_OVERRIDE (env) replaces the seed list when set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1,
                                bool first_seed_only = false);

// Writes the world fixture for cfg.world; returns the file path.
std::string export_fixture(const ExperimentConfig& cfg);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> problems;
};

// Re-checks trace invariants from a CSV file (plus its .summary.json sidecar
// when present): prefix-sum consistency, regret range, quad-form sign,
// B_t / kappa monotonicity and the elliptical potential bound.
VerifyReport verify_trace_file(const std::string& csv_path);

}  // namespace depo
