#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "depo/experiment.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& output_override, int jobs,
                bool first_seed_only) {
  depo::ExperimentConfig cfg = depo::parse_config(config_path);
  if (!output_override.empty()) cfg.output_dir = output_override;
  const depo::ExperimentResult result = depo::run_experiment(cfg, jobs, first_seed_only);
  for (const auto& agg : result.aggregates) {
    std::printf("%-14s seeds=%-3d cum_regret: T/4 %.4f +- %.4f | T/2 %.4f +- %.4f | T %.4f +- %.4f\n",
                depo::arm_name(agg.arm).c_str(), agg.num_seeds, agg.mean_quarter,
                agg.std_quarter, agg.mean_half, agg.std_half, agg.mean_full, agg.std_full);
  }
  if (!result.failures.empty()) {
    std::printf("hard invariant failures:\n");
    for (const auto& f : result.failures) std::printf("  %s\n", f.c_str());
  }
  std::printf("artifacts written to %s\n", result.output_dir.c_str());
  return result.exit_code;
}

int verify_command(const std::string& trace_path) {
  const depo::VerifyReport report = depo::verify_trace_file(trace_path);
  if (report.ok) {
    std::printf("%s: all invariants hold\n", trace_path.c_str());
    return 0;
  }
  for (const auto& p : report.problems) std::printf("%s: %s\n", trace_path.c_str(), p.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEPO synthetic preference-optimization simulator"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string output_override;
  std::string verify_only;
  int jobs = 1;

  app.add_option("--verify-only", verify_only, "Verify invariants of a trace CSV and exit");

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "Experiment config file");
    if (config_required) opt->required();
    sub->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
    sub->add_option("--output", output_override, "Override the configured output directory");
  };

  CLI::App* run = app.add_subcommand("run", "Run the configured arms on the first seed");
  add_common(run, true);
  CLI::App* sweep = app.add_subcommand("sweep", "Run the full arms x seeds grid and aggregate");
  add_common(sweep, true);
  CLI::App* export_world = app.add_subcommand("export-world", "Write the world fixture file");
  add_common(export_world, true);
  CLI::App* verify = app.add_subcommand("verify", "Verify invariants of a trace CSV");
  std::string verify_path;
  verify->add_option("trace", verify_path, "Trace CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (!verify_only.empty()) return verify_command(verify_only);
    if (app.got_subcommand("run")) return run_command(config_path, output_override, jobs, true);
    if (app.got_subcommand("sweep")) return run_command(config_path, output_override, jobs, false);
    if (app.got_subcommand("export-world")) {
      depo::ExperimentConfig cfg = depo::parse_config(config_path);
      if (!output_override.empty()) cfg.output_dir = output_override;
      const std::string path = depo::export_fixture(cfg);
      std::printf("world fixture written to %s\n", path.c_str());
      return 0;
    }
    if (app.got_subcommand("verify")) return verify_command(verify_path);
    std::printf("%s", app.help().c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
