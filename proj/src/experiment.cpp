#include "depo/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace depo {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json config_echo(const ExperimentConfig& cfg) {
  json j;
  j["world"] = {{"M", cfg.world.M},
                {"K", cfg.world.K},
                {"d", cfg.world.d},
                {"raw_dim", cfg.world.raw_dim},
                {"S", cfg.world.S},
                {"R_max", cfg.world.R_max},
                {"generator", generator_name(cfg.world.generator)},
                {"seed", cfg.world.seed}};
  j["train"] = {{"T", cfg.train.T},
                {"beta", cfg.train.beta},
                {"alpha", resolved_alpha(cfg.train)},
                {"alpha_mode", cfg.train.alpha_sqrt_T ? "sqrtT" : "fixed"},
                {"lambda", cfg.train.lambda},
                {"H", cfg.train.H},
                {"c_b", cfg.train.c_b},
                {"epsilon", cfg.train.epsilon},
                {"buffer_capacity", cfg.train.buffer_capacity},
                {"gd_steps", cfg.train.gd_steps},
                {"gd_lr", cfg.train.gd_lr},
                {"delta", cfg.train.delta},
                {"width_mode",
                 cfg.train.width_mode == WidthMode::kProxy
                     ? "proxy"
                     : (cfg.train.width_mode == WidthMode::kTheoretical ? "theoretical"
                                                                        : "plugin")},
                {"objective",
                 cfg.train.objective_mode == ObjectiveMode::kExactBonus ? "exact" : "pruned"},
                {"pre_update_radius", cfg.train.pre_update_radius},
                {"track_refreshed_regret", cfg.train.track_refreshed_regret},
                {"probe_pairs", cfg.train.probe_pairs}};
  std::vector<std::string> arm_names;
  for (auto a : cfg.arms) arm_names.push_back(arm_name(a));
  j["arms"] = arm_names;
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  return j;
}

json trace_summary(const RunTrace& trace, const ExperimentConfig& cfg,
                   const std::string& csv_text) {
  const DecompositionReport report = decomposition_report(trace, trace.config.alpha);
  const int T = static_cast<int>(trace.rounds.size());
  const int quarter = (T + 3) / 4;
  const int half = (T + 1) / 2;

  json j;
  j["arm"] = arm_name(trace.arm);
  j["seed"] = trace.seed;
  j["config"] = config_echo(cfg);
  j["pair_dim"] = trace.pair_dim;
  j["rounds"] = T;
  j["cumulative_regret"] = trace.cumulative_regret;
  j["cum_regret_quarter"] = trace.cum_regret_at(quarter);
  j["cum_regret_half"] = trace.cum_regret_at(half);
  if (trace.config.track_refreshed_regret) {
    j["cumulative_regret_refreshed"] = trace.cumulative_regret_refreshed;
  }
  j["potential_sum"] = report.potential_sum;
  j["potential_bound"] = report.potential_bound;
  j["potential_ok"] = report.potential_ok;
  j["bonus_quarter_sum"] = report.bonus_quarter_sum;
  j["decomposition_ratio"] = report.ratio;
  j["coverage_violations"] = trace.coverage_violations;
  j["probe_violation_rounds"] = trace.probe_violation_rounds;
  j["psi_norm_warnings"] = trace.psi_norm_warnings;
  j["policy_update_aborted"] = trace.policy_update_aborted;
  j["diversity_initial"] = trace.diversity_initial;
  j["final_lambda_min"] = trace.final_lambda_min;
  j["trace_hash"] = hex64(fnv1a(csv_text));

  // Final policy snapshot for post-hoc inspection.
  std::vector<std::vector<double>> logits;
  for (int r = 0; r < trace.final_logits.rows(); ++r) {
    std::vector<double> row;
    for (int c = 0; c < trace.final_logits.cols(); ++c) row.push_back(trace.final_logits(r, c));
    logits.push_back(std::move(row));
  }
  j["final_policy_logits"] = logits;
  return j;
}

struct JobResult {
  ArmKind arm;
  std::uint64_t seed;
  RunTrace trace;
  std::vector<std::string> failures;
};

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs, bool first_seed_only) {
  ExperimentResult result;
  result.output_dir = cfg.output_dir;

  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (const char* override_env = std::getenv("DEPO_SEED_OVERRIDE")) {
    try {
      std::size_t pos = 0;
      const std::uint64_t s = std::stoull(override_env, &pos);
      if (pos != std::string(override_env).size()) throw std::invalid_argument("trailing");
      seeds = {s};
    } catch (const std::exception&) {
      throw ConfigError({"DEPO_SEED_OVERRIDE: not an integer (got '" +
                         std::string(override_env) + "')"});
    }
  }
  if (first_seed_only && seeds.size() > 1) seeds.resize(1);

  std::filesystem::create_directories(cfg.output_dir);
  const World world = build_world(world_spec_from_config(cfg.world));
  const RunConfig rc = run_config_from(cfg);

  struct Job {
    ArmKind arm;
    std::uint64_t seed;
  };
  std::vector<Job> queue;
  for (auto arm : cfg.arms) {
    for (auto seed : seeds) queue.push_back({arm, seed});
  }

  std::vector<JobResult> results(queue.size());
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::vector<std::string> failures;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queue.size()) break;
      const Job& job = queue[i];
      JobResult jr;
      jr.arm = job.arm;
      jr.seed = job.seed;
      try {
        jr.trace = run_baseline(world, rc, job.seed, job.arm);
        const DecompositionReport report = decomposition_report(jr.trace, rc.alpha);
        if (!report.potential_ok) {
          jr.failures.push_back("elliptical potential bound violated: arm=" +
                                arm_name(job.arm) + " seed=" + std::to_string(job.seed) +
                                " sum=" + std::to_string(report.potential_sum) + " bound=" +
                                std::to_string(report.potential_bound));
        }
        if (jr.trace.policy_update_aborted) {
          jr.failures.push_back("policy update aborted (non-finite gradient): arm=" +
                                arm_name(job.arm) + " seed=" + std::to_string(job.seed));
        }
      } catch (const std::exception& e) {
        jr.failures.push_back(std::string("run failed: ") + e.what());
      }
      results[i] = std::move(jr);
    }
  };

  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(queue.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Serialize artifacts after the join barrier; writes are per (arm, seed).
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const JobResult& jr = results[i];
    for (const auto& f : jr.failures) failures.push_back(f);
    if (jr.trace.rounds.empty() && !jr.failures.empty()) continue;

    const std::string stem =
        cfg.output_dir + "/" + arm_name(jr.arm) + "_" + std::to_string(jr.seed);
    const std::string csv = trace_csv(jr.trace);
    {
      std::ofstream f(stem + ".csv", std::ios::binary);
      f << csv;
      if (!f) failures.push_back("I/O failure writing " + stem + ".csv");
    }
    {
      std::ofstream f(stem + ".summary.json", std::ios::binary);
      f << trace_summary(jr.trace, cfg, csv).dump(2) << "\n";
      if (!f) failures.push_back("I/O failure writing " + stem + ".summary.json");
    }
  }

  // Per-arm aggregates.
  std::vector<std::pair<ArmKind, std::vector<const RunTrace*>>> by_arm;
  for (auto arm : cfg.arms) {
    std::vector<const RunTrace*> traces;
    for (std::size_t i = 0; i < queue.size(); ++i) {
      if (queue[i].arm == arm && results[i].failures.empty()) traces.push_back(&results[i].trace);
    }
    by_arm.push_back({arm, traces});
  }

  const int T = rc.T;
  const int quarter = (T + 3) / 4;
  const int half = (T + 1) / 2;
  for (const auto& [arm, traces] : by_arm) {
    ArmAggregate agg;
    agg.arm = arm;
    agg.num_seeds = static_cast<int>(traces.size());
    std::vector<double> q, h, f;
    for (const RunTrace* tr : traces) {
      q.push_back(tr->cum_regret_at(quarter));
      h.push_back(tr->cum_regret_at(half));
      f.push_back(tr->cumulative_regret);
    }
    agg.mean_quarter = mean_of(q);
    agg.std_quarter = std_of(q);
    agg.mean_half = mean_of(h);
    agg.std_half = std_of(h);
    agg.mean_full = mean_of(f);
    agg.std_full = std_of(f);
    result.aggregates.push_back(agg);

    json ja;
    ja["arm"] = arm_name(arm);
    ja["seeds"] = agg.num_seeds;
    ja["config"] = config_echo(cfg);
    ja["checkpoints"] = {{"quarter_round", quarter}, {"half_round", half}, {"full_round", T}};
    ja["cum_regret_quarter"] = {{"mean", agg.mean_quarter}, {"std", agg.std_quarter}};
    ja["cum_regret_half"] = {{"mean", agg.mean_half}, {"std", agg.std_half}};
    ja["cum_regret_full"] = {{"mean", agg.mean_full}, {"std", agg.std_full}};
    std::ofstream f_out(cfg.output_dir + "/" + arm_name(arm) + "_aggregate.json",
                        std::ios::binary);
    f_out << ja.dump(2) << "\n";
  }

  // Cross-arm comparison table (CSV) plus paired-seed wins against depo.
  {
    std::ostringstream table;
    table << "arm,seeds,mean_cum_regret_quarter,std_quarter,mean_cum_regret_half,std_half,"
             "mean_cum_regret_full,std_full,depo_wins_vs_arm,paired_seeds\n";
    const std::vector<const RunTrace*>* depo_traces = nullptr;
    for (const auto& [arm, traces] : by_arm) {
      if (arm == ArmKind::kDepo) depo_traces = &traces;
    }
    for (const auto& [arm, traces] : by_arm) {
      const ArmAggregate* agg = nullptr;
      for (const auto& a : result.aggregates) {
        if (a.arm == arm) agg = &a;
      }
      if (agg == nullptr) continue;
      int wins = 0;
      int paired = 0;
      if (depo_traces != nullptr && arm != ArmKind::kDepo) {
        for (const RunTrace* dt : *depo_traces) {
          for (const RunTrace* bt : traces) {
            if (bt->seed == dt->seed) {
              ++paired;
              if (dt->cumulative_regret <= bt->cumulative_regret) ++wins;
            }
          }
        }
      }
      char line[512];
      std::snprintf(line, sizeof(line), "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n",
                    arm_name(arm).c_str(), agg->num_seeds, agg->mean_quarter, agg->std_quarter,
                    agg->mean_half, agg->std_half, agg->mean_full, agg->std_full, wins, paired);
      table << line;
    }
    std::ofstream f(cfg.output_dir + "/comparison.csv", std::ios::binary);
    f << table.str();
  }

  result.failures = failures;
  result.exit_code = failures.empty() ? 0 : 1;
  return result;
}

std::string export_fixture(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  const World world = build_world(world_spec_from_config(cfg.world));
  const std::string path = cfg.output_dir + "/world.txt";
  save_world(world, path);
  return path;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

VerifyReport verify_trace_file(const std::string& csv_path) {
  VerifyReport report;
  std::ifstream f(csv_path);
  if (!f) {
    report.ok = false;
    report.problems.push_back("cannot open " + csv_path);
    return report;
  }
  std::string header;
  std::getline(f, header);
  const std::vector<std::string> cols = split_csv_line(header);
  auto col_index = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int c_t = col_index("t");
  const int c_inc = col_index("regret_inc");
  const int c_cum = col_index("cum_regret");
  const int c_quad = col_index("quad_form");
  const int c_kappa = col_index("kappa_true");
  const int c_B = col_index("B_t");
  if (c_t < 0 || c_inc < 0 || c_cum < 0 || c_quad < 0 || c_kappa < 0 || c_B < 0) {
    report.ok = false;
    report.problems.push_back("missing required CSV columns in " + csv_path);
    return report;
  }

  double prefix = 0.0;
  double potential = 0.0;
  double prev_B = -1.0;
  double prev_kappa = 1.0;
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    ++rows;
    const int t = std::stoi(fields[c_t]);
    const double inc = std::stod(fields[c_inc]);
    const double cum = std::stod(fields[c_cum]);
    const double quad = std::stod(fields[c_quad]);
    const double kappa = std::stod(fields[c_kappa]);
    const double B = std::stod(fields[c_B]);

    if (inc < -1.0 || inc > 1.0) {
      report.problems.push_back("round " + std::to_string(t) + ": regret_inc outside [-1, 1]");
    }
    prefix += inc;
    if (std::abs(prefix - cum) > 1e-9) {
      report.problems.push_back("round " + std::to_string(t) +
                                ": cum_regret deviates from prefix sum of increments");
    }
    if (quad < 0.0) {
      report.problems.push_back("round " + std::to_string(t) + ": quad_form negative");
    }
    potential += quad;
    if (prev_B >= 0.0 && B < prev_B - 1e-12) {
      report.problems.push_back("round " + std::to_string(t) + ": B_t decreased");
    }
    if (kappa > prev_kappa + 1e-12) {
      report.problems.push_back("round " + std::to_string(t) + ": kappa_true increased");
    }
    prev_B = B;
    prev_kappa = kappa;
  }

  // Potential bound needs lambda and D from the sidecar.
  const std::string sidecar =
      csv_path.size() > 4 ? csv_path.substr(0, csv_path.size() - 4) + ".summary.json" : "";
  std::ifstream sf(sidecar);
  if (sf) {
    try {
      json j;
      sf >> j;
      const double lambda = j["config"]["train"]["lambda"].get<double>();
      const int dd = j["pair_dim"].get<int>();
      if (rows > 0 && dd > 0) {
        const double bound =
            2.0 * dd * std::log(1.0 + static_cast<double>(rows) / (lambda * dd));
        if (potential > bound) {
          report.problems.push_back("elliptical potential sum " + std::to_string(potential) +
                                    " exceeds bound " + std::to_string(bound));
        }
      }
    } catch (const std::exception& e) {
      report.problems.push_back(std::string("sidecar parse failure: ") + e.what());
    }
  }

  report.ok = report.problems.empty();
  return report;
}

}  // namespace depo
