#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "depo/estimator.hpp"
#include "depo/policy.hpp"
#include "depo/world.hpp"

namespace depo {

enum class ArmKind { kDepo, kPassive, kUniformBonus };

std::string arm_name(ArmKind arm);
ArmKind arm_from_name(const std::string& name);

// Which width multiplies the elliptical radius in the training objective:
// the empirical proxy gamma_t, the self-normalized width with the true-theta
// curvature (simulation diagnostic), or the same width with the plug-in
// curvature from theta_hat (implementable without theta*).
enum class WidthMode { kProxy, kTheoretical, kPlugin };

// Shape of the exploration term in the per-round policy update: the exact
// expectation E_{y~pi, y'~sampler}[sigma(beta m + b)] or the historical-sum
// surrogate over collected pairs.
enum class ObjectiveMode { kExactBonus, kPruned };

struct RunConfig {
  int T = 2000;
  double beta = 0.03;
  double alpha = 0.0;
  double lambda = 1.0;
  int refresh_interval = 50;  // H
  double c_b = 0.02;
  double epsilon = 1e-3;
  int buffer_capacity = 512;
  int gd_steps = 50;
  double gd_lr = 0.5;
  double delta = 0.1;
  WidthMode width_mode = WidthMode::kProxy;
  ObjectiveMode objective_mode = ObjectiveMode::kExactBonus;
  // When set, the empirical radius and objective bonuses use the covariance
  // state from before the round's rank-1 update instead of after it.
  bool pre_update_radius = false;
  // Also track regret against the refreshed sampler (extra CSV columns).
  bool track_refreshed_regret = false;
  // When positive, a fixed probe set of this many (x, y, y') triples is
  // checked against the Lemma-style confidence band every round.
  int probe_pairs = 0;
};

struct RoundRecord {
  int t = 0;
  int prompt_id = 0;
  int y = 0;
  int yprime = 0;
  int winner = 0;
  double regret_inc = 0.0;
  double cum_regret = 0.0;
  double regret_inc_refreshed = 0.0;
  double cum_regret_refreshed = 0.0;
  double bonus = 0.0;        // training bonus applied to this round's pair
  double r_bar = 0.0;
  double width_gamma = 0.0;
  double beta_conf_true = 0.0;
  double kappa_true = 0.25;
  double B_t = 0.0;
  double lambda_min = 0.0;   // smallest eigenvalue of V_t
  double quad_form = 0.0;    // psi_t^T V_{t-1}^{-1} psi_t (pre-update)
  bool coverage_ok = true;
  double objective = 0.0;
};

struct RunTrace {
  std::vector<RoundRecord> rounds;
  double cumulative_regret = 0.0;
  double cumulative_regret_refreshed = 0.0;
  double potential_sum = 0.0;
  RunConfig config;
  ArmKind arm = ArmKind::kDepo;
  std::uint64_t seed = 0;
  int pair_dim = 0;  // ambient dimension D of psi

  int coverage_violations = 0;
  int probe_violation_rounds = 0;
  long psi_norm_warnings = 0;
  bool policy_update_aborted = false;
  double diversity_initial = 0.0;   // gamma of the uniform start policies
  double final_lambda_min = 0.0;
  Mat final_logits;

  double cum_regret_at(int t) const;  // prefix cumulative regret at round t
};

// Deterministic argmax-reward policy; ties break toward the smallest id.
struct ComparatorPolicy {
  std::vector<int> best_response;
};

ComparatorPolicy comparator_policy(const World& world);

// Exact one-round preference regret of pi against the comparator, both judged
// versus the sampler: E[P*(y* > y'|x) - P*(y_t > y'|x)] by full enumeration.
double regret_increment(const World& world, const ComparatorPolicy& pi_star,
                        const SoftmaxPolicy& pi, const SoftmaxPolicy& sampler);

// Smallest eigenvalue of the exact pair-feature second moment
// E_{x~rho, y~pi, y'~sampler}[psi psi^T].
double diversity_gamma(const World& world, const SoftmaxPolicy& pi,
                       const SoftmaxPolicy& sampler);

RunTrace run_depo(const World& world, const RunConfig& cfg, std::uint64_t seed);
RunTrace run_baseline(const World& world, const RunConfig& cfg, std::uint64_t seed,
                      ArmKind mode);

struct DecompositionReport {
  double cumulative_regret = 0.0;
  double bonus_quarter_sum = 0.0;  // (1/4) sum of per-round bonuses
  double ratio = 0.0;              // regret / bonus term (0 when undefined)
  double potential_sum = 0.0;
  double potential_bound = 0.0;    // 2 D log(1 + T / (lambda D))
  bool potential_ok = true;
  std::vector<int> violating_rounds;  // prefix potential above the running bound
};

DecompositionReport decomposition_report(const RunTrace& trace, double alpha);

// CSV schema (17 columns, LF endings, %.17g floats):
// t,prompt_id,y,yprime,winner,regret_inc,cum_regret,bonus,r_bar,width_gamma,
// beta_conf_true,kappa_true,B_t,lambda_min,quad_form,coverage_ok,objective
// plus two refreshed-regret columns when the run tracked them.
void write_trace_csv(const RunTrace& trace, std::ostream& out);
std::string trace_csv(const RunTrace& trace);

}  // namespace depo
