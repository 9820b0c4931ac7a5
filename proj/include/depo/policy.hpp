#pragma once

#include <functional>
#include <vector>

#include "depo/estimator.hpp"
#include "depo/mathcore.hpp"
#include "depo/world.hpp"

namespace depo {

// Tabular softmax policy over M finite response pools of size K.
// pi(k|m) = softmax(logits[m, .])[k]; probabilities are always positive.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(int num_prompts, int pool_size);
  static SoftmaxPolicy uniform(int num_prompts, int pool_size);

  int num_prompts() const { return static_cast<int>(logits_.rows()); }
  int pool_size() const { return static_cast<int>(logits_.cols()); }
  const Mat& logits() const { return logits_; }
  void set_logits(const Mat& logits);

  double log_prob(int prompt, int response) const;
  double prob(int prompt, int response) const;
  Vec probs(int prompt) const;

  // Subtracts the row max from each logit row; the induced distribution is
  // unchanged.
  void recenter_rows();

 private:
  Mat logits_;
};

struct PolicyTriple {
  SoftmaxPolicy current;
  SoftmaxPolicy reference;
  SoftmaxPolicy sampler;
};

struct TrainConfig {
  double beta = 0.03;       // KL coefficient
  double alpha = 0.0;       // exploration weight
  int refresh_interval = 50;  // H
  int gd_steps = 50;
  double gd_lr = 0.5;
};

// m_pi(x; y, y') = log pi(y|x)/pi_ref(y|x) - log pi(y'|x)/pi_ref(y'|x),
// evaluated in log space.
double margin(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref, int prompt, int y,
              int yprime);

// sum_i log sigma(beta * m_pi(x_i; y_i^w, y_i^l)); higher is better.
double dpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                const std::vector<PreferenceRecord>& dataset, double beta);

// Exploration pair drawn each round: the sampler's response y' and the pair
// feature in the as-generated orientation (y first).
struct SampledPair {
  int prompt_id = 0;
  int y = 0;
  int yprime = 0;
  PairFeature psi;
};

// Exact expectation of sigma(beta m + b) over x ~ rho, y ~ pi, y' ~ sampler;
// full enumeration, budget M*K^2 <= 1e6.
double depo_exact_bonus(const SoftmaxPolicy& policy, const SoftmaxPolicy& sampler,
                        const SoftmaxPolicy& ref, const World& world,
                        const CovarianceState& state, double width, double beta);

// Training objective: dpo_loss over the dataset plus
// alpha * sum_s sigma(beta log pi(y'_s|x_s)/pi_ref(y'_s|x_s) + width*radius_s).
// With alpha == 0 this returns dpo_loss exactly.
double depo_pruned_objective(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                             const std::vector<PreferenceRecord>& dataset,
                             const std::vector<SampledPair>& sampled_pairs,
                             const CovarianceState& state, double width, double alpha,
                             double beta);

// Callable objective over logits; fills *grad (same shape as logits) when the
// pointer is non-null.
using PolicyObjective = std::function<double(const SoftmaxPolicy&, Mat* grad)>;

// Builds the pruned-objective closure with the per-pair bonuses frozen at the
// current covariance state (they do not depend on the policy).
PolicyObjective make_pruned_objective(const SoftmaxPolicy& ref,
                                      const std::vector<PreferenceRecord>& dataset,
                                      const std::vector<SampledPair>& sampled_pairs,
                                      const CovarianceState& state, double width,
                                      double alpha, double beta);

// Training objective with the exact exploration expectation:
// dpo_loss(dataset) + alpha * E_{x,y~pi,y'~sampler}[sigma(beta m + b)],
// enumerated over the world's pools with the per-pair bonuses frozen.
PolicyObjective make_exact_objective(const SoftmaxPolicy& ref, const SoftmaxPolicy& sampler,
                                     const std::vector<PreferenceRecord>& dataset,
                                     const World& world, const CovarianceState& state,
                                     double width, double alpha, double beta);

struct OptimizeResult {
  SoftmaxPolicy policy;
  double objective = 0.0;
  int steps_taken = 0;
  bool aborted = false;  // non-finite gradient encountered
};

// Plain gradient ascent on the logits with per-step backtracking (halve the
// step on objective decrease, at most 20 halvings); rows are re-centered
// after every accepted step. The reported objective never decreases across
// the call.
OptimizeResult optimize_policy(const SoftmaxPolicy& start, const PolicyObjective& objective,
                               const TrainConfig& cfg);

// Start-of-round sampler refresh: at t with (t-1) % H == 0 the sampler
// becomes a snapshot of the current policy; otherwise unchanged.
void refresh_sampler(PolicyTriple& triple, int t, int refresh_interval);

}  // namespace depo
