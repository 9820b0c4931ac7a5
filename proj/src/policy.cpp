#include "depo/policy.hpp"

#include <cmath>
#include <memory>

namespace depo {

namespace {

double log_sum_exp_row(const Mat& logits, int row) {
  const double m = logits.row(row).maxCoeff();
  double acc = 0.0;
  for (int k = 0; k < logits.cols(); ++k) {
    acc += std::exp(logits(row, k) - m);
  }
  return m + std::log(acc);
}

}  // namespace

SoftmaxPolicy::SoftmaxPolicy(int num_prompts, int pool_size) {
  if (num_prompts <= 0 || pool_size <= 0) {
    throw std::invalid_argument("SoftmaxPolicy: dimensions must be positive");
  }
  logits_ = Mat::Zero(num_prompts, pool_size);
}

SoftmaxPolicy SoftmaxPolicy::uniform(int num_prompts, int pool_size) {
  return SoftmaxPolicy(num_prompts, pool_size);
}

void SoftmaxPolicy::set_logits(const Mat& logits) {
  if (!logits.allFinite()) throw std::invalid_argument("SoftmaxPolicy: non-finite logits");
  logits_ = logits;
}

double SoftmaxPolicy::log_prob(int prompt, int response) const {
  return logits_(prompt, response) - log_sum_exp_row(logits_, prompt);
}

double SoftmaxPolicy::prob(int prompt, int response) const {
  return std::exp(log_prob(prompt, response));
}

Vec SoftmaxPolicy::probs(int prompt) const {
  const double lse = log_sum_exp_row(logits_, prompt);
  Vec p(pool_size());
  for (int k = 0; k < pool_size(); ++k) {
    p[k] = std::exp(logits_(prompt, k) - lse);
  }
  return p;
}

void SoftmaxPolicy::recenter_rows() {
  for (int m = 0; m < logits_.rows(); ++m) {
    logits_.row(m).array() -= logits_.row(m).maxCoeff();
  }
}

double margin(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref, int prompt, int y,
              int yprime) {
  return (policy.log_prob(prompt, y) - ref.log_prob(prompt, y)) -
         (policy.log_prob(prompt, yprime) - ref.log_prob(prompt, yprime));
}

double dpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                const std::vector<PreferenceRecord>& dataset, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("dpo_loss: beta must be positive");
  double total = 0.0;
  for (const auto& rec : dataset) {
    total += log_sigmoid(beta * margin(policy, ref, rec.prompt_id, rec.winner_id,
                                       rec.loser_id));
  }
  return total;
}

double depo_exact_bonus(const SoftmaxPolicy& policy, const SoftmaxPolicy& sampler,
                        const SoftmaxPolicy& ref, const World& world,
                        const CovarianceState& state, double width, double beta) {
  const int m = world.num_prompts();
  const int k = world.pool_size();
  const long budget = static_cast<long>(m) * k * k;
  if (budget > 1000000L) {
    throw ConfigurationError("depo_exact_bonus: enumeration budget M*K^2 exceeded");
  }
  double total = 0.0;
  for (int x = 0; x < m; ++x) {
    const double rho = world.prompt_weights()[x];
    const Vec pi_probs = policy.probs(x);
    const Vec sam_probs = sampler.probs(x);
    for (int y = 0; y < k; ++y) {
      for (int yp = 0; yp < k; ++yp) {
        const double b = bonus(pair_feature(world, x, y, yp), state, width);
        const double inner = beta * margin(policy, ref, x, y, yp) + b;
        total += rho * pi_probs[y] * sam_probs[yp] * sigmoid(inner);
      }
    }
  }
  return total;
}

namespace {

// Precomputed per-record constants: the margin and bonus pieces that do not
// depend on the policy being optimized. Records sharing a (prompt, y, y')
// triple contribute identical terms, so they are aggregated with counts and
// each evaluation costs O(M K^2) instead of O(t).
struct FrozenObjective {
  int num_prompts;
  int pool_size;
  double alpha;
  double beta;
  struct DpoTerm {
    int prompt;
    int winner;
    int loser;
    double ref_margin;  // log pi_ref(w|x) - log pi_ref(l|x)
    double count;
  };
  struct BonusTerm {
    int prompt;
    int yprime;
    double ref_log_prob;  // log pi_ref(y'|x)
    double bonus;
    double count;
  };
  std::vector<DpoTerm> dpo_terms;
  std::vector<BonusTerm> bonus_terms;

  double eval(const SoftmaxPolicy& policy, Mat* grad) const {
    const int m = num_prompts;
    const int k = pool_size;
    if (grad != nullptr) grad->setZero(m, k);

    // Per-prompt log partition (and probabilities when the gradient or the
    // bonus term needs them).
    Vec lse(m);
    for (int x = 0; x < m; ++x) {
      const double row_max = policy.logits().row(x).maxCoeff();
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += std::exp(policy.logits()(x, j) - row_max);
      lse[x] = row_max + std::log(acc);
    }

    double total = 0.0;
    for (const auto& term : dpo_terms) {
      const double m_pi = policy.logits()(term.prompt, term.winner) -
                          policy.logits()(term.prompt, term.loser) - term.ref_margin;
      const double a = beta * m_pi;
      total += term.count * log_sigmoid(a);
      if (grad != nullptr) {
        const double g = term.count * beta * sigmoid(-a);
        (*grad)(term.prompt, term.winner) += g;
        (*grad)(term.prompt, term.loser) -= g;
      }
    }

    if (alpha == 0.0) return total;

    Mat probs;
    if (grad != nullptr) {
      probs.resize(m, k);
      for (int x = 0; x < m; ++x) {
        for (int j = 0; j < k; ++j) {
          probs(x, j) = std::exp(policy.logits()(x, j) - lse[x]);
        }
      }
    }

    double bonus_total = 0.0;
    for (const auto& term : bonus_terms) {
      const double log_ratio =
          policy.logits()(term.prompt, term.yprime) - lse[term.prompt] - term.ref_log_prob;
      const double inner = beta * log_ratio + term.bonus;
      bonus_total += term.count * sigmoid(inner);
      if (grad != nullptr) {
        const double g = term.count * alpha * sigmoid_prime(inner) * beta;
        grad->row(term.prompt) -= g * probs.row(term.prompt);
        (*grad)(term.prompt, term.yprime) += g;
      }
    }
    return total + alpha * bonus_total;
  }
};

FrozenObjective freeze_objective(const SoftmaxPolicy& ref,
                                 const std::vector<PreferenceRecord>& dataset,
                                 const std::vector<SampledPair>& sampled_pairs,
                                 const CovarianceState& state, double width, double alpha,
                                 double beta) {
  FrozenObjective frozen;
  const int k = ref.pool_size();
  frozen.num_prompts = ref.num_prompts();
  frozen.pool_size = k;
  frozen.alpha = alpha;
  frozen.beta = beta;

  std::vector<double> dpo_counts(static_cast<std::size_t>(frozen.num_prompts) * k * k, 0.0);
  for (const auto& rec : dataset) {
    dpo_counts[(static_cast<std::size_t>(rec.prompt_id) * k + rec.winner_id) * k +
               rec.loser_id] += 1.0;
  }
  for (int x = 0; x < frozen.num_prompts; ++x) {
    for (int w = 0; w < k; ++w) {
      for (int l = 0; l < k; ++l) {
        const double count = dpo_counts[(static_cast<std::size_t>(x) * k + w) * k + l];
        if (count > 0.0) {
          frozen.dpo_terms.push_back(
              {x, w, l, ref.log_prob(x, w) - ref.log_prob(x, l), count});
        }
      }
    }
  }
  if (alpha != 0.0) {
    // The per-pair bonus depends only on psi(x, y, y'), identical across
    // repeats of the same triple.
    std::vector<double> pair_counts(static_cast<std::size_t>(frozen.num_prompts) * k * k, 0.0);
    std::vector<const SampledPair*> first_seen(pair_counts.size(), nullptr);
    for (const auto& pair : sampled_pairs) {
      const std::size_t idx =
          (static_cast<std::size_t>(pair.prompt_id) * k + pair.y) * k + pair.yprime;
      pair_counts[idx] += 1.0;
      if (first_seen[idx] == nullptr) first_seen[idx] = &pair;
    }
    for (std::size_t idx = 0; idx < pair_counts.size(); ++idx) {
      if (pair_counts[idx] == 0.0) continue;
      const SampledPair& pair = *first_seen[idx];
      frozen.bonus_terms.push_back({pair.prompt_id, pair.yprime,
                                    ref.log_prob(pair.prompt_id, pair.yprime),
                                    bonus(pair.psi, state, width), pair_counts[idx]});
    }
  }
  return frozen;
}

}  // namespace

double depo_pruned_objective(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                             const std::vector<PreferenceRecord>& dataset,
                             const std::vector<SampledPair>& sampled_pairs,
                             const CovarianceState& state, double width, double alpha,
                             double beta) {
  if (alpha < 0.0) throw std::invalid_argument("depo_pruned_objective: alpha must be >= 0");
  const double dpo = dpo_loss(policy, ref, dataset, beta);
  if (alpha == 0.0) return dpo;
  double bonus_sum = 0.0;
  for (const auto& pair : sampled_pairs) {
    const double log_ratio = policy.log_prob(pair.prompt_id, pair.yprime) -
                             ref.log_prob(pair.prompt_id, pair.yprime);
    bonus_sum += sigmoid(beta * log_ratio + bonus(pair.psi, state, width));
  }
  return dpo + alpha * bonus_sum;
}

PolicyObjective make_pruned_objective(const SoftmaxPolicy& ref,
                                      const std::vector<PreferenceRecord>& dataset,
                                      const std::vector<SampledPair>& sampled_pairs,
                                      const CovarianceState& state, double width,
                                      double alpha, double beta) {
  auto frozen = std::make_shared<FrozenObjective>(
      freeze_objective(ref, dataset, sampled_pairs, state, width, alpha, beta));
  return [frozen](const SoftmaxPolicy& policy, Mat* grad) {
    return frozen->eval(policy, grad);
  };
}

namespace {

// Exact-expectation exploration term. The likelihood part reuses the frozen
// DPO aggregation; the bonus part enumerates x, y, y' with sampler weights
// and per-pair bonuses fixed for the round.
struct FrozenExactObjective {
  FrozenObjective dpo_part;  // alpha forced to zero inside
  double alpha;
  double beta;
  Vec prompt_weights;
  Mat sampler_probs;   // M x K
  Mat ref_log_probs;   // M x K
  std::vector<double> pair_bonus;  // M*K*K

  double eval(const SoftmaxPolicy& policy, Mat* grad) const {
    const int m = dpo_part.num_prompts;
    const int k = dpo_part.pool_size;
    double total = dpo_part.eval(policy, grad);
    if (alpha == 0.0) return total;

    double explore = 0.0;
    for (int x = 0; x < m; ++x) {
      const double rho = prompt_weights[x];
      const Vec pi_probs = policy.probs(x);
      Vec log_ratio(k);
      for (int j = 0; j < k; ++j) {
        log_ratio[j] = std::log(pi_probs[j]) - ref_log_probs(x, j);
      }
      for (int y = 0; y < k; ++y) {
        for (int yp = 0; yp < k; ++yp) {
          const double margin_val = log_ratio[y] - log_ratio[yp];
          const double inner =
              beta * margin_val + pair_bonus[(static_cast<std::size_t>(x) * k + y) * k + yp];
          const double weight = rho * sampler_probs(x, yp);
          const double sig = sigmoid(inner);
          explore += weight * pi_probs[y] * sig;
          if (grad != nullptr) {
            const double sig_prime = sigmoid_prime(inner);
            for (int j = 0; j < k; ++j) {
              const double dpi = pi_probs[y] * ((j == y ? 1.0 : 0.0) - pi_probs[j]);
              const double dmargin = (j == y ? 1.0 : 0.0) - (j == yp ? 1.0 : 0.0);
              (*grad)(x, j) += alpha * weight *
                               (dpi * sig + pi_probs[y] * sig_prime * beta * dmargin);
            }
          }
        }
      }
    }
    return total + alpha * explore;
  }
};

}  // namespace

PolicyObjective make_exact_objective(const SoftmaxPolicy& ref, const SoftmaxPolicy& sampler,
                                     const std::vector<PreferenceRecord>& dataset,
                                     const World& world, const CovarianceState& state,
                                     double width, double alpha, double beta) {
  const int m = world.num_prompts();
  const int k = world.pool_size();
  const long budget = static_cast<long>(m) * k * k;
  if (budget > 1000000L) {
    throw ConfigurationError("make_exact_objective: enumeration budget M*K^2 exceeded");
  }
  auto frozen = std::make_shared<FrozenExactObjective>();
  frozen->dpo_part = freeze_objective(ref, dataset, {}, state, width, 0.0, beta);
  frozen->alpha = alpha;
  frozen->beta = beta;
  frozen->prompt_weights = world.prompt_weights();
  frozen->sampler_probs.resize(m, k);
  frozen->ref_log_probs.resize(m, k);
  for (int x = 0; x < m; ++x) {
    for (int j = 0; j < k; ++j) {
      frozen->sampler_probs(x, j) = sampler.prob(x, j);
      frozen->ref_log_probs(x, j) = ref.log_prob(x, j);
    }
  }
  frozen->pair_bonus.resize(static_cast<std::size_t>(m) * k * k);
  for (int x = 0; x < m; ++x) {
    for (int y = 0; y < k; ++y) {
      for (int yp = 0; yp < k; ++yp) {
        frozen->pair_bonus[(static_cast<std::size_t>(x) * k + y) * k + yp] =
            bonus(pair_feature(world, x, y, yp), state, width);
      }
    }
  }
  return [frozen](const SoftmaxPolicy& policy, Mat* grad) {
    return frozen->eval(policy, grad);
  };
}

OptimizeResult optimize_policy(const SoftmaxPolicy& start, const PolicyObjective& objective,
                               const TrainConfig& cfg) {
  if (cfg.gd_steps < 0 || !(cfg.gd_lr > 0.0)) {
    throw std::invalid_argument("optimize_policy: invalid training config");
  }
  OptimizeResult result{start, 0.0, 0, false};
  Mat grad;
  double value = objective(result.policy, &grad);
  result.objective = value;
  if (cfg.gd_steps == 0) return result;

  for (int step = 0; step < cfg.gd_steps; ++step) {
    if (!grad.allFinite()) {
      result.aborted = true;
      break;
    }
    double lr = cfg.gd_lr;
    bool accepted = false;
    SoftmaxPolicy candidate = result.policy;
    Mat cand_grad;
    double cand_value = 0.0;
    for (int halving = 0; halving <= 20; ++halving) {
      Mat logits = result.policy.logits() + lr * grad;
      candidate.set_logits(logits);
      candidate.recenter_rows();
      cand_value = objective(candidate, &cand_grad);
      if (cand_value >= value) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) break;  // objective flat at this scale; further steps repeat
    result.policy = candidate;
    value = cand_value;
    grad = cand_grad;
    result.steps_taken = step + 1;
  }
  result.objective = value;
  return result;
}

void refresh_sampler(PolicyTriple& triple, int t, int refresh_interval) {
  if (t < 1) throw std::invalid_argument("refresh_sampler: t must be >= 1");
  if (refresh_interval < 1) {
    throw std::invalid_argument("refresh_sampler: refresh interval must be >= 1");
  }
  if ((t - 1) % refresh_interval == 0) {
    triple.sampler = triple.current;
  }
}

}  // namespace depo
