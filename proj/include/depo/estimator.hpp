#pragma once

#include <deque>
#include <vector>

#include "depo/mathcore.hpp"

namespace depo {

// One labeled comparison. psi_policy is the pair feature in the orientation
// the responses were generated, (y_t, y'_t); psi_wl has the winner's block
// first. label == +1 iff psi_policy's first block belongs to the winner.
struct PreferenceRecord {
  int t = 0;
  int prompt_id = 0;
  int winner_id = 0;
  int loser_id = 0;
  PairFeature psi_wl;
  PairFeature psi_policy;
  int label = 0;
};

// Regularized logistic MLE together with the curvature and width diagnostics
// attached to it. fit_mle fills the solver fields; the driver fills the rest.
struct RewardEstimate {
  Vec theta_hat;
  double lambda = 0.0;
  int newton_iters = 0;
  double grad_norm = 0.0;
  bool converged = true;

  double kappa_true = 0.25;
  double kappa_plugin = 0.25;
  double B_true = 0.0;
  double B_plugin = 0.0;
  double eta = 0.0;
  double beta_conf = 0.0;
  double r_bar = 0.0;
  double width_gamma = 0.0;
  bool curvature_flagged = false;
  bool width_flagged = false;
};

// FIFO buffer of historical pair features used for the empirical radius.
class RadiusBuffer {
 public:
  explicit RadiusBuffer(std::size_t capacity);

  void push(const PairFeature& psi);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<PairFeature>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<PairFeature> entries_;
};

// sum_s log(1 + exp(-z_s <theta, psi_s>)) + (lambda/2) ||theta||^2.
double mle_objective(const Vec& theta, const std::vector<PreferenceRecord>& records,
                     double lambda);
Vec mle_gradient(const Vec& theta, const std::vector<PreferenceRecord>& records,
                 double lambda);

// Damped-Newton minimizer of the regularized logistic objective. Converged
// when the gradient max-norm drops to 1e-10; capped at 100 iterations (the
// result is flagged via `converged`). `dim` = 2d; warm_start may be null.
RewardEstimate fit_mle(const std::vector<PreferenceRecord>& records, double lambda,
                       const Vec* warm_start, int dim);

// Plug-in gap estimate <theta_hat, psi>.
double gap_estimate(const RewardEstimate& est, const PairFeature& psi);

struct CurvatureInfo {
  double kappa = 0.25;
  double B = 0.0;
  bool flagged = false;  // empty history; kappa defaults to the supremum 1/4
};

// kappa = min_s sigma'(<theta, psi_s>) computed through B = max_s |<theta, psi_s>|.
CurvatureInfo local_curvature(const Vec& theta, const std::vector<PairFeature>& history);

// eta_t = sqrt(lambda) S + sqrt(2 log(det(V)^{1/2} / (det(lambda I)^{1/2} delta))).
double eta_width(const CovarianceState& state, double S, double delta);

// beta^conf = eta_t / kappa, the self-normalized confidence width.
double confidence_width(double kappa, const CovarianceState& state, double S, double delta);

struct EmpiricalWidth {
  double r_bar = 0.0;
  double width_gamma = 0.0;
  bool flagged = false;  // empty buffer
};

// r_bar = median_s sqrt(psi_s^T V^{-1} psi_s) over the buffer; width proxy
// gamma = c_b / (r_bar + epsilon).
EmpiricalWidth empirical_width(const RadiusBuffer& buffer, const CovarianceState& state,
                               double c_b, double epsilon);

// Elliptical bonus width * sqrt(psi^T V^{-1} psi).
double bonus(const PairFeature& psi, const CovarianceState& state, double width);

}  // namespace depo
