#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace depo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Pairwise feature psi(x, y, y') lives in R^{2d}; plain vector alias, the
// block layout (first response, then comparator) is maintained by the world
// module.
using PairFeature = Eigen::VectorXd;

// Numerically stable logistic function; saturates cleanly for |u| up to the
// overflow limit of exp.
double sigmoid(double u);

// sigma'(u) = sigma(u) * sigma(-u); symmetric in u, maximum 1/4 at u = 0.
double sigmoid_prime(double u);

// log(1 + e^u) without overflow.
double softplus(double u);

// log sigma(u) = -softplus(-u).
double log_sigmoid(double u);

// Regularized covariance V = lambda*I + sum_s psi_s psi_s^T together with a
// maintained inverse and log-determinant. Updates are strictly sequential
// (single writer); read-only queries are safe on a frozen copy.
class CovarianceState {
 public:
  CovarianceState(int dim, double lambda);

  // Builds a state around an explicitly assembled SPD matrix; the inverse and
  // log-determinant are recomputed from scratch. Used for diagnostics and
  // tests that need a specific V.
  static CovarianceState from_dense(const Mat& v, double lambda, long count = 0);

  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  long count() const { return count_; }
  const Mat& V() const { return v_; }
  const Mat& V_inv() const { return v_inv_; }
  double logdet() const { return logdet_; }

  // Number of updates whose feature exceeded the unit-norm assumption. Such
  // features are accepted anyway; tests enforce normalization upstream.
  long norm_warnings() const { return norm_warnings_; }

  // Rank-1 update: V += psi psi^T with the inverse maintained by the
  // Sherman-Morrison identity and the log-determinant by the matrix
  // determinant lemma. The incremental inverse is re-derived from V every
  // kRefreshInterval updates to bound drift over long horizons.
  void rank_one_update(const Vec& psi);

  // psi^T V^{-1} psi, clamped at zero.
  double quad_form(const Vec& psi) const;

  // Recomputes V_inv and logdet from V via a Cholesky factorization.
  // Idempotent: V is untouched, so a second call reproduces the same bits.
  void refresh_inverse();

  // Smallest eigenvalue of V (dense symmetric eigensolve).
  double min_eigenvalue() const;

  static constexpr long kRefreshInterval = 4096;

 private:
  CovarianceState() = default;

  int dim_ = 0;
  double lambda_ = 0.0;
  long count_ = 0;
  Mat v_;
  Mat v_inv_;
  double logdet_ = 0.0;
  long norm_warnings_ = 0;
};

}  // namespace depo
