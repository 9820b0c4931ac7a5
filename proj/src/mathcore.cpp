#include "depo/mathcore.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace depo {

double sigmoid(double u) {
  if (u >= 0.0) {
    return 1.0 / (1.0 + std::exp(-u));
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double sigmoid_prime(double u) {
  // Product form keeps sigma'(u) == sigma'(-u) bit-exact.
  return sigmoid(u) * sigmoid(-u);
}

double softplus(double u) {
  if (u > 0.0) {
    return u + std::log1p(std::exp(-u));
  }
  return std::log1p(std::exp(u));
}

double log_sigmoid(double u) { return -softplus(-u); }

CovarianceState::CovarianceState(int dim, double lambda) {
  if (dim <= 0) throw std::invalid_argument("CovarianceState: dim must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("CovarianceState: lambda must be positive");
  dim_ = dim;
  lambda_ = lambda;
  count_ = 0;
  v_ = Mat::Identity(dim, dim) * lambda;
  v_inv_ = Mat::Identity(dim, dim) * (1.0 / lambda);
  logdet_ = static_cast<double>(dim) * std::log(lambda);
}

CovarianceState CovarianceState::from_dense(const Mat& v, double lambda, long count) {
  if (v.rows() != v.cols() || v.rows() == 0) {
    throw std::invalid_argument("CovarianceState::from_dense: square matrix required");
  }
  if (!(lambda > 0.0)) throw std::invalid_argument("CovarianceState::from_dense: lambda must be positive");
  CovarianceState state;
  state.dim_ = static_cast<int>(v.rows());
  state.lambda_ = lambda;
  state.count_ = count;
  state.v_ = v;
  state.refresh_inverse();
  return state;
}

void CovarianceState::rank_one_update(const Vec& psi) {
  if (psi.size() != dim_) {
    throw std::invalid_argument("rank_one_update: dimension mismatch");
  }
  if (!psi.allFinite()) {
    throw std::invalid_argument("rank_one_update: non-finite feature rejected");
  }
  if (psi.squaredNorm() > 1.0 + 1e-9) {
    ++norm_warnings_;
  }

  const Vec vinv_psi = v_inv_ * psi;
  const double denom = 1.0 + psi.dot(vinv_psi);
  v_.noalias() += psi * psi.transpose();
  v_inv_.noalias() -= (vinv_psi * vinv_psi.transpose()) / denom;
  logdet_ += std::log(denom);
  ++count_;

  if (count_ % kRefreshInterval == 0) {
    refresh_inverse();
  }
}

double CovarianceState::quad_form(const Vec& psi) const {
  if (psi.size() != dim_) {
    throw std::invalid_argument("quad_form: dimension mismatch");
  }
  const double q = psi.dot(v_inv_ * psi);
  return q > 0.0 ? q : 0.0;
}

void CovarianceState::refresh_inverse() {
  Eigen::LLT<Mat> llt(v_);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("refresh_inverse: covariance is not positive definite");
  }
  Mat inv = llt.solve(Mat::Identity(dim_, dim_));
  // The solve is exact only up to rounding; symmetrize so downstream quadratic
  // forms see a symmetric matrix.
  v_inv_ = 0.5 * (inv + inv.transpose());
  logdet_ = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

double CovarianceState::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Mat> solver(v_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace depo
