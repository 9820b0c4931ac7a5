#include "depo/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Cholesky>

namespace depo {

namespace {
constexpr double kGradTol = 1e-10;
constexpr int kMaxNewtonIters = 100;
constexpr double kKappaFloor = 1e-300;
}  // namespace

RadiusBuffer::RadiusBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("RadiusBuffer: capacity must be positive");
}

void RadiusBuffer::push(const PairFeature& psi) {
  entries_.push_back(psi);
  if (entries_.size() > capacity_) entries_.pop_front();
}

double mle_objective(const Vec& theta, const std::vector<PreferenceRecord>& records,
                     double lambda) {
  double obj = 0.5 * lambda * theta.squaredNorm();
  for (const auto& rec : records) {
    const double u = theta.dot(rec.psi_policy);
    obj += softplus(-static_cast<double>(rec.label) * u);
  }
  return obj;
}

Vec mle_gradient(const Vec& theta, const std::vector<PreferenceRecord>& records,
                 double lambda) {
  Vec grad = lambda * theta;
  for (const auto& rec : records) {
    const double z = static_cast<double>(rec.label);
    const double u = theta.dot(rec.psi_policy);
    grad.noalias() += (-z * sigmoid(-z * u)) * rec.psi_policy;
  }
  return grad;
}

namespace {

// Signed features z_s * psi_s grouped by identical bytes. Online runs revisit
// the same finite pair set, so the group count is bounded by the pair budget
// and Newton iterations cost O(groups * D^2) instead of O(t * D^2).
struct MleTerm {
  Vec phi;
  double weight;
};

std::vector<MleTerm> group_records(const std::vector<PreferenceRecord>& records, int dim) {
  std::map<std::string, std::size_t> index;
  std::vector<MleTerm> terms;
  std::string key;
  for (const auto& rec : records) {
    const Vec phi = static_cast<double>(rec.label) * rec.psi_policy;
    key.assign(reinterpret_cast<const char*>(phi.data()), sizeof(double) * dim);
    const auto [it, inserted] = index.try_emplace(key, terms.size());
    if (inserted) {
      terms.push_back({phi, 1.0});
    } else {
      terms[it->second].weight += 1.0;
    }
  }
  return terms;
}

double grouped_objective(const Vec& theta, const std::vector<MleTerm>& terms, double lambda) {
  double obj = 0.5 * lambda * theta.squaredNorm();
  for (const auto& term : terms) {
    obj += term.weight * softplus(-theta.dot(term.phi));
  }
  return obj;
}

}  // namespace

RewardEstimate fit_mle(const std::vector<PreferenceRecord>& records, double lambda,
                       const Vec* warm_start, int dim) {
  if (!(lambda > 0.0)) throw std::invalid_argument("fit_mle: lambda must be positive");
  for (const auto& rec : records) {
    if (rec.psi_policy.size() != dim) {
      throw std::invalid_argument("fit_mle: record dimension mismatch");
    }
  }

  RewardEstimate est;
  est.lambda = lambda;
  Vec theta = (warm_start != nullptr && warm_start->size() == dim) ? *warm_start
                                                                   : Vec::Zero(dim);
  if (records.empty()) {
    est.theta_hat = Vec::Zero(dim);
    est.grad_norm = 0.0;
    return est;
  }

  const std::vector<MleTerm> terms = group_records(records, dim);

  double obj = grouped_objective(theta, terms, lambda);
  if (!std::isfinite(obj)) throw std::runtime_error("fit_mle: non-finite objective");

  int iters = 0;
  Vec grad(dim);
  Mat hess(dim, dim);
  for (;;) {
    grad = lambda * theta;
    hess = lambda * Mat::Identity(dim, dim);
    for (const auto& term : terms) {
      const double u = theta.dot(term.phi);
      grad.noalias() -= (term.weight * sigmoid(-u)) * term.phi;
      hess.noalias() += (term.weight * sigmoid_prime(u)) * (term.phi * term.phi.transpose());
    }
    est.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (est.grad_norm <= kGradTol || iters >= kMaxNewtonIters) break;

    const Vec delta = Eigen::LLT<Mat>(hess).solve(-grad);
    // Damped step: halve until the objective stops increasing (up to rounding
    // noise in the accumulated sum).
    const double slack = 1e-12 * (1.0 + std::abs(obj));
    double step = 1.0;
    Vec cand = theta + delta;
    double cand_obj = grouped_objective(cand, terms, lambda);
    int halvings = 0;
    while (!(cand_obj <= obj + slack) && halvings < 60) {
      step *= 0.5;
      cand = theta + step * delta;
      cand_obj = grouped_objective(cand, terms, lambda);
      ++halvings;
    }
    if (!(cand_obj <= obj + slack)) break;
    const double step_size = (step * delta).lpNorm<Eigen::Infinity>();
    theta = cand;
    obj = std::min(obj, cand_obj);
    ++iters;
    if (step_size < 1e-14 * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
      grad = lambda * theta;
      for (const auto& term : terms) {
        grad.noalias() -= (term.weight * sigmoid(-theta.dot(term.phi))) * term.phi;
      }
      est.grad_norm = grad.lpNorm<Eigen::Infinity>();
      break;
    }
  }

  est.theta_hat = theta;
  est.newton_iters = iters;
  est.converged = est.grad_norm <= kGradTol;
  return est;
}

double gap_estimate(const RewardEstimate& est, const PairFeature& psi) {
  if (est.theta_hat.size() != psi.size()) {
    throw std::invalid_argument("gap_estimate: dimension mismatch");
  }
  return est.theta_hat.dot(psi);
}

CurvatureInfo local_curvature(const Vec& theta, const std::vector<PairFeature>& history) {
  CurvatureInfo info;
  if (history.empty()) {
    info.flagged = true;  // sigma'(0) = 1/4 is the no-data supremum
    return info;
  }
  double max_logit = 0.0;
  for (const auto& psi : history) {
    max_logit = std::max(max_logit, std::abs(theta.dot(psi)));
  }
  info.B = max_logit;
  info.kappa = sigmoid_prime(max_logit);
  return info;
}

double eta_width(const CovarianceState& state, double S, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("eta_width: delta must lie in (0,1)");
  }
  const double log_det_ratio =
      0.5 * state.logdet() - 0.5 * state.dim() * std::log(state.lambda());
  const double tail = 2.0 * (log_det_ratio + std::log(1.0 / delta));
  return std::sqrt(state.lambda()) * S + std::sqrt(std::max(0.0, tail));
}

double confidence_width(double kappa, const CovarianceState& state, double S, double delta) {
  if (!(kappa > 0.0) || kappa > 0.25 + 1e-12) {
    throw std::invalid_argument("confidence_width: kappa must lie in (0, 0.25]");
  }
  return eta_width(state, S, delta) / std::max(kappa, kKappaFloor);
}

EmpiricalWidth empirical_width(const RadiusBuffer& buffer, const CovarianceState& state,
                               double c_b, double epsilon) {
  if (!(c_b > 0.0)) throw std::invalid_argument("empirical_width: c_b must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("empirical_width: epsilon must be positive");

  EmpiricalWidth w;
  if (buffer.size() == 0) {
    w.flagged = true;
    w.r_bar = 0.0;
    w.width_gamma = c_b / epsilon;
    return w;
  }
  std::vector<double> radii;
  radii.reserve(buffer.size());
  for (const auto& psi : buffer.entries()) {
    radii.push_back(std::sqrt(state.quad_form(psi)));
  }
  std::sort(radii.begin(), radii.end());
  const std::size_t n = radii.size();
  if (n % 2 == 1) {
    w.r_bar = radii[n / 2];
  } else {
    w.r_bar = 0.5 * (radii[n / 2 - 1] + radii[n / 2]);
  }
  w.width_gamma = c_b / (w.r_bar + epsilon);
  return w;
}

double bonus(const PairFeature& psi, const CovarianceState& state, double width) {
  if (width < 0.0) throw std::invalid_argument("bonus: width must be non-negative");
  return width * std::sqrt(state.quad_form(psi));
}

}  // namespace depo
