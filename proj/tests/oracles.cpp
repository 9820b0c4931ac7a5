#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace depo::test {

Mat gauss_inverse(Mat a) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw std::invalid_argument("gauss_inverse: square matrix required");
  Mat inv = Mat::Identity(n, n);
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) throw std::runtime_error("gauss_inverse: singular matrix");
    if (pivot != col) {
      a.row(pivot).swap(a.row(col));
      inv.row(pivot).swap(inv.row(col));
    }
    const double diag = a(col, col);
    a.row(col) /= diag;
    inv.row(col) /= diag;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a(r, col);
      if (factor == 0.0) continue;
      a.row(r) -= factor * a.row(col);
      inv.row(r) -= factor * inv.row(col);
    }
  }
  return inv;
}

double gauss_logdet(Mat a) {
  const int n = static_cast<int>(a.rows());
  double logdet = 0.0;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) throw std::runtime_error("gauss_logdet: singular matrix");
    if (pivot != col) a.row(pivot).swap(a.row(col));
    const double diag = a(col, col);
    if (diag <= 0.0) throw std::runtime_error("gauss_logdet: matrix not positive definite");
    logdet += std::log(diag);
    for (int r = col + 1; r < n; ++r) {
      const double factor = a(r, col) / diag;
      if (factor == 0.0) continue;
      a.row(r) -= factor * a.row(col);
    }
  }
  return logdet;
}

std::vector<double> jacobi_eigenvalues(Mat a) {
  const int n = static_cast<int>(a.rows());
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i);
          const double aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eigs(n);
  for (int i = 0; i < n; ++i) eigs[i] = a(i, i);
  std::sort(eigs.begin(), eigs.end());
  return eigs;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double x1 = b - phi * (b - a);
  double x2 = a + phi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

Vec grid_golden_mle_2d(const std::vector<PreferenceRecord>& records, double lambda,
                       double lo, double hi) {
  auto objective = [&](double t0, double t1) {
    Vec theta(2);
    theta << t0, t1;
    return mle_objective(theta, records, lambda);
  };

  // Coarse grid to localize, then nested golden-section refinement; the
  // objective is strictly convex so the partial minimum in t1 is convex in t0.
  double best0 = lo;
  double best1 = lo;
  double best = objective(lo, lo);
  const int grid = 60;
  for (int i = 0; i <= grid; ++i) {
    const double t0 = lo + (hi - lo) * i / grid;
    for (int j = 0; j <= grid; ++j) {
      const double t1 = lo + (hi - lo) * j / grid;
      const double v = objective(t0, t1);
      if (v < best) {
        best = v;
        best0 = t0;
        best1 = t1;
      }
    }
  }
  const double pad = (hi - lo) / grid * 2.0;
  auto inner_min = [&](double t0) {
    return objective(t0, golden_section([&](double t1) { return objective(t0, t1); },
                                        best1 - pad * 8, best1 + pad * 8, 1e-11));
  };
  const double t0_star =
      golden_section(inner_min, best0 - pad, best0 + pad, 1e-11);
  const double t1_star =
      golden_section([&](double t1) { return objective(t0_star, t1); }, best1 - pad * 8,
                     best1 + pad * 8, 1e-11);
  Vec theta(2);
  theta << t0_star, t1_star;
  return theta;
}

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                               double h) {
  Vec grad(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec xp = x;
    Vec xm = x;
    xp[i] += h;
    xm[i] -= h;
    grad[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Vec& analytic, const Vec& numeric, double floor) {
  double worst = 0.0;
  for (int i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(analytic[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace depo::test
