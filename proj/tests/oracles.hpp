#pragma once

// Independent reference computations used only by the test suites. None of
// these call into the library routines they are used to check.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

inline double rho(double u, double tau) { return u >= 0.0 ? tau * u : (tau - 1.0) * u; }

/// Minimum check loss over all basic solutions: every size-k subset of rows
/// that determines a unique interpolating coefficient vector.
inline double vertex_enumeration_min(const MatrixXd& Z, const VectorXd& y, double tau) {
  const Index n = Z.rows();
  const Index k = Z.cols();
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
  double best = std::numeric_limits<double>::infinity();
  MatrixXd A(k, k);
  VectorXd b(k);
  for (;;) {
    for (Index j = 0; j < k; ++j) {
      A.row(j) = Z.row(idx[static_cast<std::size_t>(j)]);
      b(j) = y(idx[static_cast<std::size_t>(j)]);
    }
    Eigen::FullPivLU<MatrixXd> lu(A);
    if (lu.isInvertible()) {
      const VectorXd beta = lu.solve(b);
      double obj = 0.0;
      for (Index i = 0; i < n; ++i) obj += rho(y(i) - Z.row(i).dot(beta), tau);
      best = std::min(best, obj);
    }
    Index pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (Index j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

/// Adaptive Simpson quadrature of f on [a, b].
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                               int max_depth = 50) {
  struct Impl {
    const std::function<double(double)>& f;
    double rec(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) const {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m);
      const double rm = 0.5 * (m + b);
      const double flm = f(lm);
      const double frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double delta = left + right - whole;
      if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
      return rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
  } impl{f};
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return impl.rec(a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Noncentral chi-square density via the modified Bessel function form.
inline double ncchisq_density(double x, double df, double delta) {
  if (x <= 0.0) return 0.0;
  if (delta == 0.0) {
    return std::exp((0.5 * df - 1.0) * std::log(x) - 0.5 * x - 0.5 * df * std::log(2.0) - std::lgamma(0.5 * df));
  }
  const double nu = 0.5 * df - 1.0;
  const double z = std::sqrt(delta * x);
  // exp-scaled Bessel to avoid overflow: I_nu(z) e^{-z}
  const double bessel = std::cyl_bessel_i(nu, z);
  return 0.5 * std::exp(-0.5 * (x + delta) + 0.5 * nu * std::log(x / delta)) * bessel;
}

/// Integral of g over [0, upper] against the noncentral chi-square density,
/// split at several points for accuracy near the mode.
inline double ncchisq_integral(const std::function<double(double)>& g, double df, double delta, double upper,
                               double tol) {
  auto f = [&](double x) {
    const double dens = ncchisq_density(x, df, delta);
    return dens == 0.0 ? 0.0 : g(x) * dens;
  };
  std::vector<double> cuts = {0.0};
  const double mean = df + delta;
  for (double c : {0.25 * mean, 0.5 * mean, mean, 1.5 * mean, 2.5 * mean, 4.0 * mean, 8.0 * mean}) {
    if (c < upper) cuts.push_back(c);
  }
  cuts.push_back(upper);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += adaptive_simpson(f, cuts[i], cuts[i + 1], tol);
  return total;
}

}  // namespace oracle
