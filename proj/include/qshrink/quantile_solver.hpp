#pragma once

// Exact check-loss minimization. A Frisch-Newton primal-dual interior point
// method on the dual of the L1 linear program gets close to the optimum; a
// simplex-type pass then moves to an interpolating (basic) solution and
// certifies optimality by checking every edge direction out of the vertex.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qshrink/dataset.hpp"
#include "qshrink/error.hpp"

namespace qshrink {

/// rho_tau(u) = u (tau - I(u < 0)).
inline double check_loss(double u, double tau) {
  require_tau(tau);
  return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}

inline double check_objective(const VectorXd& r, double tau) {
  require_tau(tau);
  double s = 0.0;
  for (Index i = 0; i < r.size(); ++i) s += r(i) >= 0.0 ? tau * r(i) : (tau - 1.0) * r(i);
  return s;
}

/// Quantile score psi_tau(e) = tau - I(e < 0).
inline double quantile_score(double e, double tau) { return e < 0.0 ? tau - 1.0 : tau; }

enum class FitStatus { converged, iteration_limit, degenerate };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::iteration_limit: return "iteration-limit";
    case FitStatus::degenerate: return "degenerate";
  }
  return "unknown";
}

struct QuantileFit {
  double tau = 0.5;
  VectorXd beta;       // full length, intercept first; tested coefficients are exactly zero
  VectorXd residuals;
  double objective = 0.0;
  FitStatus status = FitStatus::converged;
  bool multiple_optima = false;  // some edge out of the optimal vertex is flat
  std::vector<Index> basis;      // observations interpolated by the solution
  int ipm_iterations = 0;
  int pivots = 0;
  std::string note;
};

struct SolverOptions {
  double gap_tol = 1e-8;   // interior-point duality gap (relative to sum |y|)
  int max_ipm_iter = 100;
  int max_pivots = 0;      // 0 selects 10 n + 100
};

namespace detail {

// Frisch-Newton interior point (Portnoy & Koenker 1997) on
//   max y'a  s.t.  Z'a = (1 - tau) Z'1,  0 <= a <= 1,
// returning the primal coefficients (negated dual of the equality block).
inline VectorXd frisch_newton(const MatrixXd& Z, const VectorXd& yresp, double tau, const SolverOptions& opt,
                              int& iterations) {
  const Index n = Z.rows();
  const double step = 0.99995;
  const double big = 1e20;
  const MatrixXd A = Z.transpose();  // k x n
  const VectorXd c = -yresp;
  const VectorXd b = (1.0 - tau) * A.rowwise().sum();
  VectorXd x = VectorXd::Constant(n, 1.0 - tau);
  VectorXd d = VectorXd::Ones(n);

  Eigen::LLT<MatrixXd> ada;
  auto factor = [&](const VectorXd& dd) {
    ada.compute(A * dd.asDiagonal() * A.transpose());
    if (ada.info() != Eigen::Success) throw NumericalError("interior point normal equations are singular");
  };

  factor(d);
  VectorXd y = ada.solve(A * c);
  VectorXd s = c - A.transpose() * y;
  VectorXd z(n), w(n);
  const double eps0 = 1e-8;
  for (Index i = 0; i < n; ++i) {
    const double si = s(i);
    if (std::abs(si) < eps0) {
      z(i) = std::max(si, 0.0) + eps0;
      w(i) = std::max(-si, 0.0) + eps0;
    } else {
      z(i) = std::max(si, 0.0);
      w(i) = std::max(-si, 0.0);
    }
  }
  s = VectorXd::Ones(n) - x;
  double gap = z.dot(x) + w.dot(s);
  const double gap_target = opt.gap_tol * std::max(1.0, yresp.cwiseAbs().sum());

  VectorXd dx(n), ds(n), dz(n), dw(n), dr(n), dy, rhs, u;
  iterations = 0;
  while (gap > gap_target && iterations < opt.max_ipm_iter) {
    ++iterations;
    for (Index i = 0; i < n; ++i) {
      d(i) = 1.0 / (z(i) / x(i) + w(i) / s(i));
      ds(i) = z(i) - w(i);
      dz(i) = d(i) * ds(i);
    }
    dy = b - A * x + A * dz;
    rhs = dy;
    factor(d);
    dy = ada.solve(dy);
    ds = A.transpose() * dy - ds;

    double deltap = big, deltad = big;
    for (Index i = 0; i < n; ++i) {
      dx(i) = d(i) * ds(i);
      ds(i) = -dx(i);
      dz(i) = -z(i) * (dx(i) / x(i) + 1.0);
      dw(i) = -w(i) * (ds(i) / s(i) + 1.0);
      if (dx(i) < 0) deltap = std::min(deltap, -x(i) / dx(i));
      if (ds(i) < 0) deltap = std::min(deltap, -s(i) / ds(i));
      if (dz(i) < 0) deltad = std::min(deltad, -z(i) / dz(i));
      if (dw(i) < 0) deltad = std::min(deltad, -w(i) / dw(i));
    }
    deltap = std::min(step * deltap, 1.0);
    deltad = std::min(step * deltad, 1.0);

    if (std::min(deltap, deltad) < 1.0) {
      // Mehrotra predictor-corrector step
      double mu = z.dot(x) + w.dot(s);
      const double g = mu + deltap * dx.dot(z) + deltad * dz.dot(x) + deltap * deltad * dx.dot(dz) +
                       deltap * ds.dot(w) + deltad * dw.dot(s) + deltap * deltad * ds.dot(dw);
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      for (Index i = 0; i < n; ++i) {
        dr(i) = d(i) * (mu * (1.0 / s(i) - 1.0 / x(i)) + dx(i) * dz(i) / x(i) - ds(i) * dw(i) / s(i));
      }
      dy = ada.solve(A * dr + rhs);
      u = A.transpose() * dy;
      deltap = big;
      deltad = big;
      for (Index i = 0; i < n; ++i) {
        const double dxdz = dx(i) * dz(i);
        const double dsdw = ds(i) * dw(i);
        dx(i) = d(i) * (u(i) - z(i) + w(i)) - dr(i);
        ds(i) = -dx(i);
        dz(i) = -z(i) + (mu - z(i) * dx(i) - dxdz) / x(i);
        dw(i) = -w(i) + (mu - w(i) * ds(i) - dsdw) / s(i);
        if (dx(i) < 0) deltap = std::min(deltap, -x(i) / dx(i));
        if (ds(i) < 0) deltap = std::min(deltap, -s(i) / ds(i));
        if (dz(i) < 0) deltad = std::min(deltad, -z(i) / dz(i));
        if (dw(i) < 0) deltad = std::min(deltad, -w(i) / dw(i));
      }
      deltap = std::min(step * deltap, 1.0);
      deltad = std::min(step * deltad, 1.0);
    }
    x += deltap * dx;
    s += deltap * ds;
    y += deltad * dy;
    z += deltad * dz;
    w += deltad * dw;
    gap = z.dot(x) + w.dot(s);
  }
  return -y;
}

// Picks k linearly independent rows, smallest |residual| first.
inline std::vector<Index> initial_basis(const MatrixXd& Z, const VectorXd& r) {
  const Index n = Z.rows();
  const Index k = Z.cols();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return std::abs(r(a)) < std::abs(r(b)); });
  std::vector<Index> basis;
  MatrixXd Q(k, k);
  Index rank = 0;
  for (Index i : order) {
    VectorXd v = Z.row(i).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Index j = 0; j < rank; ++j) v -= Q.col(j).dot(v) * Q.col(j);
    if (v.norm() > 1e-9 * norm0) {
      Q.col(rank++) = v.normalized();
      basis.push_back(i);
      if (rank == k) break;
    }
  }
  return basis;
}

struct VertexResult {
  VectorXd beta;
  std::vector<Index> basis;
  int pivots = 0;
  bool optimal = false;
  bool flat_edge = false;
};

// Simplex-type descent over vertices of the L1 objective, starting from the
// vertex nearest to `beta_start`. Each iteration evaluates the directional
// derivative along every edge (release one basic observation to either side)
// and follows the steepest descending edge to the next breakpoint.
inline VertexResult vertex_descent(const MatrixXd& Z, const VectorXd& y, double tau, const VectorXd& beta_start,
                                   double zero_tol, int max_pivots) {
  const Index n = Z.rows();
  const Index k = Z.cols();
  VertexResult out;
  out.basis = initial_basis(Z, y - Z * beta_start);
  if (static_cast<Index>(out.basis.size()) < k) throw NumericalError("free design block is rank deficient");

  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  struct Breakpoint {
    double t;
    double jump;
    Index obs;
  };
  std::vector<Breakpoint> bps;
  bps.reserve(static_cast<std::size_t>(n));

  for (;;) {
    MatrixXd ZB(k, k);
    VectorXd yB(k);
    for (Index j = 0; j < k; ++j) {
      ZB.row(j) = Z.row(out.basis[static_cast<std::size_t>(j)]);
      yB(j) = y(out.basis[static_cast<std::size_t>(j)]);
    }
    Eigen::PartialPivLU<MatrixXd> lu(ZB);
    out.beta = lu.solve(yB);
    const MatrixXd dirs = lu.inverse();  // column j: direction that moves basic obs j only
    const MatrixXd V = Z * dirs;         // V(i, j) = z_i' dir_j
    VectorXd r = y - Z * out.beta;
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (Index b : out.basis) {
      in_basis[static_cast<std::size_t>(b)] = 1;
      r(b) = 0.0;
    }

    // Slope of the objective along sigma * dir_j; residual i changes at rate -sigma V(i, j).
    auto obs_slope = [&](double ri, double rate) {
      if (ri > zero_tol) return tau * rate;
      if (ri < -zero_tol) return (tau - 1.0) * rate;
      return std::max(tau * rate, (tau - 1.0) * rate);
    };
    double best = 0.0;
    Index best_j = -1;
    int best_sigma = 0;
    bool flat = false;
    for (Index j = 0; j < k; ++j) {
      double scale = 1.0;
      for (Index i = 0; i < n; ++i) scale += std::abs(V(i, j));
      const double slope_tol = 1e-10 * scale;
      for (int sigma : {1, -1}) {
        double slope = 0.0;
        for (Index i = 0; i < n; ++i) {
          if (in_basis[static_cast<std::size_t>(i)]) continue;
          slope += obs_slope(r(i), -sigma * V(i, j));
        }
        slope += sigma > 0 ? 1.0 - tau : tau;  // the released basic observation
        if (std::abs(slope) <= slope_tol) flat = true;
        if (slope < -slope_tol && slope < best) {
          best = slope;
          best_j = j;
          best_sigma = sigma;
        }
      }
    }
    if (best_j < 0) {
      out.optimal = true;
      out.flat_edge = flat;
      return out;
    }
    if (out.pivots >= max_pivots) return out;

    bps.clear();
    for (Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double rate = -best_sigma * V(i, best_j);
      if (r(i) > zero_tol && rate < 0.0) bps.push_back({r(i) / -rate, -rate, i});
      else if (r(i) < -zero_tol && rate > 0.0) bps.push_back({-r(i) / rate, rate, i});
    }
    std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) { return a.t < b.t; });
    double slope = best;
    Index entering = -1;
    for (const auto& bp : bps) {
      slope += bp.jump;
      if (slope >= 0.0) {
        entering = bp.obs;
        break;
      }
    }
    if (entering < 0) throw NumericalError("check-loss objective unbounded along an edge");
    out.basis[static_cast<std::size_t>(best_j)] = entering;
    ++out.pivots;
  }
}

}  // namespace detail

/// Minimizes sum rho_tau(y - Z b) over b for an explicit design Z (no
/// implicit intercept). Rank deficiency yields a flagged pseudo-solution on a
/// maximal independent column subset with the remaining coefficients zero.
inline QuantileFit fit_quantile_design(const MatrixXd& Z, const VectorXd& y, double tau,
                                       const SolverOptions& opt = {}) {
  require_tau(tau);
  const Index n = Z.rows();
  const Index k = Z.cols();
  if (y.size() != n) throw DataError("response length does not match design rows");
  if (k < 1) throw DataError("design has no free columns");
  if (n < k) {
    throw DataError("need at least as many observations (" + std::to_string(n) + ") as free coefficients (" +
                    std::to_string(k) + ")");
  }
  QuantileFit fit;
  fit.tau = tau;
  fit.beta = VectorXd::Zero(k);

  Eigen::ColPivHouseholderQR<MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  std::vector<Index> cols;
  if (qr.rank() < k) {
    for (Index j = 0; j < qr.rank(); ++j) cols.push_back(qr.colsPermutation().indices()(j));
    std::sort(cols.begin(), cols.end());
    fit.status = FitStatus::degenerate;
    fit.note = "free design block has rank " + std::to_string(qr.rank()) + " < " + std::to_string(k) +
               "; pseudo-solution on an independent column subset";
  } else {
    cols.resize(static_cast<std::size_t>(k));
    std::iota(cols.begin(), cols.end(), Index{0});
  }
  MatrixXd Zs(n, static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) Zs.col(static_cast<Index>(j)) = Z.col(cols[j]);

  VectorXd start;
  if (Zs.cols() == 0) {
    start.resize(0);
  } else if (n == Zs.cols()) {
    start = Zs.colPivHouseholderQr().solve(y);
  } else {
    start = detail::frisch_newton(Zs, y, tau, opt, fit.ipm_iterations);
  }
  const double zero_tol = 1e-9 * (1.0 + y.cwiseAbs().maxCoeff());
  const int max_pivots = opt.max_pivots > 0 ? opt.max_pivots : static_cast<int>(10 * n + 100);
  if (Zs.cols() > 0) {
    auto vr = detail::vertex_descent(Zs, y, tau, start, zero_tol, max_pivots);
    for (std::size_t j = 0; j < cols.size(); ++j) fit.beta(cols[j]) = vr.beta(static_cast<Index>(j));
    fit.basis = vr.basis;
    fit.pivots = vr.pivots;
    fit.multiple_optima = vr.flat_edge;
    if (!vr.optimal && fit.status != FitStatus::degenerate) fit.status = FitStatus::iteration_limit;
  }
  fit.residuals = y - Z * fit.beta;
  fit.objective = check_objective(fit.residuals, tau);
  return fit;
}

/// Full-model fit, or the sub-model fit with the tested block fixed at zero
/// when a partition is supplied.
inline QuantileFit fit_quantile(const Dataset& data, double tau,
                                const std::optional<PartitionSpec>& partition = std::nullopt,
                                const SolverOptions& opt = {}) {
  data.validate();
  require_tau(tau);
  const MatrixXd Z = design_matrix(data);
  if (!partition) return fit_quantile_design(Z, data.y, tau, opt);

  partition->validate(data.p(), data.intercept);
  const CoefBlocks blocks = coef_blocks(*partition, data.intercept);
  MatrixXd Zk(Z.rows(), static_cast<Index>(blocks.keep.size()));
  for (std::size_t j = 0; j < blocks.keep.size(); ++j) Zk.col(static_cast<Index>(j)) = Z.col(blocks.keep[j]);
  QuantileFit sub = fit_quantile_design(Zk, data.y, tau, opt);
  VectorXd full = VectorXd::Zero(data.n_coef());
  for (std::size_t j = 0; j < blocks.keep.size(); ++j) full(blocks.keep[j]) = sub.beta(static_cast<Index>(j));
  sub.beta = std::move(full);
  return sub;
}

/// Least-squares baseline.
struct OlsFit {
  VectorXd beta;
  VectorXd residuals;
  double rss = 0.0;
  double sigma2 = 0.0;  // rss / (n - k)
  MatrixXd xtx_inv;
  Index df_resid = 0;
};

inline std::string coef_label(const Dataset& d, Index j) {
  if (d.intercept) return j == 0 ? std::string("(intercept)") : d.label(j - 1);
  return d.label(j);
}

inline OlsFit fit_ols(const Dataset& data) {
  data.validate();
  const MatrixXd Z = design_matrix(data);
  const Index k = Z.cols();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < k || data.n() < k) {
    std::string names;
    for (Index j = qr.rank(); j < k; ++j) {
      if (!names.empty()) names += ", ";
      names += coef_label(data, qr.colsPermutation().indices()(j));
    }
    throw NumericalError("X'X is singular; linearly dependent columns: " + names);
  }
  OlsFit fit;
  fit.beta = qr.solve(data.y);
  fit.residuals = data.y - Z * fit.beta;
  fit.rss = fit.residuals.squaredNorm();
  fit.df_resid = data.n() - k;
  fit.sigma2 = fit.df_resid > 0 ? fit.rss / static_cast<double>(fit.df_resid) : 0.0;
  fit.xtx_inv = (Z.transpose() * Z).inverse();
  return fit;
}

}  // namespace qshrink
