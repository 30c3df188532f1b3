#pragma once

// Elastic-net penalized quantile regression on a Huber-smoothed check loss.
// Coordinate descent with exact one-dimensional solves, followed by Newton
// steps on the support once the active set settles. Covariates are
// standardized internally; returned coefficients are on the original scale.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qshrink/dataset.hpp"
#include "qshrink/error.hpp"
#include "qshrink/metrics.hpp"

namespace qshrink {

/// alpha ||b||_1 + (1 - alpha)/2 ||b||_2^2 over the slopes (intercept excluded
/// when `intercept` is set).
inline double penalty(const VectorXd& beta, double alpha, bool intercept = true) {
  const Index s = intercept ? 1 : 0;
  const auto b = beta.tail(beta.size() - s);
  return alpha * b.cwiseAbs().sum() + 0.5 * (1.0 - alpha) * b.squaredNorm();
}

/// Huber-smoothed check loss: tau H_h(t) for t >= 0, (1 - tau) H_h(t) below,
/// with H_h(t) = t^2/(2h) on |t| <= h and |t| - h/2 outside.
inline double smooth_check_loss(double t, double tau, double h) {
  const double a = std::abs(t);
  const double H = a <= h ? 0.5 * t * t / h : a - 0.5 * h;
  return (t >= 0.0 ? tau : 1.0 - tau) * H;
}

inline double smooth_check_score(double t, double tau, double h) {
  if (t >= 0.0) return tau * std::min(t / h, 1.0);
  return (1.0 - tau) * std::max(t / h, -1.0);
}

struct PenalizedOptions {
  double kkt_tol = 1e-7;           // target on the standardized scale
  double kkt_accept = 1e-6;        // above this after max_sweeps the fit fails
  double continuation_tol = 1e-4;  // looser target on intermediate smoothing levels
  int max_sweeps = 20000;
  double h_decay = 0.5;
  double h0_quantile = 0.9;
  double h_min_factor = 1e-4;  // times sd(y)
};

struct PenalizedFit {
  double tau = 0.5;
  double alpha = 1.0;
  double lambda = 0.0;
  double h = 0.0;
  VectorXd beta;          // original scale, intercept first when present
  VectorXd beta_std;      // standardized scale
  double objective = 0.0;  // smoothed penalized objective on the standardized scale
  double kkt = 0.0;
  int sweeps = 0;
  int newton_steps = 0;
  bool monotone = true;  // no sweep increased the objective
};

struct PenalizedPath {
  double tau = 0.5;
  double alpha_mix = 1.0;
  std::vector<double> lambdas;
  MatrixXd betas;  // one column per lambda, original scale
  std::vector<double> smoothing;
  std::vector<double> kkt;
  std::vector<double> objectives;
  std::vector<int> sweeps;
  std::vector<double> warm_objectives;  // previous column evaluated at this column's lambda and h
  std::optional<Index> selected;
  bool monotone = true;
};

namespace detail {

struct Standardized {
  MatrixXd Z;  // intercept column first when present
  VectorXd y;
  VectorXd mean;
  VectorXd scale;
  bool intercept = true;
};

inline Standardized standardize(const Dataset& data) {
  data.validate();
  Standardized s;
  s.intercept = data.intercept;
  const Index n = data.n(), p = data.p();
  const Index off = data.intercept ? 1 : 0;
  s.Z.resize(n, p + off);
  if (off) s.Z.col(0).setOnes();
  s.mean = data.intercept ? column_means(data.X) : VectorXd::Zero(p);
  s.scale.resize(p);
  for (Index j = 0; j < p; ++j) {
    const VectorXd c = data.X.col(j).array() - s.mean(j);
    const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(n));
    s.scale(j) = sd > 0.0 ? sd : 1.0;
    s.Z.col(j + off) = c / s.scale(j);
  }
  s.y = data.y;
  return s;
}

inline VectorXd to_original(const Standardized& s, const VectorXd& b) {
  VectorXd out = b;
  const Index off = s.intercept ? 1 : 0;
  for (Index j = 0; j < s.scale.size(); ++j) out(j + off) = b(j + off) / s.scale(j);
  if (s.intercept) out(0) = b(0) - s.mean.dot(out.tail(s.scale.size()));
  return out;
}

inline VectorXd to_standardized(const Standardized& s, const VectorXd& beta) {
  VectorXd out = beta;
  const Index off = s.intercept ? 1 : 0;
  for (Index j = 0; j < s.scale.size(); ++j) out(j + off) = beta(j + off) * s.scale(j);
  if (s.intercept) out(0) = beta(0) + s.mean.dot(beta.tail(s.scale.size()));
  return out;
}

inline double sample_sd(const VectorXd& y) {
  const double m = y.mean();
  return std::sqrt((y.array() - m).square().sum() / static_cast<double>(std::max<Index>(1, y.size() - 1)));
}

/// Minimizer c of sum rho_h(y - c); exact tau-quantile when h = 0.
inline double smooth_location(const VectorXd& y, double tau, double h) {
  std::vector<double> s(y.data(), y.data() + y.size());
  std::sort(s.begin(), s.end());
  // lower tau-quantile minimizes the unsmoothed check loss
  const auto k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(s.size()))) - 1;
  const double q = s[std::min(k, s.size() - 1)];
  if (h <= 0.0) return q;
  auto F = [&](double c) {  // derivative of the objective in c, nondecreasing
    double g = 0.0;
    for (double v : s) g -= smooth_check_score(v - c, tau, h);
    return g;
  };
  double lo = s.front() - h, hi = s.back() + h;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (F(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

class SmoothSolver {
 public:
  SmoothSolver(const MatrixXd& Z, const VectorXd& y, bool intercept, double tau)
      : Z_(Z), y_(y), intercept_(intercept), tau_(tau), n_(static_cast<double>(Z.rows())) {}

  void set(double lambda, double alpha, double h) {
    lambda_ = lambda;
    alpha_ = alpha;
    h_ = h;
  }

  double objective(const VectorXd& r, const VectorXd& b) const {
    double f = 0.0;
    for (Index i = 0; i < r.size(); ++i) f += smooth_check_loss(r(i), tau_, h_);
    return f / n_ + lambda_ * penalty(b, alpha_, intercept_);
  }

  /// Gradient of the smooth part (loss + ridge term).
  VectorXd smooth_gradient(const VectorXd& r, const VectorXd& b) const {
    VectorXd psi(r.size());
    for (Index i = 0; i < r.size(); ++i) psi(i) = smooth_check_score(r(i), tau_, h_);
    VectorXd g = -(Z_.transpose() * psi) / n_;
    for (Index j = first_pen(); j < b.size(); ++j) g(j) += lambda_ * (1.0 - alpha_) * b(j);
    return g;
  }

  double kkt(const VectorXd& r, const VectorXd& b) const {
    const VectorXd g = smooth_gradient(r, b);
    const double l1 = lambda_ * alpha_;
    double worst = 0.0;
    for (Index j = 0; j < b.size(); ++j) {
      double v;
      if (j < first_pen()) v = std::abs(g(j));
      else if (b(j) != 0.0) v = std::abs(g(j) + l1 * (b(j) > 0 ? 1.0 : -1.0));
      else v = std::max(0.0, std::abs(g(j)) - l1);
      worst = std::max(worst, v);
    }
    return worst;
  }

  /// Exact minimization over coordinate j; updates b and r.
  void coordinate(Index j, VectorXd& r, VectorXd& b) const {
    const auto x = Z_.col(j);
    const double b0 = b(j);
    const bool pen = j >= first_pen();
    const double ridge = pen ? lambda_ * (1.0 - alpha_) : 0.0;
    const double l1 = pen ? lambda_ * alpha_ : 0.0;
    // F(v) = d/dv of the smooth part at coefficient value v, nondecreasing
    auto F = [&](double v, double* slope) {
      const double delta = v - b0;
      double g = 0.0, s = 0.0;
      for (Index i = 0; i < r.size(); ++i) {
        const double t = r(i) - x(i) * delta;
        const double w = t >= 0.0 ? tau_ : 1.0 - tau_;
        if (std::abs(t) <= h_) {
          g -= x(i) * w * t / h_;
          s += x(i) * x(i) * w / h_;
        } else {
          g -= x(i) * w * (t > 0.0 ? 1.0 : -1.0);
        }
      }
      if (slope) *slope = s / n_ + ridge;
      return g / n_ + ridge * v;
    };
    double target;  // solve F(v) = target on the chosen side
    double v_new;
    if (l1 > 0.0) {
      const double g0 = F(0.0, nullptr);
      if (std::abs(g0) <= l1) {
        v_new = 0.0;
        apply(j, v_new - b0, r, b);
        return;
      }
      target = g0 < 0.0 ? -l1 : l1;  // g0 < -l1 means v > 0
      v_new = solve_monotone(F, target, b0, g0 < 0.0 ? 0.0 : -inf(), g0 < 0.0 ? inf() : 0.0);
    } else {
      target = 0.0;
      v_new = solve_monotone(F, target, b0, -inf(), inf());
    }
    apply(j, v_new - b0, r, b);
  }

  /// Newton step on the support with a backtracking search on the true objective.
  bool newton(VectorXd& r, VectorXd& b, double& f) const {
    std::vector<Index> S;
    for (Index j = 0; j < b.size(); ++j)
      if (j < first_pen() || b(j) != 0.0) S.push_back(j);
    const Index k = static_cast<Index>(S.size());
    if (k == 0) return false;
    VectorXd w(r.size());
    for (Index i = 0; i < r.size(); ++i) w(i) = std::abs(r(i)) <= h_ ? (r(i) >= 0.0 ? tau_ : 1.0 - tau_) / h_ : 0.0;
    MatrixXd ZS(Z_.rows(), k);
    for (Index a = 0; a < k; ++a) ZS.col(a) = Z_.col(S[static_cast<std::size_t>(a)]);
    MatrixXd H = ZS.transpose() * w.asDiagonal() * ZS / n_;
    const VectorXd gfull = smooth_gradient(r, b);
    VectorXd g(k);
    for (Index a = 0; a < k; ++a) {
      const Index j = S[static_cast<std::size_t>(a)];
      g(a) = gfull(j);
      if (j >= first_pen()) {
        H(a, a) += lambda_ * (1.0 - alpha_);
        g(a) += lambda_ * alpha_ * (b(j) > 0 ? 1.0 : -1.0);
      }
    }
    // few residuals inside the quadratic zone leave H singular; a small ridge
    // keeps the direction defined and the exact line search finds the breakpoint
    H.diagonal().array() += 1e-8 * (1.0 + H.diagonal().maxCoeff());
    Eigen::LDLT<MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) return false;
    const VectorXd step = -ldlt.solve(g);
    if (!step.allFinite() || step.dot(g) >= 0.0) return false;
    VectorXd D = VectorXd::Zero(b.size());
    for (Index a = 0; a < k; ++a) D(S[static_cast<std::size_t>(a)]) = step(a);
    return line_search(D, r, b, f);
  }

  /// Exact minimization of the objective along b + t D for t >= 0, stopping
  /// where the first penalized coefficient reaches zero.
  bool line_search(const VectorXd& D, VectorXd& r, VectorXd& b, double& f) const {
    const VectorXd dz = Z_ * D;
    double t_clip = inf();
    Index clip_j = -1;
    double pen_quad = 0.0, pen_const = 0.0;
    for (Index j = first_pen(); j < b.size(); ++j) {
      if (D(j) == 0.0) continue;
      if (b(j) * D(j) < 0.0 && -b(j) / D(j) < t_clip) {
        t_clip = -b(j) / D(j);
        clip_j = j;
      }
      const double sgn = b(j) > 0.0 ? 1.0 : (b(j) < 0.0 ? -1.0 : (D(j) > 0.0 ? 1.0 : -1.0));
      pen_const += lambda_ * alpha_ * sgn * D(j) + lambda_ * (1.0 - alpha_) * b(j) * D(j);
      pen_quad += lambda_ * (1.0 - alpha_) * D(j) * D(j);
    }
    auto F = [&](double t, double* slope) {
      double g = 0.0, sl = 0.0;
      for (Index i = 0; i < r.size(); ++i) {
        const double u = r(i) - t * dz(i);
        const double w = u >= 0.0 ? tau_ : 1.0 - tau_;
        if (std::abs(u) <= h_) {
          g -= dz(i) * w * u / h_;
          sl += dz(i) * dz(i) * w / h_;
        } else {
          g -= dz(i) * w * (u > 0.0 ? 1.0 : -1.0);
        }
      }
      if (slope) *slope = sl / n_ + pen_quad;
      return g / n_ + pen_const + pen_quad * t;
    };
    if (F(0.0, nullptr) >= 0.0) return false;
    double t;
    bool clipped = false;
    if (std::isfinite(t_clip) && F(t_clip, nullptr) <= 0.0) {
      t = t_clip;
      clipped = true;
    } else {
      t = solve_monotone(F, 0.0, std::min(1.0, 0.5 * t_clip), 0.0, t_clip);
    }
    if (!(t > 0.0)) return false;
    VectorXd bt = b + t * D;
    if (clipped) bt(clip_j) = 0.0;
    for (Index j = first_pen(); j < b.size(); ++j)
      if (b(j) * bt(j) < 0.0) bt(j) = 0.0;
    const VectorXd rt = y_ - Z_ * bt;
    const double ft = objective(rt, bt);
    if (!(ft < f)) return false;
    b = bt;
    r = rt;
    f = ft;
    return true;
  }

  Index first_pen() const { return intercept_ ? 1 : 0; }

 private:
  static double inf() { return std::numeric_limits<double>::infinity(); }

  void apply(Index j, double delta, VectorXd& r, VectorXd& b) const {
    if (delta == 0.0) return;
    b(j) += delta;
    r.noalias() -= delta * Z_.col(j);
  }

  // Root of a nondecreasing piecewise-linear F(v) = target inside (lo, hi):
  // Newton on the current linear piece, bisection when it leaves the bracket.
  template <class Fn>
  double solve_monotone(const Fn& F, double target, double start, double lo, double hi) const {
    double v = std::clamp(start, std::isfinite(lo) ? lo : start, std::isfinite(hi) ? hi : start);
    double step = std::max(1.0, std::abs(start));
    for (int it = 0; it < 200; ++it) {
      double slope = 0.0;
      const double val = F(v, &slope) - target;
      if (val == 0.0) return v;
      if (val < 0.0) lo = std::max(lo, v);
      else hi = std::min(hi, v);
      double next;
      if (slope > 0.0) {
        next = v - val / slope;
      } else {
        next = val < 0.0 ? v + step : v - step;
        step *= 2.0;
      }
      if (!(next > lo && next < hi)) {
        if (std::isfinite(lo) && std::isfinite(hi)) {
          next = 0.5 * (lo + hi);
        } else {
          next = val < 0.0 ? v + step : v - step;
          step *= 2.0;
        }
      }
      if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-15 * (1.0 + std::abs(lo) + std::abs(hi))) {
        return 0.5 * (lo + hi);
      }
      if (next == v) return v;
      v = next;
    }
    return v;
  }

  const MatrixXd& Z_;
  const VectorXd& y_;
  bool intercept_;
  double tau_;
  double n_;
  double lambda_ = 0.0, alpha_ = 1.0, h_ = 1.0;
};

struct SolveResult {
  double objective;
  double kkt;
  int sweeps;
  int newton_steps;
  bool monotone;
};

inline SolveResult solve(const SmoothSolver& S, const VectorXd& y, const MatrixXd& Z, VectorXd& b, double tol,
                         int max_sweeps) {
  VectorXd r = y - Z * b;
  double f = S.objective(r, b);
  SolveResult out{f, S.kkt(r, b), 0, 0, true};
  if (out.kkt <= tol) return out;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    for (Index j = 0; j < b.size(); ++j) S.coordinate(j, r, b);
    // refresh the residual from scratch now and then to avoid drift
    if (sweep % 50 == 0) r = y - Z * b;
    const double f_new = S.objective(r, b);
    if (f_new > f + 1e-12 * (1.0 + std::abs(f))) out.monotone = false;
    f = f_new;
    out.sweeps = sweep;
    if (S.kkt(r, b) <= tol) {
      out.kkt = S.kkt(r, b);
      break;
    }
    for (int k = 0; k < 5; ++k) {
      if (!S.newton(r, b, f)) break;
      ++out.newton_steps;
    }
    out.kkt = S.kkt(r, b);
    if (out.kkt <= tol) break;
  }
  out.objective = f;
  return out;
}

struct PathContext {
  Standardized s;
  double h0 = 1.0;
  double h_min = 1e-4;
  double location = 0.0;  // smoothed intercept-only fit at h0
};

inline PathContext make_context(const Dataset& data, double tau, const PenalizedOptions& opt) {
  PathContext c;
  c.s = standardize(data);
  const double sd = sample_sd(data.y);
  c.h_min = opt.h_min_factor * (sd > 0.0 ? sd : 1.0);
  const double q = data.intercept ? smooth_location(data.y, tau, 0.0) : 0.0;
  std::vector<double> a(static_cast<std::size_t>(data.n()));
  for (Index i = 0; i < data.n(); ++i) a[static_cast<std::size_t>(i)] = std::abs(data.y(i) - q);
  std::sort(a.begin(), a.end());
  const double h90 = a[static_cast<std::size_t>(std::floor(opt.h0_quantile * static_cast<double>(a.size() - 1)))];
  c.h0 = std::max(h90, c.h_min);
  c.location = data.intercept ? smooth_location(data.y, tau, c.h0) : 0.0;
  return c;
}

inline double l1_threshold(const MatrixXd& Z, const VectorXd& r, double tau, double h, Index first) {
  const double n = static_cast<double>(Z.rows());
  double m = 0.0;
  for (Index j = first; j < Z.cols(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < Z.rows(); ++i) {
      s += Z(i, j) * (h > 0.0 ? smooth_check_score(r(i), tau, h) : tau - (r(i) < 0.0 ? 1.0 : 0.0));
    }
    m = std::max(m, std::abs(s) / n);
  }
  return m;
}

}  // namespace detail

/// Smallest lambda at which the all-zero slope vector is optimal:
/// max_j |sum_i x_ij psi(y_i - q)| / (n alpha), with q the intercept-only fit.
/// With smoothing > 0 the smoothed score and smoothed intercept are used.
inline double lambda_max(const Dataset& data, double tau, double alpha_mix, double smoothing = 0.0) {
  require_tau(tau);
  data.validate();
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw DomainError("mixing weight must lie in [0, 1]");
  if (alpha_mix == 0.0) throw DomainError("ridge path has no finite lambda_max");
  const double q = data.intercept ? detail::smooth_location(data.y, tau, smoothing) : 0.0;
  const VectorXd r = data.y.array() - q;
  return detail::l1_threshold(data.X, r, tau, smoothing, 0) / alpha_mix;
}

namespace detail {

inline PenalizedFit finish(const PathContext& c, const VectorXd& b, const SolveResult& res,
                           double tau, double alpha, double lambda, double h, const PenalizedOptions& opt) {
  if (!(res.kkt <= opt.kkt_accept)) {
    throw ConvergenceError("penalized fit did not converge at lambda = " + std::to_string(lambda) +
                               " (KKT residual " + std::to_string(res.kkt) + ")",
                           res.kkt);
  }
  PenalizedFit fit;
  fit.tau = tau;
  fit.alpha = alpha;
  fit.lambda = lambda;
  fit.h = h;
  fit.beta_std = b;
  fit.beta = to_original(c.s, b);
  fit.objective = res.objective;
  fit.kkt = res.kkt;
  fit.sweeps = res.sweeps;
  fit.newton_steps = res.newton_steps;
  fit.monotone = res.monotone;
  return fit;
}

}  // namespace detail

/// Penalized fit at a single lambda, reached by halving the smoothing
/// parameter from h0 down to h_min with warm starts.
inline PenalizedFit fit_penalized(const Dataset& data, double tau, double alpha_mix, double lambda,
                                  const PenalizedOptions& opt = {}) {
  require_tau(tau);
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw DomainError("mixing weight must lie in [0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be a nonnegative number");
  const detail::PathContext c = detail::make_context(data, tau, opt);
  detail::SmoothSolver S(c.s.Z, c.s.y, c.s.intercept, tau);
  VectorXd b = VectorXd::Zero(c.s.Z.cols());
  if (c.s.intercept) b(0) = c.location;
  double h = c.h0;
  for (;;) {
    S.set(lambda, alpha_mix, h);
    const bool last = h <= c.h_min;
    auto res = detail::solve(S, c.s.y, c.s.Z, b, last ? opt.kkt_tol : opt.continuation_tol, opt.max_sweeps);
    if (last) return detail::finish(c, b, res, tau, alpha_mix, lambda, h, opt);
    h = std::max(h * opt.h_decay, c.h_min);
  }
}

/// Smallest lambda as a fraction of the lasso lambda_max (glmnet convention).
inline double default_lambda_ratio(const Dataset& data) { return data.n() > data.p() ? 1e-4 : 0.01; }

namespace detail {

inline PenalizedPath run_path(const PathContext& c, double tau, double alpha_mix, const std::vector<double>& lambdas,
                              const PenalizedOptions& opt) {
  SmoothSolver S(c.s.Z, c.s.y, c.s.intercept, tau);
  PenalizedPath path;
  path.tau = tau;
  path.alpha_mix = alpha_mix;
  path.lambdas = lambdas;
  path.betas.resize(c.s.Z.cols(), static_cast<Index>(lambdas.size()));
  VectorXd b = VectorXd::Zero(c.s.Z.cols());
  if (c.s.intercept) b(0) = c.location;
  double h = c.h0;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    S.set(lambdas[k], alpha_mix, h);
    path.warm_objectives.push_back(S.objective(c.s.y - c.s.Z * b, b));
    SolveResult res;
    try {
      res = solve(S, c.s.y, c.s.Z, b, opt.kkt_tol, opt.max_sweeps);
      finish(c, b, res, tau, alpha_mix, lambdas[k], h, opt);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("path index " + std::to_string(k) + ": " + e.what(), e.kkt_residual);
    }
    path.betas.col(static_cast<Index>(k)) = to_original(c.s, b);
    path.smoothing.push_back(h);
    path.kkt.push_back(res.kkt);
    path.objectives.push_back(res.objective);
    path.sweeps.push_back(res.sweeps);
    path.monotone = path.monotone && res.monotone;
    h = std::max(h * opt.h_decay, c.h_min);
  }
  return path;
}

}  // namespace detail

/// Warm-started path on a log-spaced grid from lambda_max down to ratio times
/// the lasso lambda_max, so every mixing weight ends at the same l1 strength.
/// lambda_max is taken on the standardized design at the initial smoothing
/// level so the first column has all slopes at zero. Ridge (alpha_mix = 0)
/// starts from the lambda_max of alpha_mix = 1e-3.
inline PenalizedPath fit_path(const Dataset& data, double tau, double alpha_mix, Index n_lambda = 100,
                              std::optional<double> ratio = std::nullopt, const PenalizedOptions& opt = {}) {
  require_tau(tau);
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw DomainError("mixing weight must lie in [0, 1]");
  if (n_lambda < 2) throw DomainError("a path needs at least two lambda values");
  const double rt = ratio.value_or(default_lambda_ratio(data));
  if (!(rt > 0.0 && rt < 1.0)) throw DomainError("lambda ratio must lie in (0, 1)");
  const detail::PathContext c = detail::make_context(data, tau, opt);
  const VectorXd r0 = c.s.y.array() - c.location;
  const double score_max = detail::l1_threshold(c.s.Z, r0, tau, c.h0, c.s.intercept ? 1 : 0);
  double lmax = score_max / std::max(alpha_mix, 1e-3);
  if (!(lmax > 0.0)) lmax = 1e-8;  // every slope score vanishes; any grid gives zero slopes
  const double span = rt * std::max(alpha_mix, 1e-3);
  std::vector<double> lambdas(static_cast<std::size_t>(n_lambda));
  for (Index k = 0; k < n_lambda; ++k) {
    lambdas[static_cast<std::size_t>(k)] =
        lmax * std::pow(span, static_cast<double>(k) / static_cast<double>(n_lambda - 1));
  }
  return detail::run_path(c, tau, alpha_mix, lambdas, opt);
}

/// Path over a supplied strictly decreasing lambda grid.
inline PenalizedPath fit_path(const Dataset& data, double tau, double alpha_mix, const std::vector<double>& lambdas,
                              const PenalizedOptions& opt = {}) {
  require_tau(tau);
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw DomainError("mixing weight must lie in [0, 1]");
  if (lambdas.empty()) throw DomainError("lambda grid is empty");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] >= 0.0)) throw DomainError("lambda values must be nonnegative");
    if (k > 0 && !(lambdas[k] < lambdas[k - 1])) throw DomainError("lambda grid must be strictly decreasing");
  }
  return detail::run_path(detail::make_context(data, tau, opt), tau, alpha_mix, lambdas, opt);
}

/// Index of the column with the smallest validation PMAD; ties go to the larger lambda.
inline Index select_by_validation(const PenalizedPath& path, const Dataset& val) {
  if (val.n() == 0) throw DataError("validation set is empty");
  if (path.betas.cols() == 0) throw DataError("path has no columns");
  if (val.n_coef() != path.betas.rows()) throw DataError("validation columns do not match the path");
  Index best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < path.betas.cols(); ++k) {
    const double e = pmad(val, path.betas.col(k));
    if (e < best_err) {
      best_err = e;
      best = k;
    }
  }
  return best;
}

}  // namespace qshrink
