#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "qshrink/dataset.hpp"
#include "qshrink/distributions.hpp"
#include "qshrink/error.hpp"
#include "qshrink/parallel.hpp"
#include "qshrink/quantile_solver.hpp"
#include "qshrink/rng.hpp"

namespace qshrink {

/// Biased sample autocorrelations 0..max_lag of a centered series.
inline VectorXd acf(const VectorXd& x, Index max_lag) {
  const Index n = x.size();
  if (max_lag < 0 || max_lag >= n) throw DomainError("max_lag must lie in [0, n)");
  const VectorXd c = x.array() - x.mean();
  const double c0 = c.squaredNorm();
  if (!(c0 > 0.0)) throw DataError("autocorrelation of a constant series is undefined");
  VectorXd out(max_lag + 1);
  for (Index l = 0; l <= max_lag; ++l) out(l) = c.tail(n - l).dot(c.head(n - l)) / c0;
  return out;
}

struct DurbinWatsonRow {
  Index lag = 1;
  double autocorr = 0.0;
  double dw = 0.0;
  double p_value = 1.0;
};

struct DwOptions {
  Index permutations = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

namespace detail {

inline double dw_stat(const VectorXd& r, Index lag) {
  const Index n = r.size();
  const double den = r.squaredNorm();
  if (!(den > 0.0)) return 0.0;  // all residuals zero: no differences either
  return (r.tail(n - lag) - r.head(n - lag)).squaredNorm() / den;
}

}  // namespace detail

/// Lag-l Durbin-Watson statistic sum_{i>l}(r_i - r_{i-l})^2 / sum r_i^2 with
/// the lag-l sample autocorrelation and a two-sided permutation p-value: the
/// residual order is shuffled `permutations` times (each shuffle on its own
/// seeded stream) and the p-value is the share of shuffles at least as far
/// from the permutation mean as the observed statistic.
inline DurbinWatsonRow durbin_watson(const VectorXd& residuals, Index lag, const DwOptions& opt = {}) {
  const Index n = residuals.size();
  if (lag < 1) throw DomainError("Durbin-Watson lag must be at least 1");
  if (4 * lag >= n) throw DataError("Durbin-Watson lag " + std::to_string(lag) + " needs n > " + std::to_string(4 * lag));
  if (opt.permutations < 1) throw DomainError("need at least one permutation");
  DurbinWatsonRow row;
  row.lag = lag;
  row.dw = detail::dw_stat(residuals, lag);
  const VectorXd c = residuals.array() - residuals.mean();
  row.autocorr = c.squaredNorm() > 0.0 ? c.tail(n - lag).dot(c.head(n - lag)) / c.squaredNorm() : 1.0;

  std::vector<double> perm_dw(static_cast<std::size_t>(opt.permutations));
  detail::parallel_for(opt.permutations, opt.threads, [&](Index b) {
    Philox rng(opt.seed, static_cast<std::uint64_t>(b), StreamRole::permutation);
    VectorXd r = residuals;
    for (Index i = n - 1; i > 0; --i) std::swap(r(i), r(static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)))));
    perm_dw[static_cast<std::size_t>(b)] = detail::dw_stat(r, lag);
  });
  const double centre = std::accumulate(perm_dw.begin(), perm_dw.end(), 0.0) / static_cast<double>(perm_dw.size());
  const double obs = std::abs(row.dw - centre);
  Index extreme = 0;
  for (double v : perm_dw)
    if (std::abs(v - centre) >= obs - 1e-12) ++extreme;
  row.p_value = static_cast<double>(extreme + 1) / static_cast<double>(opt.permutations + 1);
  return row;
}

struct VifResult {
  std::vector<double> values;       // +inf for exactly collinear columns
  std::vector<std::string> notes;   // one message per infinite entry
};

/// VIF_j = 1 / (1 - R^2_j) from regressing column j on the other columns with
/// an intercept.
inline VifResult vif(const Dataset& data) {
  data.validate();
  const Index p = data.p();
  if (p < 2) throw DataError("VIF needs at least two covariates");
  VifResult out;
  const MatrixXd Xc = data.X.rowwise() - data.X.colwise().mean();
  for (Index j = 0; j < p; ++j) {
    const VectorXd target = Xc.col(j);
    const double tss = target.squaredNorm();
    if (!(tss > 0.0)) {
      out.values.push_back(std::numeric_limits<double>::infinity());
      out.notes.push_back(data.label(j) + " is constant");
      continue;
    }
    MatrixXd others(data.n(), p - 1);
    std::vector<Index> idx;
    for (Index k = 0; k < p; ++k)
      if (k != j) {
        others.col(static_cast<Index>(idx.size())) = Xc.col(k);
        idx.push_back(k);
      }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(others);
    const VectorXd coef = qr.solve(target);
    const double rss = (target - others * coef).squaredNorm();
    const double one_minus_r2 = rss / tss;
    if (one_minus_r2 <= 1e-12) {
      out.values.push_back(std::numeric_limits<double>::infinity());
      // name the partner columns carrying the dependence
      std::string partners;
      const double scale = coef.cwiseAbs().maxCoeff();
      for (Index k = 0; k < coef.size(); ++k) {
        if (std::abs(coef(k)) > 1e-8 * scale) {
          if (!partners.empty()) partners += ", ";
          partners += data.label(idx[static_cast<std::size_t>(k)]);
        }
      }
      out.notes.push_back(data.label(j) + " is collinear with " + partners);
    } else {
      out.values.push_back(1.0 / one_minus_r2);
    }
  }
  return out;
}

/// lambda_max / lambda_min of X'X for the stored covariate columns (no
/// intercept column is added).
inline double condition_ratio(const Dataset& data) {
  data.validate();
  const MatrixXd G = data.X.transpose() * data.X;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 1e-14 * hi)) throw NumericalError("X'X is not positive definite");
  return hi / lo;
}

struct OutlierReport {
  VectorXd studentized;       // externally studentized OLS residuals
  VectorXd adjusted_p;        // Bonferroni, capped at 1
  std::vector<Index> flagged;  // 0-based rows with adjusted p below the threshold
};

/// Bonferroni outlier test on externally studentized OLS residuals against
/// t with n - k - 1 degrees of freedom (k coefficients including the intercept).
inline OutlierReport outlier_test(const Dataset& data, double threshold = 0.05) {
  const OlsFit fit = fit_ols(data);
  const MatrixXd Z = design_matrix(data);
  const Index n = data.n();
  const Index k = Z.cols();
  const Index df = n - k - 1;
  if (df < 1) throw DataError("outlier test needs n > k + 1");
  OutlierReport rep;
  rep.studentized.resize(n);
  rep.adjusted_p.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double h = Z.row(i).dot(fit.xtx_inv * Z.row(i).transpose());
    const double e = fit.residuals(i);
    if (1.0 - h <= 1e-12) {
      rep.studentized(i) = 0.0;  // leverage one: the row fits itself exactly
      rep.adjusted_p(i) = 1.0;
      continue;
    }
    const double s2 = (fit.rss - e * e / (1.0 - h)) / static_cast<double>(df);
    const double t = s2 > 0.0 ? e / std::sqrt(s2 * (1.0 - h)) : std::copysign(std::numeric_limits<double>::infinity(), e);
    rep.studentized(i) = t;
    const double p = std::isinf(t) ? 0.0 : dist::student_t_two_sided(t, static_cast<double>(df));
    rep.adjusted_p(i) = std::min(1.0, static_cast<double>(n) * p);
    if (rep.adjusted_p(i) < threshold) rep.flagged.push_back(i);
  }
  return rep;
}

struct DiagnosticsReport {
  std::vector<DurbinWatsonRow> dw_rows;
  VifResult vif;
  double condition_ratio = 1.0;
  OutlierReport outliers;
  VectorXd acf;
};

/// Full battery on the OLS residuals of `data`.
inline DiagnosticsReport diagnose(const Dataset& data, Index max_lag = 6, const DwOptions& dw = {},
                                  double outlier_threshold = 0.05) {
  data.validate();
  const OlsFit fit = fit_ols(data);
  DiagnosticsReport rep;
  for (Index l = 1; l <= max_lag; ++l) rep.dw_rows.push_back(durbin_watson(fit.residuals, l, dw));
  if (data.p() >= 2) rep.vif = vif(data);
  rep.condition_ratio = condition_ratio(data);
  rep.outliers = outlier_test(data, outlier_threshold);
  rep.acf = acf(fit.residuals, max_lag);
  return rep;
}

}  // namespace qshrink
