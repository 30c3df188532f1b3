#pragma once

// Wald test of the tested block and the estimators that combine a full-model
// fit with a sub-model fit: pretest, Stein-type and positive-part Stein.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qshrink/covariance.hpp"
#include "qshrink/dataset.hpp"
#include "qshrink/distributions.hpp"
#include "qshrink/error.hpp"
#include "qshrink/quantile_solver.hpp"

namespace qshrink {

enum class EstimatorKind { FM, SM, PT, S, PS };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::FM: return "FM";
    case EstimatorKind::SM: return "SM";
    case EstimatorKind::PT: return "PT";
    case EstimatorKind::S: return "S";
    case EstimatorKind::PS: return "PS";
  }
  return "?";
}

struct ShrinkageResult {
  EstimatorKind kind = EstimatorKind::FM;
  VectorXd beta;
  double wald = 0.0;
  double d = 0.0;
  double critical = std::numeric_limits<double>::quiet_NaN();
  double alpha_level = std::numeric_limits<double>::quiet_NaN();
  // weight on the full-model coefficients; 1 is FM, 0 is SM
  double fm_weight = 1.0;
  std::string warning;
};

/// W = n omega^-2 b2' P b2 where P is the precision-form Schur block stored in
/// the covariance estimate.
inline double wald_stat(const VectorXd& beta_fm, const CovarianceEstimate& cov, Index n) {
  const VectorXd b2 = gather(beta_fm, cov.blocks.test);
  if (b2.size() != cov.precision_22_1.rows()) {
    throw DataError("tested block has " + std::to_string(b2.size()) + " coefficients but the covariance block is " +
                    std::to_string(cov.precision_22_1.rows()) + " x " + std::to_string(cov.precision_22_1.cols()));
  }
  if (!(cov.omega_sq > 0.0)) throw NumericalError("sparsity estimate must be positive");
  const double q = b2.dot(cov.precision_22_1 * b2);
  return std::max(0.0, static_cast<double>(n) * q / cov.omega_sq);
}

inline double wald_stat(const QuantileFit& fit_fm, const CovarianceEstimate& cov, Index n) {
  return wald_stat(fit_fm.beta, cov, n);
}

namespace detail {

inline void check_pair(const VectorXd& fm, const VectorXd& sm) {
  if (fm.size() != sm.size()) throw DataError("full and sub-model coefficient vectors differ in length");
}

inline ShrinkageResult combine(EstimatorKind kind, const VectorXd& fm, const VectorXd& sm, double w, double wald) {
  ShrinkageResult r;
  r.kind = kind;
  r.wald = wald;
  r.fm_weight = w;
  if (w == 1.0) r.beta = fm;
  else if (w == 0.0) r.beta = sm;
  else r.beta = w * fm + (1.0 - w) * sm;
  return r;
}

inline double stein_constant(Index p2, std::string& warning) {
  if (p2 < 3) {
    throw DomainError("Stein-type shrinkage needs at least 3 tested coefficients (d = p2 - 2 >= 1), got p2 = " +
                      std::to_string(p2));
  }
  const double d = static_cast<double>(p2 - 2);
  if (d < 3.0) warning = "shrinkage constant d = " + std::to_string(p2 - 2) + " is below 3";
  return d;
}

}  // namespace detail

inline ShrinkageResult full_model(const VectorXd& fm, double wald = 0.0) {
  return detail::combine(EstimatorKind::FM, fm, fm, 1.0, wald);
}

inline ShrinkageResult sub_model(const VectorXd& sm, double wald = 0.0) {
  return detail::combine(EstimatorKind::SM, sm, sm, 0.0, wald);
}

inline ShrinkageResult pretest(const VectorXd& fm, const VectorXd& sm, double wald, Index p2, double alpha_level) {
  detail::check_pair(fm, sm);
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw DomainError("test size must lie in (0, 1)");
  if (p2 < 1) throw DomainError("pretest needs at least one tested coefficient");
  const double c = dist::chisq_upper_quantile(alpha_level, static_cast<double>(p2));
  auto r = detail::combine(EstimatorKind::PT, fm, sm, wald < c ? 0.0 : 1.0, wald);
  r.critical = c;
  r.alpha_level = alpha_level;
  return r;
}

inline ShrinkageResult stein(const VectorXd& fm, const VectorXd& sm, double wald, Index p2) {
  detail::check_pair(fm, sm);
  std::string warning;
  const double d = detail::stein_constant(p2, warning);
  if (!(wald > 0.0)) throw DomainError("shrinkage undefined at zero Wald statistic");
  auto r = detail::combine(EstimatorKind::S, fm, sm, 1.0 - d / wald, wald);
  r.d = d;
  r.warning = warning;
  return r;
}

inline ShrinkageResult positive_stein(const VectorXd& fm, const VectorXd& sm, double wald, Index p2) {
  detail::check_pair(fm, sm);
  std::string warning;
  const double d = detail::stein_constant(p2, warning);
  if (!(wald > 0.0)) throw DomainError("shrinkage undefined at zero Wald statistic");
  auto r = detail::combine(EstimatorKind::PS, fm, sm, wald <= d ? 0.0 : 1.0 - d / wald, wald);
  r.d = d;
  r.warning = warning;
  return r;
}

inline ShrinkageResult pretest(const QuantileFit& fm, const QuantileFit& sm, double wald, Index p2,
                               double alpha_level) {
  return pretest(fm.beta, sm.beta, wald, p2, alpha_level);
}
inline ShrinkageResult stein(const QuantileFit& fm, const QuantileFit& sm, double wald, Index p2) {
  return stein(fm.beta, sm.beta, wald, p2);
}
inline ShrinkageResult positive_stein(const QuantileFit& fm, const QuantileFit& sm, double wald, Index p2) {
  return positive_stein(fm.beta, sm.beta, wald, p2);
}

/// BIC for a quantile fit: 2n log(mean check loss) + k log n.
inline double quantile_bic(double objective, Index n, Index k) {
  const double nn = static_cast<double>(n);
  const double mean_loss = std::max(objective / nn, std::numeric_limits<double>::min());
  return 2.0 * nn * std::log(mean_loss) + static_cast<double>(k) * std::log(nn);
}

struct BicSelection {
  PartitionSpec partition;  // test may be empty when every column is retained
  double bic = 0.0;
  bool exhaustive = true;
};

namespace detail {

inline double subset_bic(const MatrixXd& Z, const VectorXd& y, double tau, bool intercept,
                         const std::vector<Index>& keep) {
  const Index k = static_cast<Index>(keep.size()) + (intercept ? 1 : 0);
  if (k == 0) return std::numeric_limits<double>::infinity();
  MatrixXd Zs(Z.rows(), k);
  Index c = 0;
  if (intercept) Zs.col(c++) = Z.col(0);
  for (Index j : keep) Zs.col(c++) = Z.col(j + (intercept ? 1 : 0));
  const QuantileFit fit = fit_quantile_design(Zs, y, tau);
  return quantile_bic(fit.objective, Z.rows(), k);
}

}  // namespace detail

/// Sub-model choice by quantile BIC. Exhaustive over all covariate subsets
/// when p <= max_subset, forward stepwise otherwise. The intercept is always
/// retained.
inline BicSelection select_submodel_bic(const Dataset& data, double tau, Index max_subset = 15) {
  data.validate();
  require_tau(tau);
  const Index p = data.p();
  const MatrixXd Z = design_matrix(data);
  BicSelection out;
  std::vector<Index> best_keep;
  double best = std::numeric_limits<double>::infinity();

  if (p <= max_subset) {
    const std::uint64_t total = std::uint64_t{1} << p;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      std::vector<Index> keep;
      for (Index j = 0; j < p; ++j)
        if (mask >> j & 1u) keep.push_back(j);
      if (static_cast<Index>(keep.size()) + (data.intercept ? 1 : 0) > data.n()) continue;
      const double b = detail::subset_bic(Z, data.y, tau, data.intercept, keep);
      if (b < best) {
        best = b;
        best_keep = keep;
      }
    }
  } else {
    out.exhaustive = false;
    std::vector<bool> in(static_cast<std::size_t>(p), false);
    best = detail::subset_bic(Z, data.y, tau, data.intercept, best_keep);
    for (;;) {
      Index add = -1;
      double add_bic = best;
      for (Index j = 0; j < p; ++j) {
        if (in[static_cast<std::size_t>(j)]) continue;
        std::vector<Index> trial = best_keep;
        trial.push_back(j);
        std::sort(trial.begin(), trial.end());
        if (static_cast<Index>(trial.size()) + (data.intercept ? 1 : 0) > data.n()) continue;
        const double b = detail::subset_bic(Z, data.y, tau, data.intercept, trial);
        if (b < add_bic) {
          add_bic = b;
          add = j;
        }
      }
      if (add < 0) break;
      in[static_cast<std::size_t>(add)] = true;
      best_keep.push_back(add);
      std::sort(best_keep.begin(), best_keep.end());
      best = add_bic;
    }
  }
  out.partition = PartitionSpec::from_keep(p, best_keep);
  out.bic = best;
  return out;
}

}  // namespace qshrink
