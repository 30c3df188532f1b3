#pragma once

// Asymptotic covariance ingredients for quantile regression under serially
// dependent errors: the design moment D0, a Bartlett-kernel long-run score
// covariance, the error sparsity scale, and the sandwich Gamma with its
// partition blocks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "qshrink/dataset.hpp"
#include "qshrink/distributions.hpp"
#include "qshrink/error.hpp"
#include "qshrink/quantile_solver.hpp"

namespace qshrink {

struct CovarianceEstimate {
  MatrixXd D0;
  std::optional<MatrixXd> D1;
  MatrixXd A_hat;
  double omega_sq = 0.0;
  MatrixXd Gamma;  // D0^-1 A D0^-1, original coefficient order
  CoefBlocks blocks;
  MatrixXd G11, G12, G21, G22;
  MatrixXd G22_1;  // G22 - G21 G11^-1 G12
  // Schur complement of the precision form s * Gamma^-1, equal to s * G22^-1,
  // where s is the score variance scale tau(1 - tau). This is the weight of
  // the Wald quadratic form.
  MatrixXd precision_22_1;
  double score_scale = 1.0;
  Index bandwidth = 0;
  double d0_condition = 1.0;
};

inline MatrixXd estimate_D0(const Dataset& data) {
  const MatrixXd Z = design_matrix(data);
  MatrixXd D = (Z.transpose() * Z) / static_cast<double>(data.n());
  return 0.5 * (D + D.transpose());
}

/// Type-7 sample quantile of an already sorted vector.
inline double sorted_quantile(const std::vector<double>& s, double prob) {
  const double h = (static_cast<double>(s.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

/// Hall-Sheather bandwidth on the probability scale.
inline double hall_sheather_bandwidth(Index n, double tau, double level = 0.05) {
  const double x0 = dist::normal_quantile(tau);
  const double f0 = dist::normal_pdf(x0);
  const double z = dist::normal_quantile(1.0 - 0.5 * level);
  return std::pow(static_cast<double>(n), -1.0 / 3.0) * std::pow(z, 2.0 / 3.0) *
         std::pow(1.5 * f0 * f0 / (2.0 * x0 * x0 + 1.0), 1.0 / 3.0);
}

struct DensityEstimate {
  double density;
  double window;  // residual-scale width Q(tau + h) - Q(tau - h)
};

inline DensityEstimate quantile_density(const VectorXd& residuals, double tau) {
  require_tau(tau);
  const Index n = residuals.size();
  if (n < 20) throw DomainError("sparsity estimation needs at least 20 residuals");
  std::vector<double> s(residuals.data(), residuals.data() + n);
  std::sort(s.begin(), s.end());
  const double h = hall_sheather_bandwidth(n, tau);
  const double edge = 0.5 / static_cast<double>(n);
  const double lo = std::max(tau - h, edge);
  const double hi = std::min(tau + h, 1.0 - edge);
  const double width = sorted_quantile(s, hi) - sorted_quantile(s, lo);
  const double spread = s.back() - s.front();
  if (!(hi > lo) || !(width > 1e-12 * (1.0 + spread))) throw NumericalError("sparsity estimation failed");
  const double f = (hi - lo) / width;
  if (!(f > 1e-12) || !std::isfinite(f)) throw NumericalError("sparsity estimation failed");
  return {f, width};
}

/// omega^2 = tau (1 - tau) / f(F^-1(tau))^2 with a difference-quotient density
/// estimate over the Hall-Sheather window.
inline double estimate_sparsity(const VectorXd& residuals, double tau) {
  const double f = quantile_density(residuals, tau).density;
  return tau * (1.0 - tau) / (f * f);
}

inline Index default_hac_bandwidth(Index n) {
  return static_cast<Index>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

/// Bartlett-kernel (Newey-West) estimate of the long-run covariance of the
/// quantile score psi_tau(r_i) z_i.
inline MatrixXd estimate_A_hac(const Dataset& data, const VectorXd& residuals, double tau,
                               std::optional<Index> bandwidth = std::nullopt) {
  require_tau(tau);
  const Index n = data.n();
  if (residuals.size() != n) throw DataError("residual length does not match dataset");
  const Index L = bandwidth.value_or(default_hac_bandwidth(n));
  if (L < 0) throw DomainError("HAC bandwidth must be nonnegative");
  if (L >= n) throw DomainError("HAC bandwidth must be smaller than the sample size");
  MatrixXd S = design_matrix(data);
  for (Index i = 0; i < n; ++i) S.row(i) *= quantile_score(residuals(i), tau);
  MatrixXd A = S.transpose() * S;
  for (Index lag = 1; lag <= L; ++lag) {
    const double w = 1.0 - static_cast<double>(lag) / static_cast<double>(L + 1);
    const MatrixXd C = S.topRows(n - lag).transpose() * S.bottomRows(n - lag);
    A += w * (C + C.transpose());
  }
  A /= static_cast<double>(n);
  return 0.5 * (A + A.transpose());
}

/// Powell kernel estimate of D1 = (1/n) sum f_i(xi_i) z_i z_i'.
inline MatrixXd estimate_D1(const Dataset& data, const VectorXd& residuals, double tau) {
  const double c = 0.5 * quantile_density(residuals, tau).window;
  const MatrixXd Z = design_matrix(data);
  MatrixXd D = MatrixXd::Zero(Z.cols(), Z.cols());
  for (Index i = 0; i < data.n(); ++i) {
    if (std::abs(residuals(i)) <= c) D += Z.row(i).transpose() * Z.row(i);
  }
  return D / (2.0 * c * static_cast<double>(data.n()));
}

inline double symmetric_condition(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

/// Gamma = D0^-1 A D0^-1 and its blocks under the given coefficient blocks.
inline CovarianceEstimate build_gamma(const MatrixXd& D0, const MatrixXd& A_hat, const CoefBlocks& blocks,
                                      double score_scale = 1.0) {
  if (D0.rows() != D0.cols() || A_hat.rows() != D0.rows() || A_hat.cols() != D0.cols()) {
    throw DataError("D0 and A must be square matrices of the same size");
  }
  if (blocks.keep.empty() || blocks.test.empty()) throw DataError("both coefficient blocks must be nonempty");
  CovarianceEstimate out;
  out.D0 = D0;
  out.A_hat = A_hat;
  out.blocks = blocks;
  out.score_scale = score_scale;
  out.d0_condition = symmetric_condition(D0);
  Eigen::FullPivLU<MatrixXd> lu(D0);
  if (!lu.isInvertible() || !std::isfinite(out.d0_condition)) {
    throw NumericalError("D0 is singular (condition ratio " + std::to_string(out.d0_condition) + ")");
  }
  const MatrixXd Dinv = lu.inverse();
  out.Gamma = Dinv * A_hat * Dinv;
  out.Gamma = 0.5 * (out.Gamma + out.Gamma.transpose());
  out.G11 = gather(out.Gamma, blocks.keep, blocks.keep);
  out.G12 = gather(out.Gamma, blocks.keep, blocks.test);
  out.G21 = gather(out.Gamma, blocks.test, blocks.keep);
  out.G22 = gather(out.Gamma, blocks.test, blocks.test);
  Eigen::FullPivLU<MatrixXd> lu11(out.G11);
  if (!lu11.isInvertible()) throw NumericalError("Gamma_11 block is singular");
  out.G22_1 = out.G22 - out.G21 * lu11.solve(out.G12);
  out.G22_1 = 0.5 * (out.G22_1 + out.G22_1.transpose());
  Eigen::FullPivLU<MatrixXd> lu22(out.G22);
  if (!lu22.isInvertible()) throw NumericalError("Gamma_22 block is singular");
  out.precision_22_1 = score_scale * lu22.inverse();
  out.precision_22_1 = 0.5 * (out.precision_22_1 + out.precision_22_1.transpose());
  return out;
}

struct CovarianceOptions {
  std::optional<Index> bandwidth;
  bool with_D1 = false;
};

/// Full pipeline from a full-model fit: D0, HAC A, omega^2, Gamma blocks.
inline CovarianceEstimate estimate_covariance(const Dataset& data, const QuantileFit& full_fit,
                                              const PartitionSpec& partition, const CovarianceOptions& opt = {}) {
  partition.validate(data.p(), data.intercept);
  const double tau = full_fit.tau;
  const MatrixXd D0 = estimate_D0(data);
  // interpolated observations carry rounding-level residuals; their score is tau
  VectorXd resid = full_fit.residuals;
  const double zero_tol = 1e-9 * (1.0 + data.y.cwiseAbs().maxCoeff());
  for (Index i = 0; i < resid.size(); ++i)
    if (std::abs(resid(i)) <= zero_tol) resid(i) = 0.0;
  const MatrixXd A = estimate_A_hac(data, resid, tau, opt.bandwidth);
  CovarianceEstimate cov = build_gamma(D0, A, coef_blocks(partition, data.intercept), tau * (1.0 - tau));
  // the p + 1 interpolated zeros would pinch the quantile window; leave them out
  std::vector<double> nz;
  for (Index i = 0; i < resid.size(); ++i)
    if (resid(i) != 0.0) nz.push_back(resid(i));
  cov.omega_sq = estimate_sparsity(nz.size() >= 20 ? Eigen::Map<VectorXd>(nz.data(), static_cast<Index>(nz.size())) : resid, tau);
  cov.bandwidth = opt.bandwidth.value_or(default_hac_bandwidth(data.n()));
  if (opt.with_D1) cov.D1 = estimate_D1(data, resid, tau);
  return cov;
}

}  // namespace qshrink
