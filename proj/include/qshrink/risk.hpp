#pragma once

// Asymptotic distributional risk of the full, sub-model, pretest and Stein
// type estimators of the retained block under local alternatives
// beta_2 = gamma / sqrt(n), with the noncentral chi-square machinery behind it
// and a Monte Carlo oracle that samples the limiting Gaussian laws.
//
// Gamma here is the precision form: sqrt(n)(b_hat - b) -> N(0, omega^2 Gamma^-1).

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "qshrink/covariance.hpp"
#include "qshrink/dataset.hpp"
#include "qshrink/distributions.hpp"
#include "qshrink/error.hpp"
#include "qshrink/rng.hpp"
#include "qshrink/shrinkage.hpp"

namespace qshrink {

namespace detail {

// Sum over k of Poisson(k; Delta/2) * term(k), walking out from the mode in
// both directions. `term` must be bounded by `bound` in absolute value.
template <class Term>
double poisson_mixture(double Delta, double bound, const Term& term) {
  if (Delta == 0.0) return term(0);
  const double lam = 0.5 * Delta;
  auto weight = [lam](double k) { return std::exp(-lam + k * std::log(lam) - std::lgamma(k + 1.0)); };
  const double mode = std::floor(lam);
  double total = 0.0;
  const double cut = 1e-14 / std::max(1.0, bound);
  for (double k = mode;; k += 1.0) {
    const double w = weight(k);
    total += w * term(static_cast<int>(k));
    const double ratio = lam / (k + 1.0);
    if (ratio < 1.0 && w * ratio / (1.0 - ratio) < 0.1 * cut) break;
  }
  for (double k = mode - 1.0; k >= 0.0; k -= 1.0) {
    const double w = weight(k);
    total += w * term(static_cast<int>(k));
    const double ratio = k / lam;
    if (ratio < 1.0 && w * ratio / (1.0 - ratio) < 0.1 * cut) break;
  }
  return total;
}

// E[X^-power] for a central chi-square with m degrees of freedom.
inline double central_inverse_moment(double m, int power) {
  if (power == 0) return 1.0;
  return std::exp(std::lgamma(0.5 * m - power) - std::lgamma(0.5 * m) - power * std::log(2.0));
}

inline void require_moment(double df, int power) {
  if (power < 0 || power > 2) throw DomainError("inverse moment power must be 0, 1 or 2");
  if (!(df > 2.0 * power)) {
    throw DomainError("moment does not exist: E[chi2_df^-" + std::to_string(power) + "] needs df > " +
                      std::to_string(2 * power));
  }
}

}  // namespace detail

/// Noncentral chi-square CDF by its Poisson mixture of central CDFs.
inline double ncchisq_cdf(double x, double df, double Delta) {
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  if (!(Delta >= 0.0)) throw DomainError("noncentrality must be nonnegative");
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double v = detail::poisson_mixture(Delta, 1.0, [&](int k) { return dist::chisq_cdf(x, df + 2.0 * k); });
  return std::clamp(v, 0.0, 1.0);
}

/// Upper tail 1 - CDF, summed directly so small tails keep their precision.
inline double ncchisq_sf(double x, double df, double Delta) {
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  if (!(Delta >= 0.0)) throw DomainError("noncentrality must be nonnegative");
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double v = detail::poisson_mixture(Delta, 1.0, [&](int k) { return dist::chisq_sf(x, df + 2.0 * k); });
  return std::clamp(v, 0.0, 1.0);
}

/// E[(chi2_df(Delta))^-power], power in {1, 2}.
inline double expect_inv_ncchisq(double df, double Delta, int power) {
  detail::require_moment(df, power);
  if (!(Delta >= 0.0)) throw DomainError("noncentrality must be nonnegative");
  const double bound = detail::central_inverse_moment(df, power);
  return detail::poisson_mixture(Delta, bound,
                                 [&](int k) { return detail::central_inverse_moment(df + 2.0 * k, power); });
}

/// E[(chi2_df(Delta))^-power I(chi2_df(Delta) < cutoff)], power in {0, 1, 2}.
/// Uses E[X^-r I(X < c)] = E[X^-r] P(chi2_{m-2r} < c) for central X ~ chi2_m.
inline double truncated_moment(double df, double Delta, double cutoff, int power) {
  detail::require_moment(df, power);
  if (!(Delta >= 0.0)) throw DomainError("noncentrality must be nonnegative");
  if (!(cutoff > 0.0)) return 0.0;
  if (std::isinf(cutoff)) return power == 0 ? 1.0 : expect_inv_ncchisq(df, Delta, power);
  const double bound = detail::central_inverse_moment(df, power);
  return detail::poisson_mixture(Delta, bound, [&](int k) {
    const double m = df + 2.0 * k;
    return detail::central_inverse_moment(m, power) * dist::chisq_cdf(cutoff, m - 2.0 * power);
  });
}

struct AsymptoticParams {
  // precision-form blocks
  MatrixXd G11, G12, G21, G22;
  MatrixXd G22_1;      // G22 - G21 G11^-1 G12
  MatrixXd G11_2_inv;  // (G11 - G12 G22^-1 G21)^-1
  MatrixXd B;          // G11^-1 G12
  double omega_sq = 1.0;
  VectorXd gamma_vec;
  VectorXd delta_vec;  // B gamma
  MatrixXd Phi;        // B G22_1^-1 B'
  // covariance blocks exactly as printed for the joint limit of
  // (sqrt(n)(b1_hat - b1), sqrt(n)(b1_hat - b1_tilde)); kept for reference,
  // the oracle samples the law implied by the precision blocks instead
  MatrixXd Sigma12, Sigma21, Sigma_star;
  MatrixXd W;
  double Delta = 0.0;

  Index p1() const { return G11.rows(); }
  Index p2() const { return G22.rows(); }

  void check() const {
    auto need = [](const MatrixXd& m, Index r, Index c, const char* name) {
      if (m.size() == 0) throw DataError(std::string("risk parameters are missing block ") + name);
      if (m.rows() != r || m.cols() != c) throw DataError(std::string("block ") + name + " has the wrong shape");
    };
    const Index a = G11.rows(), b = G22.rows();
    need(G11, a, a, "Gamma_11");
    need(G22, b, b, "Gamma_22");
    need(G12, a, b, "Gamma_12");
    need(G21, b, a, "Gamma_21");
    need(G22_1, b, b, "Gamma_22.1");
    need(G11_2_inv, a, a, "Gamma_11.2^-1");
    need(Phi, a, a, "Phi");
    need(W, a, a, "W");
    if (gamma_vec.size() != b) throw DataError("local alternative direction gamma has the wrong length");
    if (!(omega_sq > 0.0)) throw DomainError("omega^2 must be positive");
  }
};

inline CoefBlocks leading_blocks(Index p1, Index p) {
  CoefBlocks b;
  for (Index j = 0; j < p; ++j) (j < p1 ? b.keep : b.test).push_back(j);
  return b;
}

/// Sets gamma and the quantities that depend on it.
inline void set_gamma(AsymptoticParams& prm, const VectorXd& gamma) {
  if (gamma.size() != prm.G22.rows()) throw DataError("local alternative direction gamma has the wrong length");
  prm.gamma_vec = gamma;
  prm.delta_vec = prm.B * gamma;
  prm.Delta = std::max(0.0, gamma.dot(prm.G22_1 * gamma) / prm.omega_sq);
}

/// Builds the risk parameters from a precision matrix split by `blocks`.
inline AsymptoticParams make_params(const MatrixXd& Gamma, const CoefBlocks& blocks, double omega_sq,
                                    const MatrixXd& W, const VectorXd& gamma) {
  if (Gamma.rows() != Gamma.cols()) throw DataError("Gamma must be square");
  if (!(omega_sq > 0.0)) throw DomainError("omega^2 must be positive");
  AsymptoticParams prm;
  prm.G11 = gather(Gamma, blocks.keep, blocks.keep);
  prm.G12 = gather(Gamma, blocks.keep, blocks.test);
  prm.G21 = gather(Gamma, blocks.test, blocks.keep);
  prm.G22 = gather(Gamma, blocks.test, blocks.test);
  prm.omega_sq = omega_sq;
  Eigen::LLT<MatrixXd> l11(prm.G11), l22(prm.G22);
  if (l11.info() != Eigen::Success) throw NumericalError("Gamma_11 is not positive definite");
  if (l22.info() != Eigen::Success) throw NumericalError("Gamma_22 is not positive definite");
  prm.B = l11.solve(prm.G12);
  prm.G22_1 = prm.G22 - prm.G21 * prm.B;
  prm.G22_1 = 0.5 * (prm.G22_1 + prm.G22_1.transpose());
  Eigen::LLT<MatrixXd> ls(prm.G22_1);
  if (ls.info() != Eigen::Success) throw NumericalError("Gamma_22.1 is not positive definite");
  MatrixXd G11_2 = prm.G11 - prm.G12 * l22.solve(prm.G21);
  G11_2 = 0.5 * (G11_2 + G11_2.transpose());
  prm.G11_2_inv = G11_2.llt().solve(MatrixXd::Identity(G11_2.rows(), G11_2.cols()));
  prm.Phi = prm.B * ls.solve(prm.B.transpose());
  prm.Phi = 0.5 * (prm.Phi + prm.Phi.transpose());
  const MatrixXd G11_inv = l11.solve(MatrixXd::Identity(prm.G11.rows(), prm.G11.cols()));
  prm.Sigma12 = -prm.G12 * prm.G21 * G11_inv;
  prm.Sigma21 = prm.Sigma12.transpose();
  prm.Sigma_star = prm.Sigma21 + omega_sq * prm.G11_2_inv;
  if (W.rows() != prm.G11.rows() || W.cols() != prm.G11.cols()) throw DataError("weight matrix must be p1 x p1");
  prm.W = W;
  set_gamma(prm, gamma);
  return prm;
}

/// Risk parameters for the fitted model: precision tau(1 - tau) Gamma^-1.
inline AsymptoticParams params_from_covariance(const CovarianceEstimate& cov, double tau, const MatrixXd& W,
                                               const VectorXd& gamma) {
  const MatrixXd P = tau * (1.0 - tau) * cov.Gamma.inverse();
  return make_params(0.5 * (P + P.transpose()), cov.blocks, cov.omega_sq, W, gamma);
}

/// Rescales gamma along its current direction so the noncentrality equals Delta.
inline AsymptoticParams at_delta(AsymptoticParams prm, double Delta) {
  if (!(Delta >= 0.0)) throw DomainError("noncentrality must be nonnegative");
  const double q = prm.gamma_vec.dot(prm.G22_1 * prm.gamma_vec);
  if (!(q > 0.0)) throw DomainError("local alternative direction must be nonzero");
  set_gamma(prm, prm.gamma_vec * std::sqrt(Delta * prm.omega_sq / q));
  prm.Delta = Delta;
  return prm;
}

struct RiskOptions {
  double alpha_level = 0.05;  // pretest size
};

namespace detail {

// Moments E[g(X2)], E[g(X4)^2] and E[g(X2)^2] of the weight g placed on the
// full-model estimator, X_k ~ chi2_{p2 + k}(Delta).
struct WeightMoments {
  double g2;
  double g2sq;
  double g4sq;
};

inline WeightMoments weight_moments(EstimatorKind kind, Index p2, double Delta, double alpha_level) {
  const double q = static_cast<double>(p2);
  switch (kind) {
    case EstimatorKind::FM: return {1.0, 1.0, 1.0};
    case EstimatorKind::SM: return {0.0, 0.0, 0.0};
    case EstimatorKind::PT: {
      if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw DomainError("test size must lie in (0, 1)");
      const double c = dist::chisq_upper_quantile(alpha_level, q);
      const double s2 = ncchisq_sf(c, q + 2.0, Delta);
      return {s2, s2, ncchisq_sf(c, q + 4.0, Delta)};
    }
    case EstimatorKind::S: {
      if (p2 < 3) throw DomainError("Stein-type risk needs p2 >= 3");
      const double d = q - 2.0;
      auto sq = [&](double df) {
        return 1.0 - 2.0 * d * expect_inv_ncchisq(df, Delta, 1) + d * d * expect_inv_ncchisq(df, Delta, 2);
      };
      return {1.0 - d * expect_inv_ncchisq(q + 2.0, Delta, 1), sq(q + 2.0), sq(q + 4.0)};
    }
    case EstimatorKind::PS: {
      if (p2 < 3) throw DomainError("Stein-type risk needs p2 >= 3");
      const double d = q - 2.0;
      // moments restricted to X > d
      auto upper = [&](double df, int power) {
        const double full = power == 0 ? 1.0 : expect_inv_ncchisq(df, Delta, power);
        return full - truncated_moment(df, Delta, d, power);
      };
      auto sq = [&](double df) { return upper(df, 0) - 2.0 * d * upper(df, 1) + d * d * upper(df, 2); };
      return {upper(q + 2.0, 0) - d * upper(q + 2.0, 1), sq(q + 2.0), sq(q + 4.0)};
    }
  }
  throw DomainError("unknown estimator kind");
}

}  // namespace detail

/// Asymptotic distributional risk E[e' W e] of the limiting estimator error
/// e = v + delta - g(X) B z, where g is the weight on the full-model fit:
/// omega^2 tr(W G11^-1) + delta'W delta (1 - 2E g(X2) + E g^2(X4)) + omega^2 tr(W Phi) E g^2(X2).
inline double risk(EstimatorKind kind, const AsymptoticParams& prm, const RiskOptions& opt = {}) {
  prm.check();
  if (kind == EstimatorKind::FM) return prm.omega_sq * (prm.W * prm.G11_2_inv).trace();
  const MatrixXd G11_inv = prm.G11.llt().solve(MatrixXd::Identity(prm.p1(), prm.p1()));
  const double base = prm.omega_sq * (prm.W * G11_inv).trace();
  const double bias = prm.delta_vec.dot(prm.W * prm.delta_vec);
  if (kind == EstimatorKind::SM) return base + bias;
  const double spread = prm.omega_sq * (prm.W * prm.Phi).trace();
  const auto m = detail::weight_moments(kind, prm.p2(), prm.Delta, opt.alpha_level);
  return base + bias * (1.0 - 2.0 * m.g2 + m.g4sq) + spread * m.g2sq;
}

struct McRisk {
  EstimatorKind kind;
  double estimate;
  double std_error;
};

/// Monte Carlo risk of the limiting estimators: draws the joint Gaussian limit
/// of (sqrt(n)(b1_hat - b1), sqrt(n) b2_hat), forms each estimator's error and
/// averages the weighted quadratic loss. All kinds share the same draws.
inline std::vector<McRisk> mc_risk_oracle(const std::vector<EstimatorKind>& kinds, const AsymptoticParams& prm,
                                          Index n_draws, std::uint64_t seed, const RiskOptions& opt = {}) {
  prm.check();
  if (n_draws < 10000) throw DomainError("risk oracle needs at least 10^4 draws");
  const Index p1 = prm.p1(), p2 = prm.p2(), p = p1 + p2;
  MatrixXd P(p, p);
  P << prm.G11, prm.G12, prm.G21, prm.G22;
  Eigen::LLT<MatrixXd> lp(P);
  if (lp.info() != Eigen::Success) throw NumericalError("joint precision matrix is not positive definite");
  MatrixXd C = prm.omega_sq * lp.solve(MatrixXd::Identity(p, p));
  C = 0.5 * (C + C.transpose());
  Eigen::LLT<MatrixXd> lc(C);
  if (lc.info() != Eigen::Success) throw NumericalError("joint covariance is not positive semidefinite");
  const MatrixXd L = lc.matrixL();

  const double q = static_cast<double>(p2);
  const double d = q - 2.0;
  const bool need_c = std::find(kinds.begin(), kinds.end(), EstimatorKind::PT) != kinds.end();
  const double c = need_c ? dist::chisq_upper_quantile(opt.alpha_level, q) : 0.0;
  for (EstimatorKind k : kinds) {
    if ((k == EstimatorKind::S || k == EstimatorKind::PS) && p2 < 3) throw DomainError("Stein-type risk needs p2 >= 3");
  }

  Philox rng(seed, 0, StreamRole::oracle);
  std::vector<double> sum(kinds.size(), 0.0), sumsq(kinds.size(), 0.0);
  VectorXd xi(p), u(p), z(p2), t1(p1), t3(p1), e(p1);
  for (Index r = 0; r < n_draws; ++r) {
    for (Index j = 0; j < p; ++j) xi(j) = rng.normal();
    u.noalias() = L * xi;
    z = prm.gamma_vec + u.tail(p2);
    t1 = u.head(p1);
    t3.noalias() = -prm.B * z;  // sqrt(n)(b1_hat - b1_tilde)
    const double w = z.dot(prm.G22_1 * z) / prm.omega_sq;
    for (std::size_t a = 0; a < kinds.size(); ++a) {
      double h = 0.0;  // weight on the sub-model correction
      switch (kinds[a]) {
        case EstimatorKind::FM: h = 0.0; break;
        case EstimatorKind::SM: h = 1.0; break;
        case EstimatorKind::PT: h = w < c ? 1.0 : 0.0; break;
        case EstimatorKind::S: h = d / w; break;
        case EstimatorKind::PS: h = std::min(1.0, d / w); break;
      }
      e = t1 - h * t3;
      const double loss = e.dot(prm.W * e);
      sum[a] += loss;
      sumsq[a] += loss * loss;
    }
  }
  std::vector<McRisk> out;
  const double N = static_cast<double>(n_draws);
  for (std::size_t a = 0; a < kinds.size(); ++a) {
    const double mean = sum[a] / N;
    const double var = std::max(0.0, (sumsq[a] - N * mean * mean) / (N - 1.0));
    out.push_back({kinds[a], mean, std::sqrt(var / N)});
  }
  return out;
}

inline McRisk mc_risk_oracle(EstimatorKind kind, const AsymptoticParams& prm, Index n_draws, std::uint64_t seed,
                             const RiskOptions& opt = {}) {
  return mc_risk_oracle(std::vector<EstimatorKind>{kind}, prm, n_draws, seed, opt).front();
}

struct RiskPoint {
  double Delta;
  std::map<EstimatorKind, double> risks;
};

/// Risks over a noncentrality grid with gamma scaled along the template's direction.
inline std::vector<RiskPoint> risk_curve(const AsymptoticParams& tmpl, const std::vector<EstimatorKind>& kinds,
                                         const std::vector<double>& grid, const RiskOptions& opt = {}) {
  if (grid.empty()) throw DomainError("noncentrality grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0)) throw DomainError("noncentrality grid values must be nonnegative");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw DomainError("noncentrality grid must be increasing");
  }
  if (!(tmpl.gamma_vec.size() > 0 && tmpl.gamma_vec.squaredNorm() > 0.0)) {
    throw DomainError("local alternative direction must be nonzero");
  }
  std::vector<RiskPoint> out;
  for (double D : grid) {
    const AsymptoticParams prm = at_delta(tmpl, D);
    RiskPoint pt{D, {}};
    for (EstimatorKind k : kinds) pt.risks[k] = risk(k, prm, opt);
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace qshrink
