#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qshrink/covariance.hpp"
#include "qshrink/dataset.hpp"
#include "qshrink/error.hpp"
#include "qshrink/metrics.hpp"
#include "qshrink/parallel.hpp"
#include "qshrink/penalized.hpp"
#include "qshrink/quantile_solver.hpp"
#include "qshrink/rng.hpp"
#include "qshrink/shrinkage.hpp"

namespace qshrink {

enum class Method { FM, SM, PT, S, PS, Ridge, Lasso, ENET, OLS };

inline constexpr Method kAllMethods[] = {Method::FM,    Method::SM,    Method::PT,   Method::S,  Method::PS,
                                         Method::Ridge, Method::Lasso, Method::ENET, Method::OLS};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::FM: return "FM";
    case Method::SM: return "SM";
    case Method::PT: return "PT";
    case Method::S: return "S";
    case Method::PS: return "PS";
    case Method::Ridge: return "Ridge";
    case Method::Lasso: return "Lasso";
    case Method::ENET: return "ENET";
    case Method::OLS: return "OLS";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : kAllMethods) {
    std::string a = to_string(m), b = s;
    std::transform(a.begin(), a.end(), a.begin(), ::tolower);
    std::transform(b.begin(), b.end(), b.begin(), ::tolower);
    if (a == b) return m;
  }
  throw DomainError("unknown estimator '" + s + "'");
}

inline std::vector<Method> all_methods() { return {std::begin(kAllMethods), std::end(kAllMethods)}; }

/// Rows iid N(0, S) with S_jk = base^|j-k|, drawn as Z L' where L is the
/// Cholesky factor of the Toeplitz matrix. Standard normals fill Z row by row.
inline MatrixXd gen_design(Index n, Index p, double base, Philox& rng) {
  if (!(std::abs(base) < 1.0)) throw DomainError("design correlation base must satisfy |base| < 1");
  if (n < 1 || p < 1) throw DomainError("design needs n >= 1 and p >= 1");
  MatrixXd S(p, p);
  for (Index j = 0; j < p; ++j)
    for (Index k = 0; k < p; ++k) S(j, k) = std::pow(base, static_cast<double>(std::abs(j - k)));
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalError("Toeplitz correlation matrix is not positive definite");
  MatrixXd Z(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) Z(i, j) = rng.normal();
  return Z * llt.matrixL().transpose();
}

inline MatrixXd gen_design(Index n, Index p, double base, std::uint64_t seed) {
  Philox rng(seed);
  return gen_design(n, p, base, rng);
}

/// AR(1) errors e_i = rho e_{i-1} + w_i with w_i iid N(0,1) and a stationary
/// start e_1 ~ N(0, 1/(1 - rho^2)).
inline VectorXd gen_ar1_errors(Index n, double rho, Philox& rng) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("autoregressive coefficient must satisfy |rho| < 1");
  if (n < 1) throw DomainError("error series needs n >= 1");
  VectorXd e(n);
  e(0) = rng.normal() / std::sqrt(1.0 - rho * rho);
  for (Index i = 1; i < n; ++i) e(i) = rho * e(i - 1) + rng.normal();
  return e;
}

inline VectorXd gen_ar1_errors(Index n, double rho, std::uint64_t seed) {
  Philox rng(seed);
  return gen_ar1_errors(n, rho, rng);
}

/// Settings shared by the simulation and the resampling protocol.
struct EstimatorSettings {
  std::vector<Method> methods = all_methods();
  double alpha_level = 0.05;  // pretest size
  double enet_mix = 0.5;      // elastic-net mixing weight
  Index n_lambda = 100;
  PenalizedOptions penalized;
  CovarianceOptions covariance;
};

struct SimConfig {
  Index n_train = 50;
  Index n_val = 50;
  Index n_test = 200;
  VectorXd beta_true = (VectorXd(8) << 3, 1.5, 0, 0, 2, 0, 0, 0).finished();
  double rho = 0.2;
  double design_base = 0.5;
  std::vector<double> tau_list = {0.25, 0.5, 0.75};
  Index n_reps = 1000;
  std::uint64_t base_seed = 20240601;
  PartitionSpec partition = PartitionSpec::from_keep(8, {0, 1, 4});
  EstimatorSettings estimators;
  unsigned threads = 0;  // 0 uses the hardware concurrency

  Index p() const { return beta_true.size(); }

  void validate() const {
    if (!(std::abs(rho) < 1.0)) throw DomainError("rho must satisfy |rho| < 1");
    if (!(std::abs(design_base) < 1.0)) throw DomainError("design correlation base must satisfy |base| < 1");
    if (p() < 1) throw DomainError("beta_true must have at least one entry");
    if (n_train <= p()) throw DomainError("n_train must exceed the number of covariates");
    if (n_val < 1 || n_test < 1) throw DomainError("validation and test sets must be nonempty");
    if (n_reps < 1) throw DomainError("n_reps must be at least 1");
    if (tau_list.empty()) throw DomainError("tau_list is empty");
    for (double t : tau_list) require_tau(t);
    if (estimators.methods.empty()) throw DomainError("no estimators requested");
    if (!(estimators.alpha_level > 0.0 && estimators.alpha_level < 1.0))
      throw DomainError("pretest size must lie in (0, 1)");
    if (!(estimators.enet_mix > 0.0 && estimators.enet_mix < 1.0))
      throw DomainError("elastic-net mixing weight must lie in (0, 1)");
    partition.validate(p(), true);
  }
};

struct McCell {
  double tau = 0.5;
  Method method = Method::FM;
  double mean_pmad = 0.0;
  double se_pmad = 0.0;
  // mean over slopes of |beta_hat_j - beta_j|; only defined for simulated data
  double mean_coef_mad = std::numeric_limits<double>::quiet_NaN();
  double se_coef_mad = std::numeric_limits<double>::quiet_NaN();
  Index n_ok = 0;
  Index n_failed = 0;
};

struct McFailure {
  Index replication = 0;
  double tau = 0.5;
  Method method = Method::FM;
  std::string message;
};

struct McSummary {
  std::vector<McCell> cells;  // tau-major, methods in request order
  std::vector<McFailure> failures;
  Index n_reps = 0;
  Index redrawn = 0;  // degenerate resamples replaced (resampling protocol only)

  const McCell& at(double tau, Method m) const {
    for (const McCell& c : cells)
      if (c.method == m && std::abs(c.tau - tau) < 1e-12) return c;
    throw DataError(std::string("no summary cell for ") + to_string(m) + " at tau " + std::to_string(tau));
  }
};

namespace detail {

struct MethodOutcome {
  bool ok = false;
  VectorXd beta;
  std::string message;
};

inline void set_fail(MethodOutcome& o, const std::string& msg) {
  o.ok = false;
  o.message = msg;
}

/// Penalized fit whose lambda minimizes validation PMAD along the path.
inline VectorXd tuned_penalized(const Dataset& train, const Dataset& val, double tau, double mix,
                                const EstimatorSettings& s) {
  const PenalizedPath path = fit_path(train, tau, mix, s.n_lambda, std::nullopt, s.penalized);
  return path.betas.col(select_by_validation(path, val));
}

/// Fits every requested estimator at one tau. `val` tunes the penalized
/// lambdas. Failures of one estimator never abort the others; shrinkage
/// estimators fail together when FM, SM or the covariance fails.
inline std::vector<MethodOutcome> fit_methods(const Dataset& train, const Dataset& val, double tau,
                                              const PartitionSpec& part, const EstimatorSettings& s,
                                              const std::optional<OlsFit>& ols) {
  std::vector<MethodOutcome> out(s.methods.size());
  auto want = [&](Method m) { return std::find(s.methods.begin(), s.methods.end(), m) != s.methods.end(); };
  const bool need_shrink = want(Method::PT) || want(Method::S) || want(Method::PS);

  std::optional<QuantileFit> fm, sm;
  std::string fm_err, sm_err, cov_err;
  std::optional<double> wald;
  if (want(Method::FM) || want(Method::SM) || need_shrink) {
    try {
      fm = fit_quantile(train, tau);
    } catch (const std::exception& e) {
      fm_err = e.what();
    }
  }
  if (want(Method::SM) || need_shrink) {
    try {
      sm = fit_quantile(train, tau, part);
    } catch (const std::exception& e) {
      sm_err = e.what();
    }
  }
  if (need_shrink && fm && sm) {
    try {
      const CovarianceEstimate cov = estimate_covariance(train, *fm, part, s.covariance);
      wald = wald_stat(*fm, cov, train.n());
    } catch (const std::exception& e) {
      cov_err = e.what();
    }
  }

  for (std::size_t k = 0; k < s.methods.size(); ++k) {
    MethodOutcome& o = out[k];
    const Method m = s.methods[k];
    try {
      switch (m) {
        case Method::FM:
          if (!fm) throw NumericalError(fm_err);
          o.beta = fm->beta;
          break;
        case Method::SM:
          if (!sm) throw NumericalError(sm_err);
          o.beta = sm->beta;
          break;
        case Method::PT:
        case Method::S:
        case Method::PS: {
          if (!fm) throw NumericalError("full model failed: " + fm_err);
          if (!sm) throw NumericalError("sub-model failed: " + sm_err);
          if (!wald) throw NumericalError("covariance failed: " + cov_err);
          if (m == Method::PT) o.beta = pretest(*fm, *sm, *wald, part.p2(), s.alpha_level).beta;
          else if (m == Method::S) o.beta = stein(*fm, *sm, *wald, part.p2()).beta;
          else o.beta = positive_stein(*fm, *sm, *wald, part.p2()).beta;
          break;
        }
        case Method::Ridge: o.beta = tuned_penalized(train, val, tau, 0.0, s); break;
        case Method::Lasso: o.beta = tuned_penalized(train, val, tau, 1.0, s); break;
        case Method::ENET: o.beta = tuned_penalized(train, val, tau, s.enet_mix, s); break;
        case Method::OLS:
          if (!ols) throw NumericalError("least-squares fit failed");
          o.beta = ols->beta;
          break;
      }
      if (!o.beta.allFinite()) throw NumericalError("non-finite coefficients");
      o.ok = true;
    } catch (const std::exception& e) {
      set_fail(o, e.what());
    }
  }
  return out;
}

struct RepRecord {
  // [tau][method]
  std::vector<std::vector<double>> pmad;
  std::vector<std::vector<double>> coef;
  std::vector<std::vector<char>> ok;
  std::vector<McFailure> failures;
  bool redrawn = false;
};

inline RepRecord make_record(std::size_t n_tau, std::size_t n_methods) {
  RepRecord r;
  r.pmad.assign(n_tau, std::vector<double>(n_methods, 0.0));
  r.coef.assign(n_tau, std::vector<double>(n_methods, 0.0));
  r.ok.assign(n_tau, std::vector<char>(n_methods, 0));
  return r;
}

inline Dataset simulate_set(const SimConfig& c, Index n, Index rep, StreamRole design_role, StreamRole error_role) {
  Philox gx(c.base_seed, static_cast<std::uint64_t>(rep), design_role);
  Philox ge(c.base_seed, static_cast<std::uint64_t>(rep), error_role);
  MatrixXd X = gen_design(n, c.p(), c.design_base, gx);
  VectorXd y = X * c.beta_true + gen_ar1_errors(n, c.rho, ge);
  return make_dataset(std::move(X), std::move(y));
}

inline RepRecord run_replication(const SimConfig& c, Index rep) {
  const auto& s = c.estimators;
  RepRecord rec = make_record(c.tau_list.size(), s.methods.size());
  Dataset train = simulate_set(c, c.n_train, rep, StreamRole::train_design, StreamRole::train_errors);
  Dataset val = simulate_set(c, c.n_val, rep, StreamRole::val_design, StreamRole::val_errors);
  Dataset test = simulate_set(c, c.n_test, rep, StreamRole::test_design, StreamRole::test_errors);
  const VectorXd mu = column_means(train.X);
  train = center_by(train, mu);
  val = center_by(val, mu);
  test = center_by(test, mu);

  std::optional<OlsFit> ols;
  if (std::find(s.methods.begin(), s.methods.end(), Method::OLS) != s.methods.end()) {
    try {
      ols = fit_ols(train);
    } catch (const std::exception&) {
    }
  }
  for (std::size_t t = 0; t < c.tau_list.size(); ++t) {
    const auto fits = fit_methods(train, val, c.tau_list[t], c.partition, s, ols);
    for (std::size_t k = 0; k < fits.size(); ++k) {
      if (!fits[k].ok) {
        rec.failures.push_back({rep, c.tau_list[t], s.methods[k], fits[k].message});
        continue;
      }
      rec.ok[t][k] = 1;
      rec.pmad[t][k] = pmad(test, fits[k].beta);
      rec.coef[t][k] = (fits[k].beta.tail(c.p()) - c.beta_true).cwiseAbs().mean();
    }
  }
  return rec;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample sd over sqrt(count); zero for a single value.
inline double se_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline McSummary reduce(const std::vector<RepRecord>& recs, const std::vector<double>& taus,
                        const std::vector<Method>& methods, bool with_coef) {
  McSummary out;
  out.n_reps = static_cast<Index>(recs.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    for (std::size_t k = 0; k < methods.size(); ++k) {
      McCell cell;
      cell.tau = taus[t];
      cell.method = methods[k];
      std::vector<double> pm, cm;
      for (const RepRecord& r : recs) {
        if (!r.ok[t][k]) {
          ++cell.n_failed;
          continue;
        }
        pm.push_back(r.pmad[t][k]);
        cm.push_back(r.coef[t][k]);
      }
      cell.n_ok = static_cast<Index>(pm.size());
      if (!pm.empty()) {
        cell.mean_pmad = mean_of(pm);
        cell.se_pmad = se_of(pm, cell.mean_pmad);
        if (with_coef) {
          cell.mean_coef_mad = mean_of(cm);
          cell.se_coef_mad = se_of(cm, cell.mean_coef_mad);
        }
      } else {
        cell.mean_pmad = cell.se_pmad = std::numeric_limits<double>::quiet_NaN();
      }
      out.cells.push_back(cell);
    }
  }
  for (const RepRecord& r : recs) {
    out.failures.insert(out.failures.end(), r.failures.begin(), r.failures.end());
    if (r.redrawn) ++out.redrawn;
  }
  return out;
}

}  // namespace detail

/// Monte Carlo experiment: every replication draws fresh train, validation
/// and test sets from streams keyed by (base_seed, replication, role),
/// centers all three by the training means, fits every estimator on the
/// training set (penalized lambdas tuned by validation PMAD) and scores the
/// test set. Results are bitwise identical for any thread count.
inline McSummary run_mc(const SimConfig& config) {
  config.validate();
  std::vector<detail::RepRecord> recs(static_cast<std::size_t>(config.n_reps));
  detail::parallel_for(config.n_reps, config.threads,
                       [&](Index r) { recs[static_cast<std::size_t>(r)] = detail::run_replication(config, r); });
  return detail::reduce(recs, config.tau_list, config.estimators.methods, true);
}

struct BootstrapMode {
  Index n_resamples = 1000;
  double split_fraction = 0.75;  // training share of each resample
};

struct KFoldMode {
  Index k = 5;
};

using EvalMode = std::variant<BootstrapMode, KFoldMode>;

struct EvalOptions {
  EstimatorSettings estimators;
  // penalized lambdas are tuned on this share of the training rows, then refit
  double tuning_fraction = 0.2;
  Index max_redraws = 100;  // consecutive degenerate bootstrap draws before giving up
  unsigned threads = 0;
};

namespace detail {

inline bool has_constant_column(const MatrixXd& X) {
  for (Index j = 0; j < X.cols(); ++j) {
    if (X.col(j).maxCoeff() - X.col(j).minCoeff() <= 1e-12 * (1.0 + X.col(j).cwiseAbs().maxCoeff())) return true;
  }
  return false;
}

/// Penalized fit for user data without a separate validation set: the path is
/// computed on a seeded subset of the training rows, lambda is chosen on the
/// held-out rows, and the model is refit on the whole training set.
inline VectorXd inner_tuned(const Dataset& train, double tau, double mix, const EvalOptions& opt, Philox& rng) {
  const Index n = train.n();
  const Index n_hold = std::clamp<Index>(static_cast<Index>(std::llround(opt.tuning_fraction * n)), 1, n - 1);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  std::vector<Index> fit_rows(perm.begin(), perm.end() - n_hold), hold_rows(perm.end() - n_hold, perm.end());
  const Dataset a = subset_rows(train, fit_rows), b = subset_rows(train, hold_rows);
  const PenalizedPath path = fit_path(a, tau, mix, opt.estimators.n_lambda, std::nullopt, opt.estimators.penalized);
  const double lambda = path.lambdas[static_cast<std::size_t>(select_by_validation(path, b))];
  return fit_penalized(train, tau, mix, lambda, opt.estimators.penalized).beta;
}

inline void score_split(const Dataset& data, const std::vector<Index>& train_rows, const std::vector<Index>& test_rows,
                        const PartitionSpec& part, const std::vector<double>& taus, const EvalOptions& opt,
                        Philox& rng, Index unit, RepRecord& rec) {
  Dataset train = subset_rows(data, train_rows);
  Dataset test = subset_rows(data, test_rows);
  const VectorXd mu = column_means(train.X);
  train = center_by(train, mu);
  test = center_by(test, mu);

  EstimatorSettings plain = opt.estimators;
  std::vector<Method> penal;
  plain.methods.clear();
  for (Method m : opt.estimators.methods) {
    if (m == Method::Ridge || m == Method::Lasso || m == Method::ENET) penal.push_back(m);
    else plain.methods.push_back(m);
  }
  std::optional<OlsFit> ols;
  try {
    ols = fit_ols(train);
  } catch (const std::exception&) {
  }
  const auto& methods = opt.estimators.methods;
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const auto fits = fit_methods(train, train, taus[t], part, plain, ols);
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const Method m = methods[k];
      MethodOutcome o;
      const auto pos = std::find(plain.methods.begin(), plain.methods.end(), m);
      if (pos != plain.methods.end()) {
        o = fits[static_cast<std::size_t>(pos - plain.methods.begin())];
      } else {
        const double mix = m == Method::Ridge ? 0.0 : m == Method::Lasso ? 1.0 : opt.estimators.enet_mix;
        try {
          o.beta = inner_tuned(train, taus[t], mix, opt, rng);
          o.ok = true;
        } catch (const std::exception& e) {
          set_fail(o, e.what());
        }
      }
      if (!o.ok) {
        rec.failures.push_back({unit, taus[t], m, o.message});
        continue;
      }
      rec.ok[t][k] = 1;
      rec.pmad[t][k] = pmad(test, o.beta);
    }
  }
}

}  // namespace detail

/// Resampling evaluation on user data. Bootstrap mode draws n rows with
/// replacement, splits them train/test by `split_fraction` and redraws any
/// resample whose training part has a constant covariate. K-fold mode
/// averages the fold PMADs over a seeded fold assignment. Covariates are
/// always centered by the training means.
inline McSummary evaluate_real(const Dataset& data, const PartitionSpec& partition, const std::vector<double>& tau_list,
                               const EvalMode& mode, std::uint64_t seed, const EvalOptions& opt = {}) {
  data.validate();
  partition.validate(data.p(), data.intercept);
  if (tau_list.empty()) throw DomainError("tau_list is empty");
  for (double t : tau_list) require_tau(t);
  if (opt.estimators.methods.empty()) throw DomainError("no estimators requested");
  if (!(opt.tuning_fraction > 0.0 && opt.tuning_fraction < 1.0)) throw DomainError("tuning fraction must lie in (0, 1)");
  const Index n = data.n();
  const auto& methods = opt.estimators.methods;

  if (const auto* boot = std::get_if<BootstrapMode>(&mode)) {
    if (boot->n_resamples < 1) throw DomainError("need at least one bootstrap resample");
    if (!(boot->split_fraction > 0.0 && boot->split_fraction < 1.0)) throw DomainError("split fraction must lie in (0, 1)");
    const Index n_train = static_cast<Index>(std::llround(boot->split_fraction * static_cast<double>(n)));
    if (n_train <= data.n_coef() || n_train >= n) throw DataError("split leaves too few training or test rows");
    std::vector<detail::RepRecord> recs(static_cast<std::size_t>(boot->n_resamples));
    detail::parallel_for(boot->n_resamples, opt.threads, [&](Index r) {
      detail::RepRecord rec = detail::make_record(tau_list.size(), methods.size());
      Philox rng(seed, static_cast<std::uint64_t>(r), StreamRole::resample);
      std::vector<Index> rows(static_cast<std::size_t>(n));
      for (Index attempt = 0;; ++attempt) {
        if (attempt > opt.max_redraws) throw DataError("bootstrap keeps drawing constant covariates");
        for (auto& i : rows) i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        const std::vector<Index> head(rows.begin(), rows.begin() + n_train);
        if (!detail::has_constant_column(subset_rows(data, head).X)) break;
        rec.redrawn = true;
      }
      const std::vector<Index> tr(rows.begin(), rows.begin() + n_train), te(rows.begin() + n_train, rows.end());
      Philox tune(seed, static_cast<std::uint64_t>(r), StreamRole::misc);
      detail::score_split(data, tr, te, partition, tau_list, opt, tune, r, rec);
      recs[static_cast<std::size_t>(r)] = std::move(rec);
    });
    return detail::reduce(recs, tau_list, methods, false);
  }

  const Index k = std::get<KFoldMode>(mode).k;
  if (k < 2 || k > n) throw DomainError("fold count must lie in [2, n]");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Philox rng(seed, 0, StreamRole::resample);
  for (Index i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  std::vector<detail::RepRecord> recs(static_cast<std::size_t>(k));
  detail::parallel_for(k, opt.threads, [&](Index f) {
    detail::RepRecord rec = detail::make_record(tau_list.size(), methods.size());
    std::vector<Index> tr, te;
    for (Index i = 0; i < n; ++i) (i % k == f ? te : tr).push_back(perm[static_cast<std::size_t>(i)]);
    Philox tune(seed, static_cast<std::uint64_t>(f), StreamRole::misc);
    detail::score_split(data, tr, te, partition, tau_list, opt, tune, f, rec);
    recs[static_cast<std::size_t>(f)] = std::move(rec);
  });
  return detail::reduce(recs, tau_list, methods, false);
}

}  // namespace qshrink
