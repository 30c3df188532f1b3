#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qshrink/covariance.hpp"
#include "qshrink/diagnostics.hpp"
#include "qshrink/distributions.hpp"
#include "qshrink/io.hpp"
#include "qshrink/penalized.hpp"
#include "qshrink/qprocess.hpp"
#include "qshrink/risk.hpp"
#include "qshrink/shrinkage.hpp"
#include "qshrink/simulation.hpp"

namespace qshrink {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"fit",      "test",     "shrink",   "penalize", "simulate",
                                                 "risk",     "diagnose", "evaluate", "qprocess"};
  return names;
}

/// Everything a run needs. Covariate indices (keep, test_idx) are 1-based as
/// typed by users; sentinel values (-1, 0, empty) select documented defaults.
struct RunConfig {
  std::string command;
  std::string data;
  std::string response = "y";
  std::vector<std::string> covariates;
  std::vector<long> keep;
  std::vector<long> test_idx;
  std::vector<double> tau = {0.5};
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string out_dir = "qshrink-out";
  unsigned threads = 0;
  long hac_lag = -1;  // -1: Newey-West rule

  // penalize
  double alpha_mix = 1.0;
  long n_lambda = 100;
  double lambda_ratio = 0.0;  // 0: default ratio
  std::string val_data;

  // simulate
  long reps = 1000;
  std::vector<double> rho = {-0.2, 0.2, -0.5, 0.5};
  long n_train = 50;
  long n_val = 50;
  long n_test = 200;
  std::vector<double> beta = {3, 1.5, 0, 0, 2, 0, 0, 0};
  double design_base = 0.5;
  std::vector<std::string> estimators;  // empty: all
  double enet_mix = 0.5;

  // risk
  std::string gamma_file;
  long p1 = 0;
  double omega_sq = 1.0;
  std::vector<double> direction;  // empty: ones
  std::vector<double> delta = {0, 1, 2, 3, 5, 7.5, 10, 15, 20, 30};

  // diagnose
  long max_lag = 6;
  long permutations = 2000;

  // evaluate
  std::string mode = "bootstrap";
  long resamples = 1000;
  double split = 0.75;
  long folds = 5;

  // qprocess
  std::vector<double> tau_grid;  // empty: 0.05..0.95
  long n_boot = 200;
  double level = 0.90;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, command, data, response, covariates, keep, test_idx, tau,
                                                alpha, seed, out_dir, threads, hac_lag, alpha_mix, n_lambda,
                                                lambda_ratio, val_data, reps, rho, n_train, n_val, n_test, beta,
                                                design_base, estimators, enet_mix, gamma_file, p1, omega_sq,
                                                direction, delta, max_lag, permutations, mode, resamples, split,
                                                folds, tau_grid, n_boot, level)

/// Overlays keys from a flat JSON object; unknown keys are rejected so typos
/// never pass silently.
inline void apply_json_config(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw DomainError("configuration must be a JSON object");
  const nlohmann::json known = cfg;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw DomainError("unknown configuration key \"" + it.key() + "\"");
  nlohmann::json merged = known;
  merged.update(j);
  try {
    cfg = merged.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad configuration value: ") + e.what());
  }
}

inline void load_json_config(RunConfig& cfg, const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  apply_json_config(cfg, j);
}

inline int exit_code(const std::exception& e) {
  if (const auto* q = dynamic_cast<const Error*>(&e)) return static_cast<int>(q->kind());
  return 1;
}

struct RunResult {
  std::vector<std::string> outputs;  // written files, manifest last
  nlohmann::json manifest;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Runner {
  const RunConfig& cfg;
  std::filesystem::path out;
  RunResult result;
  nlohmann::json notes = nlohmann::json::object();

  void emit(const std::string& name, const Table& t) {
    const auto path = out / name;
    write_table(path, t);
    result.outputs.push_back(path.string());
  }

  static std::string fmt(double x) { return format_double(x); }
  static std::string fmt(Index x) { return std::to_string(x); }

  void check_common() const {
    if (cfg.tau.empty()) throw DomainError("--tau needs at least one value");
    for (double t : cfg.tau) require_tau(t);
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DomainError("--alpha must lie in (0, 1)");
    if (cfg.hac_lag < -1) throw DomainError("--hac-lag must be nonnegative");
  }

  Dataset load(const std::string& path) {
    if (path.empty()) throw DomainError("this command needs --data");
    const std::string text = read_file(path);
    CsvLoad l = parse_csv(text, cfg.response, cfg.covariates, path);
    notes["inputs"].push_back({{"path", path}, {"fnv1a64", hex64(fnv1a(text))}, {"rows", l.data.n()},
                               {"covariates", l.data.labels}, {"dropped_rows", l.dropped_rows}});
    return std::move(l.data);
  }

  std::vector<Index> to_zero_based(const std::vector<long>& idx, Index p, const char* flag) const {
    std::vector<Index> out;
    for (long j : idx) {
      if (j < 1 || j > p) throw DomainError(std::string(flag) + " index " + std::to_string(j) + " outside 1.." + std::to_string(p));
      out.push_back(static_cast<Index>(j - 1));
    }
    return out;
  }

  /// Partition from --keep or --test-idx; without either, BIC chooses the
  /// retained block at the first tau.
  PartitionSpec partition(const Dataset& d) {
    if (!cfg.keep.empty() && !cfg.test_idx.empty()) throw DomainError("give --keep or --test-idx, not both");
    PartitionSpec part;
    if (!cfg.keep.empty()) {
      part = PartitionSpec::from_keep(d.p(), to_zero_based(cfg.keep, d.p(), "--keep"));
      notes["partition_source"] = "keep";
    } else if (!cfg.test_idx.empty()) {
      auto test = to_zero_based(cfg.test_idx, d.p(), "--test-idx");
      std::sort(test.begin(), test.end());
      std::vector<Index> keep;
      for (Index j = 0; j < d.p(); ++j)
        if (!std::binary_search(test.begin(), test.end(), j)) keep.push_back(j);
      part = PartitionSpec::from_keep(d.p(), keep);
    } else {
      const BicSelection sel = select_submodel_bic(d, cfg.tau.front());
      part = sel.partition;
      notes["partition_source"] = "bic";
      notes["bic"] = sel.bic;
    }
    part.validate(d.p(), d.intercept);
    std::vector<long> keep1, test1;
    for (Index j : part.keep) keep1.push_back(static_cast<long>(j + 1));
    for (Index j : part.test) test1.push_back(static_cast<long>(j + 1));
    notes["partition"] = {{"keep", keep1}, {"test", test1}};
    return part;
  }

  CovarianceOptions cov_options() const {
    CovarianceOptions o;
    if (cfg.hac_lag >= 0) o.bandwidth = static_cast<Index>(cfg.hac_lag);
    return o;
  }

  std::vector<Method> methods() const {
    if (cfg.estimators.empty()) return all_methods();
    std::vector<Method> m;
    for (const auto& s : cfg.estimators) m.push_back(parse_method(s));
    return m;
  }

  void fit() {
    check_common();
    const Dataset d = load(cfg.data);
    const bool with_sm = !cfg.keep.empty() || !cfg.test_idx.empty();
    std::optional<PartitionSpec> part;
    if (with_sm) part = partition(d);
    Table coef{{"tau", "model", "term", "estimate"}, {}};
    Table summ{{"tau", "model", "objective", "status", "multiple_optima"}, {}};
    for (double t : cfg.tau) {
      auto record = [&](const char* model, const QuantileFit& f) {
        for (Index j = 0; j < f.beta.size(); ++j) coef.add({fmt(t), model, coef_label(d, j), fmt(f.beta(j))});
        summ.add({fmt(t), model, fmt(f.objective), to_string(f.status), f.multiple_optima ? "true" : "false"});
      };
      record("FM", fit_quantile(d, t));
      if (part) record("SM", fit_quantile(d, t, part));
    }
    emit("coefficients.csv", coef);
    emit("fit_summary.csv", summ);
  }

  void test() {
    check_common();
    const Dataset d = load(cfg.data);
    const PartitionSpec part = partition(d);
    Table t{{"tau", "wald", "df", "p_value", "critical", "reject", "omega_sq", "hac_lag"}, {}};
    const double crit = dist::chisq_upper_quantile(cfg.alpha, static_cast<double>(part.p2()));
    for (double tau : cfg.tau) {
      const QuantileFit fm = fit_quantile(d, tau);
      const CovarianceEstimate cov = estimate_covariance(d, fm, part, cov_options());
      const double w = wald_stat(fm, cov, d.n());
      t.add({fmt(tau), fmt(w), fmt(part.p2()), fmt(dist::chisq_sf(w, static_cast<double>(part.p2()))), fmt(crit),
             w >= crit ? "true" : "false", fmt(cov.omega_sq), fmt(cov.bandwidth)});
    }
    emit("wald_test.csv", t);
  }

  void shrink() {
    check_common();
    const Dataset d = load(cfg.data);
    const PartitionSpec part = partition(d);
    Table coef{{"tau", "estimator", "term", "estimate"}, {}};
    Table summ{{"tau", "wald", "d", "critical", "pretest_choice", "stein_fm_weight", "ps_fm_weight", "warning"}, {}};
    for (double tau : cfg.tau) {
      const QuantileFit fm = fit_quantile(d, tau), sm = fit_quantile(d, tau, part);
      const double w = wald_stat(fm, estimate_covariance(d, fm, part, cov_options()), d.n());
      std::vector<ShrinkageResult> res = {full_model(fm.beta, w), sub_model(sm.beta, w),
                                          pretest(fm, sm, w, part.p2(), cfg.alpha)};
      const bool stein_ok = part.p2() >= 3;
      if (stein_ok) {
        res.push_back(stein(fm, sm, w, part.p2()));
        res.push_back(positive_stein(fm, sm, w, part.p2()));
      }
      for (const auto& r : res)
        for (Index j = 0; j < r.beta.size(); ++j) coef.add({fmt(tau), to_string(r.kind), coef_label(d, j), fmt(r.beta(j))});
      const ShrinkageResult& pt = res[2];
      summ.add({fmt(tau), fmt(w), stein_ok ? fmt(res[3].d) : "", fmt(pt.critical), pt.fm_weight == 1.0 ? "FM" : "SM",
                stein_ok ? fmt(res[3].fm_weight) : "", stein_ok ? fmt(res[4].fm_weight) : "",
                stein_ok ? res[3].warning : "Stein estimators need at least 3 tested columns"});
    }
    emit("shrinkage.csv", coef);
    emit("shrinkage_summary.csv", summ);
  }

  void penalize() {
    check_common();
    if (!(cfg.alpha_mix >= 0.0 && cfg.alpha_mix <= 1.0)) throw DomainError("--alpha-mix must lie in [0, 1]");
    if (cfg.n_lambda < 2) throw DomainError("--n-lambda must be at least 2");
    const Dataset d = load(cfg.data);
    std::optional<Dataset> val;
    if (!cfg.val_data.empty()) val = load(cfg.val_data);
    Table coef{{"tau", "lambda", "term", "estimate"}, {}};
    Table summ{{"tau", "lambda", "smoothing", "kkt", "objective", "nonzero", "selected"}, {}};
    for (double tau : cfg.tau) {
      std::optional<double> ratio;
      if (cfg.lambda_ratio > 0.0) ratio = cfg.lambda_ratio;
      const PenalizedPath path = fit_path(d, tau, cfg.alpha_mix, cfg.n_lambda, ratio);
      std::optional<Index> sel;
      if (val) sel = select_by_validation(path, *val);
      for (Index k = 0; k < path.betas.cols(); ++k) {
        const auto kk = static_cast<std::size_t>(k);
        Index nz = 0;
        for (Index j = d.intercept ? 1 : 0; j < path.betas.rows(); ++j) nz += path.betas(j, k) != 0.0;
        for (Index j = 0; j < path.betas.rows(); ++j)
          coef.add({fmt(tau), fmt(path.lambdas[kk]), coef_label(d, j), fmt(path.betas(j, k))});
        summ.add({fmt(tau), fmt(path.lambdas[kk]), fmt(path.smoothing[kk]), fmt(path.kkt[kk]), fmt(path.objectives[kk]),
                  fmt(nz), sel && *sel == k ? "true" : "false"});
      }
    }
    emit("path.csv", coef);
    emit("path_summary.csv", summ);
  }

  void simulate() {
    check_common();
    if (cfg.rho.empty()) throw DomainError("--rho needs at least one value");
    if (cfg.reps < 1) throw DomainError("--reps must be at least 1");
    Table t{{"rho", "tau", "estimator", "mean_pmad", "se_pmad", "mean_coef_mad", "se_coef_mad", "n_ok", "n_failed"}, {}};
    Table f{{"rho", "replication", "tau", "estimator", "message"}, {}};
    for (double rho : cfg.rho) {
      SimConfig c;
      c.n_train = cfg.n_train;
      c.n_val = cfg.n_val;
      c.n_test = cfg.n_test;
      c.beta_true = Eigen::Map<const VectorXd>(cfg.beta.data(), static_cast<Index>(cfg.beta.size()));
      c.rho = rho;
      c.design_base = cfg.design_base;
      c.tau_list = cfg.tau;
      c.n_reps = cfg.reps;
      c.base_seed = cfg.seed;
      c.threads = cfg.threads;
      c.estimators.methods = methods();
      c.estimators.alpha_level = cfg.alpha;
      c.estimators.enet_mix = cfg.enet_mix;
      c.estimators.n_lambda = cfg.n_lambda;
      c.estimators.covariance = cov_options();
      const Index p = c.p();
      if (!cfg.keep.empty() || !cfg.test_idx.empty()) {
        MatrixXd dummy = MatrixXd::Zero(1, p);
        Dataset shape{dummy, VectorXd::Zero(1), {}, true, std::nullopt};
        c.partition = partition(shape);
      } else {
        c.partition = PartitionSpec::from_keep(p, {0, 1, 4});
        if (p != 8) throw DomainError("give --keep for a custom beta; the default partition assumes 8 covariates");
      }
      const McSummary s = run_mc(c);
      for (const McCell& cell : s.cells) {
        t.add({fmt(rho), fmt(cell.tau), to_string(cell.method), fmt(cell.mean_pmad), fmt(cell.se_pmad),
               fmt(cell.mean_coef_mad), fmt(cell.se_coef_mad), fmt(cell.n_ok), fmt(cell.n_failed)});
      }
      for (const McFailure& x : s.failures)
        f.add({fmt(rho), fmt(x.replication + 1), fmt(x.tau), to_string(x.method), x.message});
    }
    emit("simulation.csv", t);
    emit("simulation_failures.csv", f);
  }

  void risk_cmd() {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DomainError("--alpha must lie in (0, 1)");
    AsymptoticParams prm;
    if (!cfg.gamma_file.empty()) {
      const MatrixXd G = load_matrix(cfg.gamma_file);
      if (G.rows() != G.cols()) throw DataError("Gamma matrix must be square");
      if (cfg.p1 < 1 || cfg.p1 >= G.rows()) throw DomainError("--p1 must lie in [1, p - 1]");
      const Index p2 = G.rows() - cfg.p1;
      prm = make_params(G, leading_blocks(cfg.p1, G.rows()), cfg.omega_sq, MatrixXd::Identity(cfg.p1, cfg.p1),
                        direction(p2));
      notes["risk_source"] = "gamma_file";
    } else {
      check_common();
      const Dataset d = load(cfg.data);
      const PartitionSpec part = partition(d);
      const double tau = cfg.tau.front();
      const QuantileFit fm = fit_quantile(d, tau);
      const CovarianceEstimate cov = estimate_covariance(d, fm, part, cov_options());
      const Index k1 = static_cast<Index>(cov.blocks.keep.size());
      prm = params_from_covariance(cov, tau, MatrixXd::Identity(k1, k1), direction(part.p2()));
      notes["risk_source"] = "data";
    }
    const std::vector<EstimatorKind> kinds = {EstimatorKind::FM, EstimatorKind::SM, EstimatorKind::PT,
                                              EstimatorKind::S, EstimatorKind::PS};
    RiskOptions ro;
    ro.alpha_level = cfg.alpha;
    Table t{{"Delta", "FM", "SM", "PT", "S", "PS"}, {}};
    for (const RiskPoint& pt : risk_curve(prm, kinds, cfg.delta, ro)) {
      std::vector<std::string> row{fmt(pt.Delta)};
      for (EstimatorKind k : kinds) row.push_back(fmt(pt.risks.at(k)));
      t.add(std::move(row));
    }
    emit("risk.csv", t);
  }

  VectorXd direction(Index p2) const {
    if (cfg.direction.empty()) return VectorXd::Ones(p2);
    if (static_cast<Index>(cfg.direction.size()) != p2)
      throw DomainError("--direction needs " + std::to_string(p2) + " values");
    return Eigen::Map<const VectorXd>(cfg.direction.data(), p2);
  }

  void diagnose_cmd() {
    if (cfg.max_lag < 1) throw DomainError("--max-lag must be at least 1");
    if (cfg.permutations < 1) throw DomainError("--permutations must be at least 1");
    const Dataset d = load(cfg.data);
    const DwOptions dw{static_cast<Index>(cfg.permutations), cfg.seed, cfg.threads};
    const DiagnosticsReport rep = diagnose(d, cfg.max_lag, dw);
    Table t{{"lag", "autocorrelation", "dw", "p_value"}, {}};
    for (const auto& r : rep.dw_rows) t.add({fmt(r.lag), fmt(r.autocorr), fmt(r.dw), fmt(r.p_value)});
    emit("durbin_watson.csv", t);
    Table v{{"term", "vif"}, {}};
    for (std::size_t j = 0; j < rep.vif.values.size(); ++j) v.add({d.label(static_cast<Index>(j)), fmt(rep.vif.values[j])});
    emit("vif.csv", v);
    Table o{{"row", "studentized", "adjusted_p", "flagged"}, {}};
    std::set<Index> flagged(rep.outliers.flagged.begin(), rep.outliers.flagged.end());
    for (Index i = 0; i < d.n(); ++i) {
      o.add({fmt(i + 1), fmt(rep.outliers.studentized(i)), fmt(rep.outliers.adjusted_p(i)),
             flagged.count(i) ? "true" : "false"});
    }
    emit("outliers.csv", o);
    Table a{{"lag", "acf"}, {}};
    for (Index l = 0; l < rep.acf.size(); ++l) a.add({fmt(l), fmt(rep.acf(l))});
    emit("acf.csv", a);
    Table c{{"statistic", "value"}, {}};
    c.add({"condition_ratio", fmt(rep.condition_ratio)});
    emit("condition.csv", c);
    if (!rep.vif.notes.empty()) notes["vif_notes"] = rep.vif.notes;
  }

  void evaluate_cmd() {
    check_common();
    const Dataset d = load(cfg.data);
    const PartitionSpec part = partition(d);
    EvalOptions opt;
    opt.estimators.methods = methods();
    opt.estimators.alpha_level = cfg.alpha;
    opt.estimators.enet_mix = cfg.enet_mix;
    opt.estimators.n_lambda = cfg.n_lambda;
    opt.estimators.covariance = cov_options();
    opt.threads = cfg.threads;
    EvalMode mode;
    if (cfg.mode == "bootstrap") mode = BootstrapMode{cfg.resamples, cfg.split};
    else if (cfg.mode == "kfold") mode = KFoldMode{cfg.folds};
    else throw DomainError("--mode must be bootstrap or kfold");
    const McSummary s = evaluate_real(d, part, cfg.tau, mode, cfg.seed, opt);
    Table t{{"tau", "estimator", "mean_pmad", "se_pmad", "n_ok", "n_failed"}, {}};
    for (const McCell& c : s.cells)
      t.add({fmt(c.tau), to_string(c.method), fmt(c.mean_pmad), fmt(c.se_pmad), fmt(c.n_ok), fmt(c.n_failed)});
    emit("evaluation.csv", t);
    Table f{{"unit", "tau", "estimator", "message"}, {}};
    for (const McFailure& x : s.failures) f.add({fmt(x.replication + 1), fmt(x.tau), to_string(x.method), x.message});
    emit("evaluation_failures.csv", f);
    notes["redrawn_resamples"] = s.redrawn;
  }

  void qprocess_cmd() {
    const Dataset d = load(cfg.data);
    const std::vector<double> grid = cfg.tau_grid.empty() ? default_tau_grid() : cfg.tau_grid;
    const QuantileProcess qp = quantile_process(d, grid, cfg.n_boot, cfg.seed, cfg.level, cfg.threads);
    Table t{{"term", "tau", "estimate", "band_low", "band_high"}, {}};
    for (const auto& r : qp.rows) t.add({r.term, fmt(r.tau), fmt(r.estimate), fmt(r.band_low), fmt(r.band_high)});
    emit("quantile_process.csv", t);
    Table o{{"term", "estimate", "ci_low", "ci_high"}, {}};
    for (const auto& r : qp.ols) o.add({r.term, fmt(r.estimate), fmt(r.ci_low), fmt(r.ci_high)});
    emit("ols_intervals.csv", o);
    notes["bootstrap_failures"] = qp.boot_failures;
  }
};

}  // namespace detail

/// Dispatches one command, writes its tables and a manifest.json into
/// cfg.out_dir. Errors propagate as qshrink::Error subclasses.
inline RunResult run_command(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::Runner r{cfg, cfg.out_dir, {}};
  const std::string& c = cfg.command;
  if (c == "fit") r.fit();
  else if (c == "test") r.test();
  else if (c == "shrink") r.shrink();
  else if (c == "penalize") r.penalize();
  else if (c == "simulate") r.simulate();
  else if (c == "risk") r.risk_cmd();
  else if (c == "diagnose") r.diagnose_cmd();
  else if (c == "evaluate") r.evaluate_cmd();
  else if (c == "qprocess") r.qprocess_cmd();
  else throw DomainError("unknown command \"" + c + "\"");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json m;
  m["tool"] = "qshrink";
  m["version"] = kVersion;
  m["command"] = c;
  m["config"] = cfg;
  m["seed"] = cfg.seed;
  m["build"] = {{"compiler", __VERSION__},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)}};
  m["timings"] = {{"total_seconds", secs}};
  m["outputs"] = r.result.outputs;
  m["notes"] = r.notes;
  const auto path = std::filesystem::path(cfg.out_dir) / "manifest.json";
  atomic_write(path, m.dump(2) + "\n");
  r.result.outputs.push_back(path.string());
  r.result.manifest = std::move(m);
  return r.result;
}

}  // namespace qshrink
