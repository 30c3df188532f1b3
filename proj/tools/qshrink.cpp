#include <CLI11.hpp>

#include <cstring>
#include <iostream>

#include "qshrink/cli.hpp"

using qshrink::RunConfig;

namespace {

// --config must be applied before flag parsing so that flags override it.
std::string find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return argv[i + 1];
    if (std::strncmp(argv[i], "--config=", 9) == 0) return argv[i] + 9;
  }
  return {};
}

void add_common(CLI::App* s, RunConfig& c) {
  s->add_option("--config", "JSON file with default values for any flag (keys use underscores)");
  s->add_option("--data", c.data, "input CSV with a header row");
  s->add_option("--response", c.response, "response column name");
  s->add_option("--covariates", c.covariates, "covariate column names (default: all other columns)")->delimiter(',');
  s->add_option("--keep", c.keep, "1-based covariates retained in the sub-model")->delimiter(',');
  s->add_option("--test-idx", c.test_idx, "1-based covariates in the tested block")->delimiter(',');
  s->add_option("--tau", c.tau, "quantile levels")->delimiter(',');
  s->add_option("--alpha", c.alpha, "pretest size");
  s->add_option("--seed", c.seed, "random seed");
  s->add_option("--out-dir", c.out_dir, "directory for output tables and manifest.json");
  s->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  s->add_option("--hac-lag", c.hac_lag, "HAC truncation lag (-1 = Newey-West rule)");
}

void add_estimators(CLI::App* s, RunConfig& c) {
  s->add_option("--estimators", c.estimators, "subset of FM SM PT S PS Ridge Lasso ENET OLS")->delimiter(',');
  s->add_option("--enet-mix", c.enet_mix, "elastic-net mixing weight");
  s->add_option("--n-lambda", c.n_lambda, "lambda grid length for penalized fits");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    const std::string path = find_config(argc, argv);
    if (!path.empty()) qshrink::load_json_config(cfg, path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qshrink::exit_code(e);
  }

  CLI::App app{"Quantile regression with pretest, Stein-type and penalized estimators"};
  app.set_version_flag("--version", qshrink::kVersion);
  app.require_subcommand(1);

  auto* fit = app.add_subcommand("fit", "full-model (and sub-model with --keep) quantile fits");
  add_common(fit, cfg);

  auto* test = app.add_subcommand("test", "HAC Wald test of the tested block");
  add_common(test, cfg);

  auto* shrink = app.add_subcommand("shrink", "FM, SM, PT, S and PS coefficients (BIC sub-model if no partition)");
  add_common(shrink, cfg);

  auto* pen = app.add_subcommand("penalize", "penalized quantile regression path");
  add_common(pen, cfg);
  pen->add_option("--alpha-mix", cfg.alpha_mix, "mixing weight: 1 lasso, 0 ridge");
  pen->add_option("--n-lambda", cfg.n_lambda, "number of lambda values");
  pen->add_option("--lambda-ratio", cfg.lambda_ratio, "smallest lambda over the lasso lambda_max (0 = default)");
  pen->add_option("--val-data", cfg.val_data, "validation CSV used to mark the selected lambda");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison under AR(1) errors");
  add_common(sim, cfg);
  add_estimators(sim, cfg);
  sim->add_option("--reps", cfg.reps, "replications per rho");
  sim->add_option("--rho", cfg.rho, "AR(1) coefficients")->delimiter(',');
  sim->add_option("--n-train", cfg.n_train, "training rows");
  sim->add_option("--n-val", cfg.n_val, "validation rows");
  sim->add_option("--n-test", cfg.n_test, "test rows");
  sim->add_option("--beta", cfg.beta, "true slopes")->delimiter(',');
  sim->add_option("--design-base", cfg.design_base, "covariate correlation base: corr_jk = base^|j-k|");

  auto* risk = app.add_subcommand("risk", "asymptotic risk curves over the noncentrality");
  add_common(risk, cfg);
  risk->add_option("--gamma-file", cfg.gamma_file, "CSV precision matrix Gamma (otherwise estimated from --data)");
  risk->add_option("--p1", cfg.p1, "size of the leading retained block of the Gamma matrix");
  risk->add_option("--omega-sq", cfg.omega_sq, "sparsity scale for --gamma-file");
  risk->add_option("--direction", cfg.direction, "local alternative direction (default: ones)")->delimiter(',');
  risk->add_option("--delta", cfg.delta, "increasing noncentrality grid")->delimiter(',');

  auto* diag = app.add_subcommand("diagnose", "Durbin-Watson, VIF, condition ratio, outliers, ACF");
  add_common(diag, cfg);
  diag->add_option("--max-lag", cfg.max_lag, "largest Durbin-Watson / ACF lag");
  diag->add_option("--permutations", cfg.permutations, "permutations for Durbin-Watson p-values");

  auto* eval = app.add_subcommand("evaluate", "bootstrap or k-fold prediction error on user data");
  add_common(eval, cfg);
  add_estimators(eval, cfg);
  eval->add_option("--mode", cfg.mode, "bootstrap or kfold")->check(CLI::IsMember({"bootstrap", "kfold"}));
  eval->add_option("--resamples", cfg.resamples, "bootstrap resamples");
  eval->add_option("--split", cfg.split, "training share of each resample");
  eval->add_option("--folds", cfg.folds, "number of folds");

  auto* qp = app.add_subcommand("qprocess", "coefficient paths over tau with bootstrap bands");
  add_common(qp, cfg);
  qp->add_option("--tau-grid", cfg.tau_grid, "quantile grid (default 0.05..0.95)")->delimiter(',');
  qp->add_option("--n-boot", cfg.n_boot, "bootstrap resamples for the bands (0 = none)");
  qp->add_option("--level", cfg.level, "band coverage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(qshrink::ErrorKind::domain);
  }
  for (auto* s : app.get_subcommands()) cfg.command = s->get_name();

  try {
    const auto res = qshrink::run_command(cfg);
    for (const auto& f : res.outputs) std::cout << f << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qshrink::exit_code(e);
  }
  return 0;
}
