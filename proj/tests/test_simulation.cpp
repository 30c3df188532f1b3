#include <gtest/gtest.h>

#include <cmath>

#include "qshrink/simulation.hpp"

using namespace qshrink;

namespace {

// Plain-loop oracles, independent of the Eigen reductions in the library.
double loop_mean(const VectorXd& v) {
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += v(i);
  return s / static_cast<double>(v.size());
}

double loop_corr(const VectorXd& a, const VectorXd& b) {
  const double ma = loop_mean(a), mb = loop_mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    sab += (a(i) - ma) * (b(i) - mb);
    saa += (a(i) - ma) * (a(i) - ma);
    sbb += (b(i) - mb) * (b(i) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double loop_acf(const VectorXd& x, Index lag) {
  const double m = loop_mean(x);
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    den += (x(i) - m) * (x(i) - m);
    if (i >= lag) num += (x(i) - m) * (x(i - lag) - m);
  }
  return num / den;
}

SimConfig small_config() {
  SimConfig c;
  c.n_reps = 6;
  c.tau_list = {0.5};
  c.threads = 1;
  c.estimators.n_lambda = 20;
  return c;
}

}  // namespace

TEST(GenDesign, IndependentColumnsAtZeroBase) {
  const MatrixXd X = gen_design(20000, 4, 0.0, 11);
  for (Index j = 0; j < 4; ++j)
    for (Index k = j + 1; k < 4; ++k) EXPECT_LT(std::abs(loop_corr(X.col(j), X.col(k))), 0.03);
}

TEST(GenDesign, ToeplitzCorrelationLargeSample) {
  const MatrixXd X = gen_design(100000, 8, 0.5, 12);
  EXPECT_NEAR(loop_corr(X.col(0), X.col(2)), 0.25, 0.01);
  EXPECT_NEAR(loop_corr(X.col(3), X.col(4)), 0.5, 0.01);
  EXPECT_NEAR(loop_mean(X.col(5).cwiseAbs2()), 1.0, 0.02);
}

TEST(GenDesign, DeterministicAndValidated) {
  EXPECT_EQ(gen_design(30, 5, 0.5, 99), gen_design(30, 5, 0.5, 99));
  EXPECT_NE(gen_design(30, 5, 0.5, 99), gen_design(30, 5, 0.5, 100));
  EXPECT_THROW(gen_design(30, 5, 1.0, 1), DomainError);
  EXPECT_THROW(gen_design(30, 5, -1.2, 1), DomainError);
}

TEST(GenAr1, WhiteNoiseAtZeroRho) {
  const VectorXd e = gen_ar1_errors(10000, 0.0, 21);
  EXPECT_NEAR(loop_acf(e, 1), 0.0, 0.02);
}

TEST(GenAr1, StationaryVariance) {
  const VectorXd e = gen_ar1_errors(100000, 0.5, 22);
  const double m = loop_mean(e);
  double v = 0.0;
  for (Index i = 0; i < e.size(); ++i) v += (e(i) - m) * (e(i) - m);
  v /= static_cast<double>(e.size() - 1);
  EXPECT_NEAR(v / (1.0 / 0.75), 1.0, 0.02);
}

TEST(GenAr1, NegativeLagOneAndDecay) {
  const VectorXd e = gen_ar1_errors(100000, -0.5, 23);
  EXPECT_NEAR(loop_acf(e, 1), -0.5, 0.01);
  EXPECT_NEAR(loop_acf(e, 2), 0.25, 0.01);
  EXPECT_NEAR(loop_acf(e, 3), -0.125, 0.01);
}

TEST(GenAr1, StationaryStartVariance) {
  // the first draw alone must already have the stationary variance
  double s = 0.0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const double e0 = gen_ar1_errors(1, 0.8, static_cast<std::uint64_t>(r))(0);
    s += e0 * e0;
  }
  EXPECT_NEAR(s / reps, 1.0 / (1.0 - 0.64), 0.05 / (1.0 - 0.64));
  EXPECT_THROW(gen_ar1_errors(10, 1.0, 1), DomainError);
}

TEST(Pmad, PerfectOffsetAndLoop) {
  Philox rng(5);
  MatrixXd X(40, 3);
  for (Index i = 0; i < 40; ++i)
    for (Index j = 0; j < 3; ++j) X(i, j) = rng.normal();
  const VectorXd beta = (VectorXd(4) << 0.5, 1.0, -2.0, 0.25).finished();
  Dataset d = make_dataset(X, (X * beta.tail(3)).array() + beta(0));
  EXPECT_EQ(pmad(d, beta), 0.0);
  VectorXd shifted = beta;
  shifted(0) += -0.75;
  EXPECT_NEAR(pmad(d, shifted), 0.75, 1e-14);

  for (Index i = 0; i < 40; ++i) d.y(i) += rng.normal();
  double s = 0.0;
  for (Index i = 0; i < 40; ++i) {
    double f = beta(0);
    for (Index j = 0; j < 3; ++j) f += X(i, j) * beta(j + 1);
    s += std::abs(d.y(i) - f);
  }
  EXPECT_NEAR(pmad(d, beta), s / 40.0, 1e-13);
  EXPECT_THROW(pmad(d, VectorXd::Zero(3)), DataError);
}

TEST(RunMc, BitwiseDeterministicAcrossThreadCounts) {
  SimConfig a = small_config();
  SimConfig b = a;
  b.threads = 3;
  const McSummary x = run_mc(a), y = run_mc(a), z = run_mc(b);
  ASSERT_EQ(x.cells.size(), 9u);
  for (std::size_t i = 0; i < x.cells.size(); ++i) {
    EXPECT_EQ(x.cells[i].mean_pmad, y.cells[i].mean_pmad);
    EXPECT_EQ(x.cells[i].mean_pmad, z.cells[i].mean_pmad);
    EXPECT_EQ(x.cells[i].se_pmad, z.cells[i].se_pmad);
    EXPECT_EQ(x.cells[i].mean_coef_mad, z.cells[i].mean_coef_mad);
    EXPECT_GE(x.cells[i].mean_pmad, 0.0);
    EXPECT_GE(x.cells[i].se_pmad, 0.0);
  }
}

TEST(RunMc, ReplicationDependsOnlyOnSeedAndIndex) {
  SimConfig c = small_config();
  const auto r3 = detail::run_replication(c, 3);
  c.n_reps = 50;  // other settings of the run do not move a replication's draws
  const auto again = detail::run_replication(c, 3);
  EXPECT_EQ(r3.pmad, again.pmad);

  // reversed execution order reduces to the same summary
  std::vector<detail::RepRecord> fwd, rev(4);
  for (Index r = 0; r < 4; ++r) fwd.push_back(detail::run_replication(c, r));
  for (Index r = 3; r >= 0; --r) rev[static_cast<std::size_t>(r)] = detail::run_replication(c, r);
  const auto a = detail::reduce(fwd, c.tau_list, c.estimators.methods, true);
  const auto b = detail::reduce(rev, c.tau_list, c.estimators.methods, true);
  for (std::size_t i = 0; i < a.cells.size(); ++i) EXPECT_EQ(a.cells[i].mean_pmad, b.cells[i].mean_pmad);

  SimConfig other = c;
  other.base_seed += 1;
  EXPECT_NE(detail::run_replication(other, 3).pmad, r3.pmad);
}

TEST(RunMc, NullSignalMatchesErrorMeanAbs) {
  SimConfig c;
  c.beta_true = VectorXd::Zero(8);
  c.n_train = 3000;
  c.n_test = 3000;
  c.n_reps = 8;
  c.rho = 0.5;
  c.tau_list = {0.5};
  c.estimators.methods = {Method::FM};
  const McSummary s = run_mc(c);

  // oracle: mean |e| of the same AR(1) process by direct simulation
  const VectorXd e = gen_ar1_errors(400000, 0.5, 777);
  const double target = loop_mean(e.cwiseAbs());
  EXPECT_NEAR(target, std::sqrt(2.0 / M_PI / 0.75), 0.01);
  EXPECT_NEAR(s.at(0.5, Method::FM).mean_pmad / target, 1.0, 0.02);
}

TEST(RunMc, FailuresAreCountedNotDropped) {
  SimConfig c = small_config();
  c.partition = PartitionSpec::from_keep(8, {0, 1, 2, 3, 4, 5});  // p2 = 2: Stein undefined
  c.estimators.methods = {Method::FM, Method::S, Method::PS, Method::PT};
  const McSummary s = run_mc(c);
  EXPECT_EQ(s.at(0.5, Method::FM).n_ok, c.n_reps);
  EXPECT_EQ(s.at(0.5, Method::PT).n_ok, c.n_reps);
  EXPECT_EQ(s.at(0.5, Method::S).n_failed, c.n_reps);
  EXPECT_EQ(s.at(0.5, Method::PS).n_failed, c.n_reps);
  EXPECT_TRUE(std::isnan(s.at(0.5, Method::S).mean_pmad));
  ASSERT_EQ(s.failures.size(), static_cast<std::size_t>(2 * c.n_reps));
  EXPECT_EQ(s.failures.front().method, Method::S);
  EXPECT_FALSE(s.failures.front().message.empty());
}

TEST(RunMc, ConfigValidation) {
  SimConfig c = small_config();
  c.rho = 1.0;
  EXPECT_THROW(run_mc(c), DomainError);
  c = small_config();
  c.n_train = 8;
  EXPECT_THROW(run_mc(c), DomainError);
  c = small_config();
  c.tau_list = {1.0};
  EXPECT_THROW(run_mc(c), DomainError);
  c = small_config();
  c.n_reps = 0;
  EXPECT_THROW(run_mc(c), DomainError);
  EXPECT_THROW(parse_method("Bayes"), DomainError);
  EXPECT_EQ(parse_method("enet"), Method::ENET);
}

TEST(EvaluateReal, LeaveOneOutMatchesHandLoop) {
  Philox rng(31);
  MatrixXd X(10, 2);
  VectorXd y(10);
  for (Index i = 0; i < 10; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    y(i) = 1.0 + X(i, 0) - 0.5 * X(i, 1) + rng.normal();
  }
  const Dataset d = make_dataset(X, y);
  EvalOptions opt;
  opt.estimators.methods = {Method::FM};
  const McSummary s = evaluate_real(d, PartitionSpec{{0}, {1}}, {0.5}, KFoldMode{10}, 3, opt);

  double total = 0.0;
  for (Index out = 0; out < 10; ++out) {
    std::vector<Index> rows;
    for (Index i = 0; i < 10; ++i)
      if (i != out) rows.push_back(i);
    const QuantileFit f = fit_quantile(subset_rows(d, rows), 0.5);
    double pred = f.beta(0);
    for (Index j = 0; j < 2; ++j) pred += f.beta(j + 1) * X(out, j);
    total += std::abs(y(out) - pred);
  }
  EXPECT_NEAR(s.at(0.5, Method::FM).mean_pmad, total / 10.0, 1e-10);
  EXPECT_EQ(s.n_reps, 10);
}

TEST(EvaluateReal, SaturatedFitPredictsItsOwnRows) {
  Philox rng(32);
  MatrixXd X(4, 3);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j) X(i, j) = rng.normal();
  const Dataset d = make_dataset(X, VectorXd::NullaryExpr(4, [&](Index) { return rng.normal(); }));
  const QuantileFit f = fit_quantile(d, 0.5);
  EXPECT_LT(pmad(d, f.beta), 1e-10);
}

TEST(EvaluateReal, BootstrapRedrawsDegenerateResamples) {
  Philox rng(33);
  const Index n = 30;
  MatrixXd X(n, 4);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < 3; ++j) X(i, j) = rng.normal();
    X(i, 3) = i == 7 ? 1.0 : 0.0;  // one spike row: often absent from a resample
    y(i) = X(i, 0) + rng.normal();
  }
  const Dataset d = make_dataset(X, y);
  EvalOptions opt;
  opt.estimators.methods = {Method::FM, Method::SM};
  const BootstrapMode mode{40, 0.75};
  const McSummary a = evaluate_real(d, PartitionSpec{{0, 3}, {1, 2}}, {0.5}, mode, 8, opt);
  const McSummary b = evaluate_real(d, PartitionSpec{{0, 3}, {1, 2}}, {0.5}, mode, 8, opt);
  EXPECT_GT(a.redrawn, 0);
  EXPECT_EQ(a.n_reps, 40);
  EXPECT_EQ(a.at(0.5, Method::FM).n_ok + a.at(0.5, Method::FM).n_failed, 40);
  EXPECT_EQ(a.at(0.5, Method::SM).mean_pmad, b.at(0.5, Method::SM).mean_pmad);
  EXPECT_TRUE(std::isnan(a.at(0.5, Method::SM).mean_coef_mad));
}

TEST(EvaluateReal, PenalizedAndShrinkageRunOnUserData) {
  Philox rng(34);
  const Index n = 80;
  MatrixXd X(n, 6);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < 6; ++j) X(i, j) = rng.normal();
    y(i) = 2.0 * X(i, 0) + X(i, 1) + rng.normal();
  }
  const Dataset d = make_dataset(X, y);
  EvalOptions opt;
  opt.estimators.n_lambda = 20;
  const McSummary s = evaluate_real(d, PartitionSpec{{0, 1}, {2, 3, 4, 5}}, {0.25, 0.5}, KFoldMode{5}, 9, opt);
  ASSERT_EQ(s.cells.size(), 18u);
  EXPECT_TRUE(s.failures.empty());
  for (const McCell& c : s.cells) {
    EXPECT_TRUE(std::isfinite(c.mean_pmad)) << to_string(c.method);
    EXPECT_GT(c.mean_pmad, 0.0);
  }
  EXPECT_LT(s.at(0.5, Method::SM).mean_pmad, s.at(0.5, Method::FM).mean_pmad + 0.05);
}

TEST(EvaluateReal, ArgumentValidation) {
  Philox rng(35);
  MatrixXd X(12, 2);
  for (Index i = 0; i < 12; ++i) X.row(i) << rng.normal(), rng.normal();
  const Dataset d = make_dataset(X, VectorXd::NullaryExpr(12, [&](Index) { return rng.normal(); }));
  const PartitionSpec part{{0}, {1}};
  EXPECT_THROW(evaluate_real(d, part, {0.5}, KFoldMode{1}, 1), DomainError);
  EXPECT_THROW(evaluate_real(d, part, {0.5}, KFoldMode{13}, 1), DomainError);
  EXPECT_THROW(evaluate_real(d, part, {0.5}, BootstrapMode{10, 1.0}, 1), DomainError);
  EXPECT_THROW(evaluate_real(d, part, {}, KFoldMode{3}, 1), DomainError);
  EXPECT_THROW(evaluate_real(d, PartitionSpec{{0}, {}}, {0.5}, KFoldMode{3}, 1), DataError);
}
