#include <gtest/gtest.h>

#include <cmath>

#include "qshrink/diagnostics.hpp"
#include "qshrink/simulation.hpp"

using namespace qshrink;

namespace {

double loop_dw(const VectorXd& r, Index lag) {
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < r.size(); ++i) {
    den += r(i) * r(i);
    if (i >= lag) num += (r(i) - r(i - lag)) * (r(i) - r(i - lag));
  }
  return num / den;
}

Dataset gaussian_data(Philox& rng, Index n, Index p) {
  MatrixXd X(n, p);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) X(i, j) = rng.normal();
    y(i) = 1.0 + X.row(i).sum() + rng.normal();
  }
  return make_dataset(X, y);
}

}  // namespace

TEST(Acf, LagZeroAndWhiteNoiseBand) {
  const VectorXd e = gen_ar1_errors(10000, 0.0, 41);
  const VectorXd a = acf(e, 10);
  EXPECT_DOUBLE_EQ(a(0), 1.0);
  for (Index l = 1; l <= 10; ++l) EXPECT_LT(std::abs(a(l)), 0.03);
  EXPECT_THROW(acf(e, 10000), DomainError);
  EXPECT_THROW(acf(VectorXd::Ones(5), 1), DataError);
}

TEST(Acf, Ar1GeometricDecay) {
  const VectorXd a = acf(gen_ar1_errors(100000, 0.5, 42), 5);
  for (Index l = 1; l <= 5; ++l) EXPECT_NEAR(a(l), std::pow(0.5, static_cast<double>(l)), 0.01);
}

TEST(DurbinWatson, MatchesLoopAndIdentity) {
  const Index n = 2000;
  const VectorXd e = gen_ar1_errors(n, 0.6, 43);
  for (Index l = 1; l <= 6; ++l) {
    const DurbinWatsonRow row = durbin_watson(e, l, {200, 5, 1});
    EXPECT_NEAR(row.dw, loop_dw(e, l), 1e-12);
    EXPECT_GE(row.dw, 0.0);
    EXPECT_LE(row.dw, 4.0);
    // exact: dw = 2(1 - r) - (boundary squares)/sum r^2 + centering terms
    double ends = 0.0;
    for (Index i = 0; i < l; ++i) ends += e(i) * e(i) + e(n - 1 - i) * e(n - 1 - i);
    const double raw_r = e.tail(n - l).dot(e.head(n - l)) / e.squaredNorm();
    EXPECT_NEAR(row.dw, 2.0 * (1.0 - raw_r) - ends / e.squaredNorm(), 1e-12);
    EXPECT_NEAR(row.dw, 2.0 * (1.0 - row.autocorr), 8.0 * static_cast<double>(l) / static_cast<double>(n));
  }
}

TEST(DurbinWatson, WhiteNoiseNearTwoAndPermutationPValue) {
  const VectorXd e = gen_ar1_errors(10000, 0.0, 44);
  const DurbinWatsonRow row = durbin_watson(e, 1, {400, 6, 1});
  EXPECT_NEAR(row.dw, 2.0, 0.05);
  EXPECT_GT(row.p_value, 0.01);

  const DurbinWatsonRow strong = durbin_watson(gen_ar1_errors(300, 0.7, 45), 1, {400, 6, 1});
  EXPECT_LT(strong.dw, 1.0);
  EXPECT_DOUBLE_EQ(strong.p_value, 1.0 / 401.0);
}

TEST(DurbinWatson, PValuesRoughlyUniformUnderNull) {
  int below = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const VectorXd e = gen_ar1_errors(100, 0.0, 1000 + static_cast<std::uint64_t>(r));
    if (durbin_watson(e, 1, {199, static_cast<std::uint64_t>(r), 1}).p_value <= 0.1) ++below;
  }
  EXPECT_NEAR(below / static_cast<double>(reps), 0.1, 0.06);
}

TEST(DurbinWatson, ConstantAndErrors) {
  EXPECT_EQ(durbin_watson(VectorXd::Constant(40, 2.5), 1, {50, 1, 1}).dw, 0.0);
  EXPECT_THROW(durbin_watson(VectorXd::Ones(8), 2, {}), DataError);
  EXPECT_THROW(durbin_watson(VectorXd::Ones(40), 0, {}), DomainError);
}

TEST(DurbinWatson, SeededAndThreadIndependent) {
  const VectorXd e = gen_ar1_errors(200, 0.1, 46);
  const auto a = durbin_watson(e, 2, {300, 9, 1});
  const auto b = durbin_watson(e, 2, {300, 9, 3});
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(Vif, MatchesInverseCorrelationDiagonal) {
  const MatrixXd X = gen_design(300, 5, 0.7, 47);
  const Dataset d = make_dataset(X, VectorXd::Zero(300));
  const VifResult v = vif(d);
  // oracle: VIF_j is the j-th diagonal entry of the inverse correlation matrix
  const MatrixXd Xc = X.rowwise() - X.colwise().mean();
  MatrixXd C = Xc.transpose() * Xc;
  const VectorXd s = C.diagonal().cwiseSqrt();
  C = s.asDiagonal().inverse() * C * s.asDiagonal().inverse();
  const MatrixXd Ci = C.inverse();
  for (Index j = 0; j < 5; ++j) EXPECT_NEAR(v.values[static_cast<std::size_t>(j)], Ci(j, j), 1e-9);
  EXPECT_TRUE(v.notes.empty());

  // rescaling a column changes nothing
  Dataset scaled = d;
  scaled.X.col(2) *= 1000.0;
  const VifResult w = vif(scaled);
  for (Index j = 0; j < 5; ++j) EXPECT_NEAR(w.values[static_cast<std::size_t>(j)], v.values[static_cast<std::size_t>(j)], 1e-8);
}

TEST(Vif, OrthogonalColumnsAreOne) {
  MatrixXd X(4, 2);
  X << 1, 1, -1, 1, 1, -1, -1, -1;
  const VifResult v = vif(make_dataset(X, VectorXd::Zero(4)));
  EXPECT_NEAR(v.values[0], 1.0, 1e-14);
  EXPECT_NEAR(v.values[1], 1.0, 1e-14);
}

TEST(Vif, DuplicateColumnIsInfiniteAndNamed) {
  MatrixXd X = gen_design(50, 3, 0.0, 48);
  X.col(2) = X.col(0);
  const VifResult v = vif(make_dataset(X, VectorXd::Zero(50), true, {"temp", "rh", "temp_copy"}));
  EXPECT_TRUE(std::isinf(v.values[0]));
  EXPECT_TRUE(std::isinf(v.values[2]));
  EXPECT_FALSE(std::isinf(v.values[1]));
  ASSERT_EQ(v.notes.size(), 2u);
  EXPECT_EQ(v.notes[0], "temp is collinear with temp_copy");
  EXPECT_EQ(v.notes[1], "temp_copy is collinear with temp");
}

TEST(ConditionRatio, AnalyticAndInvariant) {
  MatrixXd X(3, 2);
  X << 1, 0, 0, 1, 1, 1;  // X'X = [[2,1],[1,2]]
  EXPECT_NEAR(condition_ratio(make_dataset(X, VectorXd::Zero(3))), 3.0, 1e-12);

  const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(gen_design(6, 6, 0.0, 49)).householderQ();
  EXPECT_NEAR(condition_ratio(make_dataset(Q.leftCols(4), VectorXd::Zero(6))), 1.0, 1e-12);

  const MatrixXd A = gen_design(80, 4, 0.6, 50);
  const MatrixXd R = Eigen::HouseholderQR<MatrixXd>(gen_design(4, 4, 0.0, 51)).householderQ();
  const double base = condition_ratio(make_dataset(A, VectorXd::Zero(80)));
  EXPECT_GE(base, 1.0);
  EXPECT_NEAR(condition_ratio(make_dataset(A * R, VectorXd::Zero(80))) / base, 1.0, 1e-10);

  MatrixXd S = A;
  S.col(3) = S.col(1);
  EXPECT_THROW(condition_ratio(make_dataset(S, VectorXd::Zero(80))), NumericalError);
}

TEST(OutlierTest, StudentizedMatchesDeletionRefit) {
  Philox rng(52);
  const Dataset d = gaussian_data(rng, 30, 2);
  const OutlierReport rep = outlier_test(d);
  for (Index i : {0, 7, 29}) {
    std::vector<Index> rows;
    for (Index k = 0; k < 30; ++k)
      if (k != i) rows.push_back(k);
    const Dataset del = subset_rows(d, rows);
    const OlsFit f = fit_ols(del);
    const MatrixXd Zd = design_matrix(del);
    VectorXd zi(3);
    zi << 1.0, d.X(i, 0), d.X(i, 1);
    const double pred_err = d.y(i) - zi.dot(f.beta);
    const double var = f.sigma2 * (1.0 + zi.dot((Zd.transpose() * Zd).inverse() * zi));
    EXPECT_NEAR(rep.studentized(i), pred_err / std::sqrt(var), 1e-9);
  }
}

TEST(OutlierTest, InjectedOutlierIsTheOnlyFlag) {
  Philox rng(53);
  Dataset d = gaussian_data(rng, 200, 3);
  const OutlierReport clean = outlier_test(d);
  EXPECT_LE(clean.flagged.size(), 1u);
  d.y(117) += 10.0;
  const OutlierReport dirty = outlier_test(d);
  ASSERT_EQ(dirty.flagged.size(), 1u);
  EXPECT_EQ(dirty.flagged[0], 117);
  for (Index i = 0; i < 200; ++i) {
    EXPECT_GE(dirty.adjusted_p(i), 0.0);
    EXPECT_LE(dirty.adjusted_p(i), 1.0);
  }
}

TEST(Diagnose, FullBatteryOnAutocorrelatedRegression) {
  const Index n = 400;
  MatrixXd X = gen_design(n, 3, 0.3, 54);
  VectorXd y = X.col(0) + gen_ar1_errors(n, 0.7, 55);
  const DiagnosticsReport rep = diagnose(make_dataset(X, y), 6, {300, 7, 1});
  ASSERT_EQ(rep.dw_rows.size(), 6u);
  EXPECT_NEAR(rep.dw_rows[0].autocorr, 0.7, 0.08);
  EXPECT_LT(rep.dw_rows[0].dw, 0.8);
  EXPECT_LT(rep.dw_rows[0].p_value, 0.01);
  EXPECT_EQ(rep.vif.values.size(), 3u);
  for (double v : rep.vif.values) EXPECT_GE(v, 1.0);
  EXPECT_GE(rep.condition_ratio, 1.0);
  EXPECT_EQ(rep.acf.size(), 7);
  EXPECT_NEAR(rep.acf(1), rep.dw_rows[0].autocorr, 1e-12);
}
