#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "qshrink/quantile_solver.hpp"
#include "qshrink/rng.hpp"

using namespace qshrink;

namespace {

Dataset random_dataset(Philox& rng, Index n, Index p, bool heavy = false) {
  MatrixXd X(n, p);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) X(i, j) = rng.normal();
    double e = rng.normal();
    if (heavy) e /= std::max(0.05, std::abs(rng.normal()));
    y(i) = 1.0 + X.row(i).sum() * 0.5 + e;
  }
  return make_dataset(X, y);
}

}  // namespace

TEST(CheckLoss, Branches) {
  EXPECT_DOUBLE_EQ(check_loss(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(check_loss(-2.0, 0.25), 1.5);
  EXPECT_DOUBLE_EQ(check_loss(0.0, 0.9), 0.0);
}

TEST(CheckLoss, RejectsTauOutsideUnitInterval) {
  EXPECT_THROW(check_loss(1.0, 0.0), DomainError);
  EXPECT_THROW(check_loss(1.0, 1.0), DomainError);
  EXPECT_THROW(check_loss(1.0, -0.2), DomainError);
}

TEST(CheckLoss, ReflectionSymmetry) {
  Philox rng(11);
  for (int t = 0; t < 1000; ++t) {
    const double u = 10.0 * (rng.uniform() - 0.5);
    const double tau = rng.uniform();
    EXPECT_NEAR(check_loss(u, tau), check_loss(-u, 1.0 - tau), 1e-14);
    EXPECT_GE(check_loss(u, tau), 0.0);
  }
}

TEST(FitQuantile, InterceptOnlyMedian) {
  VectorXd y(7);
  y << 3.0, -1.0, 8.0, 2.5, 0.0, 11.0, 4.0;
  auto d = make_dataset(MatrixXd::Ones(7, 1), y, false);
  auto fit = fit_quantile(d, 0.5);
  EXPECT_DOUBLE_EQ(fit.beta(0), 3.0);
  EXPECT_EQ(fit.status, FitStatus::converged);
}

TEST(FitQuantile, InterceptOnlyEvenSampleFlagsNonUniqueness) {
  VectorXd y(4);
  y << 1.0, 2.0, 3.0, 4.0;
  auto d = make_dataset(MatrixXd::Ones(4, 1), y, false);
  auto fit = fit_quantile(d, 0.5);
  EXPECT_GE(fit.beta(0), 2.0);
  EXPECT_LE(fit.beta(0), 3.0);
  EXPECT_TRUE(fit.multiple_optima);
}

TEST(FitQuantile, SingleObservationInterpolates) {
  for (double tau : {0.1, 0.5, 0.8}) {
    auto d = make_dataset(MatrixXd::Ones(1, 1), VectorXd::Constant(1, 4.25), false);
    auto fit = fit_quantile(d, tau);
    EXPECT_DOUBLE_EQ(fit.beta(0), 4.25);
    EXPECT_DOUBLE_EQ(fit.objective, 0.0);
  }
}

TEST(FitQuantile, MatchesVertexEnumerationOracle) {
  Philox rng(2024, 0, StreamRole::misc);
  auto d = random_dataset(rng, 25, 3);
  const double tau = 0.3;
  auto fit = fit_quantile(d, tau);
  const double best = oracle::vertex_enumeration_min(design_matrix(d), d.y, tau);
  EXPECT_NEAR(fit.objective, best, 1e-8);
}

TEST(FitQuantile, ObjectiveMatchesResiduals) {
  Philox rng(5);
  auto d = random_dataset(rng, 60, 4, true);
  auto fit = fit_quantile(d, 0.7);
  EXPECT_NEAR(fit.objective, check_objective(fit.residuals, 0.7), 1e-10);
  EXPECT_NEAR((d.y - predict(d, fit.beta) - fit.residuals).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(FitQuantile, SubgradientOptimality) {
  Philox rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = random_dataset(rng, 40, 3, rep % 2 == 0);
    const double tau = 0.1 + 0.8 * rng.uniform();
    auto fit = fit_quantile(d, tau);
    const MatrixXd Z = design_matrix(d);
    const double zero_tol = 1e-9 * (1.0 + d.y.cwiseAbs().maxCoeff());
    for (Index j = 0; j < Z.cols(); ++j) {
      double g = 0.0, slack = 0.0;
      for (Index i = 0; i < d.n(); ++i) {
        const double r = fit.residuals(i);
        if (std::abs(r) <= zero_tol) slack += std::abs(Z(i, j)) * std::max(tau, 1.0 - tau);
        else g += Z(i, j) * (tau - (r < 0 ? 1.0 : 0.0));
      }
      EXPECT_LE(std::abs(g), slack + 1e-9);
    }
  }
}

TEST(FitQuantile, PerturbationNeverImproves) {
  Philox rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    auto d = random_dataset(rng, 15 + static_cast<Index>(rng.below(20)), 1 + static_cast<Index>(rng.below(3)));
    const double tau = 0.05 + 0.9 * rng.uniform();
    auto fit = fit_quantile(d, tau);
    for (Index j = 0; j < fit.beta.size(); ++j) {
      for (double h : {1e-3, -1e-3}) {
        VectorXd b = fit.beta;
        b(j) += h;
        EXPECT_GE(check_objective(d.y - predict(d, b), tau), fit.objective - 1e-12);
      }
    }
  }
}

TEST(FitQuantile, RegressionEquivariance) {
  Philox rng(8);
  auto d = random_dataset(rng, 50, 3);
  auto fit = fit_quantile(d, 0.4);
  VectorXd c(4);
  c << 0.5, -2.0, 1.25, 3.0;
  Dataset shifted = d;
  shifted.y = d.y + design_matrix(d) * c;
  auto fit2 = fit_quantile(shifted, 0.4);
  EXPECT_LT((fit2.beta - fit.beta - c).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitQuantile, QuantileCountProperty) {
  Philox rng(9);
  for (int rep = 0; rep < 30; ++rep) {
    auto d = random_dataset(rng, 53, 2, true);
    const double tau = 0.05 + 0.9 * rng.uniform();
    auto fit = fit_quantile(d, tau);
    const double zero_tol = 1e-9 * (1.0 + d.y.cwiseAbs().maxCoeff());
    double neg = 0, nonpos = 0;
    for (Index i = 0; i < d.n(); ++i) {
      if (fit.residuals(i) < -zero_tol) ++neg;
      if (fit.residuals(i) <= zero_tol) ++nonpos;
    }
    const double n = static_cast<double>(d.n());
    EXPECT_LE(neg / n, tau + 1e-12);
    EXPECT_GE(nonpos / n, tau - 1e-12);
  }
}

TEST(FitQuantile, SubModelNesting) {
  Philox rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = random_dataset(rng, 40, 5);
    PartitionSpec part{{0, 3}, {1, 2, 4}};
    auto full = fit_quantile(d, 0.5);
    auto sub = fit_quantile(d, 0.5, part);
    EXPECT_GE(sub.objective, full.objective - 1e-10);
    for (Index j : part.test) EXPECT_EQ(sub.beta(j + 1), 0.0);
  }
}

TEST(FitQuantile, NonContiguousPartitionMatchesColumnSubset) {
  Philox rng(12);
  auto d = random_dataset(rng, 45, 6);
  PartitionSpec part = PartitionSpec::from_keep(6, {0, 2, 5});
  auto sub = fit_quantile(d, 0.35, part);
  std::vector<Index> keep = {0, 2, 5};
  auto direct = fit_quantile(select_columns(d, keep), 0.35);
  EXPECT_NEAR(sub.objective, direct.objective, 1e-10);
  EXPECT_NEAR(sub.beta(1), direct.beta(1), 1e-9);
  EXPECT_NEAR(sub.beta(6), direct.beta(3), 1e-9);
}

TEST(FitQuantile, RankDeficiencyIsFlagged) {
  Philox rng(13);
  auto d = random_dataset(rng, 30, 3);
  d.X.col(2) = 2.0 * d.X.col(0);
  auto fit = fit_quantile(d, 0.5);
  EXPECT_EQ(fit.status, FitStatus::degenerate);
  EXPECT_FALSE(fit.note.empty());
}

TEST(FitQuantile, InvalidPartitionRejected) {
  Philox rng(14);
  auto d = random_dataset(rng, 30, 3);
  EXPECT_THROW(fit_quantile(d, 0.5, PartitionSpec{{0, 1}, {1, 2}}), DataError);
  EXPECT_THROW(fit_quantile(d, 0.5, PartitionSpec{{0}, {1}}), DataError);
  EXPECT_THROW(fit_quantile(d, 0.5, PartitionSpec{{0, 1, 2}, {}}), DataError);
}

TEST(FitOls, OrthonormalDesign) {
  Philox rng(15);
  MatrixXd G(12, 3);
  for (Index i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
  MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(G).householderQ() * MatrixXd::Identity(12, 3);
  VectorXd y(12);
  for (Index i = 0; i < 12; ++i) y(i) = rng.normal();
  auto fit = fit_ols(make_dataset(Q, y, false));
  EXPECT_LT((fit.beta - Q.transpose() * y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitOls, ExactLinearResponse) {
  Philox rng(16);
  MatrixXd X(20, 2);
  for (Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  VectorXd y = (X * Eigen::Vector2d(1.5, -0.5)).array() + 2.0;
  auto fit = fit_ols(make_dataset(X, y));
  EXPECT_LT(fit.residuals.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitOls, MatchesExplicitTwoByTwoInverse) {
  Philox rng(17);
  MatrixXd X(10, 2);
  VectorXd y(10);
  for (Index i = 0; i < 10; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    y(i) = rng.normal();
  }
  double a = 0, b = 0, c = 0, u = 0, v = 0;
  for (Index i = 0; i < 10; ++i) {
    a += X(i, 0) * X(i, 0);
    b += X(i, 0) * X(i, 1);
    c += X(i, 1) * X(i, 1);
    u += X(i, 0) * y(i);
    v += X(i, 1) * y(i);
  }
  const double det = a * c - b * b;
  const double b0 = (c * u - b * v) / det;
  const double b1 = (-b * u + a * v) / det;
  auto fit = fit_ols(make_dataset(X, y, false));
  EXPECT_NEAR(fit.beta(0), b0, 1e-12);
  EXPECT_NEAR(fit.beta(1), b1, 1e-12);
  EXPECT_LT((X.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitOls, SingularDesignNamesColumns) {
  Philox rng(18);
  MatrixXd X(10, 3);
  for (Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  X.col(2) = X.col(0) + X.col(1);
  auto d = make_dataset(X, VectorXd::Ones(10), true, {"tempr", "rh", "co"});
  try {
    fit_ols(d);
    FAIL() << "expected singular design error";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_TRUE(msg.find("tempr") != std::string::npos || msg.find("rh") != std::string::npos ||
                msg.find("co") != std::string::npos)
        << msg;
  }
}
