#include <gtest/gtest.h>

#include <cmath>

#include "hetfx/elastic_net.hpp"
#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"

using namespace hetfx;

namespace {

// Columns centred with unit mean square, y centred.
void standardized_problem(Eigen::Index n, Eigen::Index p, std::uint64_t seed, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  Rng rng(seed);
  X.resize(n, p);
  y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal() + (j == 1 ? 0.5 * X(i, 0) : 0.0);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = 2.0 * X(i, 0) - 1.0 * X(i, 2) + rng.normal();
  X = X.rowwise() - X.colwise().mean();
  for (Eigen::Index j = 0; j < p; ++j) X.col(j) /= std::sqrt(X.col(j).squaredNorm() / static_cast<double>(n));
  y = y.array() - y.mean();
}

}  // namespace

TEST(ElasticNet, LambdaZeroIsLeastSquares) {
  Rng rng(1);
  Eigen::MatrixXd X(80, 3);
  Eigen::VectorXd y(80);
  for (Eigen::Index i = 0; i < 80; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = 3.0 + rng.uniform();
    X(i, 2) = rng.normal() * 10.0;
    y[i] = 1.0 + X(i, 0) - 2.0 * X(i, 1) + 0.1 * X(i, 2) + rng.normal();
  }
  const auto fit = fit_elastic_net(X, y, 0.5, 0.0);
  Eigen::MatrixXd A(80, 4);
  A.col(0).setOnes();
  A.rightCols(3) = X;
  const Eigen::VectorXd b = A.colPivHouseholderQr().solve(y);
  EXPECT_NEAR(fit.model.intercept, b[0], 1e-9);
  EXPECT_LT((fit.model.coef - b.tail(3)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ElasticNet, RidgeMatchesClosedForm) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(200, 4, 2, X, y);
  const double lambda = 0.3;
  const auto fit = fit_elastic_net(X, y, 0.0, lambda, {1e-12, 100000, {}, false});
  const double n = 200.0;
  const Eigen::MatrixXd A = X.transpose() * X / n + lambda * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd b = A.ldlt().solve(X.transpose() * y / n);
  EXPECT_LT((fit.model.coef - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(fit.model.intercept, 0.0, 1e-12);
}

TEST(ElasticNet, KktConditionsHold) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(300, 6, 3, X, y);
  for (double alpha : {1.0, 0.5}) {
    const double lambda = 0.2;
    const auto fit = fit_elastic_net(X, y, alpha, lambda, {1e-12, 100000, {}, false});
    const Eigen::VectorXd g = X.transpose() * (y - X * fit.model.coef) / 300.0;
    int zeros = 0;
    for (Eigen::Index j = 0; j < 6; ++j) {
      const double b = fit.model.coef[j];
      if (b == 0.0) {
        ++zeros;
        EXPECT_LE(std::abs(g[j]), lambda * alpha + 1e-9);
      } else {
        EXPECT_NEAR(g[j], lambda * (alpha * (b > 0 ? 1.0 : -1.0) + (1.0 - alpha) * b), 1e-8);
      }
    }
    if (alpha == 1.0) EXPECT_GT(zeros, 0);
  }
}

TEST(ElasticNet, LambdaMaxZeroesEverything) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(150, 5, 4, X, y);
  const double lmax = elastic_net_lambda_max(X, y, 1.0);
  EXPECT_NEAR(lmax, (X.transpose() * y).cwiseAbs().maxCoeff() / 150.0, 1e-12);
  const auto at = fit_elastic_net(X, y, 1.0, lmax * 1.0000001);
  EXPECT_EQ(at.model.coef.cwiseAbs().maxCoeff(), 0.0);
  const auto below = fit_elastic_net(X, y, 1.0, lmax * 0.9);
  EXPECT_GT(below.model.coef.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ElasticNet, ZeroPenaltyFactorIsNeverShrunkToZero) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(150, 3, 5, X, y);
  ElasticNetOptions opt;
  opt.penalty_factor = {1.0, 0.0, 1.0};
  const auto fit = fit_elastic_net(X, y, 1.0, 100.0, opt);
  EXPECT_EQ(fit.model.coef[0], 0.0);
  EXPECT_EQ(fit.model.coef[2], 0.0);
  // Column 1 alone is fitted by least squares.
  EXPECT_NEAR(fit.model.coef[1], X.col(1).dot(y) / X.col(1).squaredNorm(), 1e-6);
}

TEST(ElasticNet, ObjectiveIsMonotoneAcrossSweeps) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(100, 8, 6, X, y);
  ElasticNetOptions opt;
  opt.record_objective = true;
  opt.tolerance = 1e-10;
  const auto fit = fit_elastic_net(X, y, 0.7, 0.05, opt);
  ASSERT_GE(fit.objective_trace.size(), 2u);
  for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
    EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] + 1e-12);
}

TEST(ElasticNet, ConstantColumnGetsZero) {
  Eigen::MatrixXd X(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = 7.0;
    X(i, 1) = i;
    y[i] = 2.0 * i + 1.0;
  }
  const auto fit = fit_elastic_net(X, y, 1.0, 0.01);
  EXPECT_EQ(fit.model.coef[0], 0.0);
  EXPECT_NEAR(fit.model.coef[1], 2.0, 0.05);
}

TEST(ElasticNet, ConvergenceFailureIsReported) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(100, 5, 7, X, y);
  ElasticNetOptions opt;
  opt.max_sweeps = 1;
  opt.tolerance = 1e-15;
  EXPECT_THROW(fit_elastic_net(X, y, 0.5, 0.01, opt), ConvergenceError);
}

TEST(ElasticNet, CrossValidationIsDeterministicAndSensible) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  standardized_problem(200, 6, 8, X, y);
  Rng a(11), b(11);
  const auto ta = tune_elastic_net(X, y, 2, 2, a);
  const auto tb = tune_elastic_net(X, y, 2, 2, b);
  EXPECT_EQ(ta.lambda, tb.lambda);
  EXPECT_EQ(ta.alpha_mix, tb.alpha_mix);
  EXPECT_LT((ta.model.coef - tb.model.coef).cwiseAbs().maxCoeff(), 1e-15);
  // Shrinkage may share the signal with the correlated column 1; the fitted
  // signal along x0 must still dominate the noise columns.
  EXPECT_GT(ta.model.coef[0] + 0.5 * ta.model.coef[1], 1.5);
  for (Eigen::Index j : {3, 4, 5}) EXPECT_LT(std::abs(ta.model.coef[j]), 0.3);
  EXPECT_GT(ta.cv_mse, 0.5);
  EXPECT_LT(ta.cv_mse, 2.0);
}

TEST(ElasticNet, CrossValidationNeedsEnoughRows) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Random(3);
  Rng rng(1);
  EXPECT_THROW(tune_elastic_net(X, y, 2, 1, rng), EstimationError);
}
