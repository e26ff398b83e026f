#include <cmath>

#include <gtest/gtest.h>

#include "causynth/glm.hpp"
#include "causynth/rng.hpp"

using namespace causynth;

TEST(Glm, SymmetricLogisticDesignHasZeroIntercept) {
  Eigen::MatrixXd X(4, 1);
  X << -1, -1, 1, 1;
  Eigen::VectorXd y(4);
  y << 0, 1, 0, 1;
  const auto m = fit_glm(X, y, Family::logistic);
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.coefficients(0), 0.0, 1e-8);
}

TEST(Glm, LinearFitInterpolatesExactLine) {
  Eigen::MatrixXd X(5, 1);
  X << -2, -1, 0, 1, 3;
  const Eigen::VectorXd y = (2.0 * X.col(0).array() + 1.0).matrix();
  const auto m = fit_glm(X, y, Family::linear, {0.0, 1e-10, 100});
  EXPECT_NEAR(m.coefficients(0), 1.0, 1e-10);
  EXPECT_NEAR(m.coefficients(1), 2.0, 1e-10);
}

TEST(Glm, RidgeTamesSeparation) {
  Eigen::MatrixXd X(6, 1);
  X << -3, -2, -1, 1, 2, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  const auto m = fit_glm(X, y, Family::logistic, {1e-4, 1e-8, 100});
  EXPECT_TRUE(m.converged);
  EXPECT_TRUE(m.coefficients.allFinite());
  EXPECT_DOUBLE_EQ(auc(m.predict(X), y), 1.0);
}

TEST(Glm, ObjectiveTraceIsMonotoneAndScoreVanishes) {
  Rng rng(4);
  const Eigen::Index n = 400;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
    y(i) = rng.bernoulli(expit(0.3 + X(i, 0) - 0.5 * X(i, 2))) ? 1.0 : 0.0;
  }
  const GlmOptions opt{1e-3, 1e-9, 100};
  const auto m = fit_glm(X, y, Family::logistic, opt);
  ASSERT_TRUE(m.converged);
  for (std::size_t i = 1; i < m.objective_trace.size(); ++i)
    EXPECT_LE(m.objective_trace[i], m.objective_trace[i - 1] + 1e-12);
  // Per-observation score; the stopping rule is on coefficient change.
  EXPECT_LT(logistic_penalized_score(m, X, y).cwiseAbs().maxCoeff() / static_cast<double>(n), 10 * opt.tol);
}

TEST(Glm, RankDeficientDesignWithoutPenaltyThrows) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 2, 2, 4, 3, 6, 4, 8;
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  EXPECT_THROW(fit_glm(X, y, Family::linear, {0.0, 1e-8, 100}), NumericalError);
}

TEST(Glm, PredictAndTruncate) {
  GeneralizedLinearModel m;
  m.coefficients = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd p = predict_prob(m, Eigen::MatrixXd::Random(5, 2));
  EXPECT_TRUE((p.array() == 0.5).all());
  Eigen::VectorXd q(2);
  q << 0.001, 0.5;
  const auto t = truncate(q, 0.01, 0.99);
  EXPECT_EQ(t(0), 0.01);
  EXPECT_EQ(t(1), 0.5);
}

TEST(Glm, JsonRoundTrip) {
  Eigen::MatrixXd X(4, 1);
  X << -1, 0, 1, 2;
  Eigen::VectorXd y(4);
  y << 0, 1, 0, 1;
  const auto m = fit_glm(X, y, Family::logistic, {}, {"x"});
  const auto back = glm_from_json(to_json(m));
  EXPECT_EQ(back.coefficients, m.coefficients);
  EXPECT_EQ(back.predict(X), m.predict(X));
}

TEST(Auc, ReferenceValues) {
  Eigen::VectorXd s(4), l(4);
  s << 0.9, 0.8, 0.3, 0.2;
  l << 1, 1, 0, 0;
  EXPECT_DOUBLE_EQ(auc(s, l), 1.0);
  EXPECT_DOUBLE_EQ(auc(Eigen::VectorXd::Constant(4, 0.3), l), 0.5);
  s << 0.9, 0.2, 0.8, 0.3;
  l << 1, 0, 0, 1;
  EXPECT_DOUBLE_EQ(auc(s, l), 0.75);
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Eigen::VectorXd s(6), l(6);
  s << 0.1, 0.4, 0.35, 0.8, 0.65, 0.2;
  l << 0, 1, 0, 1, 1, 0;
  const Eigen::VectorXd t = s.array().exp() * 3.0 - 1.0;
  EXPECT_DOUBLE_EQ(auc(s, l), auc(t, l));
}

TEST(Auc, SingleClassThrows) {
  EXPECT_THROW(auc(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3)), ValidationError);
}
