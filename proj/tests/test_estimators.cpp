#include <cmath>

#include <gtest/gtest.h>

#include "causynth/dgp.hpp"
#include "causynth/estimators.hpp"

using namespace causynth;

namespace {

constexpr double kTruth = 0.41864838687;

NuisanceValues constant_nuisances(Eigen::Index n, double g, double q1, double q0) {
  return {Vector::Constant(n, g), Vector::Constant(n, q1), Vector::Constant(n, q0)};
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const Dataset& randomized_sample() {
  static const Dataset ds = dgp::sample_dataset({dgp::Regime::randomized, 10000, 2024});
  return ds;
}

NuisanceOptions interaction_features() {
  NuisanceOptions o;
  o.features = OutcomeFeatures::interactions;
  return o;
}

}  // namespace

TEST(OutcomeRegression, ConstantContrasts) {
  const Vector A = vec({1, 0, 1, 0});
  const Vector Y = vec({1, 0, 0, 1});
  EXPECT_DOUBLE_EQ(estimate_or(A, Y, constant_nuisances(4, 0.5, 1.0, 0.0)).psi, 1.0);
  EXPECT_DOUBLE_EQ(estimate_or(A, Y, constant_nuisances(4, 0.5, 0.3, 0.3)).psi, 0.0);
}

TEST(Ipw, SymmetricArmsGiveZero) {
  const Vector A = vec({1, 1, 0, 0});
  const Vector Y = vec({1, 0, 1, 0});
  const auto nv = constant_nuisances(4, 0.5, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(estimate_ipw(A, Y, nv).psi, 0.0);
  EXPECT_DOUBLE_EQ(estimate_ipw(A, Y, nv, {IpwFlavor::hajek, {}, OutcomeScale::binary, std::nullopt}).psi, 0.0);
}

TEST(Ipw, TwoUnitHandArithmetic) {
  const Vector A = vec({1, 0});
  const Vector Y = vec({1, 0});
  const auto nv = constant_nuisances(2, 0.5, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(estimate_ipw(A, Y, nv).psi, 1.0);
  EXPECT_DOUBLE_EQ(estimate_ipw(A, Y, nv, {IpwFlavor::hajek, {}, OutcomeScale::binary, std::nullopt}).psi, 1.0);
}

TEST(Ipw, HajekIsInvariantToWeightScalingButHtIsNot) {
  const Vector A = vec({1, 1, 0, 1, 0});
  const Vector Y = vec({1, 0, 1, 1, 0});
  const Vector w1 = vec({2.0, 3.0, 1.5, 4.0, 2.5});
  const Vector w0 = vec({1.5, 2.0, 3.0, 1.2, 2.2});
  const double h = ipw_from_weights(A, Y, w1, w0, IpwFlavor::hajek);
  EXPECT_NEAR(ipw_from_weights(A, Y, 7.0 * w1, 7.0 * w0, IpwFlavor::hajek), h, 1e-14);
  const double ht = ipw_from_weights(A, Y, w1, w0, IpwFlavor::horvitz_thompson);
  EXPECT_NEAR(ipw_from_weights(A, Y, 7.0 * w1, 7.0 * w0, IpwFlavor::horvitz_thompson), 7.0 * ht, 1e-12);
  EXPECT_NE(ht, 7.0 * ht);
}

TEST(Aipw, ZeroResidualsReduceToOutcomeRegression) {
  const Vector A = vec({1, 0, 1, 0, 1});
  const Vector Y = A;
  for (double g : {0.2, 0.5, 0.8}) {
    const auto nv = constant_nuisances(5, g, 1.0, 0.0);
    EXPECT_DOUBLE_EQ(estimate_aipw(A, Y, nv).psi, 1.0);
    EXPECT_DOUBLE_EQ(estimate_aipw(A, Y, nv).psi, estimate_or(A, Y, nv).psi);
  }
}

TEST(Aipw, ZeroOutcomeModelReducesToHorvitzThompson) {
  const Vector A = vec({1, 0, 1, 0, 1, 0});
  const Vector Y = vec({1, 1, 0, 0, 1, 0});
  NuisanceValues nv{vec({0.3, 0.6, 0.5, 0.4, 0.7, 0.2}), Vector::Zero(6), Vector::Zero(6)};
  EXPECT_NEAR(estimate_aipw(A, Y, nv).psi, estimate_ipw(A, Y, nv).psi, 1e-12);
}

TEST(Eif, CenteredAtPluginAndDegenerateCase) {
  const Vector A = vec({1, 0, 1, 0});
  const Vector Y = vec({1, 0, 0, 1});
  NuisanceValues nv{vec({0.4, 0.5, 0.6, 0.3}), vec({0.7, 0.2, 0.9, 0.4}), vec({0.1, 0.3, 0.5, 0.2})};
  const Vector first_two = nv.q1 - nv.q0 +
                           ((A.array() / nv.g.array() - (1 - A.array()) / (1 - nv.g.array())) *
                            (Y - nv.q_observed(A)).array()).matrix();
  EXPECT_NEAR(eif(A, Y, nv, first_two.mean()).mean(), 0.0, 1e-15);

  const auto flat = constant_nuisances(4, 0.5, 0.0, 0.0);
  const Vector d = eif(A, Vector::Zero(4), flat, 0.3);
  EXPECT_TRUE(d.isApprox(Vector::Constant(4, -0.3)));
}

// With a continuous outcome equal to the initial fit the fluctuation has
// nothing to correct. Binary outcomes cannot show this exactly because the
// initial fit is clamped away from 0 and 1.
TEST(Tmle, ZeroResidualsGiveZeroFluctuation) {
  const Vector A = vec({1, 0, 1, 0, 1, 0, 1, 0});
  NuisanceValues nv{vec({0.3, 0.6, 0.5, 0.4, 0.7, 0.2, 0.55, 0.45}),
                    vec({0.7, 0.2, 0.9, 0.4, 0.6, 0.3, 0.8, 0.5}),
                    vec({0.1, 0.3, 0.5, 0.2, 0.35, 0.15, 0.6, 0.25})};
  const Vector Y = nv.q_observed(A);
  EstimatorConfig cfg;
  cfg.outcome = OutcomeScale::bounded_continuous;
  cfg.scaling = std::pair{0.0, 1.0};
  const auto t = estimate_tmle(A, Y, nv, cfg);
  EXPECT_EQ(t.epsilon, 0.0);
  EXPECT_NEAR(t.psi, estimate_or(A, Y, nv, cfg).psi, 1e-15);
}

TEST(Tmle, AffineInvarianceForContinuousOutcomes) {
  const Vector A = vec({1, 0, 1, 0, 1, 0, 1, 0});
  const Vector Y = vec({0.9, 0.1, 0.4, 0.3, 0.7, 0.05, 0.6, 0.5});
  NuisanceValues nv{vec({0.3, 0.6, 0.5, 0.4, 0.7, 0.2, 0.55, 0.45}),
                    vec({0.6, 0.2, 0.5, 0.4, 0.6, 0.3, 0.7, 0.5}),
                    vec({0.2, 0.3, 0.4, 0.2, 0.35, 0.15, 0.5, 0.25})};
  EstimatorConfig cfg;
  cfg.outcome = OutcomeScale::bounded_continuous;
  cfg.scaling = std::pair{0.0, 1.0};
  const auto base = estimate_tmle(A, Y, nv, cfg);

  const double a = 3.0, b = -2.0;
  NuisanceValues moved{nv.g, (a * nv.q1.array() + b).matrix(), (a * nv.q0.array() + b).matrix()};
  cfg.scaling = std::pair{b, a + b};
  const auto shifted = estimate_tmle(A, (a * Y.array() + b).matrix(), moved, cfg);
  EXPECT_NEAR(shifted.psi, a * base.psi, 1e-8);
}

TEST(Tmle, RejectsNonBinaryOutcomeOnBinaryScale) {
  const Vector A = vec({1, 0});
  EXPECT_THROW(estimate_tmle(A, vec({0.5, 1.0}), constant_nuisances(2, 0.5, 0.5, 0.5)), ValidationError);
}

TEST(Estimators, RandomizedBenchmarkRecoversTruth) {
  const auto& ds = randomized_sample();
  const auto np = fit_nuisances(ds, interaction_features());
  auto nv = evaluate(np, ds.covariates());
  const auto or_ = estimate(Estimator::OR, ds, nv);
  const auto aipw = estimate(Estimator::AIPW, ds, nv);
  const auto tmle = estimate(Estimator::TMLE, ds, nv);
  EXPECT_NEAR(or_.psi, kTruth, 0.03);
  EXPECT_NEAR(aipw.psi, kTruth, 0.03);
  EXPECT_NEAR(tmle.psi, kTruth, 0.03);
  EXPECT_NEAR(tmle.psi, aipw.psi, 0.01);
  EXPECT_LE(std::abs(tmle.mean_eif), 1e-8);

  nv.g.setConstant(0.5);
  EXPECT_NEAR(estimate(Estimator::IPW, ds, nv).psi, kTruth, 0.03);
}

TEST(Estimators, KnownHalfPropensityTmleMatchesAipw) {
  const auto& ds = randomized_sample();
  auto nv = evaluate(fit_nuisances(ds, interaction_features()), ds.covariates());
  nv.g.setConstant(0.5);
  EXPECT_NEAR(estimate(Estimator::TMLE, ds, nv).psi, estimate(Estimator::AIPW, ds, nv).psi, 0.01);
}

TEST(Estimators, ParseNamesAndLists) {
  EXPECT_EQ(parse_estimator("tmle"), Estimator::TMLE);
  EXPECT_EQ(parse_estimator_list("or,ipw").size(), 2u);
  EXPECT_THROW(parse_estimator("nope"), ValidationError);
}

TEST(Estimators, LengthMismatchIsRejected) {
  EXPECT_THROW(estimate_or(vec({1, 0}), vec({1, 0, 1}), constant_nuisances(2, 0.5, 0.5, 0.5)), ValidationError);
}
