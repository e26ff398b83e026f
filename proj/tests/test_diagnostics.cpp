#include <cmath>

#include <gtest/gtest.h>

#include "causynth/dgp.hpp"
#include "causynth/diagnostics.hpp"
#include "causynth/generate.hpp"
#include "causynth/theory.hpp"

using namespace causynth;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Dcr, CopyHasZeroDistance) {
  const auto real = dgp::sample_dataset({dgp::Regime::observational, 200, 1});
  const auto r = dcr(real, real, fit_standardizer(real));
  EXPECT_TRUE(r.distances.isZero());
  EXPECT_EQ(r.mean, 0.0);
}

TEST(Dcr, PythagoreanPair) {
  Matrix real(1, 2), syn(1, 2);
  real << 0, 0;
  syn << 3, 4;
  EXPECT_DOUBLE_EQ(dcr(real, syn, Standardizer::identity(2)).mean, 5.0);
}

TEST(Dcr, MeanIsPermutationInvariant) {
  const auto real = dgp::sample_dataset({dgp::Regime::observational, 150, 1});
  const auto syn = dgp::sample_dataset({dgp::Regime::observational, 120, 2});
  const auto std_ = fit_standardizer(real);
  const double base = dcr(real, syn, std_).mean;
  const auto pr = subsample(real, real.n(), 5);
  const auto ps = subsample(syn, syn.n(), 6);
  EXPECT_NEAR(dcr(pr, ps, std_).mean, base, 1e-12);
}

TEST(Dcr, JitterStaysCloserThanIndependentMarginals) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto real = dgp::sample_dataset({dgp::Regime::observational, 1000, 40 + s});
    const auto std_ = fit_standardizer(real);
    const Matrix jit = fit_generator(GeneratorKind::bootstrap_jitter, real).sample(1000, s);
    const Matrix ind = fit_generator(GeneratorKind::independent_marginals, real).sample(1000, s);
    const double dj = dcr(real.covariates(), jit, std_).mean;
    const double di = dcr(real.covariates(), ind, std_).mean;
    EXPECT_GT(dj, 0.0);
    EXPECT_LT(dj, di) << "seed " << s;
  }
}

TEST(Tstr, RealOnRealEqualsDirectAuc) {
  const auto train = dgp::sample_dataset({dgp::Regime::observational, 1000, 3});
  const auto test = dgp::sample_dataset({dgp::Regime::observational, 1000, 4});
  const auto m = fit_glm(outcome_design(train.treatment(), train.covariates(), OutcomeFeatures::main_effects),
                         train.outcome(), Family::logistic);
  const double direct =
      auc(m.predict(outcome_design(test.treatment(), test.covariates(), OutcomeFeatures::main_effects)), test.outcome());
  EXPECT_EQ(tstr(train, test), direct);
}

// One noise fit still picks a random direction, and the real outcome is
// predictable enough that a single AUC can sit well away from 0.5; the
// average over independent fits cannot.
TEST(Tstr, CoinFlipLabelsAreUninformative) {
  const auto test = dgp::sample_dataset({dgp::Regime::observational, 1000, 4});
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto train = dgp::sample_dataset({dgp::Regime::observational, 1000, 100 + s});
    Rng rng(1000 + s);
    Vector coin(train.n());
    for (Eigen::Index i = 0; i < coin.size(); ++i) coin(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    sum += tstr(Dataset::make(train.schema(), train.covariates(), train.treatment(), coin), test);
  }
  EXPECT_NEAR(sum / 50.0, 0.5, 0.05);
}

TEST(Tstr, OracleHybridMatchesRealTraining) {
  const auto seed = dgp::sample_dataset({dgp::Regime::observational, 1000, 3});
  const auto test = dgp::sample_dataset({dgp::Regime::observational, 1000, 4});
  const auto gen = fit_generator(GeneratorKind::bootstrap_jitter, seed);
  const auto syn = hybrid_generate(gen, NuisanceFunctions::benchmark_truth(false), seed.schema(),
                                   {OutcomeMode::sample, 1000, 9});
  EXPECT_NEAR(tstr(syn, test), tstr(seed, test), 0.05);
}

TEST(Tstr, SingleClassIsRejected) {
  const auto ds = dgp::sample_dataset({dgp::Regime::observational, 50, 3});
  const auto ones = Dataset::make(ds.schema(), ds.covariates(), ds.treatment(), Vector::Ones(ds.n()));
  EXPECT_THROW(tstr(ones, ds), ValidationError);
  EXPECT_THROW(tstr(ds, ones), ValidationError);
}

TEST(SensitivityBound, IdenticalWorlds) {
  const auto r = ate_sensitivity_check(vec({0.3, 0.7}), vec({0.3, 0.7}), vec({0.1, -0.2}), vec({0.1, -0.2}));
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.covariate_term + r.contrast_term, 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(SensitivityBound, TwoPointHandExample) {
  const auto r = ate_sensitivity_check(vec({0.5, 0.5}), vec({0.5, 0.5}), vec({0.2, 0.4}), vec({0.1, 0.4}));
  EXPECT_NEAR(r.lhs, 0.05, 1e-15);
  EXPECT_NEAR(r.covariate_term + r.contrast_term, std::sqrt(0.005), 1e-15);
  EXPECT_TRUE(r.holds);
}

// Point masses on opposite cells: the bound is attained with equality when
// densities are taken against the uniform cell measure.
TEST(SensitivityBound, OppositePointMassesAttainTheBound) {
  const auto r = ate_sensitivity_check(vec({1, 0}), vec({0, 1}), vec({1, -1}), vec({1, -1}));
  EXPECT_DOUBLE_EQ(r.lhs, 2.0);
  EXPECT_DOUBLE_EQ(r.covariate_term, 2.0);
  EXPECT_TRUE(r.holds);
}

TEST(SensitivityBound, SmallRandomInstances) {
  Rng rng(123);
  for (int c = 0; c < 100; ++c) {
    const auto k = static_cast<Eigen::Index>(2 + rng.uniform_index(4));
    const Vector p = theory::detail::random_simplex(rng, k);
    const Vector ps = theory::detail::random_simplex(rng, k);
    Vector d(k), ds(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      d(i) = 2 * rng.uniform() - 1;
      ds(i) = 2 * rng.uniform() - 1;
    }
    EXPECT_TRUE(ate_sensitivity_check(p, ps, d, ds).holds) << "instance " << c;
  }
}

TEST(SensitivityBound, ValidatesInputs) {
  EXPECT_THROW(ate_sensitivity_check(vec({0.5, 0.4}), vec({0.5, 0.5}), vec({0, 0}), vec({0, 0})), ValidationError);
  EXPECT_THROW(ate_sensitivity_check(vec({1.5, -0.5}), vec({0.5, 0.5}), vec({0, 0}), vec({0, 0})), ValidationError);
  EXPECT_THROW(ate_sensitivity_check(vec({0.5, 0.5}), vec({0.5, 0.5}), vec({0, 0}), vec({0})), ValidationError);
}

TEST(LossIdentity, HandExample) {
  EXPECT_NEAR(joint_loss_identity(1.0, 0.8, 0.9, 0.75, 6), 0.35, 1e-12);
  const double direct = 7 * (1.0 - 0.9) - 7 * (0.8 - 0.75);
  EXPECT_NEAR(joint_loss_identity(1.0, 0.8, 0.9, 0.75, 6), direct, 1e-12);
  EXPECT_EQ(joint_loss_identity(0.4, 0.4, 0.1, 0.1, 3), 0.0);
}

TEST(LossIdentity, DecompositionInvariant) {
  const auto f = LossDecomposition::from_parts(0.3, 0.7, 6);
  EXPECT_NEAR(f.joint, 0.3 + 0.7 / 7.0, 1e-15);
}

TEST(LossIdentity, RandomizedSuite) {
  const auto r = theory::loss_identity_suite(1000, 5);
  EXPECT_EQ(r.violations, 0);
  EXPECT_LE(r.worst, 1e-12);
}

TEST(Kl, ClosedFormSinglePoint) {
  const OutcomeTable truth{vec({0.5}), vec({0.3})};
  const OutcomeTable model{vec({0.9}), vec({0.3})};
  const auto loss = balanced_kl_loss(truth, model, vec({1.0}));
  EXPECT_NEAR(loss.value, 0.5 * std::log(25.0 / 9.0), 1e-12);
  EXPECT_NEAR(loss.value, 0.5108, 1e-4);
}

TEST(Kl, PerfectModelHasZeroLossAndBound) {
  const OutcomeTable t{vec({0.2, 0.7, 0.4}), vec({0.1, 0.5, 0.9})};
  const Vector w = vec({0.2, 0.3, 0.5});
  EXPECT_EQ(balanced_kl_loss(t, t, w).value, 0.0);
  EXPECT_EQ(pinsker_contrast_bound(0.0), 0.0);
  EXPECT_EQ(contrast_l2(t, t, w), 0.0);
}

TEST(Kl, SaturatedProbabilitiesAreClampedAndCounted) {
  const OutcomeTable truth{vec({1.0}), vec({0.5})};
  const OutcomeTable model{vec({0.0}), vec({0.5})};
  const auto loss = balanced_kl_loss(truth, model, vec({1.0}));
  EXPECT_TRUE(std::isfinite(loss.value));
  EXPECT_EQ(loss.clamped, 2);
}

TEST(Pinsker, RandomTablesRespectTheBound) {
  Rng rng(8);
  for (int c = 0; c < 200; ++c) {
    const Vector w = theory::detail::random_simplex(rng, 10);
    const OutcomeTable t{theory::detail::random_probabilities(rng, 10, 2.0), theory::detail::random_probabilities(rng, 10, 2.0)};
    const OutcomeTable f{theory::detail::random_probabilities(rng, 10, 2.0), theory::detail::random_probabilities(rng, 10, 2.0)};
    EXPECT_LE(contrast_l2(f, t, w), pinsker_contrast_bound(balanced_kl_loss(t, f, w).value) + 1e-12);
  }
}

TEST(Overlap, NoOpAugmentation) {
  const auto W = [] {
    Rng rng(1);
    return dgp::sample_covariates(2000, rng);
  }();
  const EffectFn tau0 = [](const Matrix& X) { return dgp::TruthOracle::effect_contrast(X); };
  const EffectFn tau = [tau0](const Matrix& X) { return (tau0(X).array() + 0.03).matrix().eval(); };
  const auto r = overlap_decomposition(tau0, tau, tau, W, W);
  EXPECT_EQ(r.shift_term, 0.0);
  EXPECT_NEAR(r.augmented_error, r.original_error, 1e-15);
}

TEST(Overlap, PerfectConditionalModelLeavesShiftOnly) {
  Rng rng(2);
  const Matrix W0 = dgp::sample_covariates(2000, rng);
  Matrix Wa = dgp::sample_covariates(2000, rng);
  Wa.col(3).array() += 0.5;
  const EffectFn tau0 = [](const Matrix& X) { return dgp::TruthOracle::effect_contrast(X); };
  const auto r = overlap_decomposition(tau0, tau0, tau0, W0, Wa);
  EXPECT_EQ(r.conditional_term, 0.0);
  EXPECT_EQ(r.augmented_error, r.shift_term);
  EXPECT_NE(r.shift_term, 0.0);
}

TEST(Overlap, DecompositionMatchesIndependentEvaluation) {
  const auto r = theory::overlap_suite(3, 100000, 21);
  EXPECT_EQ(r.violations, 0);
}
