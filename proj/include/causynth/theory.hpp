#pragma once

// Randomized property suites over the diagnostics bounds. Each suite draws
// its instances from a seeded stream and reports the worst case it saw.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <json.hpp>

#include "causynth/diagnostics.hpp"
#include "causynth/dgp.hpp"
#include "causynth/rng.hpp"

namespace causynth::theory {

namespace detail {

/// Random probability vector on k points; some draws put exact zeros in.
inline Vector random_simplex(Rng& rng, Eigen::Index k) {
  Vector p(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double e = -std::log(rng.uniform_open());
    p(i) = rng.uniform() < 0.1 ? 0.0 : e;
  }
  if (p.sum() == 0.0) p(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(k)))) = 1.0;
  return p / p.sum();
}

inline Vector random_probabilities(Rng& rng, Eigen::Index k, double spread) {
  Vector q(k);
  for (Eigen::Index i = 0; i < k; ++i) q(i) = expit(spread * rng.normal());
  return q;
}

}  // namespace detail

struct SuiteResult {
  std::int64_t instances = 0;
  std::int64_t violations = 0;
  double worst = 0.0;  // suite-specific worst-case statistic

  nlohmann::json to_json() const { return {{"instances", instances}, {"violations", violations}, {"worst", worst}}; }
};

/// Sensitivity bound on random finite supports. `worst` is the largest
/// lhs / (covariate term + contrast term).
inline SuiteResult sensitivity_suite(std::int64_t count, std::uint64_t seed) {
  Rng rng(seed);
  SuiteResult r;
  for (std::int64_t c = 0; c < count; ++c) {
    const auto k = static_cast<Eigen::Index>(1 + rng.uniform_index(40));
    const Vector p = detail::random_simplex(rng, k);
    // Half the instances keep p* close to p to probe the small-error regime.
    Vector ps = detail::random_simplex(rng, k);
    if (rng.uniform() < 0.5) {
      const double a = 0.05 * rng.uniform();
      ps = (1.0 - a) * p + a * ps;
    }
    Vector d(k), ds(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      d(i) = 2.0 * rng.uniform() - 1.0;
      ds(i) = std::clamp(d(i) + 0.2 * (2.0 * rng.uniform() - 1.0), -1.0, 1.0);
    }
    const auto b = ate_sensitivity_check(p, ps, d, ds);
    ++r.instances;
    if (!b.holds) ++r.violations;
    const double rhs = b.covariate_term + b.contrast_term;
    if (rhs > 0.0) r.worst = std::max(r.worst, b.lhs / rhs);
  }
  return r;
}

/// Loss identity on random (L_W, L_Y, d) tuples. `worst` is the largest
/// absolute residual; a violation is a residual above `tol`.
inline SuiteResult loss_identity_suite(std::int64_t count, std::uint64_t seed, double tol = 1e-12) {
  Rng rng(seed);
  SuiteResult r;
  for (std::int64_t c = 0; c < count; ++c) {
    const int d = 1 + static_cast<int>(rng.uniform_index(30));
    const auto f = LossDecomposition::from_parts(rng.uniform(), rng.uniform(), d);
    const auto g = LossDecomposition::from_parts(rng.uniform(), rng.uniform(), d);
    const double got = joint_loss_identity(f.joint, g.joint, f.covariate, g.covariate, d);
    const double resid = std::abs(got - (f.outcome - g.outcome));
    ++r.instances;
    if (resid > tol) ++r.violations;
    r.worst = std::max(r.worst, resid);
  }
  return r;
}

/// Contrast bound ||Delta_f - Delta*|| <= 2 sqrt(L_Y) on random outcome
/// tables. `worst` is the largest ratio of the contrast error to the bound.
inline SuiteResult pinsker_suite(std::int64_t count, std::uint64_t seed) {
  Rng rng(seed);
  SuiteResult r;
  for (std::int64_t c = 0; c < count; ++c) {
    const auto k = static_cast<Eigen::Index>(1 + rng.uniform_index(50));
    const Vector w = detail::random_simplex(rng, k);
    const double spread = 0.5 + 3.0 * rng.uniform();
    const OutcomeTable truth{detail::random_probabilities(rng, k, spread), detail::random_probabilities(rng, k, spread)};
    OutcomeTable model = truth;
    const double noise = rng.uniform();
    for (Eigen::Index i = 0; i < k; ++i) {
      model.q1(i) = expit(logit(std::clamp(truth.q1(i), 1e-12, 1 - 1e-12)) + noise * rng.normal());
      model.q0(i) = expit(logit(std::clamp(truth.q0(i), 1e-12, 1 - 1e-12)) + noise * rng.normal());
    }
    const double lhs = contrast_l2(model, truth, w);
    const double bound = pinsker_contrast_bound(balanced_kl_loss(truth, model, w).value);
    ++r.instances;
    if (lhs > bound + 1e-12) ++r.violations;
    if (bound > 0.0) r.worst = std::max(r.worst, lhs / bound);
  }
  return r;
}

/// Overlap decomposition against an independent direct evaluation of
/// psi_aug - psi0. Scenarios perturb the benchmark effect contrast and mix
/// in shifted covariate rows. `worst` is the largest |z|.
inline SuiteResult overlap_suite(std::int64_t scenarios, Eigen::Index samples, std::uint64_t seed, double z_max = 3.0) {
  Rng meta(seed);
  SuiteResult r;
  const EffectFn tau0 = [](const Matrix& W) { return dgp::TruthOracle::effect_contrast(W); };
  for (std::int64_t s = 0; s < scenarios; ++s) {
    const double b0 = 0.05 * meta.normal(), b5 = 0.05 * meta.normal();
    const double c0 = 0.02 * meta.normal(), c4 = 0.02 * meta.normal();
    const double mix = 0.1 + 0.4 * meta.uniform();
    const double shift4 = meta.normal(), shift5 = meta.normal();
    const EffectFn tau_orig = [tau0, b0, b5](const Matrix& W) { return (tau0(W).array() + b0 + b5 * W.col(4).array()).matrix().eval(); };
    const EffectFn tau_aug = [tau0, c0, c4](const Matrix& W) { return (tau0(W).array() + c0 + c4 * W.col(3).array()).matrix().eval(); };

    auto draw_mu0 = [&](std::uint64_t sd) {
      Rng rng(sd);
      return dgp::sample_covariates(samples, rng);
    };
    auto draw_aug = [&](std::uint64_t sd) {
      Rng rng(sd);
      Matrix W = dgp::sample_covariates(samples, rng);
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        if (rng.uniform() >= mix) continue;
        W(i, 2) = 1.0;
        W(i, 3) += shift4;
        W(i, 4) += shift5;
      }
      return W;
    };
    const auto scen = derive_seed(seed, static_cast<std::uint64_t>(s) + 1);
    const auto dec = overlap_decomposition(tau0, tau_orig, tau_aug, draw_mu0(derive_seed(scen, 1)), draw_aug(derive_seed(scen, 2)));
    const auto direct = direct_augmented_error(tau0, tau_aug, draw_mu0(derive_seed(scen, 3)), draw_aug(derive_seed(scen, 4)));
    const double se = std::hypot(dec.augmented_se, direct.se);
    const double z = se > 0.0 ? std::abs(dec.augmented_error - direct.value) / se : 0.0;
    ++r.instances;
    if (z > z_max || dec.identity_residual > 1e-12) ++r.violations;
    r.worst = std::max(r.worst, z);
  }
  return r;
}

}  // namespace causynth::theory
