#pragma once

// Benchmark data-generating process: six covariates (three binary, three
// Gaussian), a binary treatment and a binary outcome, with a heterogeneous
// effect on the logit scale. Includes the Monte Carlo true-ATE oracle.

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "causynth/data.hpp"
#include "causynth/numeric.hpp"
#include "causynth/rng.hpp"

namespace causynth::dgp {

inline constexpr int kCovariates = 6;

enum class Regime { randomized, observational };

inline std::string_view to_string(Regime r) { return r == Regime::randomized ? "randomized" : "observational"; }

inline Regime parse_regime(std::string_view s) {
  if (s == "randomized") return Regime::randomized;
  if (s == "observational") return Regime::observational;
  throw ValidationError("unknown regime '" + std::string(s) + "' (expected randomized|observational)");
}

struct BenchmarkConfig {
  Regime regime = Regime::observational;
  Eigen::Index n = 200;
  std::uint64_t seed = 0;
};

inline Schema benchmark_schema() {
  return Schema::make({{"W1", ColumnKind::binary},
                       {"W2", ColumnKind::binary},
                       {"W3", ColumnKind::binary},
                       {"W4", ColumnKind::continuous},
                       {"W5", ColumnKind::continuous},
                       {"W6", ColumnKind::continuous}},
                      "A", "Y", ColumnKind::binary);
}

/// P(W3 = 1 | W1, W2).
inline double w3_probability(double w1, double w2) { return 0.3 + 0.35 * (w1 + w2) / 2.0; }

/// True propensity P(A = 1 | W) in the observational regime.
template <typename Row>
double propensity(const Row& w) {
  return expit(-30.0 + 16.0 * w[0] - 24.0 * w[1] + 12.0 * w[2] + 6.0 * w[3] - 10.0 * w[4] + 16.0 * w[5]);
}

/// Treatment effect on the logit scale. `log` is the natural logarithm.
template <typename Row>
double effect(const Row& w) {
  return 2.0 + 0.5 * std::sin(w[0]) + 0.3 * std::log(std::abs(w[1]) + 1.0) - 0.2 * w[2] * w[2] +
         0.1 * std::exp(w[3]) - 0.3 * std::tanh(w[4]) + 0.2 * std::cos(w[5]);
}

template <typename Row>
double baseline_logit(const Row& w) {
  return -0.5 + 0.5 * w[0] + w[1] - w[2] + 0.2 * w[3] - 0.3 * w[4] + 0.1 * w[5];
}

/// P(Y = 1 | A = a, W = w) with an arbitrary effect function.
template <typename Row, typename EffectFn>
double outcome_probability(double a, const Row& w, EffectFn&& tau) {
  return expit(baseline_logit(w) + tau(w) * a);
}

template <typename Row>
double outcome_probability(double a, const Row& w) {
  return outcome_probability(a, w, [](const Row& r) { return effect(r); });
}

/// One covariate draw. Stream order is fixed: W1, W2, W3 (uniforms), then
/// W4, W5 and the W6 noise (polar-method normals).
inline std::array<double, kCovariates> draw_covariates(Rng& rng) {
  std::array<double, kCovariates> w{};
  w[0] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  w[1] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  w[2] = rng.bernoulli(w3_probability(w[0], w[1])) ? 1.0 : 0.0;
  w[3] = rng.normal();
  w[4] = rng.normal();
  w[5] = 0.5 * w[3] + 0.5 * w[4] + rng.normal();
  return w;
}

inline Matrix sample_covariates(Eigen::Index n, Rng& rng) {
  Matrix W(n, kCovariates);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto w = draw_covariates(rng);
    for (int j = 0; j < kCovariates; ++j) W(i, j) = w[static_cast<std::size_t>(j)];
  }
  return W;
}

inline Dataset sample_dataset(const BenchmarkConfig& cfg) {
  if (cfg.n < 1) throw ValidationError("benchmark sample size must be >= 1");
  Rng rng(cfg.seed);
  Matrix values(cfg.n, kCovariates + 2);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const auto w = draw_covariates(rng);
    const double g = cfg.regime == Regime::randomized ? 0.5 : propensity(w);
    const double a = rng.bernoulli(g) ? 1.0 : 0.0;
    const double y = rng.bernoulli(outcome_probability(a, w)) ? 1.0 : 0.0;
    for (int j = 0; j < kCovariates; ++j) values(i, j) = w[static_cast<std::size_t>(j)];
    values(i, kCovariates) = a;
    values(i, kCovariates + 1) = y;
  }
  return Dataset::make(benchmark_schema(), std::move(values));
}

/// Mean of Q0(1,W) - Q0(0,W) over `mc_size` covariate draws.
template <typename EffectFn>
double true_ate(std::int64_t mc_size, std::uint64_t seed, EffectFn&& tau) {
  if (mc_size < 1) throw ValidationError("mc_size must be >= 1");
  Rng rng(seed);
  long double sum = 0.0L;
  for (std::int64_t i = 0; i < mc_size; ++i) {
    const auto w = draw_covariates(rng);
    sum += outcome_probability(1.0, w, tau) - outcome_probability(0.0, w, tau);
  }
  return static_cast<double>(sum / static_cast<long double>(mc_size));
}

inline double true_ate(std::int64_t mc_size, std::uint64_t seed) {
  return true_ate(mc_size, seed, [](const std::array<double, kCovariates>& w) { return effect(w); });
}

/// True nuisance functions plus a recorded Monte Carlo ATE.
struct TruthOracle {
  std::int64_t mc_size = 1'000'000;
  std::uint64_t seed = 20240601;
  double psi = 0.0;

  static TruthOracle compute(std::int64_t mc_size, std::uint64_t seed) {
    return {mc_size, seed, true_ate(mc_size, seed)};
  }

  static Vector propensity(const Eigen::Ref<const Matrix>& W) {
    Vector g(W.rows());
    for (Eigen::Index i = 0; i < W.rows(); ++i) g(i) = dgp::propensity(W.row(i));
    return g;
  }

  static Vector outcome(double a, const Eigen::Ref<const Matrix>& W) {
    Vector q(W.rows());
    for (Eigen::Index i = 0; i < W.rows(); ++i) q(i) = dgp::outcome_probability(a, W.row(i));
    return q;
  }

  static Vector effect_contrast(const Eigen::Ref<const Matrix>& W) { return outcome(1.0, W) - outcome(0.0, W); }
};

}  // namespace causynth::dgp
