#pragma once

// Data-quality diagnostics (DCR, TSTR) and executable forms of the
// synthetic-ATE sensitivity bound, the joint-reconstruction tradeoff and the
// overlap-augmentation decomposition.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <json.hpp>

#include "causynth/data.hpp"
#include "causynth/glm.hpp"
#include "causynth/nuisance.hpp"
#include "causynth/numeric.hpp"

namespace causynth {

// -------------------------------------------------------------------- DCR -----

struct DCRReport {
  Vector distances;  // per synthetic row
  double mean = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  Standardizer standardizer;
};

/// Linear-interpolation quantile of an unsorted sample.
inline double quantile(Vector x, double p) {
  if (x.size() == 0) throw ValidationError("quantile of an empty sample");
  std::sort(x.data(), x.data() + x.size());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(x.size() - 1, lo + 1);
  return x(lo) + (pos - static_cast<double>(lo)) * (x(hi) - x(lo));
}

/// Exact nearest-neighbor Euclidean distances from each row of `query` to
/// the rows of `reference` (brute force).
inline Vector nearest_distances(const Eigen::Ref<const Matrix>& reference, const Eigen::Ref<const Matrix>& query) {
  if (reference.rows() == 0 || query.rows() == 0) throw ValidationError("nearest-neighbor search on empty input");
  if (reference.cols() != query.cols()) throw ValidationError("nearest-neighbor inputs differ in width");
  Vector out(query.rows());
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < reference.rows(); ++r) best = std::min(best, (reference.row(r) - query.row(i)).squaredNorm());
    out(i) = std::sqrt(best);
  }
  return out;
}

inline DCRReport dcr(const Eigen::Ref<const Matrix>& real_W, const Eigen::Ref<const Matrix>& syn_W, const Standardizer& std_) {
  DCRReport r;
  r.distances = nearest_distances(std_.apply(real_W), std_.apply(syn_W));
  r.mean = r.distances.mean();
  r.q05 = quantile(r.distances, 0.05);
  r.q50 = quantile(r.distances, 0.50);
  r.q95 = quantile(r.distances, 0.95);
  r.standardizer = std_;
  return r;
}

/// DCR on standardized covariate columns only.
inline DCRReport dcr(const Dataset& real, const Dataset& synthetic, const Standardizer& std_) {
  if (!real.schema().same_covariates(synthetic.schema()))
    throw ValidationError("DCR needs matching covariate schemas");
  return dcr(real.covariates(), synthetic.covariates(), std_);
}

inline nlohmann::json to_json(const DCRReport& r) {
  return {{"mean", r.mean},
          {"q05", r.q05},
          {"q50", r.q50},
          {"q95", r.q95},
          {"n", r.distances.size()},
          {"metric", "standardized-euclidean"},
          {"standardizer", to_json(r.standardizer)}};
}

// ------------------------------------------------------------------- TSTR -----

struct TstrOptions {
  GlmOptions glm;
  OutcomeFeatures features = OutcomeFeatures::main_effects;
};

/// Train a logistic outcome classifier on (A, W) of `synthetic`, return its
/// AUC on `real_test`.
inline double tstr(const Dataset& synthetic, const Dataset& real_test, const TstrOptions& opt = {}) {
  if (!synthetic.schema().same_covariates(real_test.schema()))
    throw ValidationError("TSTR needs matching covariate schemas");
  for (const Dataset* ds : {&synthetic, &real_test}) {
    if (ds->schema().outcome().kind != ColumnKind::binary) throw ValidationError("TSTR needs a binary outcome");
    const double s = ds->outcome().sum();
    if (s == 0.0 || s == static_cast<double>(ds->n())) throw ValidationError("TSTR: single-class outcome");
  }
  const auto model = fit_glm(outcome_design(synthetic.treatment(), synthetic.covariates(), opt.features),
                             synthetic.outcome(), Family::logistic, opt.glm);
  const Vector scores = model.predict(outcome_design(real_test.treatment(), real_test.covariates(), opt.features));
  return auc(scores, real_test.outcome());
}

// ------------------------------------------------------ sensitivity bound -----

struct BoundReport {
  double lhs = 0.0;              // |Psi(p, delta) - Psi(p*, delta*)|
  double covariate_term = 0.0;   // ||p - p*||_{L2}
  double contrast_term = 0.0;    // ||delta - delta*||_{L2(p*)}
  bool holds = false;
};

/// Finite-support form of the bound. The support points are cells of equal
/// volume 1/k in a unit-measure domain, so densities are k * mass; the
/// covariate term is then sqrt(k * sum (p - p*)^2).
inline BoundReport ate_sensitivity_check(const Vector& p, const Vector& p_star, const Vector& delta,
                                         const Vector& delta_star) {
  const Eigen::Index k = p.size();
  if (k == 0 || p_star.size() != k || delta.size() != k || delta_star.size() != k)
    throw ValidationError("sensitivity check needs four equal-length, nonempty vectors");
  for (const Vector* v : {&p, &p_star}) {
    if (v->minCoeff() < 0.0) throw ValidationError("densities must be nonnegative");
    if (std::abs(v->sum() - 1.0) > 1e-9) throw ValidationError("densities must sum to 1 (tolerance 1e-9)");
  }
  for (const Vector* v : {&delta, &delta_star})
    if (v->cwiseAbs().maxCoeff() > 1.0) throw ValidationError("contrasts of outcomes in [0,1] must lie in [-1, 1]");

  BoundReport r;
  r.lhs = std::abs(p.dot(delta) - p_star.dot(delta_star));
  r.covariate_term = std::sqrt(static_cast<double>(k) * (p - p_star).squaredNorm());
  r.contrast_term = std::sqrt(p_star.dot((delta - delta_star).cwiseAbs2()));
  r.holds = r.lhs <= r.covariate_term + r.contrast_term + 1e-12;
  return r;
}

// --------------------------------------------------- joint-loss tradeoff -----

struct LossDecomposition {
  double joint = 0.0;
  double covariate = 0.0;
  double outcome = 0.0;
  int d = 0;

  static LossDecomposition from_parts(double covariate_loss, double outcome_loss, int d) {
    if (covariate_loss < 0.0 || outcome_loss < 0.0 || d < 1) throw ValidationError("losses must be >= 0 and d >= 1");
    return {covariate_loss + outcome_loss / (d + 1), covariate_loss, outcome_loss, d};
  }
};

/// L_Y(f) - L_Y(g) recovered from joint and covariate losses.
inline double joint_loss_identity(double joint_f, double joint_g, double covariate_f, double covariate_g, int d) {
  if (d < 1) throw ValidationError("covariate count must be >= 1");
  return (d + 1) * (joint_f - joint_g + covariate_g - covariate_f);
}

inline constexpr double kKlClamp = 1e-9;

/// KL(Bern(p) || Bern(q)) with both probabilities clamped to [1e-9, 1-1e-9].
inline double bernoulli_kl(double p, double q) {
  p = std::clamp(p, kKlClamp, 1.0 - kKlClamp);
  q = std::clamp(q, kKlClamp, 1.0 - kKlClamp);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

/// Outcome probabilities Q(1, w), Q(0, w) over support points or a sample.
struct OutcomeTable {
  Vector q1;
  Vector q0;
};

struct KlLoss {
  double value = 0.0;
  Eigen::Index clamped = 0;  // entries moved by the 1e-9 clamp
};

/// Balanced Bernoulli KL loss sum_w p*(w) sum_a KL(Q*(a,w) || Qf(a,w)).
inline KlLoss balanced_kl_loss(const OutcomeTable& truth, const OutcomeTable& model, const Vector& weights) {
  const Eigen::Index k = weights.size();
  if (truth.q1.size() != k || truth.q0.size() != k || model.q1.size() != k || model.q0.size() != k)
    throw ValidationError("outcome tables and weights differ in length");
  KlLoss out;
  auto count = [&](double v) { out.clamped += (v < kKlClamp || v > 1.0 - kKlClamp) ? 1 : 0; };
  for (Eigen::Index i = 0; i < k; ++i) {
    for (double v : {truth.q1(i), truth.q0(i), model.q1(i), model.q0(i)}) count(v);
    out.value += weights(i) * (bernoulli_kl(truth.q1(i), model.q1(i)) + bernoulli_kl(truth.q0(i), model.q0(i)));
  }
  return out;
}

/// ||Delta_f - Delta*||_{L2(weights)}.
inline double contrast_l2(const OutcomeTable& model, const OutcomeTable& truth, const Vector& weights) {
  const Vector diff = (model.q1 - model.q0) - (truth.q1 - truth.q0);
  return std::sqrt(weights.dot(diff.cwiseAbs2()));
}

using OutcomeFn = std::function<Vector(double, const Matrix&)>;

/// Empirical contrast error over a covariate sample drawn from P_W*.
inline double contrast_l2(const OutcomeFn& model, const OutcomeFn& truth, const Matrix& W_sample) {
  if (W_sample.rows() == 0) throw ValidationError("contrast error needs a nonempty sample");
  const Vector w = Vector::Constant(W_sample.rows(), 1.0 / static_cast<double>(W_sample.rows()));
  return contrast_l2(OutcomeTable{model(1.0, W_sample), model(0.0, W_sample)},
                     OutcomeTable{truth(1.0, W_sample), truth(0.0, W_sample)}, w);
}

inline KlLoss balanced_kl_loss(const OutcomeFn& model, const OutcomeFn& truth, const Matrix& W_sample) {
  const Vector w = Vector::Constant(W_sample.rows(), 1.0 / static_cast<double>(W_sample.rows()));
  return balanced_kl_loss(OutcomeTable{truth(1.0, W_sample), truth(0.0, W_sample)},
                          OutcomeTable{model(1.0, W_sample), model(0.0, W_sample)}, w);
}

inline double pinsker_contrast_bound(double outcome_loss) {
  if (outcome_loss < 0.0) throw ValidationError("outcome loss must be nonnegative");
  return 2.0 * std::sqrt(outcome_loss);
}

// ------------------------------------------------- overlap decomposition -----

using EffectFn = std::function<Vector(const Matrix&)>;

struct OverlapDecomposition {
  double original_error = 0.0;     // E_mu0[tau_orig - tau0]
  double conditional_term = 0.0;   // E_aug[tau_aug - tau0]
  double shift_term = 0.0;         // E_aug[tau0] - E_mu0[tau0]
  double augmented_error = 0.0;    // conditional + shift
  double original_se = 0.0;
  double conditional_se = 0.0;
  double shift_se = 0.0;
  double augmented_se = 0.0;       // of the direct estimate E_aug[tau_aug] - E_mu0[tau0]
  double identity_residual = 0.0;  // |direct - (conditional + shift)| on the same samples
  bool improves = false;           // |augmented error| < |original error|
};

namespace detail {
inline double mean_se(const Vector& x) {
  return x.size() > 1 ? std::sqrt(sample_variance(x) / static_cast<double>(x.size())) : 0.0;
}
}  // namespace detail

inline OverlapDecomposition overlap_decomposition(const EffectFn& tau0, const EffectFn& tau_orig, const EffectFn& tau_aug,
                                                  const Matrix& mu0_sample, const Matrix& mu_aug_sample) {
  if (mu0_sample.rows() == 0 || mu_aug_sample.rows() == 0) throw ValidationError("overlap decomposition needs samples");
  const Vector t0_on0 = tau0(mu0_sample);
  const Vector to_on0 = tau_orig(mu0_sample);
  const Vector t0_onaug = tau0(mu_aug_sample);
  const Vector ta_onaug = tau_aug(mu_aug_sample);

  OverlapDecomposition r;
  const Vector orig_diff = to_on0 - t0_on0;
  const Vector cond_diff = ta_onaug - t0_onaug;
  r.original_error = orig_diff.mean();
  r.conditional_term = cond_diff.mean();
  r.shift_term = t0_onaug.mean() - t0_on0.mean();
  r.augmented_error = r.conditional_term + r.shift_term;
  r.original_se = detail::mean_se(orig_diff);
  r.conditional_se = detail::mean_se(cond_diff);
  r.shift_se = std::hypot(detail::mean_se(t0_onaug), detail::mean_se(t0_on0));
  r.augmented_se = std::hypot(detail::mean_se(ta_onaug), detail::mean_se(t0_on0));
  const double direct = ta_onaug.mean() - t0_on0.mean();
  r.identity_residual = std::abs(direct - r.augmented_error);
  r.improves = std::abs(r.augmented_error) < std::abs(r.original_error);
  return r;
}

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// psi_aug - psi0 evaluated directly: E_aug[tau_aug] - E_mu0[tau0].
inline McEstimate direct_augmented_error(const EffectFn& tau0, const EffectFn& tau_aug, const Matrix& mu0_sample,
                                         const Matrix& mu_aug_sample) {
  const Vector a = tau_aug(mu_aug_sample);
  const Vector b = tau0(mu0_sample);
  return {a.mean() - b.mean(), std::hypot(detail::mean_se(a), detail::mean_se(b))};
}

inline nlohmann::json to_json(const OverlapDecomposition& r) {
  return {{"original_error", r.original_error}, {"conditional_term", r.conditional_term},
          {"shift_term", r.shift_term},         {"augmented_error", r.augmented_error},
          {"augmented_se", r.augmented_se},     {"identity_residual", r.identity_residual},
          {"improves", r.improves}};
}

}  // namespace causynth
