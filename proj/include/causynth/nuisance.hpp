#pragma once

// Propensity g(1|w) and outcome Q(a,w) models.
//
// `NuisancePair` holds GLMs fitted on a dataset. `NuisanceFunctions` is the
// type-erased view consumed downstream; it can wrap a fitted pair or known
// truth functions (e.g. the benchmark DGP).

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causynth/data.hpp"
#include "causynth/dgp.hpp"
#include "causynth/glm.hpp"

namespace causynth {

enum class OutcomeFeatures { main_effects, interactions };

inline std::string_view to_string(OutcomeFeatures f) {
  return f == OutcomeFeatures::main_effects ? "main-effects" : "interactions";
}

inline OutcomeFeatures parse_outcome_features(std::string_view s) {
  if (s == "main-effects" || s == "main") return OutcomeFeatures::main_effects;
  if (s == "interactions") return OutcomeFeatures::interactions;
  throw ValidationError("unknown outcome feature set '" + std::string(s) + "'");
}

struct TruncationBounds {
  double lo = 0.01;
  double hi = 0.99;

  void validate() const {
    if (!(0.0 < lo && lo < hi && hi < 1.0)) throw ValidationError("truncation bounds must satisfy 0 < lo < hi < 1");
  }
};

struct NuisanceOptions {
  GlmOptions glm;
  OutcomeFeatures features = OutcomeFeatures::main_effects;
  TruncationBounds bounds;
};

/// Outcome-model design: (A, W) or (A, W, A*W).
inline Matrix outcome_design(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Matrix>& W, OutcomeFeatures f) {
  const Eigen::Index d = W.cols();
  Matrix X(W.rows(), f == OutcomeFeatures::main_effects ? 1 + d : 1 + 2 * d);
  X.col(0) = A;
  X.middleCols(1, d) = W;
  if (f == OutcomeFeatures::interactions) X.rightCols(d) = W.array().colwise() * A.array();
  return X;
}

inline Matrix outcome_design(double a, const Eigen::Ref<const Matrix>& W, OutcomeFeatures f) {
  return outcome_design(Vector::Constant(W.rows(), a), W, f);
}

inline std::vector<std::string> outcome_feature_names(const std::vector<std::string>& covs, OutcomeFeatures f,
                                                      const std::string& treatment) {
  std::vector<std::string> names{treatment};
  names.insert(names.end(), covs.begin(), covs.end());
  if (f == OutcomeFeatures::interactions)
    for (const auto& c : covs) names.push_back(treatment + "*" + c);
  return names;
}

struct NuisancePair {
  GeneralizedLinearModel propensity;
  GeneralizedLinearModel outcome;
  OutcomeFeatures features = OutcomeFeatures::main_effects;
  TruncationBounds bounds;
  std::vector<std::string> covariate_names;

  void check_covariates(const Eigen::Ref<const Matrix>& W) const {
    if (W.cols() != static_cast<Eigen::Index>(covariate_names.size()))
      throw ValidationError("nuisance models were fit on " + std::to_string(covariate_names.size()) +
                            " covariates, data has " + std::to_string(W.cols()));
  }

  Vector propensity_raw(const Eigen::Ref<const Matrix>& W) const {
    check_covariates(W);
    return propensity.predict(W);
  }

  Vector propensity_truncated(const Eigen::Ref<const Matrix>& W) const {
    return truncate(propensity_raw(W), bounds.lo, bounds.hi);
  }

  Vector outcome_at(double a, const Eigen::Ref<const Matrix>& W) const {
    check_covariates(W);
    return outcome.predict(outcome_design(a, W, features));
  }
};

inline NuisancePair fit_nuisances(const Dataset& ds, const NuisanceOptions& opt = {}) {
  opt.bounds.validate();
  const auto covs = ds.schema().covariate_names();
  NuisancePair np;
  np.features = opt.features;
  np.bounds = opt.bounds;
  np.covariate_names = covs;
  np.propensity = fit_glm(ds.covariates(), ds.treatment(), Family::logistic, opt.glm, covs);
  const Family fam = ds.schema().outcome().kind == ColumnKind::binary ? Family::logistic : Family::linear;
  np.outcome = fit_glm(outcome_design(ds.treatment(), ds.covariates(), opt.features), ds.outcome(), fam, opt.glm,
                       outcome_feature_names(covs, opt.features, ds.schema().treatment().name));
  return np;
}

inline nlohmann::json to_json(const NuisancePair& np) {
  return {{"propensity", to_json(np.propensity)},
          {"outcome", to_json(np.outcome)},
          {"outcome_features", to_string(np.features)},
          {"truncation", {np.bounds.lo, np.bounds.hi}},
          {"covariates", np.covariate_names}};
}

inline NuisancePair nuisance_pair_from_json(const nlohmann::json& j) {
  NuisancePair np;
  np.propensity = glm_from_json(j.at("propensity"));
  np.outcome = glm_from_json(j.at("outcome"));
  np.features = parse_outcome_features(j.at("outcome_features").get<std::string>());
  const auto b = j.at("truncation").get<std::vector<double>>();
  if (b.size() != 2) throw ValidationError("truncation must be a [lo, hi] pair");
  np.bounds = {b[0], b[1]};
  np.bounds.validate();
  np.covariate_names = j.at("covariates").get<std::vector<std::string>>();
  return np;
}

/// Type-erased nuisance functions over covariate matrices.
struct NuisanceFunctions {
  std::function<Vector(const Matrix&)> propensity;        // untruncated g(1|w)
  std::function<Vector(double, const Matrix&)> outcome;   // Q(a, w)
  TruncationBounds bounds;
  Family outcome_family = Family::logistic;
  double residual_sd = 0.0;  // Gaussian residual scale for continuous outcomes
  Eigen::Index covariates = 0;

  Vector propensity_truncated(const Matrix& W) const { return truncate(propensity(W), bounds.lo, bounds.hi); }

  static NuisanceFunctions from(NuisancePair np) {
    NuisanceFunctions f;
    f.bounds = np.bounds;
    f.outcome_family = np.outcome.family;
    f.residual_sd = np.outcome.residual_sd;
    f.covariates = static_cast<Eigen::Index>(np.covariate_names.size());
    auto shared = std::make_shared<const NuisancePair>(std::move(np));
    f.propensity = [shared](const Matrix& W) { return shared->propensity_raw(W); };
    f.outcome = [shared](double a, const Matrix& W) { return shared->outcome_at(a, W); };
    return f;
  }

  /// True functions of the benchmark DGP; `randomized` selects g = 0.5.
  static NuisanceFunctions benchmark_truth(bool randomized, TruncationBounds bounds = {}) {
    NuisanceFunctions f;
    f.bounds = bounds;
    f.covariates = dgp::kCovariates;
    if (randomized)
      f.propensity = [](const Matrix& W) { return Vector::Constant(W.rows(), 0.5).eval(); };
    else
      f.propensity = [](const Matrix& W) { return dgp::TruthOracle::propensity(W); };
    f.outcome = [](double a, const Matrix& W) { return dgp::TruthOracle::outcome(a, W); };
    return f;
  }
};

/// Nuisance values evaluated on one dataset's rows.
struct NuisanceValues {
  Vector g;   // P(A = 1 | W), as supplied (estimators apply their own truncation)
  Vector q1;  // Q(1, W)
  Vector q0;  // Q(0, W)

  Vector q_observed(const Eigen::Ref<const Vector>& A) const {
    return (A.array() * q1.array() + (1.0 - A.array()) * q0.array()).matrix();
  }
};

inline NuisanceValues evaluate(const NuisanceFunctions& f, const Eigen::Ref<const Matrix>& W) {
  if (f.covariates != 0 && W.cols() != f.covariates)
    throw ValidationError("schema mismatch: nuisances expect " + std::to_string(f.covariates) + " covariates, data has " +
                          std::to_string(W.cols()));
  const Matrix Wm = W;
  return {f.propensity(Wm), f.outcome(1.0, Wm), f.outcome(0.0, Wm)};
}

inline NuisanceValues evaluate(const NuisancePair& np, const Eigen::Ref<const Matrix>& W) {
  return {np.propensity_raw(W), np.outcome_at(1.0, W), np.outcome_at(0.0, W)};
}

}  // namespace causynth
