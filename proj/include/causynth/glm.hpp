#pragma once

// Ridge-penalized generalized linear models (logistic by IRLS, linear in
// closed form) and the Mann-Whitney AUC.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "causynth/error.hpp"
#include "causynth/numeric.hpp"

namespace causynth {

enum class Family { logistic, linear };

inline std::string_view to_string(Family f) { return f == Family::logistic ? "logistic" : "linear"; }

inline Family parse_family(std::string_view s) {
  if (s == "logistic") return Family::logistic;
  if (s == "linear") return Family::linear;
  throw ValidationError("unknown GLM family '" + std::string(s) + "'");
}

struct GlmOptions {
  double lambda = 1e-4;
  double tol = 1e-8;
  int max_iter = 100;
};

struct GeneralizedLinearModel {
  Family family = Family::logistic;
  double lambda = 0.0;
  Eigen::VectorXd coefficients;  // intercept first
  std::vector<std::string> feature_names;
  bool converged = false;
  int iterations = 0;
  /// Penalized objective after each accepted IRLS step (logistic only);
  /// the first entry is the objective at the starting point.
  std::vector<double> objective_trace;
  /// Residual standard deviation (linear only, denominator n - p).
  double residual_sd = 0.0;

  Eigen::Index feature_count() const { return coefficients.size() - 1; }

  Eigen::VectorXd linear_predictor(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    if (X.cols() != feature_count())
      throw ValidationError("model expects " + std::to_string(feature_count()) + " features, got " +
                            std::to_string(X.cols()));
    return (X * coefficients.tail(feature_count())).array() + coefficients(0);
  }

  /// Probabilities for logistic models, fitted means for linear ones.
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    auto eta = linear_predictor(X);
    return family == Family::logistic ? expit(eta) : eta;
  }
};

namespace detail {

inline Eigen::MatrixXd with_intercept(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double penalized_logistic_objective(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& beta, double lambda) {
  const Eigen::VectorXd eta = Z * beta;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) nll += softplus(eta(i)) - y(i) * eta(i);
  return nll + 0.5 * lambda * beta.tail(beta.size() - 1).squaredNorm();
}

}  // namespace detail

/// Penalized score (gradient of the penalized log-likelihood) of a logistic
/// model; zero at the exact optimum.
inline Eigen::VectorXd logistic_penalized_score(const GeneralizedLinearModel& m,
                                                const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                const Eigen::Ref<const Eigen::VectorXd>& y) {
  const Eigen::MatrixXd Z = detail::with_intercept(X);
  const Eigen::VectorXd p = expit(Eigen::VectorXd(Z * m.coefficients));
  Eigen::VectorXd penalty = m.lambda * m.coefficients;
  penalty(0) = 0.0;
  return Z.transpose() * (y - p) - penalty;
}

inline GeneralizedLinearModel fit_glm(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                      Family family, const GlmOptions& opt = {},
                                      std::vector<std::string> feature_names = {}) {
  if (X.rows() != y.size()) throw ValidationError("feature rows and response length differ");
  if (X.rows() < 1) throw ValidationError("cannot fit a model on zero rows");
  if (opt.lambda < 0.0) throw ValidationError("ridge penalty must be nonnegative");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("non-finite value in model inputs");
  if (family == Family::logistic) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError("logistic family requires a 0/1 response");
  }
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < X.cols(); ++j) feature_names.push_back("x" + std::to_string(j + 1));

  const Eigen::Index p = X.cols() + 1;
  const Eigen::MatrixXd Z = detail::with_intercept(X);
  Eigen::MatrixXd penalty = Eigen::MatrixXd::Identity(p, p) * opt.lambda;
  penalty(0, 0) = 0.0;

  GeneralizedLinearModel m;
  m.family = family;
  m.lambda = opt.lambda;
  m.feature_names = std::move(feature_names);

  auto rank_guard = [&](const Eigen::MatrixXd& H) {
    if (opt.lambda > 0.0) return;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H);
    if (qr.rank() < p)
      throw NumericalError("rank-deficient normal equations with lambda = 0; increase the ridge penalty");
  };

  if (family == Family::linear) {
    const Eigen::MatrixXd H = Z.transpose() * Z + penalty;
    rank_guard(H);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw NumericalError("linear normal equations could not be factored");
    m.coefficients = ldlt.solve(Z.transpose() * y);
    m.converged = true;
    m.iterations = 1;
    const Eigen::VectorXd resid = y - Z * m.coefficients;
    const double dof = static_cast<double>(std::max<Eigen::Index>(1, X.rows() - p));
    m.residual_sd = std::sqrt(resid.squaredNorm() / dof);
    return m;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double obj = detail::penalized_logistic_objective(Z, y, beta, opt.lambda);
  m.objective_trace.push_back(obj);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd mu = expit(Eigen::VectorXd(Z * beta));
    const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(1e-300);
    const Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z + penalty;
    const Eigen::VectorXd grad = Z.transpose() * (y - mu) - penalty * beta;
    if (it == 1) rank_guard(H);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw NumericalError("IRLS Hessian could not be factored");
    const Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) throw NumericalError("IRLS produced a non-finite step");

    // Step halving keeps the penalized objective non-increasing.
    double t = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double cand_obj = detail::penalized_logistic_objective(Z, y, candidate, opt.lambda);
    while (!(cand_obj <= obj) && t > 1e-12) {
      t *= 0.5;
      candidate = beta + t * step;
      cand_obj = detail::penalized_logistic_objective(Z, y, candidate, opt.lambda);
    }
    m.iterations = it;
    if (!(cand_obj <= obj)) {
      // No descent is available at machine precision: already optimal.
      m.converged = (t * step).cwiseAbs().maxCoeff() < opt.tol || grad.cwiseAbs().maxCoeff() < opt.tol;
      break;
    }
    const double change = (candidate - beta).cwiseAbs().maxCoeff();
    beta = candidate;
    obj = cand_obj;
    m.objective_trace.push_back(obj);
    if (change < opt.tol) {
      m.converged = true;
      break;
    }
  }
  m.coefficients = beta;
  return m;
}

inline Eigen::VectorXd predict_prob(const GeneralizedLinearModel& m, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  return m.predict(X);
}

inline Eigen::VectorXd truncate(const Eigen::VectorXd& p, double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("truncation bounds must satisfy lo < hi");
  return clamp(p, lo, hi);
}

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ordered
/// correctly, ties counted one half. O(n log n) through midranks.
inline double auc(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXd>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  const auto n = static_cast<std::size_t>(scores.size());
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = labels(static_cast<Eigen::Index>(i));
    if (l != 0.0 && l != 1.0) throw ValidationError("AUC labels must be 0/1");
    n_pos += l;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw ValidationError("AUC needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
  });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores(static_cast<Eigen::Index>(order[j + 1])) == scores(static_cast<Eigen::Index>(order[i]))) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) pos_rank_sum += midrank * labels(static_cast<Eigen::Index>(order[k]));
    i = j + 1;
  }
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline nlohmann::json to_json(const GeneralizedLinearModel& m) {
  return {{"family", to_string(m.family)},
          {"lambda", m.lambda},
          {"coefficients", std::vector<double>(m.coefficients.data(), m.coefficients.data() + m.coefficients.size())},
          {"feature_names", m.feature_names},
          {"converged", m.converged},
          {"iterations", m.iterations},
          {"residual_sd", m.residual_sd}};
}

inline GeneralizedLinearModel glm_from_json(const nlohmann::json& j) {
  GeneralizedLinearModel m;
  m.family = parse_family(j.at("family").get<std::string>());
  m.lambda = j.at("lambda").get<double>();
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  m.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  if (static_cast<Eigen::Index>(m.feature_names.size()) != m.feature_count())
    throw ValidationError("model JSON: feature_names length does not match coefficients");
  m.converged = j.value("converged", true);
  m.iterations = j.value("iterations", 0);
  m.residual_sd = j.value("residual_sd", 0.0);
  return m;
}

}  // namespace causynth
