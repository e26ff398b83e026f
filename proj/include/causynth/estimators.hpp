#pragma once

// ATE estimators: outcome regression (G-computation), inverse probability
// weighting, augmented IPW and TMLE, plus the efficient influence function.
//
// Every estimator works on evaluated nuisance values for the rows of one
// dataset. Propensities are truncated to the configured bounds here, so the
// same NuisanceValues can be reused across configurations.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causynth/data.hpp"
#include "causynth/error.hpp"
#include "causynth/nuisance.hpp"
#include "causynth/numeric.hpp"

namespace causynth {

enum class Estimator { OR, IPW, AIPW, TMLE };
enum class IpwFlavor { horvitz_thompson, hajek };
enum class OutcomeScale { binary, bounded_continuous };

inline constexpr Estimator kAllEstimators[] = {Estimator::IPW, Estimator::AIPW, Estimator::OR, Estimator::TMLE};

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::OR: return "OR";
    case Estimator::IPW: return "IPW";
    case Estimator::AIPW: return "AIPW";
    case Estimator::TMLE: return "TMLE";
  }
  return "?";
}

inline Estimator parse_estimator(std::string_view s) {
  std::string u(s);
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "OR") return Estimator::OR;
  if (u == "IPW") return Estimator::IPW;
  if (u == "AIPW") return Estimator::AIPW;
  if (u == "TMLE") return Estimator::TMLE;
  throw ValidationError("unknown estimator '" + std::string(s) + "'");
}

inline std::vector<Estimator> parse_estimator_list(std::string_view csv) {
  std::vector<Estimator> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto pos = csv.find(',', start);
    if (pos == std::string_view::npos) pos = csv.size();
    auto tok = detail::trim(csv.substr(start, pos - start));
    if (!tok.empty()) out.push_back(parse_estimator(tok));
    start = pos + 1;
  }
  if (out.empty()) throw ValidationError("empty estimator list");
  return out;
}

inline std::string_view to_string(IpwFlavor f) { return f == IpwFlavor::horvitz_thompson ? "horvitz-thompson" : "hajek"; }

inline IpwFlavor parse_ipw_flavor(std::string_view s) {
  if (s == "horvitz-thompson" || s == "ht") return IpwFlavor::horvitz_thompson;
  if (s == "hajek") return IpwFlavor::hajek;
  throw ValidationError("unknown IPW flavor '" + std::string(s) + "'");
}

inline std::string_view to_string(OutcomeScale s) { return s == OutcomeScale::binary ? "binary" : "bounded-continuous"; }

inline OutcomeScale parse_outcome_scale(std::string_view s) {
  if (s == "binary") return OutcomeScale::binary;
  if (s == "bounded-continuous") return OutcomeScale::bounded_continuous;
  throw ValidationError("unknown outcome scale '" + std::string(s) + "'");
}

struct EstimatorConfig {
  IpwFlavor ipw_flavor = IpwFlavor::horvitz_thompson;
  TruncationBounds bounds;
  OutcomeScale outcome = OutcomeScale::binary;
  /// Scaling bounds (a, b) for continuous outcomes; defaults to the observed
  /// range widened by 1% on each side.
  std::optional<std::pair<double, double>> scaling;

  void validate() const {
    bounds.validate();
    if (scaling && !(scaling->first < scaling->second))
      throw ValidationError("outcome scaling bounds must satisfy a < b");
  }
};

inline nlohmann::json to_json(const EstimatorConfig& c) {
  nlohmann::json j{{"ipw_flavor", to_string(c.ipw_flavor)},
                   {"truncation", {c.bounds.lo, c.bounds.hi}},
                   {"outcome_scale", to_string(c.outcome)}};
  if (c.scaling) j["scaling"] = {c.scaling->first, c.scaling->second};
  return j;
}

struct ATEEstimate {
  Estimator estimator = Estimator::OR;
  double psi = 0.0;
  Eigen::Index n = 0;
  double mean_eif = 0.0;
  double epsilon = 0.0;
  nlohmann::json config;
};

inline nlohmann::json to_json(const ATEEstimate& e) {
  return {{"estimator", to_string(e.estimator)}, {"psi", e.psi},       {"n", e.n},
          {"mean_eif", e.mean_eif},              {"epsilon", e.epsilon}, {"config", e.config}};
}

inline constexpr double kTmleOutcomeClamp = 0.005;
inline constexpr double kTmleEifTolerance = 1e-8;

/// Per-row efficient influence function D(O) at (Q, g, psi).
inline Vector eif(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y, const NuisanceValues& nv,
                  double psi) {
  const auto a = A.array();
  const auto g = nv.g.array();
  const Eigen::ArrayXd h = a / g - (1.0 - a) / (1.0 - g);
  const Eigen::ArrayXd qa = a * nv.q1.array() + (1.0 - a) * nv.q0.array();
  return (nv.q1.array() - nv.q0.array() + h * (Y.array() - qa) - psi).matrix();
}

inline Vector eif(const Dataset& ds, const NuisanceValues& nv, double psi) { return eif(ds.treatment(), ds.outcome(), nv, psi); }

namespace detail {

inline void check_lengths(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y, const NuisanceValues& nv) {
  const auto n = A.size();
  if (Y.size() != n || nv.g.size() != n || nv.q1.size() != n || nv.q0.size() != n)
    throw ValidationError("nuisance values do not match the dataset row count");
  if (n == 0) throw ValidationError("cannot estimate on an empty dataset");
}

inline NuisanceValues truncated(const NuisanceValues& nv, const TruncationBounds& b) {
  return {clamp(nv.g, b.lo, b.hi), nv.q1, nv.q0};
}

}  // namespace detail

/// IPW from explicit arm weights w1 = 1/g (treated) and w0 = 1/(1-g) (control).
inline double ipw_from_weights(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y,
                               const Eigen::Ref<const Vector>& w1, const Eigen::Ref<const Vector>& w0,
                               IpwFlavor flavor) {
  const auto a = A.array();
  const auto y = Y.array();
  const double treated = (a * y * w1.array()).sum();
  const double control = ((1.0 - a) * y * w0.array()).sum();
  if (flavor == IpwFlavor::horvitz_thompson) return (treated - control) / static_cast<double>(A.size());
  const double n1 = (a * w1.array()).sum();
  const double n0 = ((1.0 - a) * w0.array()).sum();
  if (n1 <= 0.0 || n0 <= 0.0) throw ValidationError("Hajek IPW needs both treatment arms present");
  return treated / n1 - control / n0;
}

inline ATEEstimate estimate_or(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y,
                               const NuisanceValues& raw, const EstimatorConfig& cfg = {}) {
  detail::check_lengths(A, Y, raw);
  const auto nv = detail::truncated(raw, cfg.bounds);
  ATEEstimate e{Estimator::OR, (nv.q1 - nv.q0).mean(), A.size(), 0.0, 0.0, to_json(cfg)};
  e.mean_eif = eif(A, Y, nv, e.psi).mean();
  return e;
}

inline ATEEstimate estimate_ipw(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y,
                                const NuisanceValues& raw, const EstimatorConfig& cfg = {}) {
  detail::check_lengths(A, Y, raw);
  const auto nv = detail::truncated(raw, cfg.bounds);
  const Vector w1 = nv.g.cwiseInverse();
  const Vector w0 = (1.0 - nv.g.array()).inverse().matrix();
  ATEEstimate e{Estimator::IPW, ipw_from_weights(A, Y, w1, w0, cfg.ipw_flavor), A.size(), 0.0, 0.0, to_json(cfg)};
  e.mean_eif = eif(A, Y, nv, e.psi).mean();
  return e;
}

inline ATEEstimate estimate_aipw(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y,
                                 const NuisanceValues& raw, const EstimatorConfig& cfg = {}) {
  detail::check_lengths(A, Y, raw);
  const auto nv = detail::truncated(raw, cfg.bounds);
  const auto a = A.array();
  const auto g = nv.g.array();
  const Eigen::ArrayXd terms = nv.q1.array() - nv.q0.array() + a * (Y.array() - nv.q1.array()) / g -
                               (1.0 - a) * (Y.array() - nv.q0.array()) / (1.0 - g);
  ATEEstimate e{Estimator::AIPW, terms.mean(), A.size(), 0.0, 0.0, to_json(cfg)};
  e.mean_eif = eif(A, Y, nv, e.psi).mean();
  return e;
}

/// Outcome scaling (a, b) used by TMLE for continuous outcomes.
inline std::pair<double, double> tmle_scaling(const Eigen::Ref<const Vector>& Y, const EstimatorConfig& cfg) {
  if (cfg.outcome == OutcomeScale::binary) return {0.0, 1.0};
  if (cfg.scaling) {
    const auto [a, b] = *cfg.scaling;
    if (Y.minCoeff() < a || Y.maxCoeff() > b) throw ValidationError("outcome scaling bounds do not cover the observed range");
    return *cfg.scaling;
  }
  const double lo = Y.minCoeff();
  const double hi = Y.maxCoeff();
  const double pad = hi > lo ? 0.01 * (hi - lo) : 0.5;
  return {lo - pad, hi + pad};
}

/// Targeted maximum likelihood: one logistic fluctuation of the (scaled)
/// initial outcome model along H(A,W) = A/g - (1-A)/(1-g).
inline ATEEstimate estimate_tmle(const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y,
                                 const NuisanceValues& raw, const EstimatorConfig& cfg = {}) {
  detail::check_lengths(A, Y, raw);
  cfg.validate();
  if (cfg.outcome == OutcomeScale::binary) {
    for (Eigen::Index i = 0; i < Y.size(); ++i)
      if (Y(i) != 0.0 && Y(i) != 1.0)
        throw ValidationError("binary TMLE got a non-binary outcome; use the bounded-continuous scale");
  }
  const auto nv = detail::truncated(raw, cfg.bounds);
  const auto [lo, hi] = tmle_scaling(Y, cfg);
  const double range = hi - lo;
  const Eigen::Index n = A.size();

  const Eigen::ArrayXd y = (Y.array() - lo) / range;
  auto scale_q = [&](const Vector& q) {
    return ((q.array() - lo) / range).max(kTmleOutcomeClamp).min(1.0 - kTmleOutcomeClamp).eval();
  };
  const Eigen::ArrayXd q1 = scale_q(nv.q1);
  const Eigen::ArrayXd q0 = scale_q(nv.q0);
  const auto a = A.array();
  const auto g = nv.g.array();
  const Eigen::ArrayXd h1 = 1.0 / g;
  const Eigen::ArrayXd h0 = -1.0 / (1.0 - g);
  const Eigen::ArrayXd h = a * h1 + (1.0 - a) * h0;
  const Eigen::ArrayXd offset = (a * q1 + (1.0 - a) * q0).unaryExpr([](double p) { return logit(p); });

  // Score of the fluctuation log-likelihood; strictly decreasing in eps.
  auto score_info = [&](double eps) {
    double score = 0.0;
    double info = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = expit(offset(i) + eps * h(i));
      score += h(i) * (y(i) - p);
      info += h(i) * h(i) * p * (1.0 - p);
    }
    return std::pair{score, info};
  };

  // Damped Newton: a step is halved until it shrinks |score|.
  double eps = 0.0;
  auto [score, info] = score_info(eps);
  for (int it = 0; it < 500 && std::abs(score) > 1e-13 * static_cast<double>(n); ++it) {
    if (!(info > 0.0) || !std::isfinite(info)) break;
    const double step = score / info;
    double t = 1.0;
    auto next = score_info(eps + step);
    while (!(std::abs(next.first) < std::abs(score)) && t > 1e-14) {
      t *= 0.5;
      next = score_info(eps + t * step);
    }
    if (!(std::abs(next.first) < std::abs(score))) break;
    eps += t * step;
    std::tie(score, info) = next;
  }
  if (!std::isfinite(eps)) throw NumericalError("TMLE fluctuation diverged; consider tighter propensity truncation");

  const Eigen::ArrayXd q1_star =
      (q1.unaryExpr([](double p) { return logit(p); }) + eps * h1).unaryExpr([](double v) { return expit(v); });
  const Eigen::ArrayXd q0_star =
      (q0.unaryExpr([](double p) { return logit(p); }) + eps * h0).unaryExpr([](double v) { return expit(v); });

  ATEEstimate e;
  e.estimator = Estimator::TMLE;
  e.n = n;
  e.epsilon = eps;
  e.psi = (q1_star - q0_star).mean() * range;
  NuisanceValues targeted{nv.g, (q1_star * range + lo).matrix(), (q0_star * range + lo).matrix()};
  e.mean_eif = eif(A, Y, targeted, e.psi).mean();
  e.config = to_json(cfg);
  e.config["scaling"] = {lo, hi};
  if (!std::isfinite(e.mean_eif) || std::abs(e.mean_eif) > kTmleEifTolerance * std::max(1.0, range))
    throw NumericalError("TMLE fluctuation did not solve the EIF equation (mean EIF " + std::to_string(e.mean_eif) +
                         "); consider tighter propensity truncation");
  return e;
}

inline ATEEstimate estimate(Estimator kind, const Eigen::Ref<const Vector>& A, const Eigen::Ref<const Vector>& Y,
                            const NuisanceValues& nv, const EstimatorConfig& cfg = {}) {
  switch (kind) {
    case Estimator::OR: return estimate_or(A, Y, nv, cfg);
    case Estimator::IPW: return estimate_ipw(A, Y, nv, cfg);
    case Estimator::AIPW: return estimate_aipw(A, Y, nv, cfg);
    case Estimator::TMLE: return estimate_tmle(A, Y, nv, cfg);
  }
  throw ValidationError("unknown estimator");
}

inline ATEEstimate estimate(Estimator kind, const Dataset& ds, const NuisanceValues& nv, const EstimatorConfig& cfg = {}) {
  return estimate(kind, ds.treatment(), ds.outcome(), nv, cfg);
}

/// Scale matching the dataset's outcome column kind.
inline OutcomeScale outcome_scale_for(const Dataset& ds) {
  return ds.schema().outcome().kind == ColumnKind::binary ? OutcomeScale::binary : OutcomeScale::bounded_continuous;
}

/// Fit nuisances on `ds` and run the requested estimators on the same rows.
inline std::vector<ATEEstimate> fit_and_estimate(const Dataset& ds, const std::vector<Estimator>& which,
                                                 const NuisanceOptions& nopt, EstimatorConfig cfg) {
  cfg.outcome = outcome_scale_for(ds);
  const auto np = fit_nuisances(ds, nopt);
  const auto nv = evaluate(np, ds.covariates());
  std::vector<ATEEstimate> out;
  for (auto k : which) out.push_back(estimate(k, ds, nv, cfg));
  return out;
}

}  // namespace causynth
