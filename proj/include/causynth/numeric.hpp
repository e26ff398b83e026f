#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace causynth {

inline double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline Eigen::VectorXd expit(const Eigen::VectorXd& x) { return x.unaryExpr([](double v) { return expit(v); }); }

inline Eigen::VectorXd logit(const Eigen::VectorXd& p) { return p.unaryExpr([](double v) { return logit(v); }); }

inline Eigen::VectorXd clamp(const Eigen::VectorXd& p, double lo, double hi) {
  return p.unaryExpr([lo, hi](double v) { return std::clamp(v, lo, hi); });
}

/// Population variance (denominator n).
inline double population_variance(const Eigen::VectorXd& x) {
  if (x.size() == 0) return 0.0;
  return (x.array() - x.mean()).square().mean();
}

/// Sample variance (denominator n-1).
inline double sample_variance(const Eigen::VectorXd& x) {
  if (x.size() < 2) return 0.0;
  return (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
}

inline double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto xc = (x.array() - x.mean());
  const auto yc = (y.array() - y.mean());
  const double den = std::sqrt(xc.square().sum() * yc.square().sum());
  return den > 0.0 ? (xc * yc).sum() / den : 0.0;
}

}  // namespace causynth
