#pragma once

// Covariate generators, hybrid (W from a generator; A, Y from nuisance
// models) synthesis and the fully joint baseline.

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "causynth/data.hpp"
#include "causynth/nuisance.hpp"
#include "causynth/rng.hpp"

namespace causynth {

enum class GeneratorKind { bootstrap_jitter, gaussian_copula, independent_marginals, external_file };

inline std::string_view to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::bootstrap_jitter: return "bootstrap-jitter";
    case GeneratorKind::gaussian_copula: return "gaussian-copula";
    case GeneratorKind::independent_marginals: return "independent-marginals";
    case GeneratorKind::external_file: return "external-file";
  }
  return "?";
}

inline GeneratorKind parse_generator_kind(std::string_view s) {
  if (s == "bootstrap-jitter") return GeneratorKind::bootstrap_jitter;
  if (s == "gaussian-copula") return GeneratorKind::gaussian_copula;
  if (s == "independent-marginals") return GeneratorKind::independent_marginals;
  if (s == "external-file" || s == "file") return GeneratorKind::external_file;
  throw ValidationError("unknown generator kind '" + std::string(s) + "'");
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw ValidationError("normal quantile needs u in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

struct GeneratorOptions {
  double jitter = 0.1;       // bootstrap-jitter noise, in units of each column's sd
  std::string external_path;  // external-file covariates
};

namespace detail {

/// Midranks (1-based) of a column, ties sharing their average rank.
inline Vector midranks(const Eigen::Ref<const Vector>& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x(static_cast<Eigen::Index>(a)) < x(static_cast<Eigen::Index>(b));
  });
  Vector r(x.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x(static_cast<Eigen::Index>(order[j + 1])) == x(static_cast<Eigen::Index>(order[i]))) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(static_cast<Eigen::Index>(order[k])) = mid;
    i = j + 1;
  }
  return r;
}

/// Symmetric matrix -> nearest correlation matrix by eigenvalue clipping
/// followed by unit-diagonal rescaling. Returns true when a repair was needed.
inline bool repair_correlation(Matrix& R, double floor = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(R);
  if (es.eigenvalues().minCoeff() > floor) return false;
  const Vector clipped = es.eigenvalues().cwiseMax(floor);
  Matrix fixed = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  const Vector s = fixed.diagonal().cwiseSqrt().cwiseInverse();
  R = s.asDiagonal() * fixed * s.asDiagonal();
  return true;
}

}  // namespace detail

class CovariateGenerator {
 public:
  GeneratorKind kind() const { return kind_; }
  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const Matrix& correlation() const { return correlation_; }
  bool pd_repaired() const { return pd_repaired_; }
  double jitter() const { return jitter_; }

  /// Fit on a seed covariate (or full) matrix. `columns` names and types
  /// each column of `seed`.
  static CovariateGenerator fit(GeneratorKind kind, const Eigen::Ref<const Matrix>& seed,
                                std::vector<ColumnSpec> columns, const GeneratorOptions& opt = {}) {
    CovariateGenerator g;
    g.kind_ = kind;
    g.columns_ = std::move(columns);
    const auto d = static_cast<Eigen::Index>(g.columns_.size());
    if (kind == GeneratorKind::external_file) {
      if (opt.external_path.empty()) throw ValidationError("external-file generator needs a path");
      g.external_path_ = opt.external_path;
      g.pool_ = load_covariates(opt.external_path, g.columns_);
      return g;
    }
    if (seed.rows() < 1) throw ValidationError("generator needs a nonempty seed matrix");
    if (seed.cols() != d) throw ValidationError("seed matrix width does not match the column list");
    if (opt.jitter < 0.0) throw ValidationError("jitter must be nonnegative");
    g.pool_ = seed;
    g.jitter_ = opt.jitter;
    std::vector<bool> binary;
    for (const auto& c : g.columns_) binary.push_back(c.kind == ColumnKind::binary);
    g.scale_ = fit_standardizer(seed, binary).scale;
    g.sorted_ = seed;
    for (Eigen::Index j = 0; j < d; ++j) std::sort(g.sorted_.col(j).data(), g.sorted_.col(j).data() + seed.rows());

    if (kind == GeneratorKind::gaussian_copula) {
      const auto n = static_cast<double>(seed.rows());
      Matrix z(seed.rows(), d);
      for (Eigen::Index j = 0; j < d; ++j) {
        const Vector r = detail::midranks(seed.col(j));
        for (Eigen::Index i = 0; i < seed.rows(); ++i) z(i, j) = normal_quantile(r(i) / (n + 1.0));
      }
      Matrix R = Matrix::Identity(d, d);
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = a + 1; b < d; ++b) R(a, b) = R(b, a) = causynth::correlation(z.col(a), z.col(b));
      g.pd_repaired_ = detail::repair_correlation(R);
      g.correlation_ = R;
      Eigen::LLT<Matrix> llt(R);
      if (llt.info() != Eigen::Success) throw NumericalError("copula correlation is not positive definite after repair");
      g.chol_ = llt.matrixL();
    }
    return g;
  }

  Matrix sample(Eigen::Index n, std::uint64_t seed) const {
    if (n < 1) throw ValidationError("requested sample size must be >= 1");
    const auto d = static_cast<Eigen::Index>(columns_.size());
    Rng rng(seed);
    Matrix out(n, d);
    switch (kind_) {
      case GeneratorKind::bootstrap_jitter:
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto src = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(pool_.rows())));
          out.row(i) = pool_.row(src);
          if (jitter_ > 0.0)
            for (Eigen::Index j = 0; j < d; ++j)
              if (columns_[static_cast<std::size_t>(j)].kind == ColumnKind::continuous)
                out(i, j) += jitter_ * scale_(j) * rng.normal();
        }
        break;
      case GeneratorKind::independent_marginals:
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < d; ++j)
            out(i, j) = pool_(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(pool_.rows()))), j);
        break;
      case GeneratorKind::gaussian_copula: {
        Vector e(d);
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) e(j) = rng.normal();
          const Vector z = chol_ * e;
          for (Eigen::Index j = 0; j < d; ++j) out(i, j) = marginal_quantile(j, normal_cdf(z(j)));
        }
        break;
      }
      case GeneratorKind::external_file: {
        if (n > pool_.rows())
          throw ValidationError("external covariate file '" + external_path_ + "' has " + std::to_string(pool_.rows()) +
                                " rows, " + std::to_string(n) + " requested");
        const auto idx = sample_without_replacement(pool_.rows(), n, seed);
        for (Eigen::Index i = 0; i < n; ++i) out.row(i) = pool_.row(idx[static_cast<std::size_t>(i)]);
        break;
      }
    }
    return out;
  }

  /// Inverse empirical CDF of column j: step function for binary columns,
  /// linear interpolation between order statistics otherwise.
  double marginal_quantile(Eigen::Index j, double u) const {
    const Eigen::Index n = sorted_.rows();
    if (columns_[static_cast<std::size_t>(j)].kind == ColumnKind::binary) {
      const auto k = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(std::floor(u * static_cast<double>(n))));
      return sorted_(k, j);
    }
    const double pos = u * static_cast<double>(n - 1);
    const auto lo = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(std::floor(pos)));
    const auto hi = std::min<Eigen::Index>(n - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_(lo, j) + frac * (sorted_(hi, j) - sorted_(lo, j));
  }

  nlohmann::json describe() const {
    nlohmann::json j{{"kind", to_string(kind_)}, {"pool_rows", pool_.rows()}};
    if (kind_ == GeneratorKind::bootstrap_jitter) j["jitter"] = jitter_;
    if (kind_ == GeneratorKind::gaussian_copula) j["pd_repaired"] = pd_repaired_;
    if (kind_ == GeneratorKind::external_file) j["path"] = external_path_;
    return j;
  }

 private:
  GeneratorKind kind_ = GeneratorKind::bootstrap_jitter;
  std::vector<ColumnSpec> columns_;
  Matrix pool_;
  Matrix sorted_;
  Vector scale_;
  double jitter_ = 0.0;
  Matrix correlation_;
  Matrix chol_;
  bool pd_repaired_ = false;
  std::string external_path_;
};

inline CovariateGenerator fit_generator(GeneratorKind kind, const Dataset& seed, const GeneratorOptions& opt = {}) {
  return CovariateGenerator::fit(kind, seed.covariates(), seed.schema().covariates(), opt);
}

// ----------------------------------------------------------------- hybrid -----

enum class OutcomeMode { sample, expected };

inline std::string_view to_string(OutcomeMode m) { return m == OutcomeMode::sample ? "sample" : "expected"; }

inline OutcomeMode parse_outcome_mode(std::string_view s) {
  if (s == "sample") return OutcomeMode::sample;
  if (s == "expected") return OutcomeMode::expected;
  throw ValidationError("unknown outcome mode '" + std::string(s) + "'");
}

struct HybridConfig {
  OutcomeMode outcome_mode = OutcomeMode::sample;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
};

/// W from the generator, A ~ Bernoulli(truncated g(1|W)), Y from Q(A, W).
/// `schema` is the seed data's schema; with OutcomeMode::expected the outcome
/// column is re-typed continuous.
inline Dataset hybrid_generate(const CovariateGenerator& gen, const NuisanceFunctions& nuis, const Schema& schema,
                               const HybridConfig& cfg) {
  if (cfg.n < 1) throw ValidationError("hybrid generation needs n >= 1");
  if (gen.columns() != schema.covariates())
    throw ValidationError("schema mismatch: generator covariates differ from the seed schema");
  if (nuis.covariates != 0 && nuis.covariates != static_cast<Eigen::Index>(schema.covariate_count()))
    throw ValidationError("schema mismatch: nuisance models expect a different covariate count");

  const Matrix W = gen.sample(cfg.n, derive_seed(cfg.seed, 1));
  const Vector g = nuis.propensity_truncated(W);
  Rng rng(derive_seed(cfg.seed, 2));
  Vector A(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) A(i) = rng.bernoulli(g(i)) ? 1.0 : 0.0;
  const Vector q1 = nuis.outcome(1.0, W);
  const Vector q0 = nuis.outcome(0.0, W);
  const Vector q = (A.array() * q1.array() + (1.0 - A.array()) * q0.array()).matrix();

  Vector Y(cfg.n);
  Schema out_schema = schema;
  if (cfg.outcome_mode == OutcomeMode::expected) {
    Y = q;
    out_schema = schema.with_outcome_kind(ColumnKind::continuous);
  } else if (nuis.outcome_family == Family::logistic) {
    for (Eigen::Index i = 0; i < cfg.n; ++i) Y(i) = rng.bernoulli(q(i)) ? 1.0 : 0.0;
    out_schema = schema.with_outcome_kind(ColumnKind::binary);
  } else {
    for (Eigen::Index i = 0; i < cfg.n; ++i) Y(i) = q(i) + nuis.residual_sd * rng.normal();
  }
  return Dataset::make(std::move(out_schema), W, A, Y);
}

// ------------------------------------------------------------- full joint -----

enum class FullKind { independent_marginals_joint, gaussian_copula_joint };

inline std::string_view to_string(FullKind k) {
  return k == FullKind::independent_marginals_joint ? "independent-marginals-joint" : "gaussian-copula-joint";
}

inline FullKind parse_full_kind(std::string_view s) {
  if (s == "independent-marginals-joint" || s == "independent-marginals") return FullKind::independent_marginals_joint;
  if (s == "gaussian-copula-joint" || s == "gaussian-copula") return FullKind::gaussian_copula_joint;
  throw ValidationError("unknown full-joint generator '" + std::string(s) + "'");
}

/// All d+2 columns synthesized by one generator ("Syn Full" baseline).
inline Dataset full_generate(FullKind kind, const Dataset& seed_ds, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("full generation needs n >= 1");
  const auto& schema = seed_ds.schema();
  Matrix out;
  if (kind == FullKind::independent_marginals_joint) {
    auto gen = CovariateGenerator::fit(GeneratorKind::independent_marginals, seed_ds.values(), schema.columns());
    out = gen.sample(n, seed);
  } else {
    // Every column is inverted as continuous, then binary columns are
    // thresholded at 0.5.
    auto cols = schema.columns();
    for (auto& c : cols) c.kind = ColumnKind::continuous;
    auto gen = CovariateGenerator::fit(GeneratorKind::gaussian_copula, seed_ds.values(), cols);
    out = gen.sample(n, seed);
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      if (schema.columns()[static_cast<std::size_t>(j)].kind == ColumnKind::binary)
        out.col(j) = (out.col(j).array() >= 0.5).cast<double>().matrix();
  }
  return Dataset::make(schema, std::move(out));
}

}  // namespace causynth
