#pragma once

// Pre-analysis simulation engine: a large reference sample, repeated
// finite-sample replications subsampled from it, and per-estimator
// bias / variance / RMSE / MSE tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "causynth/data.hpp"
#include "causynth/dgp.hpp"
#include "causynth/estimators.hpp"
#include "causynth/generate.hpp"
#include "causynth/nuisance.hpp"
#include "causynth/parallel.hpp"
#include "causynth/rng.hpp"

namespace causynth {

enum class Environment { dgp_truth, hybrid };

inline std::string_view to_string(Environment e) { return e == Environment::dgp_truth ? "dgp-truth" : "hybrid"; }

inline Environment parse_environment(std::string_view s) {
  if (s == "dgp-truth") return Environment::dgp_truth;
  if (s == "hybrid") return Environment::hybrid;
  throw ValidationError("unknown environment '" + std::string(s) + "'");
}

enum class ReferenceEstimator { truth_oracle, large_sample_tmle };

inline std::string_view to_string(ReferenceEstimator r) {
  return r == ReferenceEstimator::truth_oracle ? "truth-oracle" : "large-sample-tmle";
}

inline ReferenceEstimator parse_reference_estimator(std::string_view s) {
  if (s == "truth-oracle") return ReferenceEstimator::truth_oracle;
  if (s == "large-sample-tmle" || s == "tmle") return ReferenceEstimator::large_sample_tmle;
  throw ValidationError("unknown reference estimator '" + std::string(s) + "'");
}

/// Where the hybrid environment takes its treatment/outcome mechanisms from.
enum class HybridNuisances { fitted, oracle };

inline std::string_view to_string(HybridNuisances h) { return h == HybridNuisances::fitted ? "fitted" : "oracle"; }

inline HybridNuisances parse_hybrid_nuisances(std::string_view s) {
  if (s == "fitted") return HybridNuisances::fitted;
  if (s == "oracle") return HybridNuisances::oracle;
  throw ValidationError("unknown hybrid nuisance source '" + std::string(s) + "'");
}

struct SimConfig {
  Environment env = Environment::dgp_truth;
  dgp::Regime regime = dgp::Regime::randomized;
  Eigen::Index ref_size = 50'000;
  std::vector<Eigen::Index> rep_sizes{1000};
  int reps = 500;
  std::optional<ReferenceEstimator> reference;  // default: oracle for dgp-truth, TMLE for hybrid
  std::vector<Estimator> estimators{std::begin(kAllEstimators), std::end(kAllEstimators)};
  NuisanceOptions nuisance;
  EstimatorConfig estimator;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::int64_t truth_mc_size = 1'000'000;
  std::uint64_t truth_seed = 20240601;

  // hybrid environment
  Eigen::Index seed_size = 1000;
  std::string seed_path;  // real seed table; benchmark DGP draw when empty
  GeneratorKind generator = GeneratorKind::bootstrap_jitter;
  GeneratorOptions generator_options;
  HybridNuisances hybrid_nuisances = HybridNuisances::fitted;

  ReferenceEstimator resolved_reference() const {
    return reference.value_or(env == Environment::dgp_truth ? ReferenceEstimator::truth_oracle
                                                            : ReferenceEstimator::large_sample_tmle);
  }

  void validate() const {
    if (reps < 2) throw ValidationError("replications must be >= 2");
    if (rep_sizes.empty()) throw ValidationError("at least one replication size is required");
    if (!std::is_sorted(rep_sizes.begin(), rep_sizes.end())) throw ValidationError("replication sizes must be ascending");
    if (rep_sizes.front() < 2) throw ValidationError("replication size must be >= 2");
    if (ref_size < rep_sizes.back()) throw ValidationError("reference size must be >= the largest replication size");
    if (estimators.empty()) throw ValidationError("no estimators selected");
    if (env == Environment::hybrid && seed_path.empty() && seed_size < 2) throw ValidationError("seed size must be >= 2");
    nuisance.bounds.validate();
    estimator.validate();
  }
};

inline nlohmann::json to_json(const SimConfig& c) {
  std::vector<std::string> est;
  for (auto e : c.estimators) est.emplace_back(to_string(e));
  nlohmann::json j{{"env", to_string(c.env)},
                   {"regime", dgp::to_string(c.regime)},
                   {"ref_size", c.ref_size},
                   {"rep_sizes", c.rep_sizes},
                   {"reps", c.reps},
                   {"reference", to_string(c.resolved_reference())},
                   {"estimators", est},
                   {"outcome_features", to_string(c.nuisance.features)},
                   {"lambda", c.nuisance.glm.lambda},
                   {"estimator", to_json(c.estimator)},
                   {"seed", c.seed},
                   {"truth_mc_size", c.truth_mc_size},
                   {"truth_seed", c.truth_seed}};
  if (c.env == Environment::hybrid) {
    j["seed_size"] = c.seed_size;
    j["seed_path"] = c.seed_path;
    j["generator"] = to_string(c.generator);
    j["jitter"] = c.generator_options.jitter;
    j["hybrid_nuisances"] = to_string(c.hybrid_nuisances);
  }
  return j;
}

struct Reference {
  Dataset data;
  double psi = 0.0;
  ReferenceEstimator method = ReferenceEstimator::truth_oracle;
};

/// Reference dataset of `cfg.ref_size` rows and its effect psi_ref.
inline Reference build_reference(const SimConfig& cfg) {
  cfg.validate();
  const auto method = cfg.resolved_reference();
  if (cfg.env == Environment::dgp_truth) {
    Dataset ds = dgp::sample_dataset({cfg.regime, cfg.ref_size, derive_seed(cfg.seed, 1)});
    double psi = 0.0;
    if (method == ReferenceEstimator::truth_oracle) {
      psi = dgp::true_ate(cfg.truth_mc_size, cfg.truth_seed);
    } else {
      auto est = fit_and_estimate(ds, {Estimator::TMLE}, cfg.nuisance, cfg.estimator);
      psi = est.front().psi;
    }
    return {std::move(ds), psi, method};
  }

  const Dataset seed = cfg.seed_path.empty()
                           ? dgp::sample_dataset({cfg.regime, cfg.seed_size, derive_seed(cfg.seed, 0)})
                           : load_table(cfg.seed_path, infer_schema(cfg.seed_path));
  const auto gen = fit_generator(cfg.generator, seed, cfg.generator_options);
  NuisanceFunctions nuis;
  if (cfg.hybrid_nuisances == HybridNuisances::oracle) {
    if (seed.d() != dgp::kCovariates) throw ValidationError("oracle nuisances need the six-covariate benchmark schema");
    nuis = NuisanceFunctions::benchmark_truth(cfg.regime == dgp::Regime::randomized, cfg.nuisance.bounds);
  } else {
    nuis = NuisanceFunctions::from(fit_nuisances(seed, cfg.nuisance));
  }
  Dataset ds = hybrid_generate(gen, nuis, seed.schema(), {OutcomeMode::sample, cfg.ref_size, derive_seed(cfg.seed, 1)});
  double psi = 0.0;
  if (method == ReferenceEstimator::truth_oracle) {
    // Plug-in effect of the generating mechanism over the reference covariates.
    const Matrix W = ds.covariates();
    psi = (nuis.outcome(1.0, W) - nuis.outcome(0.0, W)).mean();
  } else {
    psi = fit_and_estimate(ds, {Estimator::TMLE}, cfg.nuisance, cfg.estimator).front().psi;
  }
  return {std::move(ds), psi, method};
}

struct EstimatorMetrics {
  Estimator estimator = Estimator::OR;
  double bias = 0.0;
  double variance = 0.0;  // population convention (denominator = successful reps)
  double mse = 0.0;
  double rmse = 0.0;
  int successes = 0;
  int failures = 0;
  std::vector<double> estimates;  // replication order; NaN marks a failure
};

struct MetricTable {
  double psi_ref = 0.0;
  Eigen::Index rep_size = 0;
  int reps = 0;
  std::vector<EstimatorMetrics> rows;

  const EstimatorMetrics& at(Estimator e) const {
    for (const auto& r : rows)
      if (r.estimator == e) return r;
    throw ValidationError("estimator " + std::string(to_string(e)) + " not in metric table");
  }
};

/// Summary metrics of one estimator's replicate estimates.
inline EstimatorMetrics summarize(Estimator e, const std::vector<double>& estimates, double psi_ref) {
  EstimatorMetrics m;
  m.estimator = e;
  m.estimates = estimates;
  // Deviations from psi_ref, so an estimator that always returns psi_ref
  // scores exactly zero.
  double sum = 0.0;
  for (double v : estimates) {
    if (std::isnan(v)) {
      ++m.failures;
      continue;
    }
    sum += v - psi_ref;
    ++m.successes;
  }
  if (m.successes == 0) {
    m.bias = m.variance = m.mse = m.rmse = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  m.bias = sum / m.successes;
  double ss = 0.0, se = 0.0;
  for (double v : estimates) {
    if (std::isnan(v)) continue;
    const double d = v - psi_ref;
    ss += (d - m.bias) * (d - m.bias);
    se += d * d;
  }
  m.variance = ss / m.successes;
  m.mse = se / m.successes;
  m.rmse = std::sqrt(m.mse);
  return m;
}

/// Per-replication estimates, one per configured estimator (NaN on failure).
using ReplicationFn = std::function<std::vector<double>(const Dataset&)>;

/// Refit nuisances on the subsample and run every configured estimator.
inline ReplicationFn default_replication(const SimConfig& cfg) {
  return [cfg](const Dataset& ds) {
    std::vector<double> out(cfg.estimators.size(), std::numeric_limits<double>::quiet_NaN());
    NuisanceValues nv;
    try {
      nv = evaluate(fit_nuisances(ds, cfg.nuisance), ds.covariates());
    } catch (const std::exception&) {
      return out;
    }
    EstimatorConfig ec = cfg.estimator;
    ec.outcome = outcome_scale_for(ds);
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      try {
        out[e] = estimate(cfg.estimators[e], ds, nv, ec).psi;
      } catch (const std::exception&) {
      }
    }
    return out;
  };
}

/// Replication r at every size draws a prefix of the same seeded shuffle, so
/// the size grid is evaluated on nested subsamples.
inline std::uint64_t replication_seed(std::uint64_t seed, std::size_t r) { return derive_seed(derive_seed(seed, 2), r); }

inline MetricTable run_replications(const SimConfig& cfg, const Reference& ref, Eigen::Index rep_size,
                                    const ReplicationFn& fn) {
  if (rep_size < 2 || rep_size > ref.data.n())
    throw ValidationError("replication size " + std::to_string(rep_size) + " outside [2, reference size]");
  if (cfg.reps < 2) throw ValidationError("replications must be >= 2");
  std::vector<std::vector<double>> per_rep(static_cast<std::size_t>(cfg.reps));
  parallel_for(per_rep.size(), cfg.jobs, [&](std::size_t r) {
    per_rep[r] = fn(subsample(ref.data, rep_size, replication_seed(cfg.seed, r)));
    if (per_rep[r].size() != cfg.estimators.size()) throw ValidationError("replication returned the wrong estimate count");
  });
  MetricTable t{ref.psi, rep_size, cfg.reps, {}};
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    std::vector<double> est;
    est.reserve(per_rep.size());
    for (const auto& r : per_rep) est.push_back(r[e]);
    t.rows.push_back(summarize(cfg.estimators[e], est, ref.psi));
  }
  return t;
}

inline MetricTable run_replications(const SimConfig& cfg, const Reference& ref) {
  return run_replications(cfg, ref, cfg.rep_sizes.front(), default_replication(cfg));
}

/// One table per configured replication size, all against one reference.
inline std::vector<MetricTable> sweep(const SimConfig& cfg, const Reference& ref) {
  cfg.validate();
  const auto fn = default_replication(cfg);
  std::vector<MetricTable> out;
  for (auto n : cfg.rep_sizes) out.push_back(run_replications(cfg, ref, n, fn));
  return out;
}

inline nlohmann::json to_json(const MetricTable& t, bool with_estimates = true) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json j{{"estimator", to_string(r.estimator)}, {"bias", r.bias},         {"variance", r.variance},
                     {"rmse", r.rmse},                       {"mse", r.mse},           {"successes", r.successes},
                     {"failures", r.failures}};
    if (with_estimates) {
      nlohmann::json est = nlohmann::json::array();
      for (double v : r.estimates) est.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
      j["estimates"] = est;
    }
    rows.push_back(j);
  }
  return {{"psi_ref", t.psi_ref}, {"rep_size", t.rep_size}, {"reps", t.reps}, {"estimators", rows}};
}

inline MetricTable metric_table_from_json(const nlohmann::json& j) {
  MetricTable t;
  t.psi_ref = j.at("psi_ref").get<double>();
  t.rep_size = j.value("rep_size", Eigen::Index{0});
  t.reps = j.value("reps", 0);
  for (const auto& r : j.at("estimators")) {
    EstimatorMetrics m;
    m.estimator = parse_estimator(r.at("estimator").get<std::string>());
    m.bias = r.at("bias").get<double>();
    m.variance = r.at("variance").get<double>();
    m.mse = r.at("mse").get<double>();
    m.rmse = r.value("rmse", std::sqrt(m.mse));
    m.successes = r.value("successes", 0);
    m.failures = r.value("failures", 0);
    if (r.contains("estimates"))
      for (const auto& v : r.at("estimates"))
        m.estimates.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    t.rows.push_back(m);
  }
  if (t.rows.empty()) throw ValidationError("metric table has no estimator rows");
  return t;
}

// --------------------------------------------------------------- fidelity -----

struct FidelityRow {
  Estimator estimator = Estimator::OR;
  bool sign_correct = false;
  EstimatorMetrics real;
  EstimatorMetrics synthetic;
};

struct FidelityReport {
  std::string source;
  std::vector<FidelityRow> rows;
};

/// Zero bias on either side counts as a sign match.
inline bool same_sign(double a, double b) { return a == 0.0 || b == 0.0 || (a > 0.0) == (b > 0.0); }

inline FidelityReport fidelity_compare(const MetricTable& real, const MetricTable& syn, std::string source = "synthetic") {
  if (real.rows.size() != syn.rows.size()) throw ValidationError("metric tables cover different estimator sets");
  FidelityReport rep{std::move(source), {}};
  for (const auto& r : real.rows) {
    const auto it = std::find_if(syn.rows.begin(), syn.rows.end(), [&](const auto& s) { return s.estimator == r.estimator; });
    if (it == syn.rows.end())
      throw ValidationError("metric tables cover different estimator sets (" + std::string(to_string(r.estimator)) +
                            " missing)");
    rep.rows.push_back({r.estimator, same_sign(r.bias, it->bias), r, *it});
  }
  return rep;
}

inline void write_fidelity_csv(std::ostream& out, const FidelityReport& rep) {
  out << "source,estimator,sign_correct,real_bias,syn_bias,real_var,syn_var,real_rmse,syn_rmse,real_mse,syn_mse\n";
  for (const auto& r : rep.rows) {
    out << rep.source << ',' << to_string(r.estimator) << ',' << (r.sign_correct ? "Yes" : "No");
    for (auto [a, b] : {std::pair{r.real.bias, r.synthetic.bias}, std::pair{r.real.variance, r.synthetic.variance},
                        std::pair{r.real.rmse, r.synthetic.rmse}, std::pair{r.real.mse, r.synthetic.mse}})
      out << ',' << format_number(a) << ',' << format_number(b);
    out << '\n';
  }
}

inline void write_metric_csv(std::ostream& out, const std::vector<MetricTable>& tables) {
  out << "rep_size,estimator,bias,variance,rmse,mse,successes,failures,psi_ref\n";
  for (const auto& t : tables)
    for (const auto& r : t.rows)
      out << t.rep_size << ',' << to_string(r.estimator) << ',' << format_number(r.bias) << ','
          << format_number(r.variance) << ',' << format_number(r.rmse) << ',' << format_number(r.mse) << ','
          << r.successes << ',' << r.failures << ',' << format_number(t.psi_ref) << '\n';
}

}  // namespace causynth
