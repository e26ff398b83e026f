#pragma once

// Practical-positivity repair: flag units with extreme estimated propensity,
// pair each with nearby synthetic covariates carrying the rare treatment,
// and measure estimator MSE over a grid of augmentation scenarios.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
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

// ------------------------------------------------------------ detection -----

inline double extreme_threshold(Eigen::Index n) {
  if (n < 8) throw ValidationError("extreme-propensity threshold needs n >= 8, got " + std::to_string(n));
  const auto x = static_cast<double>(n);
  return 1.0 / (std::sqrt(x) * std::log(x));
}

enum class TailMode { lower, both };

inline std::string_view to_string(TailMode m) { return m == TailMode::lower ? "lower" : "both"; }

inline TailMode parse_tail_mode(std::string_view s) {
  if (s == "lower") return TailMode::lower;
  if (s == "both") return TailMode::both;
  throw ValidationError("unknown tail mode '" + std::string(s) + "'");
}

struct ExtremeSet {
  double threshold = 0.0;
  TailMode mode = TailMode::both;
  std::vector<Eigen::Index> flagged;
  std::vector<double> propensity;  // untruncated g-hat of each flagged unit
};

/// Flag units whose untruncated propensity falls below t (and, in both
/// mode, whose 1 - g falls below t).
inline ExtremeSet detect_extreme(const Eigen::Ref<const Vector>& g_hat, TailMode mode, double t) {
  if (!(t > 0.0 && t < 0.5)) throw ValidationError("extreme threshold must lie in (0, 0.5)");
  ExtremeSet s{t, mode, {}, {}};
  for (Eigen::Index i = 0; i < g_hat.size(); ++i) {
    const double g = g_hat(i);
    if (g < t || (mode == TailMode::both && 1.0 - g < t)) {
      s.flagged.push_back(i);
      s.propensity.push_back(g);
    }
  }
  return s;
}

inline ExtremeSet detect_extreme(const Dataset& ds, const NuisancePair& np, TailMode mode = TailMode::both) {
  return detect_extreme(np.propensity_raw(ds.covariates()), mode, extreme_threshold(ds.n()));
}

// -------------------------------------------------------------- pairing -----

struct SyntheticPair {
  Eigen::Index real_index = 0;
  Eigen::Index pool_index = 0;
  double treatment = 0.0;
  double outcome = std::numeric_limits<double>::quiet_NaN();  // set by assign_outcomes
  double distance = 0.0;
};

struct PairingPlan {
  std::vector<SyntheticPair> pairs;
  Matrix W;  // synthetic covariates, one row per pair
  int k = 1;
  bool exhausted = false;
  std::string warning;
};

/// Greedy k-nearest pairing without replacement, flagged units in index
/// order. Ties go to the lower pool index.
inline PairingPlan pair_synthetic(const ExtremeSet& extreme, const Dataset& real, const Eigen::Ref<const Matrix>& syn_W,
                                  int k, const Standardizer& std_) {
  if (k < 1) throw ValidationError("pairing needs k >= 1");
  if (syn_W.rows() == 0) throw ValidationError("synthetic covariate pool is empty");
  if (syn_W.cols() != real.d()) throw ValidationError("schema mismatch: synthetic pool width differs from covariates");
  PairingPlan plan;
  plan.k = k;
  if (extreme.flagged.empty()) {
    plan.W.resize(0, real.d());
    return plan;
  }
  const Matrix pool = std_.apply(syn_W);
  const Matrix reals = std_.apply(real.covariates());
  std::vector<bool> used(static_cast<std::size_t>(pool.rows()), false);
  Eigen::Index available = pool.rows();

  for (std::size_t f = 0; f < extreme.flagged.size(); ++f) {
    const Eigen::Index i = extreme.flagged[f];
    if (i < 0 || i >= real.n()) throw ValidationError("flagged index out of range");
    const double treatment = extreme.propensity[f] < extreme.threshold ? 1.0 : 0.0;
    for (int r = 0; r < k; ++r) {
      if (available == 0) {
        plan.exhausted = true;
        break;
      }
      Eigen::Index best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index p = 0; p < pool.rows(); ++p) {
        if (used[static_cast<std::size_t>(p)]) continue;
        const double d = (pool.row(p) - reals.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = p;
        }
      }
      used[static_cast<std::size_t>(best)] = true;
      --available;
      plan.pairs.push_back({i, best, treatment, std::numeric_limits<double>::quiet_NaN(), std::sqrt(best_d)});
    }
  }
  if (plan.exhausted)
    plan.warning = "synthetic pool exhausted: " + std::to_string(plan.pairs.size()) + " of " +
                   std::to_string(extreme.flagged.size() * static_cast<std::size_t>(k)) + " pairs formed";
  plan.W.resize(static_cast<Eigen::Index>(plan.pairs.size()), syn_W.cols());
  for (std::size_t p = 0; p < plan.pairs.size(); ++p) plan.W.row(static_cast<Eigen::Index>(p)) = syn_W.row(plan.pairs[p].pool_index);
  return plan;
}

// ------------------------------------------------------------- outcomes -----

enum class OutcomeSourceKind { oracle, seed_fit, external_file };

inline std::string_view to_string(OutcomeSourceKind k) {
  switch (k) {
    case OutcomeSourceKind::oracle: return "oracle";
    case OutcomeSourceKind::seed_fit: return "seed-fit";
    case OutcomeSourceKind::external_file: return "external-file";
  }
  return "?";
}

inline OutcomeSourceKind parse_outcome_source(std::string_view s) {
  if (s == "oracle") return OutcomeSourceKind::oracle;
  if (s == "seed-fit") return OutcomeSourceKind::seed_fit;
  if (s == "external-file") return OutcomeSourceKind::external_file;
  throw ValidationError("unknown outcome source '" + std::string(s) + "'");
}

struct OutcomeSource {
  OutcomeSourceKind kind = OutcomeSourceKind::oracle;
  std::function<Vector(double, const Matrix&)> probability;  // oracle / seed-fit
  std::string path;                                           // external-file: columns pair,outcome

  static OutcomeSource oracle(std::function<Vector(double, const Matrix&)> q) {
    return {OutcomeSourceKind::oracle, std::move(q), {}};
  }

  /// Q-hat trained on the seed rows only.
  static OutcomeSource seed_fit(const Dataset& seed, const NuisanceOptions& opt = {}) {
    auto np = std::make_shared<const NuisancePair>(fit_nuisances(seed, opt));
    return {OutcomeSourceKind::seed_fit, [np](double a, const Matrix& W) { return np->outcome_at(a, W); }, {}};
  }

  static OutcomeSource external(std::string path) { return {OutcomeSourceKind::external_file, {}, std::move(path)}; }
};

struct AugmentedRows {
  Dataset rows;
  Eigen::Index flipped = 0;
};

namespace detail {

inline Vector external_outcomes(const std::string& path, std::size_t pairs) {
  const auto raw = read_raw_csv(path);
  check_header(raw.header, {"pair", "outcome"}, path);
  std::vector<double> y(pairs, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const double p = raw.rows[r][0];
    const double v = raw.rows[r][1];
    if (p < 0 || p != std::floor(p) || p >= static_cast<double>(pairs)) continue;
    if (v != 0.0 && v != 1.0) throw ValidationError(path + ": outcome in row " + std::to_string(r + 1) + " is not 0/1");
    y[static_cast<std::size_t>(p)] = v;
  }
  Vector out(static_cast<Eigen::Index>(pairs));
  for (std::size_t p = 0; p < pairs; ++p) {
    if (std::isnan(y[p])) throw ValidationError(path + ": missing outcome for pair " + std::to_string(p));
    out(static_cast<Eigen::Index>(p)) = y[p];
  }
  return out;
}

}  // namespace detail

/// Draw binary outcomes for every pair, then flip each with probability rho.
/// Draws and flip decisions use separate streams, so for a fixed seed the
/// flipped sets are nested in rho and rho = 0 reproduces the source draws.
inline AugmentedRows assign_outcomes(PairingPlan& plan, const OutcomeSource& source, double rho, std::uint64_t seed,
                                     const Schema& schema) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("flip rate must lie in [0, 1]");
  if (schema.outcome().kind != ColumnKind::binary) throw ValidationError("pair augmentation needs a binary outcome");
  const auto m = static_cast<Eigen::Index>(plan.pairs.size());
  Vector A(m), Y(m);
  for (Eigen::Index i = 0; i < m; ++i) A(i) = plan.pairs[static_cast<std::size_t>(i)].treatment;

  if (source.kind == OutcomeSourceKind::external_file) {
    if (m > 0) Y = detail::external_outcomes(source.path, plan.pairs.size());
  } else if (m > 0) {
    if (!source.probability) throw ValidationError("outcome source has no probability function");
    const Vector q1 = source.probability(1.0, plan.W);
    const Vector q0 = source.probability(0.0, plan.W);
    Rng draw(derive_seed(seed, 1));
    for (Eigen::Index i = 0; i < m; ++i) Y(i) = draw.uniform() < (A(i) == 1.0 ? q1(i) : q0(i)) ? 1.0 : 0.0;
  }
  Rng flip(derive_seed(seed, 2));
  Eigen::Index flipped = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (flip.uniform() < rho) {
      Y(i) = 1.0 - Y(i);
      ++flipped;
    }
    plan.pairs[static_cast<std::size_t>(i)].outcome = Y(i);
  }
  if (m == 0) return {Dataset{}, 0};
  return {Dataset::make(schema, plan.W, A, Y), flipped};
}

/// Real rows followed by the augmented rows; the real dataset itself when
/// nothing was added.
inline Dataset augment(const Dataset& real, const AugmentedRows& extra) {
  if (extra.rows.n() == 0) return real;
  return real.append(extra.rows);
}

inline nlohmann::json to_json(const PairingPlan& plan) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : plan.pairs)
    pairs.push_back({{"real_index", p.real_index},
                     {"pool_index", p.pool_index},
                     {"treatment", p.treatment},
                     {"outcome", std::isnan(p.outcome) ? nlohmann::json() : nlohmann::json(p.outcome)},
                     {"distance", p.distance}});
  return {{"k", plan.k}, {"exhausted", plan.exhausted}, {"warning", plan.warning}, {"pairs", pairs}};
}

// ----------------------------------------------------------- experiment -----

struct Scenario {
  std::string name;
  bool augment = false;
  GeneratorKind generator = GeneratorKind::bootstrap_jitter;
  OutcomeSourceKind source = OutcomeSourceKind::oracle;
  double flip = 0.0;
};

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j{{"name", s.name}, {"augment", s.augment}};
  if (s.augment) {
    j["generator"] = to_string(s.generator);
    j["source"] = to_string(s.source);
    j["flip"] = s.flip;
  }
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.name = j.at("name").get<std::string>();
  s.augment = j.value("augment", false);
  if (s.augment) {
    s.generator = parse_generator_kind(j.value("generator", std::string("bootstrap-jitter")));
    s.source = parse_outcome_source(j.value("source", std::string("oracle")));
    s.flip = j.value("flip", 0.0);
    if (!(s.flip >= 0.0 && s.flip <= 1.0)) throw ValidationError("scenario '" + s.name + "': flip must lie in [0, 1]");
  }
  return s;
}

/// Original data plus, for each built-in generator, Pair Hybrid (oracle
/// outcomes), Pair Self-Supervised (seed-fit outcomes) and oracle outcomes
/// flipped at 5%, 10% and 20%.
inline std::vector<Scenario> default_scenarios() {
  std::vector<Scenario> grid{{"Original", false, {}, {}, 0.0}};
  for (auto [gen, label] : {std::pair{GeneratorKind::bootstrap_jitter, "Jitter"},
                            std::pair{GeneratorKind::gaussian_copula, "Copula"}}) {
    const std::string l = label;
    grid.push_back({"Pair Hybrid " + l, true, gen, OutcomeSourceKind::oracle, 0.0});
    grid.push_back({"Pair Self-Supervised " + l, true, gen, OutcomeSourceKind::seed_fit, 0.0});
    for (int pct : {5, 10, 20})
      grid.push_back({"Pair Hybrid " + l + " Flip " + std::to_string(pct) + "%", true, gen, OutcomeSourceKind::oracle,
                      pct / 100.0});
  }
  return grid;
}

struct PositivityConfig {
  Eigen::Index n = 200;
  int reps = 100;
  std::uint64_t seed = 0;
  TailMode mode = TailMode::both;
  int k = 1;
  Eigen::Index pool_size = 2000;
  GeneratorOptions generator;
  NuisanceOptions nuisance;
  EstimatorConfig estimator{IpwFlavor::hajek, {}, OutcomeScale::binary, std::nullopt};
  std::int64_t truth_mc_size = 1'000'000;
  std::uint64_t truth_seed = 20240601;
  unsigned jobs = 1;

  void validate() const {
    if (reps < 1) throw ValidationError("positivity experiment needs reps >= 1");
    if (k < 1) throw ValidationError("pairing needs k >= 1");
    if (pool_size < 1) throw ValidationError("synthetic pool size must be >= 1");
    extreme_threshold(n);
    estimator.validate();
    nuisance.bounds.validate();
  }
};

inline nlohmann::json to_json(const PositivityConfig& c) {
  return {{"n", c.n},
          {"reps", c.reps},
          {"seed", c.seed},
          {"tail_mode", to_string(c.mode)},
          {"k", c.k},
          {"pool_size", c.pool_size},
          {"jitter", c.generator.jitter},
          {"outcome_features", to_string(c.nuisance.features)},
          {"lambda", c.nuisance.glm.lambda},
          {"estimator", to_json(c.estimator)},
          {"truth_mc_size", c.truth_mc_size},
          {"truth_seed", c.truth_seed}};
}

struct PositivityTable {
  std::vector<std::string> scenarios;
  std::vector<Estimator> estimators;
  double truth = 0.0;
  int reps = 0;
  // [scenario][estimator]
  std::vector<std::vector<double>> mse;
  std::vector<std::vector<double>> bias;
  std::vector<std::vector<int>> failures;
  std::vector<double> mean_flagged;  // per scenario, mean augmented rows per rep
};

namespace detail {

struct RepOutcome {
  // [scenario][estimator]; NaN marks a failed estimate
  std::vector<std::vector<double>> psi;
  std::vector<double> added;
};

inline RepOutcome positivity_rep(const std::vector<Scenario>& grid, const PositivityConfig& cfg, std::uint64_t rep_seed) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  RepOutcome out;
  out.psi.assign(grid.size(), std::vector<double>(std::size(kAllEstimators), nan));
  out.added.assign(grid.size(), 0.0);

  const Dataset seed = dgp::sample_dataset({dgp::Regime::observational, cfg.n, derive_seed(rep_seed, 0)});
  auto run = [&](std::size_t s, const Dataset& ds) {
    NuisanceValues nv;
    try {
      nv = evaluate(fit_nuisances(ds, cfg.nuisance), ds.covariates());
    } catch (const std::exception&) {
      return;
    }
    for (std::size_t e = 0; e < std::size(kAllEstimators); ++e) {
      try {
        out.psi[s][e] = estimate(kAllEstimators[e], ds, nv, cfg.estimator).psi;
      } catch (const std::exception&) {
      }
    }
  };

  std::optional<NuisancePair> seed_np;
  try {
    seed_np = fit_nuisances(seed, cfg.nuisance);
  } catch (const std::exception&) {
  }
  std::optional<ExtremeSet> extreme;
  if (seed_np) extreme = detect_extreme(seed, *seed_np, cfg.mode);
  const Standardizer std_ = fit_standardizer(seed);

  for (std::size_t s = 0; s < grid.size(); ++s) {
    const auto& sc = grid[s];
    if (!sc.augment) {
      run(s, seed);
      continue;
    }
    if (!extreme) continue;
    // Pool and outcome draws depend on the generator and source only, so the
    // flip scenarios share draws with their unflipped counterpart.
    const auto gen_stream = static_cast<std::uint64_t>(sc.generator);
    const auto src_stream = static_cast<std::uint64_t>(sc.source);
    try {
      const auto gen = fit_generator(sc.generator, seed, cfg.generator);
      const Matrix pool = gen.sample(cfg.pool_size, derive_seed(rep_seed, 10 + gen_stream));
      auto plan = pair_synthetic(*extreme, seed, pool, cfg.k, std_);
      const OutcomeSource source = sc.source == OutcomeSourceKind::oracle
                                       ? OutcomeSource::oracle(dgp::TruthOracle::outcome)
                                       : OutcomeSource::seed_fit(seed, cfg.nuisance);
      const auto extra = assign_outcomes(plan, source, sc.flip, derive_seed(rep_seed, 100 + 10 * gen_stream + src_stream),
                                         seed.schema());
      out.added[s] = static_cast<double>(extra.rows.n());
      run(s, augment(seed, extra));
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
    }
  }
  return out;
}

}  // namespace detail

/// MSE of each estimator against the true ATE over `cfg.reps` fresh
/// observational seeds. Failed estimates are excluded and counted.
inline PositivityTable run_positivity_experiment(const std::vector<Scenario>& grid, const PositivityConfig& cfg) {
  cfg.validate();
  if (grid.empty()) throw ValidationError("scenario grid is empty");
  for (const auto& s : grid) {
    if (s.augment && s.source == OutcomeSourceKind::external_file)
      throw ValidationError("scenario '" + s.name + "': external-file outcomes are not supported in replicated runs");
    if (s.augment && s.generator == GeneratorKind::external_file && cfg.generator.external_path.empty())
      throw ValidationError("scenario '" + s.name + "': external-file generator needs a covariate path");
  }

  PositivityTable t;
  for (const auto& s : grid) t.scenarios.push_back(s.name);
  t.estimators.assign(std::begin(kAllEstimators), std::end(kAllEstimators));
  t.truth = dgp::true_ate(cfg.truth_mc_size, cfg.truth_seed);
  t.reps = cfg.reps;

  std::vector<detail::RepOutcome> reps(static_cast<std::size_t>(cfg.reps));
  parallel_for(reps.size(), cfg.jobs,
               [&](std::size_t r) { reps[r] = detail::positivity_rep(grid, cfg, derive_seed(cfg.seed, r)); });

  const std::size_t E = t.estimators.size();
  t.mse.assign(grid.size(), std::vector<double>(E, 0.0));
  t.bias.assign(grid.size(), std::vector<double>(E, 0.0));
  t.failures.assign(grid.size(), std::vector<int>(E, 0));
  t.mean_flagged.assign(grid.size(), 0.0);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    for (std::size_t e = 0; e < E; ++e) {
      double se = 0.0, sb = 0.0;
      int ok = 0;
      for (const auto& r : reps) {
        const double psi = r.psi[s][e];
        if (std::isnan(psi)) {
          ++t.failures[s][e];
          continue;
        }
        se += (psi - t.truth) * (psi - t.truth);
        sb += psi - t.truth;
        ++ok;
      }
      t.mse[s][e] = ok ? se / ok : std::numeric_limits<double>::quiet_NaN();
      t.bias[s][e] = ok ? sb / ok : std::numeric_limits<double>::quiet_NaN();
    }
    for (const auto& r : reps) t.mean_flagged[s] += r.added[s] / cfg.reps;
  }
  return t;
}

/// Table 1 layout: scenario, then one MSE column per estimator.
inline void write_positivity_csv(std::ostream& out, const PositivityTable& t) {
  out << "scenario";
  for (auto e : t.estimators) out << ',' << to_string(e);
  out << '\n';
  for (std::size_t s = 0; s < t.scenarios.size(); ++s) {
    out << t.scenarios[s];
    for (std::size_t e = 0; e < t.estimators.size(); ++e) out << ',' << format_number(t.mse[s][e]);
    out << '\n';
  }
}

inline nlohmann::json to_json(const PositivityTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t s = 0; s < t.scenarios.size(); ++s) {
    nlohmann::json r{{"scenario", t.scenarios[s]}, {"augmented_rows_mean", t.mean_flagged[s]}};
    for (std::size_t e = 0; e < t.estimators.size(); ++e) {
      const std::string name(to_string(t.estimators[e]));
      r["mse"][name] = t.mse[s][e];
      r["bias"][name] = t.bias[s][e];
      r["failures"][name] = t.failures[s][e];
    }
    rows.push_back(r);
  }
  return {{"truth", t.truth}, {"reps", t.reps}, {"rows", rows}};
}

}  // namespace causynth
