#pragma once

// Command-line front end. `run_cli` parses arguments, runs one workflow and
// maps failures to exit codes (2 validation, 3 numerical) with a JSON error
// record on the error stream.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "causynth/data.hpp"
#include "causynth/dgp.hpp"
#include "causynth/diagnostics.hpp"
#include "causynth/estimators.hpp"
#include "causynth/generate.hpp"
#include "causynth/positivity.hpp"
#include "causynth/simengine.hpp"
#include "causynth/theory.hpp"

namespace causynth::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "CAUSYNTH_OUT_DIR";

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

/// Option values after config-file merge and flag overrides.
inline nlohmann::json resolved_options(const CLI::App& app) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "config" || names.front() == "version") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    j[names.front()] = value;
  }
  return j;
}

inline std::filesystem::path default_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return ".";
}

inline std::filesystem::path resolve_out(const std::string& out, const std::filesystem::path& dir,
                                         const std::string& default_name) {
  std::filesystem::path p = out.empty() ? dir / default_name : std::filesystem::path(out);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + p.string() + "'");
  return f;
}

inline std::vector<double> parse_pair(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (auto f : causynth::detail::split_commas(s)) v.push_back(causynth::detail::parse_number(causynth::detail::trim(f), 0, what));
  if (v.size() != 2) throw ValidationError(what + " expects two comma-separated numbers");
  return v;
}

}  // namespace detail

struct Context {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out_dir;
  std::string config_path;
};

struct Artifacts {
  nlohmann::json meta;
  std::ostream& out;
  std::ostream& err;

  /// Sidecar `<artifact>.meta.json` with the resolved run configuration.
  void sidecar(const std::filesystem::path& artifact, nlohmann::json extra = {}) const {
    nlohmann::json m = meta;
    m["artifact"] = artifact.filename().string();
    if (!extra.is_null()) m["details"] = std::move(extra);
    auto f = detail::open_out(artifact.string() + ".meta.json");
    f << m.dump(2) << '\n';
  }
};

namespace detail {

inline Dataset load_dataset(const std::string& path, const std::string& schema_path) {
  if (path.empty()) throw ValidationError("input table path is required");
  if (schema_path.empty()) return load_table(path, infer_schema(path));
  std::ifstream f(schema_path);
  if (!f) throw ValidationError("cannot open schema '" + schema_path + "'");
  return load_table(path, schema_from_json(nlohmann::json::parse(f)));
}

struct ModelFlags {
  std::string features = "main-effects";
  double lambda = 1e-4;
  double trunc_lo = 0.01;
  double trunc_hi = 0.99;
  std::string ipw = "horvitz-thompson";

  void add(CLI::App* sub, bool with_ipw = true) {
    sub->add_option("--features", features, "outcome-model features: main-effects|interactions")->capture_default_str();
    sub->add_option("--lambda", lambda, "ridge penalty on non-intercept coefficients")->capture_default_str();
    sub->add_option("--trunc-lo", trunc_lo, "lower propensity truncation bound")->capture_default_str();
    sub->add_option("--trunc-hi", trunc_hi, "upper propensity truncation bound")->capture_default_str();
    if (with_ipw) sub->add_option("--ipw", ipw, "IPW flavor: horvitz-thompson|hajek")->capture_default_str();
  }

  NuisanceOptions nuisance() const {
    NuisanceOptions o;
    o.features = parse_outcome_features(features);
    o.glm.lambda = lambda;
    o.bounds = {trunc_lo, trunc_hi};
    o.bounds.validate();
    return o;
  }

  EstimatorConfig estimator() const {
    EstimatorConfig c;
    c.ipw_flavor = parse_ipw_flavor(ipw);
    c.bounds = {trunc_lo, trunc_hi};
    c.validate();
    return c;
  }
};

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Causal synthetic-data workbench", "causynth"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx;
  app.set_config("--config", "", "TOML config file; [command] sections mirror the flags");
  app.add_option("--seed", ctx.seed, "global seed")->capture_default_str();
  app.add_option("--jobs", ctx.jobs, "worker threads for replication loops (0 = all cores)")->capture_default_str();
  app.add_option("--out-dir", ctx.out_dir, std::string("default output directory (env ") + kOutDirEnv + ")");

  std::map<std::string, std::function<void(const Artifacts&)>> handlers;

  // ---- dgp-sample
  auto* dgp_sample = app.add_subcommand("dgp-sample", "draw a benchmark dataset");
  std::string regime = "randomized", ds_out;
  Eigen::Index ds_n = 1000;
  dgp_sample->add_option("--regime", regime, "randomized|observational")->capture_default_str();
  dgp_sample->add_option("--n", ds_n, "rows")->capture_default_str();
  dgp_sample->add_option("--out", ds_out, "output CSV");
  handlers["dgp-sample"] = [&](const Artifacts& a) {
    const auto ds = dgp::sample_dataset({dgp::parse_regime(regime), ds_n, ctx.seed});
    const auto path = detail::resolve_out(ds_out, detail::default_out_dir(ctx.out_dir), "dgp_sample.csv");
    write_table(path.string(), ds);
    a.sidecar(path, {{"schema", to_json(ds.schema())}});
  };

  // ---- dgp-truth
  auto* dgp_truth = app.add_subcommand("dgp-truth", "Monte Carlo true ATE of the benchmark");
  std::int64_t mc_size = 1'000'000;
  std::string truth_out;
  dgp_truth->add_option("--mc-size", mc_size, "Monte Carlo draws")->capture_default_str();
  dgp_truth->add_option("--out", truth_out, "optional JSON record");
  handlers["dgp-truth"] = [&](const Artifacts& a) {
    const double psi = dgp::true_ate(mc_size, ctx.seed);
    a.out << format_number(psi) << '\n';
    if (!truth_out.empty()) {
      const auto path = detail::resolve_out(truth_out, {}, "");
      auto f = detail::open_out(path);
      f << nlohmann::json{{"psi", psi}, {"mc_size", mc_size}, {"seed", ctx.seed}, {"meta", a.meta}}.dump(2) << '\n';
    }
  };

  // ---- generate
  auto* gen = app.add_subcommand("generate", "hybrid or fully-joint synthetic data");
  std::string gen_mode = "hybrid", gen_kind = "gaussian-copula", seed_data, schema_path, gen_out, outcome_mode = "sample",
              nuis_out;
  Eigen::Index gen_n = -1;
  double jitter = 0.1;
  bool covariates_only = false;
  detail::ModelFlags gen_model;
  gen->add_option("--mode", gen_mode, "hybrid|full")->capture_default_str();
  gen->add_option("--generator", gen_kind,
                  "bootstrap-jitter|gaussian-copula|independent-marginals, or a CSV path for external rows")
      ->capture_default_str();
  gen->add_option("--seed-data", seed_data, "seed table (exchange CSV)")->required();
  gen->add_option("--schema", schema_path, "schema JSON (default: inferred from the seed table)");
  gen->add_option("--n", gen_n, "rows to generate")->required();
  gen->add_option("--outcome-mode", outcome_mode, "sample|expected")->capture_default_str();
  gen->add_option("--jitter", jitter, "bootstrap-jitter noise, in column-scale units")->capture_default_str();
  gen->add_flag("--covariates-only", covariates_only, "write the covariate columns only (hybrid mode)");
  gen->add_option("--nuisances-out", nuis_out, "write the fitted nuisance models as JSON");
  gen->add_option("--out", gen_out, "output CSV");
  gen_model.add(gen, false);
  handlers["generate"] = [&](const Artifacts& a) {
    if (gen_n < 1) throw ValidationError("--n must be >= 1, got " + std::to_string(gen_n));
    const Dataset seed = detail::load_dataset(seed_data, schema_path);
    const auto path = detail::resolve_out(gen_out, detail::default_out_dir(ctx.out_dir), "synthetic.csv");
    const bool external = std::filesystem::exists(gen_kind);
    nlohmann::json details;
    Dataset result;
    if (gen_mode == "full") {
      if (external) {
        const Dataset pool = load_table(gen_kind, seed.schema());
        result = subsample(pool, gen_n, ctx.seed);
        details["source"] = gen_kind;
      } else {
        const auto kind = parse_full_kind(gen_kind);
        result = full_generate(kind, seed, gen_n, ctx.seed);
        details["full_kind"] = to_string(kind);
      }
    } else if (gen_mode == "hybrid") {
      GeneratorOptions gopt;
      gopt.jitter = jitter;
      GeneratorKind kind = GeneratorKind::external_file;
      if (external)
        gopt.external_path = gen_kind;
      else
        kind = parse_generator_kind(gen_kind);
      const auto g = fit_generator(kind, seed, gopt);
      auto np = fit_nuisances(seed, gen_model.nuisance());
      if (!nuis_out.empty()) {
        auto f = detail::open_out(detail::resolve_out(nuis_out, {}, ""));
        f << to_json(np).dump(2) << '\n';
      }
      details["generator"] = g.describe();
      details["nuisances"] = to_json(np);
      result = hybrid_generate(g, NuisanceFunctions::from(std::move(np)), seed.schema(),
                               {parse_outcome_mode(outcome_mode), gen_n, ctx.seed});
    } else {
      throw ValidationError("unknown generate mode '" + gen_mode + "' (hybrid|full)");
    }
    if (covariates_only) {
      auto f = detail::open_out(path);
      write_matrix_csv(f, result.schema().covariate_names(), result.covariates());
    } else {
      write_table(path.string(), result);
    }
    details["schema"] = to_json(result.schema());
    a.sidecar(path, details);
  };

  // ---- estimate
  auto* est = app.add_subcommand("estimate", "ATE estimates on a table");
  std::string est_in, est_schema, est_list = "or,ipw,aipw,tmle", est_out, est_scaling;
  detail::ModelFlags est_model;
  est->add_option("--in", est_in, "input table")->required();
  est->add_option("--schema", est_schema, "schema JSON (default: inferred)");
  est->add_option("--estimators", est_list, "comma-separated subset of or,ipw,aipw,tmle")->capture_default_str();
  est->add_option("--scaling", est_scaling, "TMLE bounds a,b for continuous outcomes");
  est->add_option("--out", est_out, "output JSON (default: stdout)");
  est_model.add(est);
  handlers["estimate"] = [&](const Artifacts& a) {
    const Dataset ds = detail::load_dataset(est_in, est_schema);
    auto cfg = est_model.estimator();
    if (!est_scaling.empty()) {
      const auto v = detail::parse_pair(est_scaling, "--scaling");
      cfg.scaling = std::pair{v[0], v[1]};
    }
    const auto results = fit_and_estimate(ds, parse_estimator_list(est_list), est_model.nuisance(), cfg);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) arr.push_back(to_json(r));
    if (est_out.empty()) {
      a.out << arr.dump(2) << '\n';
      return;
    }
    const auto path = detail::resolve_out(est_out, {}, "");
    auto f = detail::open_out(path);
    f << arr.dump(2) << '\n';
    a.sidecar(path);
  };

  // ---- diagnose
  auto* diag = app.add_subcommand("diagnose", "DCR and TSTR diagnostics");
  std::string real_path, syn_path, test_path, diag_schema, diag_out;
  diag->add_option("--real", real_path, "real (seed) table")->required();
  diag->add_option("--syn", syn_path, "synthetic table")->required();
  diag->add_option("--test", test_path, "real held-out table for TSTR");
  diag->add_option("--schema", diag_schema, "schema JSON shared by all tables (default: inferred)");
  diag->add_option("--out", diag_out, "output JSON (default: stdout)");
  handlers["diagnose"] = [&](const Artifacts& a) {
    const Dataset real = detail::load_dataset(real_path, diag_schema);
    const Dataset syn = detail::load_dataset(syn_path, diag_schema);
    nlohmann::json report{{"dcr", to_json(dcr(real, syn, fit_standardizer(real)))}};
    if (!test_path.empty()) report["tstr_auc"] = tstr(syn, detail::load_dataset(test_path, diag_schema));
    report["meta"] = a.meta;
    if (diag_out.empty()) {
      a.out << report.dump(2) << '\n';
      return;
    }
    auto f = detail::open_out(detail::resolve_out(diag_out, {}, ""));
    f << report.dump(2) << '\n';
  };

  // ---- check-theory
  auto* theory = app.add_subcommand("check-theory", "randomized property suites for the bounds");
  std::int64_t instances = 10'000, identity_instances = 1000, pinsker_instances = 200, overlap_scenarios = 20;
  Eigen::Index overlap_samples = 100'000;
  std::string theory_out;
  theory->add_option("--instances", instances, "sensitivity-bound instances")->capture_default_str();
  theory->add_option("--identity-instances", identity_instances, "loss-identity tuples")->capture_default_str();
  theory->add_option("--pinsker-instances", pinsker_instances, "contrast-bound model pairs")->capture_default_str();
  theory->add_option("--overlap-scenarios", overlap_scenarios, "decomposition scenarios")->capture_default_str();
  theory->add_option("--overlap-samples", overlap_samples, "Monte Carlo samples per measure")->capture_default_str();
  theory->add_option("--out", theory_out, "output JSON (default: stdout)");
  handlers["check-theory"] = [&](const Artifacts& a) {
    if (instances < 1 || identity_instances < 1 || pinsker_instances < 1 || overlap_scenarios < 1 || overlap_samples < 2)
      throw ValidationError("instance counts must be positive");
    const auto s1 = theory::sensitivity_suite(instances, derive_seed(ctx.seed, 1));
    const auto s2 = theory::loss_identity_suite(identity_instances, derive_seed(ctx.seed, 2));
    const auto s3 = theory::pinsker_suite(pinsker_instances, derive_seed(ctx.seed, 3));
    const auto s4 = theory::overlap_suite(overlap_scenarios, overlap_samples, derive_seed(ctx.seed, 4));
    const nlohmann::json report{{"sensitivity_bound", s1.to_json()},
                                {"loss_identity", s2.to_json()},
                                {"contrast_bound", s3.to_json()},
                                {"overlap_decomposition", s4.to_json()},
                                {"meta", a.meta}};
    if (theory_out.empty()) {
      a.out << report.dump(2) << '\n';
    } else {
      auto f = detail::open_out(detail::resolve_out(theory_out, {}, ""));
      f << report.dump(2) << '\n';
    }
    if (s1.violations + s2.violations + s3.violations + s4.violations > 0)
      throw NumericalError("property suite reported violations");
  };

  // ---- positivity
  auto* pos = app.add_subcommand("positivity", "positivity-augmentation MSE experiment");
  std::string scenarios_path, pos_out, tail = "both";
  PositivityConfig pcfg;
  detail::ModelFlags pos_model;
  pos_model.ipw = "hajek";
  pos->add_option("--scenarios", scenarios_path, "JSON scenario list (default: built-in grid)");
  pos->add_option("--reps", pcfg.reps, "replications")->capture_default_str();
  pos->add_option("--n", pcfg.n, "observational seed size")->capture_default_str();
  pos->add_option("--tail", tail, "both|lower")->capture_default_str();
  pos->add_option("--k", pcfg.k, "synthetic pairs per flagged unit")->capture_default_str();
  pos->add_option("--pool-size", pcfg.pool_size, "synthetic covariate pool size")->capture_default_str();
  pos->add_option("--jitter", pcfg.generator.jitter, "bootstrap-jitter noise")->capture_default_str();
  pos->add_option("--truth-mc-size", pcfg.truth_mc_size, "Monte Carlo draws for the true ATE")->capture_default_str();
  pos->add_option("--out", pos_out, "output CSV");
  pos_model.add(pos);
  handlers["positivity"] = [&](const Artifacts& a) {
    std::vector<Scenario> grid = default_scenarios();
    if (!scenarios_path.empty()) {
      std::ifstream f(scenarios_path);
      if (!f) throw ValidationError("cannot open scenarios '" + scenarios_path + "'");
      const auto j = nlohmann::json::parse(f);
      grid.clear();
      for (const auto& s : j.is_object() ? j.at("scenarios") : j) grid.push_back(scenario_from_json(s));
    }
    pcfg.seed = ctx.seed;
    pcfg.jobs = ctx.jobs;
    pcfg.mode = parse_tail_mode(tail);
    pcfg.nuisance = pos_model.nuisance();
    pcfg.estimator = pos_model.estimator();
    const auto table = run_positivity_experiment(grid, pcfg);
    const auto path = detail::resolve_out(pos_out, detail::default_out_dir(ctx.out_dir), "positivity.csv");
    auto f = detail::open_out(path);
    write_positivity_csv(f, table);
    nlohmann::json sc = nlohmann::json::array();
    for (const auto& s : grid) sc.push_back(to_json(s));
    a.sidecar(path, {{"experiment", to_json(pcfg)}, {"scenarios", sc}, {"table", to_json(table)}});
  };

  // ---- simulate
  auto* sim = app.add_subcommand("simulate", "finite-sample simulation engine");
  SimConfig scfg;
  std::string env = "dgp-truth", sim_regime = "randomized", reference, sim_list = "ipw,aipw,or,tmle", sim_out,
              sim_gen = "bootstrap-jitter", hybrid_nuis = "fitted";
  std::vector<Eigen::Index> rep_sizes{1000};
  detail::ModelFlags sim_model;
  sim->add_option("--env", env, "dgp-truth|hybrid")->capture_default_str();
  sim->add_option("--regime", sim_regime, "benchmark regime")->capture_default_str();
  sim->add_option("--ref-size", scfg.ref_size, "reference sample size")->capture_default_str();
  sim->add_option("--rep-size", rep_sizes, "replication size; repeat for a sweep")->capture_default_str();
  sim->add_option("--reps", scfg.reps, "replications per size")->capture_default_str();
  sim->add_option("--reference", reference, "truth-oracle|large-sample-tmle (default by environment)");
  sim->add_option("--estimators", sim_list, "comma-separated estimators")->capture_default_str();
  sim->add_option("--seed-data", scfg.seed_path, "hybrid: real seed table (default: benchmark draw)");
  sim->add_option("--seed-size", scfg.seed_size, "hybrid: benchmark seed size")->capture_default_str();
  sim->add_option("--generator", sim_gen, "hybrid: covariate generator")->capture_default_str();
  sim->add_option("--jitter", scfg.generator_options.jitter, "hybrid: bootstrap-jitter noise")->capture_default_str();
  sim->add_option("--hybrid-nuisances", hybrid_nuis, "hybrid: fitted|oracle")->capture_default_str();
  sim->add_option("--truth-mc-size", scfg.truth_mc_size, "Monte Carlo draws for the true ATE")->capture_default_str();
  sim->add_option("--out", sim_out, "output JSON");
  sim_model.add(sim);
  handlers["simulate"] = [&](const Artifacts& a) {
    scfg.env = parse_environment(env);
    scfg.regime = dgp::parse_regime(sim_regime);
    std::sort(rep_sizes.begin(), rep_sizes.end());
    scfg.rep_sizes = rep_sizes;
    if (!reference.empty()) scfg.reference = parse_reference_estimator(reference);
    scfg.estimators = parse_estimator_list(sim_list);
    scfg.generator = parse_generator_kind(sim_gen);
    scfg.hybrid_nuisances = parse_hybrid_nuisances(hybrid_nuis);
    scfg.nuisance = sim_model.nuisance();
    scfg.estimator = sim_model.estimator();
    scfg.seed = ctx.seed;
    scfg.jobs = ctx.jobs;
    const auto ref = build_reference(scfg);
    nlohmann::json tables = nlohmann::json::array();
    for (const auto& t : sweep(scfg, ref)) tables.push_back(to_json(t));
    const auto path = detail::resolve_out(sim_out, detail::default_out_dir(ctx.out_dir), "metrics.json");
    auto f = detail::open_out(path);
    f << nlohmann::json{{"psi_ref", ref.psi}, {"reference", to_string(ref.method)}, {"simulation", to_json(scfg)},
                        {"tables", tables}, {"meta", a.meta}}
             .dump(2)
      << '\n';
  };

  // ---- fidelity
  auto* fid = app.add_subcommand("fidelity", "compare real and synthetic metric tables");
  std::string fid_real, fid_syn, fid_out, fid_source = "synthetic";
  Eigen::Index fid_size = 0;
  fid->add_option("--real", fid_real, "real-benchmark metrics JSON")->required();
  fid->add_option("--syn", fid_syn, "synthetic metrics JSON")->required();
  fid->add_option("--rep-size", fid_size, "table to compare when a file holds a sweep (default: first)");
  fid->add_option("--source", fid_source, "label for the synthetic source column")->capture_default_str();
  fid->add_option("--out", fid_out, "output CSV");
  handlers["fidelity"] = [&](const Artifacts& a) {
    auto load = [&](const std::string& p) {
      std::ifstream f(p);
      if (!f) throw ValidationError("cannot open metrics '" + p + "'");
      const auto j = nlohmann::json::parse(f);
      if (!j.contains("tables")) return metric_table_from_json(j);
      for (const auto& t : j.at("tables"))
        if (fid_size == 0 || t.value("rep_size", Eigen::Index{0}) == fid_size) return metric_table_from_json(t);
      throw ValidationError("'" + p + "' has no table for replication size " + std::to_string(fid_size));
    };
    const auto report = fidelity_compare(load(fid_real), load(fid_syn), fid_source);
    const auto path = detail::resolve_out(fid_out, detail::default_out_dir(ctx.out_dir), "fidelity.csv");
    auto f = detail::open_out(path);
    write_fidelity_csv(f, report);
    a.sidecar(path);
  };

  std::string command = "causynth";
  auto error_record = [&](const char* kind, const std::string& msg, int code) {
    err << nlohmann::json{{"error", kind}, {"message", msg}, {"command", command}, {"exit_code", code}}.dump() << '\n';
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    for (auto* s : app.get_subcommands()) command = s->get_name();
    return error_record("usage", e.what(), 2);
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    command = sub->get_name();
    nlohmann::json meta{{"command", command},
                        {"version", kVersion},
                        {"seed", ctx.seed},
                        {"timestamp", detail::utc_timestamp()},
                        {"global", detail::resolved_options(app)},
                        {"options", detail::resolved_options(*sub)}};
    handlers.at(command)(Artifacts{std::move(meta), out, err});
    return 0;
  } catch (const ValidationError& e) {
    return error_record("validation", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return error_record("validation", e.what(), 2);
  } catch (const std::filesystem::filesystem_error& e) {
    return error_record("validation", e.what(), 2);
  } catch (const NumericalError& e) {
    return error_record("numerical", e.what(), 3);
  } catch (const std::exception& e) {
    return error_record("internal", e.what(), 1);
  }
}

}  // namespace causynth::cli
