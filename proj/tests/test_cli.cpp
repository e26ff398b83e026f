#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "causynth/cli.hpp"
#include "support.hpp"

using causynth::testing::slurp;
using causynth::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "causynth");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = causynth::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json without_timestamp(nlohmann::json j) {
  if (!j.is_object()) return j;
  if (j.contains("meta")) j["meta"].erase("timestamp");
  j.erase("timestamp");
  return j;
}

}  // namespace

TEST(Cli, TrueAteMatchesPublishedValue) {
  const auto r = run({"dgp-truth", "--mc-size", "1000000", "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const double v = std::stod(r.out);
  EXPECT_GE(v, 0.4133);
  EXPECT_LE(v, 0.4233);
}

TEST(Cli, ZeroRowGenerationIsAValidationError) {
  TempDir tmp;
  ASSERT_EQ(run({"dgp-sample", "--n", "100", "--out", tmp.file("seed.csv")}).code, 0);
  const auto r = run({"generate", "--seed-data", tmp.file("seed.csv"), "--n", "0", "--out", tmp.file("syn.csv")});
  EXPECT_EQ(r.code, 2);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j.at("error"), "validation");
  EXPECT_EQ(j.at("command"), "generate");
}

TEST(Cli, UnknownCommandIsUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err).at("error"), "usage");
}

TEST(Cli, MissingInputFileIsValidationError) {
  TempDir tmp;
  const auto r = run({"estimate", "--in", tmp.file("nope.csv")});
  EXPECT_EQ(r.code, 2);
}

// Same full pipeline run in two directories with identical relative paths.
TEST(Cli, ArtifactsAreDeterministicModuloTimestamp) {
  TempDir tmp;
  const auto home = std::filesystem::current_path();
  const std::vector<std::string> files{"seed.csv", "syn.csv", "est.json", "seed.csv.meta.json", "syn.csv.meta.json",
                                       "est.json.meta.json"};
  auto pipeline = [&](const std::string& dir) {
    std::filesystem::create_directories(tmp.file(dir));
    std::filesystem::current_path(tmp.file(dir));
    EXPECT_EQ(run({"--seed", "5", "dgp-sample", "--n", "400", "--out", "seed.csv"}).code, 0);
    EXPECT_EQ(run({"--seed", "6", "generate", "--seed-data", "seed.csv", "--n", "500", "--generator", "gaussian-copula",
                   "--out", "syn.csv"}).code,
              0);
    EXPECT_EQ(run({"estimate", "--in", "syn.csv", "--estimators", "or,ipw,aipw,tmle", "--out", "est.json"}).code, 0);
    std::filesystem::current_path(home);
  };
  pipeline("a");
  pipeline("b");
  for (const auto& f : files) {
    const auto a = slurp(tmp.file("a/" + f));
    const auto b = slurp(tmp.file("b/" + f));
    ASSERT_FALSE(a.empty()) << f;
    if (f.ends_with(".json")) {
      EXPECT_EQ(without_timestamp(nlohmann::json::parse(a)), without_timestamp(nlohmann::json::parse(b))) << f;
    } else {
      EXPECT_EQ(a, b) << f;
    }
  }
  const auto meta = nlohmann::json::parse(slurp(tmp.file("a/syn.csv.meta.json")));
  EXPECT_EQ(meta.at("command"), "generate");
  EXPECT_EQ(meta.at("seed"), 6);
}

TEST(Cli, TomlConfigMergesWithFlagOverride) {
  TempDir tmp;
  const auto cfg = tmp.write("run.toml", "seed = 9\n\n[dgp-sample]\nn = 30\nregime = \"randomized\"\n");
  ASSERT_EQ(run({"--config", cfg, "dgp-sample", "--out", tmp.file("a.csv")}).code, 0);
  const auto meta = nlohmann::json::parse(slurp(tmp.file("a.csv.meta.json")));
  EXPECT_EQ(meta.at("seed"), 9);
  EXPECT_EQ(meta.at("options").at("n"), "30");
  EXPECT_EQ(meta.at("options").at("regime"), "randomized");

  ASSERT_EQ(run({"--config", cfg, "dgp-sample", "--n", "12", "--out", tmp.file("b.csv")}).code, 0);
  const auto rows = slurp(tmp.file("b.csv"));
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 13);
}

TEST(Cli, EnvironmentSetsOutputDirectory) {
  TempDir tmp;
  ::setenv("CAUSYNTH_OUT_DIR", tmp.file("").c_str(), 1);
  const auto r = run({"dgp-sample", "--n", "20"});
  ::unsetenv("CAUSYNTH_OUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(slurp(tmp.file("dgp_sample.csv")).empty()) << "artifact not written to the env directory";
}

TEST(Cli, ExchangeCsvRoundTripThroughExternalGenerator) {
  TempDir tmp;
  ASSERT_EQ(run({"dgp-sample", "--n", "200", "--out", tmp.file("seed.csv")}).code, 0);
  ASSERT_EQ(run({"generate", "--seed-data", tmp.file("seed.csv"), "--n", "50", "--covariates-only", "--out",
                 tmp.file("cov.csv")}).code,
            0);
  const auto r = run({"generate", "--seed-data", tmp.file("seed.csv"), "--generator", tmp.file("cov.csv"), "--n", "50",
                      "--out", tmp.file("hyb.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto header = slurp(tmp.file("hyb.csv")).substr(0, 20);
  EXPECT_EQ(header, "W1,W2,W3,W4,W5,W6,A,");
}

TEST(Cli, DiagnoseAndTheoryReports) {
  TempDir tmp;
  ASSERT_EQ(run({"--seed", "1", "dgp-sample", "--n", "300", "--out", tmp.file("real.csv")}).code, 0);
  ASSERT_EQ(run({"--seed", "2", "dgp-sample", "--n", "300", "--out", tmp.file("test.csv")}).code, 0);
  ASSERT_EQ(run({"generate", "--seed-data", tmp.file("real.csv"), "--n", "300", "--out", tmp.file("syn.csv")}).code, 0);
  const auto d = run({"diagnose", "--real", tmp.file("real.csv"), "--syn", tmp.file("syn.csv"), "--test",
                      tmp.file("test.csv"), "--out", tmp.file("diag.json")});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto diag = nlohmann::json::parse(slurp(tmp.file("diag.json")));
  EXPECT_GT(diag.at("dcr").at("mean").get<double>(), 0.0);
  EXPECT_GT(diag.at("tstr_auc").get<double>(), 0.5);

  const auto t = run({"check-theory", "--instances", "500", "--identity-instances", "100", "--pinsker-instances", "50",
                      "--overlap-scenarios", "2", "--overlap-samples", "5000", "--out", tmp.file("th.json")});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto th = nlohmann::json::parse(slurp(tmp.file("th.json")));
  EXPECT_EQ(th.at("sensitivity_bound").at("violations"), 0);
}

TEST(Cli, SimulateThenFidelity) {
  TempDir tmp;
  const auto s = run({"--seed", "4", "simulate", "--ref-size", "3000", "--rep-size", "200", "--rep-size", "400",
                      "--reps", "10", "--truth-mc-size", "20000", "--out", tmp.file("sim.json")});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto sim = nlohmann::json::parse(slurp(tmp.file("sim.json")));
  EXPECT_EQ(sim.at("tables").size(), 2u);
  const auto f = run({"fidelity", "--real", tmp.file("sim.json"), "--syn", tmp.file("sim.json"), "--rep-size", "400",
                      "--out", tmp.file("fid.csv")});
  ASSERT_EQ(f.code, 0) << f.err;
  const auto csv = slurp(tmp.file("fid.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.find(",No,"), std::string::npos);
}

TEST(Cli, PositivityWritesTableShape) {
  TempDir tmp;
  const auto r = run({"positivity", "--reps", "2", "--truth-mc-size", "10000", "--out", tmp.file("t1.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(tmp.file("t1.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scenario,IPW,AIPW,OR,TMLE");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}
