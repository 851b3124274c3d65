#include "dfmpc/scenario_io.hpp"

#include <filesystem>
#include <fstream>
#include <locale>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dfmpc/artifacts.hpp"
#include "dfmpc/errors.hpp"

namespace dfmpc::io {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

const char* kMinimal = R"({
  "version": 1,
  "known": {"A1": [[0.8]], "B1": [[0.5]], "C1": [[1.0]], "E1": [[1.0]]},
  "hidden": {"A2": [[0.7]], "B2": [[0.3]], "C2": [[1.0]]},
  "controller": {
    "L": 20, "n1": 1, "n2": 1,
    "input_set": {"lower": [-5, -5], "upper": [5, 5]},
    "output_set": {"lower": [-20, -20], "upper": [20, 20]}
  },
  "schedule": [{"u_ref": [0, 1], "y_ref": [5, 1]}],
  "noise": {"epsilon": 0.01},
  "duration": 100
})";

json Minimal() { return json::parse(kMinimal); }

std::string ErrorOf(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

GTEST_TEST(ParseScenarioTest, MinimalDocumentUsesDefaults) {
  const ScenarioFile f = parse_scenario(kMinimal);
  const sim::Scenario& s = f.scenario;
  EXPECT_TRUE(f.out_dir.empty());
  EXPECT_EQ(s.controller.L, 20);
  EXPECT_EQ(s.noise.epsilon, 0.01);
  EXPECT_EQ(s.controller.noise_bound, 0.01);
  const mpc::Weights w = mpc::default_weights(2, 2, 1, 0.01, s.offline.N);
  EXPECT_EQ(s.controller.weights.Gamma, w.Gamma);
  EXPECT_EQ(s.controller.weights.Lambda, w.Lambda);
  EXPECT_TRUE(s.derived.gamma && s.derived.lambda && s.derived.noise_bound);
  EXPECT_EQ(s.schedule.front().start, 0);
  EXPECT_EQ(s.x1_initial, VectorXd::Zero(1));
  EXPECT_TRUE(s.hidden.is_lti());
}

GTEST_TEST(ParseScenarioTest, WeightForms) {
  json doc = Minimal();
  doc["controller"]["weights"] = {{"Q", 2.0},
                                  {"R", {{1.0, 0.0}, {0.0, 3.0}}},
                                  {"S", "auto"},
                                  {"Gamma", 50.0},
                                  {"Lambda", 0.5}};
  doc["controller"]["noise_bound"] = 0.05;
  const sim::Scenario s = parse_scenario(doc.dump()).scenario;
  EXPECT_EQ(s.controller.weights.Q, 2.0 * MatrixXd::Identity(2, 2));
  EXPECT_EQ(s.controller.weights.R(1, 1), 3.0);
  EXPECT_EQ(s.controller.weights.S, 0.1 * MatrixXd::Identity(2, 2));
  EXPECT_EQ(s.controller.weights.Gamma(0, 0), 50.0);
  EXPECT_EQ(s.controller.weights.Lambda, 0.5);
  EXPECT_EQ(s.controller.noise_bound, 0.05);
  EXPECT_FALSE(s.derived.gamma || s.derived.lambda || s.derived.noise_bound);
}

GTEST_TEST(ParseScenarioTest, HalfspaceSet) {
  json doc = Minimal();
  doc["controller"]["output_set"] = {{"E", {{1, 0}, {0, 1}, {-1, -1}}}, {"e", {3, 3, 3}}};
  const sim::Scenario s = parse_scenario(doc.dump()).scenario;
  EXPECT_EQ(s.controller.output_set.rows(), 3);
  EXPECT_EQ(s.controller.output_set.e()(2), 3.0);
}

GTEST_TEST(ParseScenarioTest, UnknownKeysAreRejectedWithPath) {
  json doc = Minimal();
  doc["controller"]["horizon"] = 10;
  EXPECT_NE(ErrorOf(doc.dump()).find("controller.horizon"), std::string::npos);
  json top = Minimal();
  top["extra"] = true;
  EXPECT_NE(ErrorOf(top.dump()).find("extra"), std::string::npos);
}

GTEST_TEST(ParseScenarioTest, MalformedDocuments) {
  EXPECT_THROW(parse_scenario("{ not json"), ConfigError);
  EXPECT_THROW(parse_scenario("[1, 2]"), ConfigError);
  json no_version = Minimal();
  no_version.erase("version");
  EXPECT_NE(ErrorOf(no_version.dump()).find("version"), std::string::npos);
  json future = Minimal();
  future["version"] = 2;
  EXPECT_THROW(parse_scenario(future.dump()), ConfigError);
  json wrong_type = Minimal();
  wrong_type["controller"]["L"] = "twenty";
  EXPECT_NE(ErrorOf(wrong_type.dump()).find("controller.L"), std::string::npos);
  json ragged = Minimal();
  ragged["known"]["A1"] = {{1.0, 0.0}, {1.0}};
  EXPECT_THROW(parse_scenario(ragged.dump()), ConfigError);
  json bad_policy = Minimal();
  bad_policy["controller"]["infeasibility_policy"] = "retry";
  EXPECT_THROW(parse_scenario(bad_policy.dump()), ConfigError);
  json short_horizon = Minimal();
  short_horizon["controller"]["L"] = 1;
  EXPECT_THROW(parse_scenario(short_horizon.dump()), ConfigError);
}

GTEST_TEST(ParseScenarioTest, DimensionMismatch) {
  json doc = Minimal();
  doc["schedule"][0]["y_ref"] = {5};
  EXPECT_THROW(parse_scenario(doc.dump()), DimensionError);
}

GTEST_TEST(DumpScenarioTest, RoundTripBuiltins) {
  for (const sim::Scenario& s :
       {sim::canonical_cascade(0.005, 1), sim::certified_cascade(0.005, 2),
        sim::turbine_surrogate(0.01, 3)}) {
    const std::string text = dump_scenario(s, "out/x");
    const ScenarioFile f = parse_scenario(text);
    EXPECT_EQ(f.out_dir, "out/x");
    EXPECT_EQ(dump_scenario(f.scenario, "out/x"), text) << s.name;
    EXPECT_EQ(f.scenario.controller.weights.Gamma, s.controller.weights.Gamma);
    EXPECT_EQ(f.scenario.controller.weights.Lambda, s.controller.weights.Lambda);
    EXPECT_EQ(f.scenario.hidden.nonlinearity.kind, s.hidden.nonlinearity.kind);
    EXPECT_EQ(f.scenario.controller.affine_data, s.controller.affine_data);
    EXPECT_EQ(f.scenario.derived.lambda, s.derived.lambda);
  }
}

GTEST_TEST(DumpScenarioTest, AutoFieldsFollowEpsilon) {
  const sim::Scenario s = sim::canonical_cascade(0.005, 1);
  json doc = json::parse(dump_scenario(s));
  EXPECT_EQ(doc["controller"]["weights"]["Lambda"], "auto");
  EXPECT_EQ(doc["controller"]["noise_bound"], "auto");
  sim::Scenario parsed = parse_scenario(doc.dump()).scenario;
  parsed.set_epsilon(0.02);
  EXPECT_NEAR(parsed.controller.weights.Lambda, 1e-2 * 0.02 * 0.02 * 200, 1e-15);
}

GTEST_TEST(LoadScenarioTest, MissingFile) {
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), ConfigError);
}

// Comma decimal separator and digit grouping, as in many European locales.
struct CommaPunct : std::numpunct<char> {
  char do_decimal_point() const override { return ','; }
  char do_thousands_sep() const override { return '.'; }
  std::string do_grouping() const override { return "\3"; }
};

GTEST_TEST(ArtifactsTest, LogCsvIgnoresStreamLocale) {
  const sim::RunResult run = sim::run_closed_loop(sim::canonical_cascade(0.01, 2, 5),
                                                  sim::RunOptions{false});
  ClosedLoopLog log = run.log;
  log.steps.back().step = 12345;
  std::ostringstream plain, localized;
  localized.imbue(std::locale(std::locale::classic(), new CommaPunct));
  write_log_csv(log, plain);
  write_log_csv(log, localized);
  EXPECT_EQ(plain.str(), localized.str());
  const std::string text = plain.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "step,u_0,u_1,y_measured_0,y_measured_1,y_true_0,y_true_1,u_ref_0,u_ref_1,y_ref_0,"
            "y_ref_1,cost,eq_cost,g_l1,sigma_inf,sigma0_inf,status,feasible,held,iterations,"
            "solve_ms");
  EXPECT_NE(text.find("\n12345,"), std::string::npos);
}

GTEST_TEST(ArtifactsTest, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e21, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

GTEST_TEST(ArtifactsTest, WritesAllFiles) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dfmpc_artifacts_test";
  fs::remove_all(dir);
  sim::Scenario s = sim::turbine_surrogate(0.01, 1, 30);
  const sim::RunResult run = sim::run_closed_loop(s);
  write_artifacts(dir.string(), s, run);
  for (const char* f : {"log.csv", "metrics.json", "plotdata/y_0.csv", "plotdata/y_1.csv",
                        "plotdata/u_0.csv", "plotdata/offset.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream in(dir / "metrics.json");
  const json metrics = json::parse(in);
  EXPECT_EQ(metrics["steps"], 30);
  EXPECT_EQ(metrics["scenario"], "turbine_surrogate");
  EXPECT_TRUE(metrics.contains("comparator"));
  std::ifstream y0(dir / "plotdata/y_0.csv");
  std::string header;
  std::getline(y0, header);
  EXPECT_EQ(header, "step,reference,measured,true,baseline_true");
  fs::remove_all(dir);
}

}  // namespace
}  // namespace dfmpc::io
