#include "dfmpc.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

namespace {

constexpr const char* kShortCascade = R"({
  "version": 1,
  "name": "short_cascade",
  "known": {"A1": [[0.8]], "B1": [[0.5]], "C1": [[1.0]], "E1": [[1.0]]},
  "hidden": {"A2": [[0.7]], "B2": [[0.3]], "C2": [[1.0]]},
  "controller": {
    "L": 20, "n1": 1, "n2": 1,
    "input_set": {"lower": [-5, -5], "upper": [5, 5]},
    "output_set": {"lower": [-20, -20], "upper": [20, 20]}
  },
  "schedule": [{"u_ref": [0, 1], "y_ref": [5, 1]}],
  "noise": {"epsilon": 0.005, "seed": 3},
  "duration": 15,
  "output": {"dir": "somewhere"}
})";

// Releases a handle through its matching _free function.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
};

using ScenarioHandle = Handle<dfmpc_scenario, dfmpc_scenario_free>;
using RunHandle = Handle<dfmpc_run, dfmpc_run_free>;
using ControllerHandle = Handle<dfmpc_controller, dfmpc_controller_free>;

GTEST_TEST(CapiTest, VersionAndStatusStrings) {
  EXPECT_FALSE(std::string(dfmpc_version()).empty());
  EXPECT_STREQ(dfmpc_status_string(DFMPC_OK), "ok");
  EXPECT_FALSE(std::string(dfmpc_status_string(DFMPC_ERR_CONFIG)).empty());
  EXPECT_EQ(dfmpc_set_log_level("loud"), DFMPC_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(dfmpc_set_log_level("off"), DFMPC_OK);
}

GTEST_TEST(CapiTest, ArgumentErrors) {
  ScenarioHandle s;
  EXPECT_EQ(dfmpc_scenario_builtin("no_such_scenario", 0.01, 1, &s.ptr),
            DFMPC_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(s.ptr, nullptr);
  EXPECT_NE(std::string(dfmpc_last_error()), "");
  EXPECT_EQ(dfmpc_scenario_builtin("canonical_cascade", 0.01, 1, nullptr),
            DFMPC_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(dfmpc_scenario_parse(nullptr, &s.ptr), DFMPC_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(dfmpc_scenario_parse("{ broken", &s.ptr), DFMPC_ERR_CONFIG);
  EXPECT_EQ(dfmpc_scenario_load("/nonexistent.json", &s.ptr), DFMPC_ERR_CONFIG);
  EXPECT_EQ(dfmpc_scenario_builtin("canonical_cascade", -1.0, 1, &s.ptr), DFMPC_ERR_CONFIG);
  // Freeing null is a no-op.
  dfmpc_scenario_free(nullptr);
  dfmpc_run_free(nullptr);
  dfmpc_controller_free(nullptr);
}

GTEST_TEST(CapiTest, ScenarioAccessors) {
  ScenarioHandle s;
  ASSERT_EQ(dfmpc_scenario_parse(kShortCascade, &s.ptr), DFMPC_OK);
  EXPECT_STREQ(dfmpc_scenario_out_dir(s.ptr), "somewhere");
  std::uint64_t seed = 0;
  ASSERT_EQ(dfmpc_scenario_seed(s.ptr, &seed), DFMPC_OK);
  EXPECT_EQ(seed, 3u);
  ASSERT_EQ(dfmpc_scenario_set_seed(s.ptr, 11), DFMPC_OK);
  dfmpc_scenario_seed(s.ptr, &seed);
  EXPECT_EQ(seed, 11u);
  double eps = 0.0;
  ASSERT_EQ(dfmpc_scenario_set_epsilon(s.ptr, 0.02), DFMPC_OK);
  dfmpc_scenario_epsilon(s.ptr, &eps);
  EXPECT_EQ(eps, 0.02);
  EXPECT_EQ(dfmpc_scenario_set_epsilon(s.ptr, -0.1), DFMPC_ERR_CONFIG);
  int lti = 0;
  dfmpc_scenario_is_lti(s.ptr, &lti);
  EXPECT_EQ(lti, 1);
  dfmpc_dims dims{};
  ASSERT_EQ(dfmpc_scenario_dims(s.ptr, &dims), DFMPC_OK);
  EXPECT_EQ(dims.m1, 1u);
  EXPECT_EQ(dims.m2, 1u);
  EXPECT_EQ(dims.p1, 1u);
  EXPECT_EQ(dims.n2, 1u);

  ScenarioHandle copy;
  ASSERT_EQ(dfmpc_scenario_clone(s.ptr, &copy.ptr), DFMPC_OK);
  dfmpc_scenario_set_seed(copy.ptr, 99);
  dfmpc_scenario_seed(s.ptr, &seed);
  EXPECT_EQ(seed, 11u);

  ScenarioHandle surrogate;
  ASSERT_EQ(dfmpc_scenario_builtin("turbine_surrogate", 0.01, 1, &surrogate.ptr), DFMPC_OK);
  dfmpc_scenario_is_lti(surrogate.ptr, &lti);
  EXPECT_EQ(lti, 0);
}

GTEST_TEST(CapiTest, SaveAndLoadRoundTrip) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "dfmpc_capi_roundtrip.json").string();
  ScenarioHandle s, loaded;
  ASSERT_EQ(dfmpc_scenario_builtin("certified_cascade", 0.005, 4, &s.ptr), DFMPC_OK);
  ASSERT_EQ(dfmpc_scenario_save(s.ptr, path.c_str()), DFMPC_OK);
  ASSERT_EQ(dfmpc_scenario_load(path.c_str(), &loaded.ptr), DFMPC_OK);
  std::uint64_t seed = 0;
  dfmpc_scenario_seed(loaded.ptr, &seed);
  EXPECT_EQ(seed, 4u);
  std::remove(path.c_str());
}

GTEST_TEST(CapiTest, RunMetricsAndSteps) {
  ScenarioHandle s;
  ASSERT_EQ(dfmpc_scenario_parse(kShortCascade, &s.ptr), DFMPC_OK);
  RunHandle run;
  const dfmpc_run_options opts{0};
  ASSERT_EQ(dfmpc_run_scenario(s.ptr, &opts, &run.ptr), DFMPC_OK);
  dfmpc_metrics m{};
  ASSERT_EQ(dfmpc_run_metrics(run.ptr, &m), DFMPC_OK);
  EXPECT_EQ(m.steps, 15);
  EXPECT_EQ(m.aborted, 0);
  EXPECT_EQ(m.feasibility_rate, 1.0);
  EXPECT_EQ(m.mean_solve_ms, 0.0);
  EXPECT_EQ(m.has_comparator, 0);
  EXPECT_STREQ(dfmpc_run_abort_reason(run.ptr), "");
  std::size_t n = 0;
  dfmpc_run_num_steps(run.ptr, &n);
  EXPECT_EQ(n, 15u);
  double u[2], y[2];
  ASSERT_EQ(dfmpc_run_step(run.ptr, 14, u, 2, y, 2), DFMPC_OK);
  EXPECT_NEAR(y[0], 5.0, 0.5);
  EXPECT_EQ(dfmpc_run_step(run.ptr, 15, u, 2, y, 2), DFMPC_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(dfmpc_run_step(run.ptr, 0, u, 3, nullptr, 0), DFMPC_ERR_DIMENSION);
  EXPECT_EQ(dfmpc_run_step(run.ptr, 0, nullptr, 0, y, 2), DFMPC_OK);

  dfmpc_verify_report r{};
  ASSERT_EQ(dfmpc_run_verify(run.ptr, &r), DFMPC_OK);
  EXPECT_EQ(r.bound_violations, 0);
  EXPECT_GT(r.checked_steps, 0);
  EXPECT_EQ(r.d_ref, 15.0);
}

GTEST_TEST(CapiTest, VerifyRejectsNonlinearPlant) {
  ScenarioHandle s;
  ASSERT_EQ(dfmpc_scenario_builtin("turbine_surrogate", 0.01, 1, &s.ptr), DFMPC_OK);
  RunHandle run;
  ASSERT_EQ(dfmpc_run_scenario(s.ptr, nullptr, &run.ptr), DFMPC_OK);
  dfmpc_verify_report r{};
  EXPECT_EQ(dfmpc_run_verify(run.ptr, &r), DFMPC_ERR_ILL_POSED);
}

GTEST_TEST(CapiTest, StepwiseController) {
  ScenarioHandle s;
  ASSERT_EQ(dfmpc_scenario_builtin("canonical_cascade", 0.0, 1, &s.ptr), DFMPC_OK);
  ControllerHandle c;
  ASSERT_EQ(dfmpc_controller_create(s.ptr, &c.ptr), DFMPC_OK);
  const double u_ref[2] = {0.0, 1.0}, y_ref[2] = {5.0, 1.0};
  double u[2] = {0.0, 0.0};
  int feasible = 0;
  // Not primed yet.
  EXPECT_EQ(dfmpc_controller_step(c.ptr, u_ref, 2, y_ref, 2, u, &feasible), DFMPC_ERR_CONFIG);
  const double x_eq[1] = {5.0}, y2_eq[1] = {1.0};
  ASSERT_EQ(dfmpc_controller_observe(c.ptr, u_ref, 2, y2_eq, 1, x_eq, 1), DFMPC_OK);
  EXPECT_EQ(dfmpc_controller_observe(c.ptr, u_ref, 1, y2_eq, 1, x_eq, 1), DFMPC_ERR_DIMENSION);
  ASSERT_EQ(dfmpc_controller_step(c.ptr, u_ref, 2, y_ref, 2, u, &feasible), DFMPC_OK);
  EXPECT_EQ(feasible, 1);
  EXPECT_NEAR(u[0], 0.0, 1e-5);
  EXPECT_NEAR(u[1], 1.0, 1e-5);
  EXPECT_EQ(dfmpc_controller_step(c.ptr, u_ref, 3, y_ref, 2, u, &feasible), DFMPC_ERR_DIMENSION);
}

GTEST_TEST(CapiTest, GeometryHelpers) {
  const double e_mat[2] = {1.0, -1.0};
  const double e_vec[2] = {1.0, 1.0};
  double d = 0.0;
  const double y = 2.0;
  ASSERT_EQ(dfmpc_signed_distance(e_mat, 2, 1, e_vec, &y, &d), DFMPC_OK);
  EXPECT_EQ(d, -1.0);
  const double zero_row[2] = {0.0, 0.0};
  EXPECT_EQ(dfmpc_signed_distance(zero_row, 1, 2, e_vec, &y, &d), DFMPC_ERR_DIMENSION);
  double b = 0.0;
  ASSERT_EQ(dfmpc_prediction_error_bound(1.8, 1.0, 10.0, 0.0, 0.0, 0.01, &b), DFMPC_OK);
  EXPECT_NEAR(b, 0.588, 1e-12);
  EXPECT_EQ(dfmpc_prediction_error_bound(1.8, 1.0, -1.0, 0.0, 0.0, 0.01, &b), DFMPC_ERR_CONFIG);
}

}  // namespace
