#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfmpc/behavioral.hpp"
#include "dfmpc/linsys.hpp"
#include "dfmpc/mpc.hpp"
#include "dfmpc/trace.hpp"

namespace dfmpc::sim {

enum class NoiseDistribution { kUniform, kTruncatedGaussian };
enum class Excitation { kPrbs, kUniform };
enum class Comparator { kNone, kBaselineLinear };

std::string to_string(NoiseDistribution d);
std::string to_string(Excitation e);
std::string to_string(Comparator c);
NoiseDistribution noise_distribution_from_string(const std::string& s);
Excitation excitation_from_string(const std::string& s);
Comparator comparator_from_string(const std::string& s);

/// Reference (u_ref, y_ref) active from `start` until the next entry.
struct ReferencePoint {
  int start = 0;
  Eigen::VectorXd u_ref;
  Eigen::VectorXd y_ref;
};

struct NoiseSpec {
  double epsilon = 0.0;
  NoiseDistribution distribution = NoiseDistribution::kUniform;
  std::uint64_t seed = 1;
};

struct OfflineSpec {
  int N = 200;
  Excitation excitation = Excitation::kUniform;
  double amplitude = 1.0;
  Eigen::VectorXd offset;  // operating point added to the excitation (m2), zero if empty
  int max_attempts = 5;
};

struct Scenario {
  std::string name;
  linsys::KnownSubsystem known;
  linsys::HiddenSubsystem hidden;
  mpc::ControllerConfig controller;
  std::vector<ReferencePoint> schedule;
  NoiseSpec noise;
  OfflineSpec offline;
  int duration = 100;
  Comparator comparator = Comparator::kNone;
  std::optional<mpc::LinearModel> baseline_model;
  Eigen::VectorXd x1_initial;
  Eigen::VectorXd x2_initial;
  Eigen::VectorXd warmup_input;  // applied for n2 steps before control starts (m)
  // Replace y2_ref by the previous Sigma2 measurement and u_ref by the last input.
  bool reference_smoothing = false;
  std::vector<int> tracked_outputs;  // output channels entering the RMSE; all if empty
  double steady_state_fraction = 0.25;
  // Settings that follow epsilon through the default weight rules when
  // set_epsilon is called.
  struct EpsilonDerived {
    bool gamma = false;
    bool lambda = false;
    bool noise_bound = false;
  } derived;

  /// Sets the noise level and refreshes the settings flagged in `derived`.
  void set_epsilon(double epsilon);

  Eigen::Index m() const { return known.input_dim() + hidden.input_dim(); }
  Eigen::Index p() const { return known.output_dim() + hidden.output_dim(); }

  /// Throws ConfigError / DimensionError.
  void validate() const;
};

struct OfflineData {
  behavioral::BehavioralDataset dataset;
  Eigen::MatrixXd noise;   // p2 x N
  Eigen::MatrixXd states;  // n2 x N
  std::uint64_t seed_used = 0;
};

/// Excites the hidden subsystem from rest, adds bounded output noise and
/// checks persistency of excitation at order L + 2n, retrying with derived
/// seeds. Throws ConfigError when N is too short for that order and
/// IllPosedError when every attempt fails.
OfflineData collect_offline_data(const linsys::HiddenSubsystem& hidden, const OfflineSpec& spec,
                                 int L, int n, double epsilon, NoiseDistribution distribution,
                                 std::uint64_t seed);

struct MetricsReport {
  Eigen::VectorXd rmse;  // per tracked channel
  double overall_rmse = 0.0;
  double steady_state_mse = 0.0;  // mean squared error over the final fraction of the run
  double feasibility_rate = 0.0;
  int constraint_violations = 0;
  double mean_solve_ms = 0.0;
  double median_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  int steps = 0;
  bool has_comparator = false;
  Eigen::VectorXd baseline_rmse;
  double baseline_overall_rmse = 0.0;
  Eigen::VectorXd improvement_pct;  // (baseline - proposed) / baseline * 100
  double overall_improvement_pct = 0.0;
};

struct MetricsOptions {
  std::vector<int> tracked_outputs;  // all channels when empty
  double steady_state_fraction = 0.25;
  const linsys::PolytopicSet* input_set = nullptr;
  const linsys::PolytopicSet* output_set = nullptr;
};

/// Throws ConfigError on an empty log.
MetricsReport compute_metrics(const ClosedLoopLog& log, const MetricsOptions& options,
                              const ClosedLoopLog* comparator = nullptr);

/// (baseline - proposed) / baseline * 100, 0 when both are zero.
double improvement_percent(double proposed, double baseline);

struct RunOptions {
  bool record_timing = true;
};

struct RunResult {
  ClosedLoopLog log;
  std::optional<ClosedLoopLog> baseline_log;
  MetricsReport metrics;
};

/// Runs the scenario end to end. A ControllerAbort stops the loop and marks
/// the returned (partial) log as aborted instead of propagating.
RunResult run_closed_loop(const Scenario& scenario, const RunOptions& options = {});

/// One step of the model-based comparator (thin wrapper kept for symmetry with
/// mpc::control_step).
mpc::StepResult baseline_step(mpc::ModelController& controller,
                              const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                              const Eigen::Ref<const Eigen::VectorXd>& y_ref);

/// Canonical LTI cascade: Sigma2 x+ = 0.7 x + 0.3 u, y = x; Sigma1 x+ = 0.8 x
/// + 0.5 u1 + y2, y1 = x. Constant reference (u1, u2) = (0, 1) with
/// equilibrium outputs (5, 1).
Scenario canonical_cascade(double epsilon, std::uint64_t seed, int duration = 100);

/// Canonical cascade started at its equilibrium with wide constraint boxes and
/// light data weights (Lambda = Gamma = 1e-2), chosen so that the safety
/// certificate and the dominance inequality both hold.
Scenario certified_cascade(double epsilon, std::uint64_t seed, int duration = 500);

/// Momentum-like spring-damper driven only by a two-state turbine lag with a
/// tanh thrust saturation. Tracks a piecewise-constant position profile near
/// the saturation knee and compares against a linear-model MPC.
Scenario turbine_surrogate(double epsilon, std::uint64_t seed, int duration = 600);

}  // namespace dfmpc::sim
