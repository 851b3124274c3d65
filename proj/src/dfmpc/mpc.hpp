#pragma once

#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "dfmpc/behavioral.hpp"
#include "dfmpc/linsys.hpp"
#include "dfmpc/qp.hpp"

namespace dfmpc::mpc {

enum class InfeasibilityPolicy { kHoldLast, kError };

std::string to_string(InfeasibilityPolicy policy);
InfeasibilityPolicy infeasibility_policy_from_string(const std::string& name);

/// Cost weights. Inputs are ordered u = [u1; u2] and outputs y = [y1; y2].
/// Gamma acts on one Sigma2 output sample and is repeated over the slack
/// window; Lambda is the scalar multiplying ||g||^2.
struct Weights {
  Eigen::MatrixXd Q;      // p x p
  Eigen::MatrixXd R;      // m x m
  Eigen::MatrixXd S;      // m x m
  Eigen::MatrixXd T;      // p x p
  Eigen::MatrixXd Gamma;  // p2 x p2
  double Lambda = 1e-4;
};

/// Noise-dependent defaults: Q = I, R = 0.1 I, S = 0.1 I, T = 10 I,
/// Gamma = 1e4 (1 + 1/eps) I (1e10 I when eps = 0),
/// Lambda = 1e-2 eps^2 N (1e-4 when eps = 0).
Weights default_weights(Eigen::Index m, Eigen::Index p, Eigen::Index p2, double epsilon,
                        Eigen::Index data_length);

struct ControllerConfig {
  int L = 20;
  int n1 = 0;
  int n2 = 1;
  Weights weights;
  linsys::PolytopicSet input_set;   // over u = [u1; u2]
  linsys::PolytopicSet output_set;  // over y = [y1; y2]
  double noise_bound = 0.0;
  bool online_update = false;
  InfeasibilityPolicy infeasibility_policy = InfeasibilityPolicy::kHoldLast;
  // Re-run the cheap persistency check after every online window update.
  bool recheck_persistency = false;
  // Adds 1e-8 ||g||^2 to the equilibrium problem to make g_s unique.
  bool equilibrium_regularizer = true;
  // Constrain 1'g = 1 so the data represent an affine local model; meant for
  // nonlinear Sigma2 with online updates around a nonzero operating point.
  bool affine_data = false;
  qp::QpSettings qp;

  /// Throws ConfigError / DimensionError. m = m1 + m2 and p = p1 + p2.
  void validate(Eigen::Index m, Eigen::Index p, Eigen::Index p2) const;
};

struct EquilibriumPoint {
  Eigen::VectorXd u_s;
  Eigen::VectorXd y_s;
  Eigen::VectorXd x1_s;
  Eigen::VectorXd g_s;
  double cost = 0.0;
};

/// Receding-horizon state: the current Sigma1 state and the windows of the
/// last n2 applied Sigma2 inputs and measured Sigma2 outputs (oldest first).
struct ControllerState {
  Eigen::VectorXd x1_now;
  Eigen::MatrixXd past_u2;  // m2 x n2
  Eigen::MatrixXd past_y2;  // p2 x n2
  int filled = 0;           // samples received so far, saturates at n2
  behavioral::BehavioralDataset dataset;
  std::optional<qp::QpSolution> warm_start;
  Eigen::VectorXd last_input;  // last u applied to the plant (m)
  bool persistency_ok = true;
  bool window_extended = false;  // an online sample has been appended to the dataset

  static ControllerState Create(const linsys::KnownSubsystem& known,
                                const ControllerConfig& config,
                                behavioral::BehavioralDataset dataset,
                                const Eigen::Ref<const Eigen::VectorXd>& x1_initial);

  bool initialized() const { return filled >= past_u2.cols(); }
};

/// Index map of the OCP decision vector
/// [g; u1(0..L-1); u2(-n2..L-1); y2(-n2..L-1); x1(0..L); u_s; y_s; x1_s; sigma].
struct OcpLayout {
  Eigen::Index ncol = 0;
  int L = 0, n2 = 0;
  Eigen::Index m1 = 0, m2 = 0, p1 = 0, p2 = 0, n1 = 0;
  Eigen::Index g = 0, u1 = 0, u2 = 0, y2 = 0, x1 = 0, us = 0, ys = 0, x1s = 0, sigma = 0;
  Eigen::Index size = 0;

  static OcpLayout Make(Eigen::Index ncol, int L, int n2, Eigen::Index m1, Eigen::Index m2,
                        Eigen::Index p1, Eigen::Index p2, Eigen::Index n1);

  Eigen::Index u1_at(int i) const { return u1 + i * m1; }
  // i runs from -n2 to L-1.
  Eigen::Index u2_at(int i) const { return u2 + (i + n2) * m2; }
  Eigen::Index y2_at(int i) const { return y2 + (i + n2) * p2; }
  Eigen::Index x1_at(int i) const { return x1 + i * n1; }
  Eigen::Index m() const { return m1 + m2; }
  Eigen::Index p() const { return p1 + p2; }
};

/// A QP together with the constant dropped from its objective, so that
/// objective(z) + constant equals the control cost.
struct AssembledOcp {
  qp::QuadraticProgram qp;
  double constant = 0.0;
  OcpLayout layout;
};

struct OcpSolution {
  Eigen::VectorXd g;
  Eigen::MatrixXd u_traj;     // m x L
  Eigen::MatrixXd y_traj;     // p x L, y1 = C1 x1
  Eigen::MatrixXd u2_window;  // m2 x (L + n2), past window first
  Eigen::MatrixXd y2_window;  // p2 x (L + n2)
  Eigen::MatrixXd x1_traj;    // n1 x (L + 1)
  Eigen::VectorXd sigma;      // p2 (L + n2), stacked like y2_window
  EquilibriumPoint artificial_eq;
  double cost = 0.0;
  qp::QpSolution qp;

  bool solved() const { return qp.status == qp::QpStatus::kSolved; }
};

/// Closest equilibrium to (u_ref, y_ref) that the data and the Sigma1 steady
/// state admit, using the first n2 + 1 block rows of the dataset Hankels.
/// Throws InfeasibleError if the QP is not solved.
EquilibriumPoint reachable_equilibrium(const behavioral::BehavioralDataset& dataset,
                                       const linsys::KnownSubsystem& known,
                                       const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                                       const Eigen::Ref<const Eigen::VectorXd>& y_ref,
                                       const ControllerConfig& config);

AssembledOcp assemble_ocp(const ControllerConfig& config, const ControllerState& state,
                          const linsys::KnownSubsystem& known,
                          const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                          const Eigen::Ref<const Eigen::VectorXd>& y_ref);

OcpSolution extract_solution(const AssembledOcp& ocp, const linsys::KnownSubsystem& known,
                             qp::QpSolution qp_solution);

/// Maximum violation of the equalities every solution must satisfy.
struct OcpInvariantResiduals {
  double hankel = 0.0;
  double initialization = 0.0;
  double terminal_tail = 0.0;
  double terminal_state = 0.0;
  double max() const;
};

OcpInvariantResiduals check_ocp_invariants(const OcpSolution& solution,
                                           const ControllerConfig& config,
                                           const ControllerState& state);

struct StepResult {
  Eigen::VectorXd input;  // u(k) handed to the plant
  OcpSolution solution;
  bool feasible = false;
  bool held = false;  // true when the previous input was replayed
};

/// Solves the OCP and returns the first predicted input. On failure applies
/// the infeasibility policy: kHoldLast replays state.last_input, kError throws
/// ControllerAbort. `solver` may carry a factorization between calls.
StepResult control_step(const ControllerConfig& config, ControllerState& state,
                        const linsys::KnownSubsystem& known,
                        const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                        const Eigen::Ref<const Eigen::VectorXd>& y_ref,
                        qp::Solver* solver = nullptr);

/// Records the input applied at time k, the Sigma2 measurement at time k and
/// the Sigma1 state at k+1. Updates the dataset when online_update is set.
void observe(const ControllerConfig& config, ControllerState& state,
             const Eigen::Ref<const Eigen::VectorXd>& applied_u,
             const Eigen::Ref<const Eigen::VectorXd>& y2_measured,
             const Eigen::Ref<const Eigen::VectorXd>& x1_next);

/// Owns the receding-horizon state and a solver cache.
class Controller {
 public:
  Controller(linsys::KnownSubsystem known, ControllerConfig config,
             behavioral::BehavioralDataset dataset,
             const Eigen::Ref<const Eigen::VectorXd>& x1_initial);

  StepResult step(const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                  const Eigen::Ref<const Eigen::VectorXd>& y_ref);
  void observe(const Eigen::Ref<const Eigen::VectorXd>& applied_u,
               const Eigen::Ref<const Eigen::VectorXd>& y2_measured,
               const Eigen::Ref<const Eigen::VectorXd>& x1_next);

  const ControllerState& state() const { return state_; }
  const ControllerConfig& config() const { return config_; }
  const linsys::KnownSubsystem& known() const { return known_; }

 private:
  linsys::KnownSubsystem known_;
  ControllerConfig config_;
  ControllerState state_;
  qp::Solver solver_;
};

/// Parametric stand-in for Sigma2 used by the model-based comparator.
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
};

/// Same OCP shape with Sigma2 replaced by `model`: no g, no slack. The
/// model state at time k is reconstructed from the past window through the
/// observability pseudo-inverse.
class ModelController {
 public:
  ModelController(linsys::KnownSubsystem known, LinearModel model, ControllerConfig config,
                  const Eigen::Ref<const Eigen::VectorXd>& x1_initial);

  StepResult step(const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                  const Eigen::Ref<const Eigen::VectorXd>& y_ref);
  void observe(const Eigen::Ref<const Eigen::VectorXd>& applied_u,
               const Eigen::Ref<const Eigen::VectorXd>& y2_measured,
               const Eigen::Ref<const Eigen::VectorXd>& x1_next);

  /// Model state estimate at the current time from the past window.
  Eigen::VectorXd estimate_state() const;
  bool initialized() const { return filled_ >= config_.n2; }

 private:
  AssembledOcp assemble(const Eigen::Ref<const Eigen::VectorXd>& u_ref,
                        const Eigen::Ref<const Eigen::VectorXd>& y_ref) const;

  linsys::KnownSubsystem known_;
  LinearModel model_;
  ControllerConfig config_;
  Eigen::VectorXd x1_now_;
  Eigen::MatrixXd past_u2_;
  Eigen::MatrixXd past_y2_;
  int filled_ = 0;
  Eigen::VectorXd last_input_;
  std::optional<qp::QpSolution> warm_start_;
  qp::Solver solver_;
};

}  // namespace dfmpc::mpc
