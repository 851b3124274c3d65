#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfmpc/behavioral.hpp"
#include "dfmpc/qp.hpp"

namespace dfmpc {

/// Everything recorded for one closed-loop step k.
struct StepRecord {
  int step = 0;
  Eigen::VectorXd u;           // applied input [u1; u2]
  Eigen::VectorXd y_measured;  // [y1; y2 + delta]
  Eigen::VectorXd y_true;      // [y1; y2]
  Eigen::VectorXd u_ref;
  Eigen::VectorXd y_ref;
  Eigen::VectorXd x1;     // true Sigma1 state at k
  Eigen::VectorXd x2;     // true Sigma2 state at k
  Eigen::VectorXd noise;  // measurement noise on y2 at k

  double cost = 0.0;     // optimal OCP value
  double eq_cost = 0.0;  // optimal reachable-equilibrium value for the current reference
  double g_l1 = 0.0;
  double sigma_inf = 0.0;
  double sigma0_inf = 0.0;  // slack restricted to the past window
  qp::QpStatus status = qp::QpStatus::kMaxIterations;
  bool feasible = false;
  bool held = false;
  int iterations = 0;
  double solve_ms = 0.0;

  Eigen::MatrixXd u_pred;  // m x L
  Eigen::MatrixXd y_pred;  // p x L
  Eigen::VectorXd u_s;  // artificial equilibrium chosen by the OCP
  Eigen::VectorXd y_s;
  Eigen::VectorXd x1_s;

  // Optimal reachable equilibrium for the current reference and dataset.
  Eigen::VectorXd eq_u;
  Eigen::VectorXd eq_y;
  Eigen::VectorXd eq_x1;
};

struct ClosedLoopLog {
  std::vector<StepRecord> steps;
  behavioral::BehavioralDataset dataset;  // offline dataset handed to the controller
  Eigen::MatrixXd offline_noise;          // p2 x N
  Eigen::MatrixXd offline_states;         // n2 x N, true Sigma2 state at each sample
  double epsilon = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

}  // namespace dfmpc
