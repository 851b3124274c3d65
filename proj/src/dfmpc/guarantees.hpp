#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dfmpc/linsys.hpp"
#include "dfmpc/mpc.hpp"
#include "dfmpc/trace.hpp"

namespace dfmpc::guarantees {

/// min_j (e_j - E_j y) / ||E_j||_2: positive inside, negative outside.
double signed_distance(const Eigen::Ref<const Eigen::VectorXd>& y,
                       const linsys::PolytopicSet& set);

/// (1 + c1) (c2 (eps (|g|_1 + 1) + |sigma0|_inf) + eps |g|_1 + |sigma|_inf).
double prediction_error_bound(const linsys::BoundConstants& constants, double g_l1,
                              double sigma_inf, double sigma0_inf, double epsilon);

struct SafetyCertificate {
  double d_ref = 0.0;
  double d_safe = 0.0;
  double c_e = 0.0;
  double margin = 0.0;  // d_safe - sqrt(p) c_e
  int p = 0;
};

struct CertificateInputs {
  double d_ref = 0.0;
  double V_max = 0.0;
  double lambda_min_Q = 1.0;
  double lambda_min_T = 1.0;
  double lambda_min_Lambda = 1.0;
  double lambda_min_Gamma = 1.0;
  linsys::BoundConstants constants;
  double epsilon = 0.0;
  Eigen::Index N = 0;
  int p = 1;
};

/// Safety margin obtained by bounding |g|_1 and |sigma|_inf through V_max.
SafetyCertificate safety_certificate(const CertificateInputs& in);

struct DominanceParameters {
  double beta = 0.0;
  double gamma_H = 0.0;
  double alpha_H = 0.0;
  double A_beta = 0.0;
  double A_V = 0.0;
  double c_pe = 0.0;
  double c_delta = 0.0;
  double xi_bar = 0.0;
  double V_max = 0.0;
  double epsilon = 0.0;
  double lambda_min_Q = 0.0;
  double lambda_min_R = 0.0;
  double lambda_min_Lambda = 0.0;
  double lambda_max_Lambda = 0.0;
  double lambda_min_Gamma = 0.0;
  double lambda_max_Gamma = 0.0;
  int L = 0;
  Eigen::Index N = 0;
  int p = 1;
};

/// Fills beta, gamma_H, A_beta and A_V from the primitive fields
/// (c_pe, c_delta, alpha_H, V_max, epsilon, eigenvalue bounds, L, N) and the
/// Sigma2 constant c_sigma2.
DominanceParameters derive_dominance_parameters(DominanceParameters base, double c_sigma2);

struct DominanceResult {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

DominanceResult dominance_check(const DominanceParameters& params, double d_safe, double c_e,
                                double lambda_min_Q, double lambda_max_Gamma);

struct BoundViolation {
  int step = 0;
  int offset = 0;  // prediction index i
  double error = 0.0;
  double bound = 0.0;
};

struct TraceReport {
  int checked_steps = 0;
  std::vector<BoundViolation> violations;
  std::vector<double> bounds;        // per checked step
  std::vector<double> max_errors;    // per checked step, max_i |y(k+i) - y*_i(k)|_inf
  std::vector<double> offsets;       // J_L* - J_s* per logged step
  std::vector<int> decay_violations;  // steps k where the offset failed to decrease by k+n
  double median_ratio = 0.0;         // median of bound / error over steps with error > 0
};

struct TraceCheckSettings {
  double numeric_tol = 1e-6;  // added to the bound to absorb solver accuracy
  double noise_floor = 100.0;  // offsets below noise_floor * eps^2 are not checked for decay
  double decay_tol = 1e-6;
};

/// Replays the true plant open loop from each logged state under the predicted
/// inputs, compares with the predicted outputs against the recomputed error
/// bound, and checks the decay of the optimal cost offset over windows of
/// max(n1, n2) steps. Requires an LTI hidden subsystem.
TraceReport verify_trace(const ClosedLoopLog& log, const linsys::KnownSubsystem& known,
                         const linsys::HiddenSubsystem& hidden,
                         const mpc::ControllerConfig& config,
                         const TraceCheckSettings& settings = {});

/// Data-derived quantities of the dominance inequality for one run.
struct RunQuantities {
  double V_max = 0.0;
  double xi_bar = 0.0;
  double c_pe = 0.0;
  double c_delta = 0.0;
  double alpha_H = 0.0;
};

/// V_max and xi_bar from the log; c_pe from the true offline state sequence;
/// c_delta from the logged offline noise; alpha_H = |H_L(y2^d)|_2.
RunQuantities run_quantities(const ClosedLoopLog& log, const mpc::ControllerConfig& config);

/// Certificate and dominance inequality evaluated with a run's quantities.
struct RunCertificate {
  RunQuantities quantities;
  SafetyCertificate certificate;
  DominanceParameters dominance_parameters;
  DominanceResult dominance;
  bool evaluated = false;  // false when V_max = 0; the V_max -> 0 limit is reported
};

/// d_ref is the signed distance of the reference to the output constraint set.
RunCertificate certify_run(const ClosedLoopLog& log, const linsys::KnownSubsystem& known,
                           const linsys::HiddenSubsystem& hidden,
                           const mpc::ControllerConfig& config, double d_ref);

double lambda_min(const Eigen::Ref<const Eigen::MatrixXd>& w);
double lambda_max(const Eigen::Ref<const Eigen::MatrixXd>& w);

}  // namespace dfmpc::guarantees
