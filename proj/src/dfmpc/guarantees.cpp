#include "dfmpc/guarantees.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dfmpc/behavioral.hpp"
#include "dfmpc/errors.hpp"

namespace dfmpc::guarantees {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0)) throw ConfigError(std::string(name) + " must be nonnegative");
}

double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<MatrixXd> svd(m);
  return svd.singularValues()(0);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

bool same_reference(const StepRecord& a, const StepRecord& b) {
  return a.u_ref == b.u_ref && a.y_ref == b.y_ref;
}

}  // namespace

double lambda_min(const Eigen::Ref<const MatrixXd>& w) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(w, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

double lambda_max(const Eigen::Ref<const MatrixXd>& w) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(w, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(w.rows() - 1);
}

double signed_distance(const Eigen::Ref<const VectorXd>& y, const linsys::PolytopicSet& set) {
  if (y.size() != set.dim()) throw DimensionError("signed_distance: dimension mismatch");
  double dist = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < set.rows(); ++j) {
    const double norm = set.E().row(j).norm();
    if (norm == 0.0) throw ConfigError("signed_distance: polytope has a zero row");
    dist = std::min(dist, (set.e()(j) - set.E().row(j).dot(y)) / norm);
  }
  return dist;
}

double prediction_error_bound(const linsys::BoundConstants& constants, double g_l1,
                              double sigma_inf, double sigma0_inf, double epsilon) {
  require_nonnegative(g_l1, "g_l1");
  require_nonnegative(sigma_inf, "sigma_inf");
  require_nonnegative(sigma0_inf, "sigma0_inf");
  require_nonnegative(epsilon, "epsilon");
  return (1.0 + constants.c_sigma1) *
         (constants.c_sigma2 * (epsilon * (g_l1 + 1.0) + sigma0_inf) + epsilon * g_l1 +
          sigma_inf);
}

SafetyCertificate safety_certificate(const CertificateInputs& in) {
  if (!(in.V_max > 0.0)) throw ConfigError("safety_certificate: V_max must be positive");
  if (!(in.lambda_min_Q > 0.0 && in.lambda_min_T > 0.0 && in.lambda_min_Lambda > 0.0 &&
        in.lambda_min_Gamma > 0.0)) {
    throw ConfigError("safety_certificate: weights must be positive definite");
  }
  require_nonnegative(in.epsilon, "epsilon");
  SafetyCertificate c;
  c.d_ref = in.d_ref;
  c.p = in.p;
  c.d_safe = in.d_ref - (std::sqrt(in.V_max / in.lambda_min_Q) +
                         std::sqrt(in.V_max / in.lambda_min_T));
  const double g_bound =
      std::sqrt(static_cast<double>(in.N) * in.V_max / in.lambda_min_Lambda);
  const double sigma_bound = std::sqrt(in.V_max / in.lambda_min_Gamma);
  c.c_e = prediction_error_bound(in.constants, g_bound, sigma_bound, sigma_bound, in.epsilon);
  c.margin = c.d_safe - std::sqrt(static_cast<double>(in.p)) * c.c_e;
  return c;
}

DominanceParameters derive_dominance_parameters(DominanceParameters d, double c_sigma2) {
  if (!(d.lambda_min_R > 0.0 && d.lambda_min_Lambda > 0.0 && d.lambda_min_Gamma > 0.0)) {
    throw ConfigError("dominance parameters: weights must be positive definite");
  }
  const double sqrt_l = std::sqrt(static_cast<double>(d.L));
  const double sqrt_n = std::sqrt(static_cast<double>(d.N));
  const double sqrt_lambda = std::sqrt(d.lambda_min_Lambda);
  d.beta = std::sqrt(d.V_max / d.lambda_min_R);
  d.gamma_H = std::sqrt(d.lambda_max_Lambda * d.c_pe);
  d.A_beta = d.gamma_H / sqrt_lambda * (d.c_delta * d.epsilon + sqrt_l * c_sigma2 * d.alpha_H * sqrt_n);
  d.A_V = sqrt_l * c_sigma2 * (d.alpha_H * sqrt_n / sqrt_lambda + d.epsilon * sqrt_n / sqrt_lambda) +
          sqrt_l * c_sigma2 / std::sqrt(d.lambda_min_Gamma);
  return d;
}

DominanceResult dominance_check(const DominanceParameters& params, double d_safe, double c_e,
                                double lambda_min_Q, double lambda_max_Gamma) {
  const double gap = d_safe - std::sqrt(static_cast<double>(params.p)) * c_e;
  DominanceResult r;
  r.lhs = lambda_min_Q * gap * gap;
  const double bx = params.beta + params.xi_bar;
  const double slack = params.A_beta * bx + params.A_V * std::sqrt(params.V_max);
  r.rhs = params.gamma_H * params.gamma_H * bx * bx + params.V_max +
          lambda_max_Gamma * slack * slack;
  // The squared gap alone does not certify anything when the margin is negative.
  r.holds = gap >= 0.0 && r.lhs >= r.rhs;
  return r;
}

TraceReport verify_trace(const ClosedLoopLog& log, const linsys::KnownSubsystem& known,
                         const linsys::HiddenSubsystem& hidden,
                         const mpc::ControllerConfig& config, const TraceCheckSettings& settings) {
  TraceReport report;
  if (!hidden.is_lti()) throw IllPosedError("verify_trace: hidden subsystem must be LTI");
  if (log.steps.empty()) return report;
  const linsys::BoundConstants constants = linsys::prop1_constants(known, hidden, config.L);
  const double eps = log.epsilon;

  std::vector<double> ratios;
  for (const StepRecord& rec : log.steps) {
    if (!rec.feasible || rec.held || rec.u_pred.cols() == 0) continue;
    if (rec.x1.size() != known.state_dim() || rec.x2.size() != hidden.state_dim()) {
      throw DimensionError("verify_trace: record lacks ground-truth states");
    }
    const Index m1 = known.input_dim();
    const Index m2 = hidden.input_dim();
    VectorXd x1 = rec.x1, x2 = rec.x2;
    double max_err = 0.0;
    const double bound =
        prediction_error_bound(constants, rec.g_l1, rec.sigma_inf, rec.sigma0_inf, eps);
    const double allowed =
        bound + settings.numeric_tol * std::max(1.0, rec.y_pred.cwiseAbs().maxCoeff());
    for (Index i = 0; i < rec.u_pred.cols(); ++i) {
      const VectorXd y2 = hidden.C2 * x2;
      VectorXd y(known.output_dim() + y2.size());
      y << known.C1 * x1, y2;
      const double err = (y - rec.y_pred.col(i)).lpNorm<Eigen::Infinity>();
      max_err = std::max(max_err, err);
      if (err > allowed) {
        report.violations.push_back({rec.step, static_cast<int>(i), err, bound});
      }
      const VectorXd u1 = rec.u_pred.col(i).head(m1);
      const VectorXd u2 = rec.u_pred.col(i).tail(m2);
      x1 = known.A1 * x1 + known.B1 * u1 + known.E1 * y2;
      x2 = hidden.A2 * x2 + hidden.B2 * u2;
    }
    ++report.checked_steps;
    report.bounds.push_back(bound);
    report.max_errors.push_back(max_err);
    if (max_err > 0.0) ratios.push_back(bound / max_err);
  }
  report.median_ratio = median(ratios);

  const int n = std::max(config.n1, config.n2);
  report.offsets.reserve(log.steps.size());
  for (const StepRecord& rec : log.steps) report.offsets.push_back(rec.cost - rec.eq_cost);
  const double floor = settings.noise_floor * eps * eps;
  for (std::size_t k = 0; k + n < log.steps.size(); ++k) {
    const StepRecord& a = log.steps[k];
    const StepRecord& b = log.steps[k + n];
    if (!a.feasible || !b.feasible || a.held || b.held) continue;
    bool constant_ref = true;
    for (std::size_t j = k + 1; j <= k + n; ++j) {
      constant_ref = constant_ref && same_reference(a, log.steps[j]);
    }
    if (!constant_ref) continue;
    const double va = report.offsets[k], vb = report.offsets[k + n];
    if (va > floor && vb > va + settings.decay_tol) report.decay_violations.push_back(a.step);
  }
  return report;
}

RunQuantities run_quantities(const ClosedLoopLog& log, const mpc::ControllerConfig& config) {
  RunQuantities q;
  const int n2 = config.n2;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const StepRecord& rec = log.steps[k];
    if (rec.feasible) q.V_max = std::max(q.V_max, rec.cost - rec.eq_cost);
    if (k < static_cast<std::size_t>(n2) || rec.eq_u.size() == 0) continue;
    // xi = (x1, u2 window, y2 window) against its value at the reachable equilibrium.
    const Index m2 = log.dataset.input_dim(), p2 = log.dataset.output_dim();
    double sq = (rec.x1 - rec.eq_x1).squaredNorm();
    for (int j = 1; j <= n2; ++j) {
      const StepRecord& past = log.steps[k - j];
      sq += (past.u.tail(m2) - rec.eq_u.tail(m2)).squaredNorm();
      sq += (past.y_measured.tail(p2) - rec.eq_y.tail(p2)).squaredNorm();
    }
    q.xi_bar = std::max(q.xi_bar, std::sqrt(sq));
  }

  const auto& ds = log.dataset;
  const int depth = ds.hankel_depth;
  const Index cols = ds.columns();
  if (log.offline_states.cols() >= cols && cols > 0) {
    MatrixXd hux(ds.u_hankel.entries().rows() + log.offline_states.rows(), cols);
    hux << ds.u_hankel.entries(), log.offline_states.leftCols(cols);
    Eigen::BDCSVD<MatrixXd> svd(hux);
    const double smin = svd.singularValues().minCoeff();
    q.c_pe = smin > 0.0 ? 1.0 / (smin * smin) : std::numeric_limits<double>::infinity();
  }
  if (log.offline_noise.cols() >= depth && depth > 0) {
    q.c_delta = spectral_norm(behavioral::build_hankel(log.offline_noise, depth).entries());
  } else {
    q.c_delta = std::sqrt(static_cast<double>(depth) * static_cast<double>(cols)) * log.epsilon;
  }
  if (ds.data.length() >= config.L) {
    q.alpha_H = spectral_norm(behavioral::build_hankel(ds.data.outputs, config.L).entries());
  }
  return q;
}

RunCertificate certify_run(const ClosedLoopLog& log, const linsys::KnownSubsystem& known,
                           const linsys::HiddenSubsystem& hidden,
                           const mpc::ControllerConfig& config, double d_ref) {
  RunCertificate out;
  out.quantities = run_quantities(log, config);
  const RunQuantities& q = out.quantities;
  const mpc::Weights& w = config.weights;
  const linsys::BoundConstants constants = linsys::prop1_constants(known, hidden, config.L);
  const int p = static_cast<int>(known.output_dim() + hidden.output_dim());

  CertificateInputs ci;
  ci.d_ref = d_ref;
  ci.V_max = q.V_max;
  ci.lambda_min_Q = lambda_min(w.Q);
  ci.lambda_min_T = lambda_min(w.T);
  ci.lambda_min_Lambda = w.Lambda;
  ci.lambda_min_Gamma = lambda_min(w.Gamma);
  ci.constants = constants;
  ci.epsilon = log.epsilon;
  ci.N = log.dataset.data.length();
  ci.p = p;
  out.evaluated = q.V_max > 0.0;
  if (out.evaluated) {
    out.certificate = safety_certificate(ci);
  } else {
    SafetyCertificate& c = out.certificate;
    c.d_ref = d_ref;
    c.p = p;
    c.d_safe = d_ref;
    c.c_e = prediction_error_bound(constants, 0.0, 0.0, 0.0, log.epsilon);
    c.margin = c.d_safe - std::sqrt(static_cast<double>(p)) * c.c_e;
  }

  DominanceParameters d;
  d.c_pe = q.c_pe;
  d.c_delta = q.c_delta;
  d.alpha_H = q.alpha_H;
  d.xi_bar = q.xi_bar;
  d.V_max = std::max(q.V_max, 0.0);
  d.epsilon = log.epsilon;
  d.lambda_min_Q = ci.lambda_min_Q;
  d.lambda_min_R = lambda_min(w.R);
  d.lambda_min_Lambda = w.Lambda;
  d.lambda_max_Lambda = w.Lambda;
  d.lambda_min_Gamma = ci.lambda_min_Gamma;
  d.lambda_max_Gamma = lambda_max(w.Gamma);
  d.L = config.L;
  d.N = ci.N;
  d.p = p;
  out.dominance_parameters = derive_dominance_parameters(d, constants.c_sigma2);
  out.dominance = dominance_check(out.dominance_parameters, out.certificate.d_safe,
                                  out.certificate.c_e, ci.lambda_min_Q, d.lambda_max_Gamma);
  return out;
}

}  // namespace dfmpc::guarantees
