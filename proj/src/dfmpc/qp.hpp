#pragma once

#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace dfmpc::qp {

/// min 1/2 z'Pz + q'z  s.t.  Aeq z = beq,  Gin z <= hin.
struct QuadraticProgram {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Gin;
  Eigen::VectorXd hin;

  Eigen::Index num_vars() const { return q.size(); }
  Eigen::Index num_eq() const { return beq.size(); }
  Eigen::Index num_ineq() const { return hin.size(); }

  /// Throws DimensionError / ConfigError when the invariants do not hold
  /// (block shapes, symmetry of P within 1e-10, no eigenvalue below -1e-8).
  void validate() const;
  double objective(const Eigen::Ref<const Eigen::VectorXd>& z) const;
};

enum class QpStatus { kSolved, kMaxIterations, kInfeasible };

std::string to_string(QpStatus status);

struct KktResiduals {
  double primal_eq = 0.0;        // ||Aeq z - beq||_inf
  double primal_in = 0.0;        // ||max(Gin z - hin, 0)||_inf
  double dual = 0.0;             // stationarity, plus any negative inequality multiplier
  double complementarity = 0.0;  // max_i |mu_i (hin - Gin z)_i|
};

KktResiduals kkt_residuals(const QuadraticProgram& qp, const Eigen::Ref<const Eigen::VectorXd>& z,
                           const Eigen::Ref<const Eigen::VectorXd>& dual_eq,
                           const Eigen::Ref<const Eigen::VectorXd>& dual_in);

struct WarmStart {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual_eq;
  Eigen::VectorXd dual_in;
};

struct QpSettings {
  double abs_tol = 1e-6;
  double rel_tol = 1e-6;
  int max_iter = 20000;
  std::optional<WarmStart> warm_start;

  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  int scaling_iterations = 10;
  double infeasibility_tol = 1e-6;
  int check_interval = 5;
  bool polish = true;
  int polish_interval = 25;
  double polish_delta = 1e-7;
  int polish_refinement = 5;
};

struct QpSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual_eq;
  Eigen::VectorXd dual_in;
  QpStatus status = QpStatus::kMaxIterations;
  double objective = 0.0;
  KktResiduals residuals;
  int iterations = 0;
  double solve_time = 0.0;  // seconds
  bool polished = false;
};

/// Tolerances a point must meet to be reported as solved. They scale with the
/// magnitudes of the problem data and of the point itself.
struct Tolerances {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
};

Tolerances tolerances(const QuadraticProgram& qp, const Eigen::Ref<const Eigen::VectorXd>& z,
                      const Eigen::Ref<const Eigen::VectorXd>& dual_eq,
                      const Eigen::Ref<const Eigen::VectorXd>& dual_in, double abs_tol,
                      double rel_tol);

bool meets(const KktResiduals& r, const Tolerances& t);

/// Operator-splitting (ADMM) solver with Ruiz equilibration, adaptive step
/// size, primal infeasibility detection and active-set polishing.
///
/// A Solver caches the equilibrated matrices and the factorization. Calling
/// solve() again with a program whose P, Aeq and Gin are unchanged reuses them
/// and only rescales the vectors.
class Solver {
 public:
  Solver();
  ~Solver();
  Solver(Solver&&) noexcept;
  Solver& operator=(Solver&&) noexcept;

  QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings = {});

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot solve. Reentrant; no state is shared between calls.
QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings = {});

}  // namespace dfmpc::qp
