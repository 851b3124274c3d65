#include "dfmpc/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dfmpc/errors.hpp"

namespace dfmpc::qp {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqRhoFactor = 1e3;

double inf_norm(const Eigen::Ref<const VectorXd>& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

double clamp_scaling(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

}  // namespace

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kSolved: return "solved";
    case QpStatus::kMaxIterations: return "max_iterations";
    case QpStatus::kInfeasible: return "infeasible";
  }
  return "unknown";
}

void QuadraticProgram::validate() const {
  const Index d = q.size();
  if (P.rows() != d || P.cols() != d) throw DimensionError("qp: P must be d x d");
  if (Aeq.rows() != beq.size() || (Aeq.rows() > 0 && Aeq.cols() != d)) {
    throw DimensionError("qp: Aeq/beq shape mismatch");
  }
  if (Gin.rows() != hin.size() || (Gin.rows() > 0 && Gin.cols() != d)) {
    throw DimensionError("qp: Gin/hin shape mismatch");
  }
  if (d == 0) return;
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, P.cwiseAbs().maxCoeff())) {
    throw ConfigError("qp: P is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(P, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues()(0) < -1e-8 * std::max(1.0, P.cwiseAbs().maxCoeff())) {
    throw ConfigError("qp: P has a negative eigenvalue");
  }
}

double QuadraticProgram::objective(const Eigen::Ref<const VectorXd>& z) const {
  return 0.5 * z.dot(P * z) + q.dot(z);
}

KktResiduals kkt_residuals(const QuadraticProgram& qp, const Eigen::Ref<const VectorXd>& z,
                           const Eigen::Ref<const VectorXd>& dual_eq,
                           const Eigen::Ref<const VectorXd>& dual_in) {
  if (z.size() != qp.num_vars() || dual_eq.size() != qp.num_eq() ||
      dual_in.size() != qp.num_ineq()) {
    throw DimensionError("kkt_residuals: point or multiplier dimension mismatch");
  }
  KktResiduals r;
  VectorXd stationarity = qp.P * z + qp.q;
  if (qp.num_eq() > 0) {
    r.primal_eq = inf_norm(qp.Aeq * z - qp.beq);
    stationarity.noalias() += qp.Aeq.transpose() * dual_eq;
  }
  if (qp.num_ineq() > 0) {
    const VectorXd slack = qp.hin - qp.Gin * z;
    r.primal_in = std::max(0.0, -slack.minCoeff());
    stationarity.noalias() += qp.Gin.transpose() * dual_in;
    r.complementarity = inf_norm(dual_in.cwiseProduct(slack));
    r.dual = std::max(0.0, -dual_in.minCoeff());
  }
  r.dual = std::max(r.dual, inf_norm(stationarity));
  return r;
}

Tolerances tolerances(const QuadraticProgram& qp, const Eigen::Ref<const VectorXd>& z,
                      const Eigen::Ref<const VectorXd>& dual_eq,
                      const Eigen::Ref<const VectorXd>& dual_in, double abs_tol,
                      double rel_tol) {
  double primal_scale = 0.0;
  double dual_scale = std::max(inf_norm(qp.P * z), inf_norm(qp.q));
  if (qp.num_eq() > 0) {
    primal_scale = std::max({primal_scale, inf_norm(qp.Aeq * z), inf_norm(qp.beq)});
    dual_scale = std::max(dual_scale, inf_norm(qp.Aeq.transpose() * dual_eq));
  }
  if (qp.num_ineq() > 0) {
    primal_scale = std::max({primal_scale, inf_norm(qp.Gin * z), inf_norm(qp.hin)});
    dual_scale = std::max(dual_scale, inf_norm(qp.Gin.transpose() * dual_in));
  }
  Tolerances t;
  t.primal = abs_tol + rel_tol * primal_scale;
  t.dual = abs_tol + rel_tol * dual_scale;
  t.complementarity = t.primal * std::max(1.0, inf_norm(dual_in));
  return t;
}

bool meets(const KktResiduals& r, const Tolerances& t) {
  return r.primal_eq <= t.primal && r.primal_in <= t.primal && r.dual <= t.dual &&
         r.complementarity <= t.complementarity;
}

struct Solver::Impl {
  // Unscaled matrices of the cached setup, for change detection.
  MatrixXd P_raw, Aeq_raw, Gin_raw;
  double setup_rho = 0.0;
  double setup_sigma = 0.0;
  int setup_scaling = -1;
  bool ready = false;

  Index n = 0, r = 0, s = 0, m = 0;
  MatrixXd A_raw;  // [Aeq; Gin]
  MatrixXd Ps, As;
  VectorXd D, E;
  double c = 1.0;
  VectorXd qs, ls, us;
  VectorXd rho_vec;
  double rho = 0.1;
  double sigma = 1e-6;
  Eigen::LLT<MatrixXd> factor;

  bool matrices_match(const QuadraticProgram& qp, const QpSettings& st) const {
    return ready && setup_rho == st.rho && setup_sigma == st.sigma &&
           setup_scaling == st.scaling_iterations && P_raw.rows() == qp.P.rows() &&
           Aeq_raw.rows() == qp.Aeq.rows() && Gin_raw.rows() == qp.Gin.rows() &&
           Aeq_raw.cols() == qp.Aeq.cols() && Gin_raw.cols() == qp.Gin.cols() &&
           P_raw == qp.P && Aeq_raw == qp.Aeq && Gin_raw == qp.Gin;
  }

  void setup(const QuadraticProgram& qp, const QpSettings& st) {
    P_raw = qp.P;
    Aeq_raw = qp.Aeq;
    Gin_raw = qp.Gin;
    setup_rho = st.rho;
    setup_sigma = st.sigma;
    setup_scaling = st.scaling_iterations;

    n = qp.num_vars();
    r = qp.num_eq();
    s = qp.num_ineq();
    m = r + s;
    A_raw.resize(m, n);
    if (r > 0) A_raw.topRows(r) = qp.Aeq;
    if (s > 0) A_raw.bottomRows(s) = qp.Gin;

    Ps = qp.P;
    As = A_raw;
    D = VectorXd::Ones(n);
    E = VectorXd::Ones(m);
    VectorXd dd(n), de(m);
    for (int it = 0; it < st.scaling_iterations; ++it) {
      for (Index j = 0; j < n; ++j) {
        double v = Ps.col(j).lpNorm<Eigen::Infinity>();
        if (m > 0) v = std::max(v, As.col(j).lpNorm<Eigen::Infinity>());
        dd(j) = 1.0 / std::sqrt(clamp_scaling(v));
      }
      for (Index i = 0; i < m; ++i) {
        de(i) = 1.0 / std::sqrt(clamp_scaling(As.row(i).lpNorm<Eigen::Infinity>()));
      }
      Ps = dd.asDiagonal() * Ps * dd.asDiagonal();
      As = de.asDiagonal() * As * dd.asDiagonal();
      D.array() *= dd.array();
      E.array() *= de.array();
    }
    double mean_col = 0.0;
    for (Index j = 0; j < n; ++j) mean_col += Ps.col(j).lpNorm<Eigen::Infinity>();
    mean_col = n > 0 ? mean_col / static_cast<double>(n) : 0.0;
    const double q_norm = inf_norm(D.cwiseProduct(qp.q));
    c = 1.0 / clamp_scaling(std::max(mean_col, q_norm));
    Ps *= c;

    rho = std::clamp(st.rho, kRhoMin, kRhoMax);
    sigma = st.sigma;
    ready = true;
    set_rho(rho);
  }

  void set_rho(double new_rho) {
    rho = std::clamp(new_rho, kRhoMin, kRhoMax);
    rho_vec.resize(m);
    for (Index i = 0; i < m; ++i) rho_vec(i) = i < r ? kEqRhoFactor * rho : rho;
    MatrixXd k = Ps;
    k.diagonal().array() += sigma;
    if (m > 0) {
      const MatrixXd weighted = rho_vec.cwiseSqrt().asDiagonal() * As;
      k.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
    }
    factor.compute(k);
  }

  void load_vectors(const QuadraticProgram& qp) {
    qs = c * D.cwiseProduct(qp.q);
    ls.resize(m);
    us.resize(m);
    for (Index i = 0; i < r; ++i) {
      ls(i) = E(i) * qp.beq(i);
      us(i) = ls(i);
    }
    for (Index i = 0; i < s; ++i) {
      ls(r + i) = -kInf;
      us(r + i) = E(r + i) * qp.hin(i);
    }
  }

  void unscale(const VectorXd& x, const VectorXd& y, QpSolution& out) const {
    out.primal = D.cwiseProduct(x);
    const VectorXd yu = E.cwiseProduct(y) / c;
    out.dual_eq = yu.head(r);
    out.dual_in = yu.tail(s);
  }

  // Solve the equality-constrained problem on the guessed active set.
  bool polish(const QuadraticProgram& qp, const QpSettings& st, const VectorXd& z,
              const VectorXd& y, QpSolution& out) const {
    std::vector<Index> active;
    active.reserve(m);
    for (Index i = 0; i < m; ++i) {
      if (i < r || us(i) - z(i) < y(i)) active.push_back(i);
    }
    const Index k = static_cast<Index>(active.size());
    MatrixXd a_act(k, n);
    VectorXd b_act(k);
    for (Index t = 0; t < k; ++t) {
      a_act.row(t) = As.row(active[t]);
      b_act(t) = us(active[t]);
    }
    const double delta = st.polish_delta;
    MatrixXd kkt = MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = Ps;
    kkt.topLeftCorner(n, n).diagonal().array() += delta;
    kkt.bottomLeftCorner(k, n) = a_act;
    kkt.topRightCorner(n, k) = a_act.transpose();
    kkt.bottomRightCorner(k, k).diagonal().setConstant(-delta);
    Eigen::LDLT<MatrixXd> ldlt(kkt);
    if (ldlt.info() != Eigen::Success) return false;

    VectorXd rhs(n + k);
    rhs << -qs, b_act;
    VectorXd sol = ldlt.solve(rhs);
    for (int it = 0; it < st.polish_refinement; ++it) {
      VectorXd res(n + k);
      res.head(n) = -qs - Ps * sol.head(n) - a_act.transpose() * sol.tail(k);
      res.tail(k) = b_act - a_act * sol.head(n);
      sol += ldlt.solve(res);
    }
    if (!sol.allFinite()) return false;

    VectorXd y_full = VectorXd::Zero(m);
    for (Index t = 0; t < k; ++t) y_full(active[t]) = sol(n + t);
    QpSolution cand;
    unscale(sol.head(n), y_full, cand);
    cand.residuals = kkt_residuals(qp, cand.primal, cand.dual_eq, cand.dual_in);
    const Tolerances tol =
        tolerances(qp, cand.primal, cand.dual_eq, cand.dual_in, st.abs_tol, st.rel_tol);
    if (!meets(cand.residuals, tol)) return false;
    out.primal = std::move(cand.primal);
    out.dual_eq = std::move(cand.dual_eq);
    out.dual_in = std::move(cand.dual_in);
    out.residuals = cand.residuals;
    out.polished = true;
    return true;
  }

  bool primal_infeasible(const VectorXd& dy, double tol) const {
    VectorXd proj = dy;
    for (Index i = r; i < m; ++i) proj(i) = std::max(proj(i), 0.0);
    const VectorXd dyu = E.cwiseProduct(proj);
    const double norm = inf_norm(dyu);
    if (norm < 1e-12) return false;
    const double at = inf_norm(A_raw.transpose() * dyu);
    double support = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double ui = us(i) / E(i);
      const double li = ls(i) / E(i);
      if (dyu(i) > 0.0) support += ui * dyu(i);
      if (dyu(i) < 0.0) support += li * dyu(i);
    }
    return at <= tol * norm && support <= -tol * norm;
  }

  QpSolution run(const QuadraticProgram& qp, const QpSettings& st) {
    QpSolution out;
    VectorXd x = VectorXd::Zero(n), z = VectorXd::Zero(m), y = VectorXd::Zero(m);

    auto finish = [&](QpStatus status, const VectorXd& xs, const VectorXd& ys, int iters) {
      if (!out.polished) {
        unscale(xs, ys, out);
        out.residuals = kkt_residuals(qp, out.primal, out.dual_eq, out.dual_in);
      }
      out.status = status;
      out.iterations = iters;
      out.objective = qp.objective(out.primal);
      return out;
    };

    auto converged = [&](const VectorXd& xs, const VectorXd& ys) {
      QpSolution probe;
      unscale(xs, ys, probe);
      const KktResiduals res = kkt_residuals(qp, probe.primal, probe.dual_eq, probe.dual_in);
      return meets(res, tolerances(qp, probe.primal, probe.dual_eq, probe.dual_in, st.abs_tol,
                                   st.rel_tol));
    };

    if (st.warm_start && st.warm_start->primal.size() == n &&
        st.warm_start->dual_eq.size() == r && st.warm_start->dual_in.size() == s) {
      x = st.warm_start->primal.cwiseQuotient(D);
      VectorXd yw(m);
      yw << st.warm_start->dual_eq, st.warm_start->dual_in;
      y = c * yw.cwiseQuotient(E);
      for (Index i = r; i < m; ++i) y(i) = std::max(y(i), 0.0);
      z = (As * x).cwiseMax(ls).cwiseMin(us);
    }
    // Refine a converged iterate on its active set when possible.
    auto converge = [&](const VectorXd& xs, const VectorXd& zs, const VectorXd& ys, int iters) {
      if (st.polish) polish(qp, st, zs, ys, out);
      return finish(QpStatus::kSolved, xs, ys, iters);
    };

    if (converged(x, y)) return converge(x, z, y, 0);

    std::vector<char> last_failed_active;
    const double alpha = st.alpha;
    for (int iter = 1; iter <= st.max_iter; ++iter) {
      VectorXd rhs = sigma * x - qs;
      if (m > 0) rhs.noalias() += As.transpose() * (rho_vec.cwiseProduct(z) - y);
      const VectorXd xt = factor.solve(rhs);
      const VectorXd x_new = alpha * xt + (1.0 - alpha) * x;
      VectorXd y_new = y;
      if (m > 0) {
        const VectorXd zt = As * xt;
        const VectorXd zrel = alpha * zt + (1.0 - alpha) * z;
        const VectorXd z_new = (zrel + y.cwiseQuotient(rho_vec)).cwiseMax(ls).cwiseMin(us);
        y_new = y + rho_vec.cwiseProduct(zrel - z_new);
        z = z_new;
      }
      const VectorXd dy = y_new - y;
      x = x_new;
      y = y_new;

      const bool check = iter % st.check_interval == 0 || iter == st.max_iter;
      if (check) {
        if (converged(x, y)) return converge(x, z, y, iter);
        if (m > 0 && primal_infeasible(dy, st.infeasibility_tol)) {
          return finish(QpStatus::kInfeasible, x, y, iter);
        }
      }

      if (st.polish && (iter % st.polish_interval == 0 || iter == st.max_iter)) {
        std::vector<char> act(m);
        for (Index i = 0; i < m; ++i) act[i] = (i < r || us(i) - z(i) < y(i)) ? 1 : 0;
        if (act != last_failed_active) {
          if (polish(qp, st, z, y, out)) return finish(QpStatus::kSolved, x, y, iter);
          last_failed_active = std::move(act);
        }
      }

      if (st.adaptive_rho && m > 0 && iter % st.adaptive_rho_interval == 0) {
        const VectorXd ax = As * x;
        const VectorXd px = Ps * x;
        const VectorXd aty = As.transpose() * y;
        const double prim_scale = std::max(inf_norm(ax), inf_norm(z));
        const double dual_scale = std::max({inf_norm(px), inf_norm(aty), inf_norm(qs)});
        const double prim_res = inf_norm(ax - z) / (prim_scale + 1e-10);
        const double dual_res = inf_norm(px + qs + aty) / (dual_scale + 1e-10);
        const double new_rho = rho * std::sqrt(prim_res / (dual_res + 1e-10));
        if (new_rho > 5.0 * rho || new_rho < 0.2 * rho) set_rho(new_rho);
      }
    }
    return finish(QpStatus::kMaxIterations, x, y, st.max_iter);
  }
};

Solver::Solver() : impl_(std::make_unique<Impl>()) {}
Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

QpSolution Solver::solve(const QuadraticProgram& qp, const QpSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  qp.validate();
  if (!impl_->matrices_match(qp, settings)) {
    impl_->setup(qp, settings);
  } else if (impl_->rho != std::clamp(settings.rho, kRhoMin, kRhoMax)) {
    impl_->set_rho(settings.rho);
  }
  impl_->load_vectors(qp);
  QpSolution sol = impl_->run(qp, settings);
  sol.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings) {
  Solver solver;
  return solver.solve(qp, settings);
}

}  // namespace dfmpc::qp
