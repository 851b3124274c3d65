#include "dfmpc/mpc.hpp"

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "dfmpc/errors.hpp"

namespace dfmpc::mpc {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kEquilibriumRegularizer = 1e-8;

// A linear expression sum_j M_j z[col_j : col_j + M_j.cols()].
struct Term {
  Index col;
  MatrixXd coeff;
};
using Expr = std::vector<Term>;

Expr operator+(Expr a, const Expr& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Expr scaled(const MatrixXd& left, const Expr& e) {
  Expr out;
  out.reserve(e.size());
  for (const Term& t : e) out.push_back({t.col, left * t.coeff});
  return out;
}

// Dense constraint rows accumulated block by block.
class RowBuilder {
 public:
  explicit RowBuilder(Index nvar) : nvar_(nvar) {}

  void add(const Expr& e, const VectorXd& rhs) {
    const Index rows = rhs.size();
    if (rows == 0) return;
    Block b{rows, e, rhs};
    blocks_.push_back(std::move(b));
    total_ += rows;
  }

  void finish(MatrixXd& mat, VectorXd& vec) const {
    mat = MatrixXd::Zero(total_, nvar_);
    vec.resize(total_);
    Index row = 0;
    for (const Block& b : blocks_) {
      for (const Term& t : b.expr) {
        if (t.coeff.size() == 0) continue;
        mat.block(row, t.col, b.rows, t.coeff.cols()) += t.coeff;
      }
      vec.segment(row, b.rows) = b.rhs;
      row += b.rows;
    }
  }

 private:
  struct Block {
    Index rows;
    Expr expr;
    VectorXd rhs;
  };
  Index nvar_;
  Index total_ = 0;
  std::vector<Block> blocks_;
};

// Accumulates sum ||expr - offset||_W^2 as 1/2 z'Pz + q'z + constant.
struct CostBuilder {
  MatrixXd P;
  VectorXd q;
  double constant = 0.0;

  explicit CostBuilder(Index nvar) : P(MatrixXd::Zero(nvar, nvar)), q(VectorXd::Zero(nvar)) {}

  void add(const Expr& e, const VectorXd& offset, const MatrixXd& w) {
    for (const Term& a : e) {
      if (a.coeff.size() == 0) continue;
      const MatrixXd wa = w * a.coeff;
      for (const Term& b : e) {
        if (b.coeff.size() == 0) continue;
        P.block(b.col, a.col, b.coeff.cols(), a.coeff.cols()) += 2.0 * b.coeff.transpose() * wa;
      }
      q.segment(a.col, a.coeff.cols()) -= 2.0 * wa.transpose() * offset;
    }
    constant += offset.dot(w * offset);
  }
};

MatrixXd eye(Index n) { return MatrixXd::Identity(n, n); }

Expr var(Index col, Index n) { return {{col, eye(n)}}; }

void check_pd(const MatrixXd& w, Index dim, const char* name) {
  if (w.rows() != dim || w.cols() != dim) {
    throw DimensionError(std::string("weight ") + name + " has the wrong shape");
  }
  if (dim == 0) return;
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ConfigError(std::string("weight ") + name + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(w, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues()(0) <= 1e-10 * scale) {
    throw ConfigError(std::string("weight ") + name + " is not positive definite");
  }
}

// Indices shared by the data-driven and the model-based OCP. y2(i) is given
// as an expression because it is a variable in one and C x2(i) in the other.
struct CommonLayout {
  int L = 0, n2 = 0;
  Index m1 = 0, m2 = 0, p1 = 0, p2 = 0, n1 = 0;
  std::function<Index(int)> u1_at, u2_at, x1_at;
  std::function<Expr(int)> y2_expr;
  Index us = 0, ys = 0, x1s = 0;
};

void add_common(const ControllerConfig& config, const linsys::KnownSubsystem& known,
                const CommonLayout& c, const VectorXd& x1_now, const VectorXd& u_ref,
                const VectorXd& y_ref, RowBuilder& eq, RowBuilder& in, CostBuilder& cost) {
  const Index m = c.m1 + c.m2;
  const Index p = c.p1 + c.p2;
  const Weights& w = config.weights;

  // Selectors splitting u and y into their two blocks.
  MatrixXd top_m = MatrixXd::Zero(m, c.m1), bot_m = MatrixXd::Zero(m, c.m2);
  top_m.topRows(c.m1) = eye(c.m1);
  bot_m.bottomRows(c.m2) = eye(c.m2);
  MatrixXd top_p = MatrixXd::Zero(p, c.p1), bot_p = MatrixXd::Zero(p, c.p2);
  top_p.topRows(c.p1) = eye(c.p1);
  bot_p.bottomRows(c.p2) = eye(c.p2);

  auto u_expr = [&](int i) {
    return Expr{{c.u1_at(i), top_m}, {c.u2_at(i), bot_m}};
  };
  auto y_expr = [&](int i) {
    return Expr{{c.x1_at(i), top_p * known.C1}} + scaled(bot_p, c.y2_expr(i));
  };
  const Expr us_e = var(c.us, m);
  const Expr ys_e = var(c.ys, p);
  const Expr u1s_e{{c.us, eye(m).topRows(c.m1)}};
  const Expr u2s_e{{c.us, eye(m).bottomRows(c.m2)}};
  const Expr y1s_e{{c.ys, eye(p).topRows(c.p1)}};
  const Expr y2s_e{{c.ys, eye(p).bottomRows(c.p2)}};

  // Sigma1 initialization, rollout and terminal equilibrium.
  eq.add(var(c.x1_at(0), c.n1), x1_now);
  for (int i = 0; i < c.L; ++i) {
    eq.add(Expr{{c.x1_at(i + 1), eye(c.n1)}, {c.x1_at(i), -known.A1}, {c.u1_at(i), -known.B1}} +
               scaled(-known.E1, c.y2_expr(i)),
           VectorXd::Zero(c.n1));
  }
  eq.add(Expr{{c.x1_at(c.L), eye(c.n1)}, {c.x1s, -eye(c.n1)}}, VectorXd::Zero(c.n1));
  eq.add(Expr{{c.x1s, eye(c.n1) - known.A1}} + scaled(-known.B1, u1s_e) +
             scaled(-known.E1, y2s_e),
         VectorXd::Zero(c.n1));
  eq.add(y1s_e + Expr{{c.x1s, -known.C1}}, VectorXd::Zero(c.p1));

  // Constant Sigma2 tail over the last n2 predicted samples.
  for (int i = c.L - c.n2; i < c.L; ++i) {
    eq.add(Expr{{c.u2_at(i), eye(c.m2)}} + scaled(-eye(c.m2), u2s_e), VectorXd::Zero(c.m2));
    eq.add(c.y2_expr(i) + scaled(-eye(c.p2), y2s_e), VectorXd::Zero(c.p2));
  }

  const auto& uset = config.input_set;
  const auto& yset = config.output_set;
  for (int i = 0; i < c.L; ++i) {
    in.add(scaled(uset.E(), u_expr(i)), uset.e());
    in.add(scaled(yset.E(), y_expr(i)), yset.e());
  }
  in.add(scaled(uset.E(), us_e), uset.e());
  in.add(scaled(yset.E(), ys_e), yset.e());

  for (int i = 0; i < c.L; ++i) {
    cost.add(y_expr(i) + scaled(-eye(p), ys_e), VectorXd::Zero(p), w.Q);
    cost.add(u_expr(i) + scaled(-eye(m), us_e), VectorXd::Zero(m), w.R);
  }
  cost.add(ys_e, y_ref, w.T);
  cost.add(us_e, u_ref, w.S);
}

qp::QpSolution run_qp(const qp::QuadraticProgram& program, const qp::QpSettings& base,
                      const std::optional<qp::QpSolution>& warm, qp::Solver* solver) {
  qp::QpSettings settings = base;
  if (warm && warm->primal.size() == program.num_vars() &&
      warm->dual_eq.size() == program.num_eq() && warm->dual_in.size() == program.num_ineq()) {
    settings.warm_start = qp::WarmStart{warm->primal, warm->dual_eq, warm->dual_in};
  }
  if (solver != nullptr) return solver->solve(program, settings);
  return qp::solve(program, settings);
}

void push_window(MatrixXd& window, const VectorXd& sample) {
  const Index n = window.cols();
  if (n == 0) return;
  if (n > 1) window.leftCols(n - 1) = window.rightCols(n - 1).eval();
  window.col(n - 1) = sample;
}

}  // namespace

std::string to_string(InfeasibilityPolicy policy) {
  return policy == InfeasibilityPolicy::kHoldLast ? "hold_last" : "error";
}

InfeasibilityPolicy infeasibility_policy_from_string(const std::string& name) {
  if (name == "hold_last") return InfeasibilityPolicy::kHoldLast;
  if (name == "error") return InfeasibilityPolicy::kError;
  throw ConfigError("unknown infeasibility policy '" + name + "'");
}

Weights default_weights(Index m, Index p, Index p2, double epsilon, Index data_length) {
  Weights w;
  w.Q = eye(p);
  w.R = 0.1 * eye(m);
  w.S = 0.1 * eye(m);
  w.T = 10.0 * eye(p);
  const double gamma = epsilon > 0.0 ? 1e4 * (1.0 + 1.0 / epsilon) : 1e4 * 1e6;
  w.Gamma = gamma * eye(p2);
  w.Lambda = epsilon > 0.0 ? 1e-2 * epsilon * epsilon * static_cast<double>(data_length) : 1e-4;
  return w;
}

void ControllerConfig::validate(Index m, Index p, Index p2) const {
  if (n2 < 1 || n1 < 0) throw ConfigError("order estimates must satisfy n1 >= 0, n2 >= 1");
  if (L < 2 * std::max(n1, n2)) throw ConfigError("horizon must satisfy L >= 2 max(n1, n2)");
  if (L < n2) throw ConfigError("horizon shorter than the terminal tail");
  check_pd(weights.Q, p, "Q");
  check_pd(weights.R, m, "R");
  check_pd(weights.S, m, "S");
  check_pd(weights.T, p, "T");
  check_pd(weights.Gamma, p2, "Gamma");
  if (!(weights.Lambda > 0.0)) throw ConfigError("weight Lambda must be positive");
  if (input_set.rows() == 0 || input_set.dim() != m) {
    throw DimensionError("input set must be a polytope over u = [u1; u2]");
  }
  if (output_set.rows() == 0 || output_set.dim() != p) {
    throw DimensionError("output set must be a polytope over y = [y1; y2]");
  }
  if (!(noise_bound >= 0.0)) throw ConfigError("noise bound must be nonnegative");
}

ControllerState ControllerState::Create(const linsys::KnownSubsystem& known,
                                        const ControllerConfig& config,
                                        behavioral::BehavioralDataset dataset,
                                        const Eigen::Ref<const VectorXd>& x1_initial) {
  if (dataset.hankel_depth != config.L + config.n2) {
    throw DimensionError("dataset Hankel depth must equal L + n2");
  }
  if (dataset.output_dim() != known.coupling_dim()) {
    throw DimensionError("dataset output dimension does not match the coupling input of E1");
  }
  if (x1_initial.size() != known.state_dim()) throw DimensionError("x1 has the wrong size");
  const Index m = known.input_dim() + dataset.input_dim();
  const Index p = known.output_dim() + dataset.output_dim();
  config.validate(m, p, dataset.output_dim());
  ControllerState s;
  s.x1_now = x1_initial;
  s.past_u2 = MatrixXd::Zero(dataset.input_dim(), config.n2);
  s.past_y2 = MatrixXd::Zero(dataset.output_dim(), config.n2);
  s.last_input = VectorXd::Zero(m);
  s.dataset = std::move(dataset);
  return s;
}

OcpLayout OcpLayout::Make(Index ncol, int L, int n2, Index m1, Index m2, Index p1, Index p2,
                          Index n1) {
  OcpLayout l;
  l.ncol = ncol;
  l.L = L;
  l.n2 = n2;
  l.m1 = m1;
  l.m2 = m2;
  l.p1 = p1;
  l.p2 = p2;
  l.n1 = n1;
  Index at = 0;
  l.g = at;
  at += ncol;
  l.u1 = at;
  at += L * m1;
  l.u2 = at;
  at += (L + n2) * m2;
  l.y2 = at;
  at += (L + n2) * p2;
  l.x1 = at;
  at += (L + 1) * n1;
  l.us = at;
  at += m1 + m2;
  l.ys = at;
  at += p1 + p2;
  l.x1s = at;
  at += n1;
  l.sigma = at;
  at += (L + n2) * p2;
  l.size = at;
  return l;
}

EquilibriumPoint reachable_equilibrium(const behavioral::BehavioralDataset& dataset,
                                       const linsys::KnownSubsystem& known,
                                       const Eigen::Ref<const VectorXd>& u_ref,
                                       const Eigen::Ref<const VectorXd>& y_ref,
                                       const ControllerConfig& config) {
  // n2 + 1 repetitions: a window of n2 samples can be matched by a free
  // initial state and does not pin (u_s, y_s) to an equilibrium.
  const int n = config.n2 + 1;
  if (dataset.hankel_depth < n) throw DimensionError("dataset Hankel depth is below n2 + 1");
  const Index m1 = known.input_dim(), m2 = dataset.input_dim();
  const Index p1 = known.output_dim(), p2 = dataset.output_dim();
  const Index n1 = known.state_dim();
  const Index m = m1 + m2, p = p1 + p2;
  if (p2 != known.coupling_dim()) throw DimensionError("E1 does not match the Sigma2 output");
  if (u_ref.size() != m || y_ref.size() != p) throw DimensionError("reference size mismatch");
  config.validate(m, p, p2);

  const Index ncol = dataset.columns();
  const Index g0 = 0, us = ncol, ys = us + m, x1s = ys + p, nvar = x1s + n1;
  RowBuilder eq(nvar), in(nvar);
  CostBuilder cost(nvar);

  MatrixXd tile_u(n * m2, m), tile_y(n * p2, p);
  for (int i = 0; i < n; ++i) {
    tile_u.middleRows(i * m2, m2) = eye(m).bottomRows(m2);
    tile_y.middleRows(i * p2, p2) = eye(p).bottomRows(p2);
  }
  eq.add(Expr{{g0, dataset.u_hankel.block_rows(0, n)}, {us, -tile_u}}, VectorXd::Zero(n * m2));
  eq.add(Expr{{g0, dataset.y_hankel.block_rows(0, n)}, {ys, -tile_y}}, VectorXd::Zero(n * p2));
  eq.add(Expr{{x1s, eye(n1) - known.A1},
              {us, -known.B1 * eye(m).topRows(m1)},
              {ys, -known.E1 * eye(p).bottomRows(p2)}},
         VectorXd::Zero(n1));
  eq.add(Expr{{ys, eye(p).topRows(p1)}, {x1s, -known.C1}}, VectorXd::Zero(p1));
  if (config.affine_data) {
    eq.add(Expr{{g0, MatrixXd::Ones(1, ncol)}}, VectorXd::Ones(1));
  }
  in.add(Expr{{us, config.input_set.E()}}, config.input_set.e());
  in.add(Expr{{ys, config.output_set.E()}}, config.output_set.e());
  cost.add(var(us, m), u_ref, config.weights.S);
  cost.add(var(ys, p), y_ref, config.weights.T);
  if (config.equilibrium_regularizer) {
    cost.add(var(g0, ncol), VectorXd::Zero(ncol), kEquilibriumRegularizer * eye(ncol));
  }

  qp::QuadraticProgram program;
  program.P = std::move(cost.P);
  program.q = std::move(cost.q);
  eq.finish(program.Aeq, program.beq);
  in.finish(program.Gin, program.hin);
  const qp::QpSolution sol = qp::solve(program, config.qp);
  if (sol.status != qp::QpStatus::kSolved) {
    throw InfeasibleError("reachable equilibrium problem not solved (" +
                          qp::to_string(sol.status) + ")");
  }
  EquilibriumPoint e;
  e.g_s = sol.primal.segment(g0, ncol);
  e.u_s = sol.primal.segment(us, m);
  e.y_s = sol.primal.segment(ys, p);
  e.x1_s = sol.primal.segment(x1s, n1);
  const VectorXd du = e.u_s - u_ref, dy = e.y_s - y_ref;
  e.cost = du.dot(config.weights.S * du) + dy.dot(config.weights.T * dy);
  return e;
}

AssembledOcp assemble_ocp(const ControllerConfig& config, const ControllerState& state,
                          const linsys::KnownSubsystem& known,
                          const Eigen::Ref<const VectorXd>& u_ref,
                          const Eigen::Ref<const VectorXd>& y_ref) {
  const auto& ds = state.dataset;
  if (ds.hankel_depth != config.L + config.n2) {
    throw DimensionError("dataset Hankel depth must equal L + n2");
  }
  if (!state.initialized()) throw ConfigError("past window not filled yet");
  const OcpLayout lay = OcpLayout::Make(ds.columns(), config.L, config.n2, known.input_dim(),
                                        ds.input_dim(), known.output_dim(), ds.output_dim(),
                                        known.state_dim());
  if (u_ref.size() != lay.m() || y_ref.size() != lay.p()) {
    throw DimensionError("reference size mismatch");
  }
  const int L = lay.L, n2 = lay.n2;
  RowBuilder eq(lay.size), in(lay.size);
  CostBuilder cost(lay.size);

  CommonLayout c;
  c.L = L;
  c.n2 = n2;
  c.m1 = lay.m1;
  c.m2 = lay.m2;
  c.p1 = lay.p1;
  c.p2 = lay.p2;
  c.n1 = lay.n1;
  c.u1_at = [&](int i) { return lay.u1_at(i); };
  c.u2_at = [&](int i) { return lay.u2_at(i); };
  c.x1_at = [&](int i) { return lay.x1_at(i); };
  c.y2_expr = [&](int i) { return var(lay.y2_at(i), lay.p2); };
  c.us = lay.us;
  c.ys = lay.ys;
  c.x1s = lay.x1s;
  add_common(config, known, c, state.x1_now, u_ref, y_ref, eq, in, cost);

  // Data-driven Sigma2 model with slack on the whole output window.
  const Index nu2 = (L + n2) * lay.m2, ny2 = (L + n2) * lay.p2;
  eq.add(Expr{{lay.g, ds.u_hankel.entries()}, {lay.u2, -eye(nu2)}}, VectorXd::Zero(nu2));
  eq.add(Expr{{lay.g, ds.y_hankel.entries()}, {lay.y2, -eye(ny2)}, {lay.sigma, -eye(ny2)}},
         VectorXd::Zero(ny2));
  if (config.affine_data) {
    eq.add(Expr{{lay.g, MatrixXd::Ones(1, lay.ncol)}}, VectorXd::Ones(1));
  }
  for (int j = 0; j < n2; ++j) {
    eq.add(var(lay.u2_at(j - n2), lay.m2), state.past_u2.col(j));
    eq.add(var(lay.y2_at(j - n2), lay.p2), state.past_y2.col(j));
  }

  MatrixXd gamma_blocks = MatrixXd::Zero(ny2, ny2);
  for (int i = 0; i < L + n2; ++i) {
    gamma_blocks.block(i * lay.p2, i * lay.p2, lay.p2, lay.p2) = config.weights.Gamma;
  }
  cost.add(var(lay.sigma, ny2), VectorXd::Zero(ny2), gamma_blocks);
  cost.P.block(lay.g, lay.g, lay.ncol, lay.ncol).diagonal().array() +=
      2.0 * config.weights.Lambda;

  AssembledOcp out;
  out.layout = lay;
  out.constant = cost.constant;
  out.qp.P = std::move(cost.P);
  out.qp.q = std::move(cost.q);
  eq.finish(out.qp.Aeq, out.qp.beq);
  in.finish(out.qp.Gin, out.qp.hin);
  return out;
}

OcpSolution extract_solution(const AssembledOcp& ocp, const linsys::KnownSubsystem& known,
                             qp::QpSolution qp_solution) {
  const OcpLayout& l = ocp.layout;
  const VectorXd& z = qp_solution.primal;
  OcpSolution s;
  s.g = z.segment(l.g, l.ncol);
  s.u2_window = Eigen::Map<const MatrixXd>(z.data() + l.u2, l.m2, l.L + l.n2);
  s.y2_window = Eigen::Map<const MatrixXd>(z.data() + l.y2, l.p2, l.L + l.n2);
  s.x1_traj = Eigen::Map<const MatrixXd>(z.data() + l.x1, l.n1, l.L + 1);
  s.sigma = z.segment(l.sigma, (l.L + l.n2) * l.p2);
  s.u_traj.resize(l.m(), l.L);
  s.y_traj.resize(l.p(), l.L);
  for (int i = 0; i < l.L; ++i) {
    s.u_traj.col(i) << z.segment(l.u1_at(i), l.m1), s.u2_window.col(i + l.n2);
    s.y_traj.col(i) << known.C1 * s.x1_traj.col(i), s.y2_window.col(i + l.n2);
  }
  s.artificial_eq.u_s = z.segment(l.us, l.m());
  s.artificial_eq.y_s = z.segment(l.ys, l.p());
  s.artificial_eq.x1_s = z.segment(l.x1s, l.n1);
  s.cost = qp_solution.objective + ocp.constant;
  s.artificial_eq.cost = s.cost;
  s.qp = std::move(qp_solution);
  return s;
}

double OcpInvariantResiduals::max() const {
  return std::max({hankel, initialization, terminal_tail, terminal_state});
}

OcpInvariantResiduals check_ocp_invariants(const OcpSolution& solution,
                                           const ControllerConfig& config,
                                           const ControllerState& state) {
  const auto& ds = state.dataset;
  const int n2 = config.n2, L = config.L;
  OcpInvariantResiduals r;
  const VectorXd u2 = solution.u2_window.reshaped();
  const VectorXd y2 = solution.y2_window.reshaped();
  r.hankel = std::max((ds.u_hankel.entries() * solution.g - u2).lpNorm<Eigen::Infinity>(),
                      (ds.y_hankel.entries() * solution.g - y2 - solution.sigma)
                          .lpNorm<Eigen::Infinity>());
  const Index m2 = solution.u2_window.rows(), p2 = solution.y2_window.rows();
  double init = 0.0;
  if (solution.x1_traj.size() > 0) {
    init = (solution.x1_traj.col(0) - state.x1_now).lpNorm<Eigen::Infinity>();
  }
  init = std::max(init, (solution.u2_window.leftCols(n2) - state.past_u2).cwiseAbs().maxCoeff());
  init = std::max(init, (solution.y2_window.leftCols(n2) - state.past_y2).cwiseAbs().maxCoeff());
  r.initialization = init;
  const VectorXd u2s = solution.artificial_eq.u_s.tail(m2);
  const VectorXd y2s = solution.artificial_eq.y_s.tail(p2);
  for (int i = L - n2; i < L; ++i) {
    r.terminal_tail = std::max(r.terminal_tail,
                               (solution.u2_window.col(i + n2) - u2s).lpNorm<Eigen::Infinity>());
    r.terminal_tail = std::max(r.terminal_tail,
                               (solution.y2_window.col(i + n2) - y2s).lpNorm<Eigen::Infinity>());
  }
  if (solution.x1_traj.size() > 0) {
    r.terminal_state = (solution.x1_traj.col(L) - solution.artificial_eq.x1_s)
                           .lpNorm<Eigen::Infinity>();
  }
  return r;
}

StepResult control_step(const ControllerConfig& config, ControllerState& state,
                        const linsys::KnownSubsystem& known,
                        const Eigen::Ref<const VectorXd>& u_ref,
                        const Eigen::Ref<const VectorXd>& y_ref, qp::Solver* solver) {
  AssembledOcp ocp = assemble_ocp(config, state, known, u_ref, y_ref);
  qp::QpSolution raw = run_qp(ocp.qp, config.qp, state.warm_start, solver);
  StepResult r;
  r.solution = extract_solution(ocp, known, std::move(raw));
  if (r.solution.solved()) {
    r.feasible = true;
    r.input = r.solution.u_traj.col(0);
    state.warm_start = r.solution.qp;
    return r;
  }
  state.warm_start.reset();
  const std::string status = qp::to_string(r.solution.qp.status);
  if (config.infeasibility_policy == InfeasibilityPolicy::kError) {
    throw ControllerAbort("OCP not solved (" + status + ")");
  }
  spdlog::warn("OCP not solved ({}); holding the previous input", status);
  r.input = state.last_input;
  r.held = true;
  return r;
}

void observe(const ControllerConfig& config, ControllerState& state,
             const Eigen::Ref<const VectorXd>& applied_u,
             const Eigen::Ref<const VectorXd>& y2_measured,
             const Eigen::Ref<const VectorXd>& x1_next) {
  const Index m2 = state.past_u2.rows(), p2 = state.past_y2.rows();
  if (applied_u.size() != state.last_input.size() || y2_measured.size() != p2 ||
      x1_next.size() != state.x1_now.size()) {
    throw DimensionError("observe: sample dimension mismatch");
  }
  const VectorXd u2 = applied_u.tail(m2);
  state.last_input = applied_u;
  push_window(state.past_u2, u2);
  push_window(state.past_y2, y2_measured);
  state.filled = std::min<int>(state.filled + 1, static_cast<int>(state.past_u2.cols()));
  state.x1_now = x1_next;
  if (config.online_update) {
    // The first closed-loop sample does not continue the offline experiment.
    state.dataset =
        behavioral::update_window(state.dataset, u2, y2_measured, !state.window_extended);
    state.window_extended = true;
    if (config.recheck_persistency) {
      const bool ok = behavioral::persistency_gram_check(state.dataset.u_hankel);
      if (!ok && state.persistency_ok) {
        spdlog::warn("online data window lost persistency of excitation");
      }
      state.persistency_ok = ok;
    }
  }
}

Controller::Controller(linsys::KnownSubsystem known, ControllerConfig config,
                       behavioral::BehavioralDataset dataset,
                       const Eigen::Ref<const VectorXd>& x1_initial)
    : known_(std::move(known)),
      config_(std::move(config)),
      state_(ControllerState::Create(known_, config_, std::move(dataset), x1_initial)) {}

StepResult Controller::step(const Eigen::Ref<const VectorXd>& u_ref,
                            const Eigen::Ref<const VectorXd>& y_ref) {
  return control_step(config_, state_, known_, u_ref, y_ref, &solver_);
}

void Controller::observe(const Eigen::Ref<const VectorXd>& applied_u,
                         const Eigen::Ref<const VectorXd>& y2_measured,
                         const Eigen::Ref<const VectorXd>& x1_next) {
  mpc::observe(config_, state_, applied_u, y2_measured, x1_next);
}

ModelController::ModelController(linsys::KnownSubsystem known, LinearModel model,
                                 ControllerConfig config,
                                 const Eigen::Ref<const VectorXd>& x1_initial)
    : known_(std::move(known)), model_(std::move(model)), config_(std::move(config)) {
  const Index nm = model_.A.rows();
  if (model_.A.cols() != nm || model_.B.rows() != nm || model_.C.cols() != nm) {
    throw DimensionError("baseline model matrices are inconsistent");
  }
  if (model_.C.rows() != known_.coupling_dim()) {
    throw DimensionError("baseline model output does not match E1");
  }
  if (x1_initial.size() != known_.state_dim()) throw DimensionError("x1 has the wrong size");
  const Index m = known_.input_dim() + model_.B.cols();
  const Index p = known_.output_dim() + model_.C.rows();
  config_.validate(m, p, model_.C.rows());
  const MatrixXd obs = linsys::observability_matrix(model_.A, model_.C, config_.n2);
  if (behavioral::numerical_rank(obs) < nm) {
    throw IllPosedError("baseline model state is not reconstructible from n2 samples");
  }
  x1_now_ = x1_initial;
  past_u2_ = MatrixXd::Zero(model_.B.cols(), config_.n2);
  past_y2_ = MatrixXd::Zero(model_.C.rows(), config_.n2);
  last_input_ = VectorXd::Zero(m);
}

VectorXd ModelController::estimate_state() const {
  const int n2 = config_.n2;
  const Index nm = model_.A.rows(), p2 = model_.C.rows();
  // y(j) = C A^j x(-n2) + sum_{l<j} C A^(j-1-l) B u(l), j = 0..n2-1 within the window.
  const MatrixXd obs = linsys::observability_matrix(model_.A, model_.C, n2);
  VectorXd rhs(n2 * p2);
  for (int j = 0; j < n2; ++j) {
    VectorXd forced = VectorXd::Zero(p2);
    MatrixXd power = MatrixXd::Identity(nm, nm);
    for (int l = j - 1; l >= 0; --l) {
      forced += model_.C * power * model_.B * past_u2_.col(l);
      power = model_.A * power;
    }
    rhs.segment(j * p2, p2) = past_y2_.col(j) - forced;
  }
  VectorXd x = linsys::pseudo_inverse(obs) * rhs;
  for (int l = 0; l < n2; ++l) x = model_.A * x + model_.B * past_u2_.col(l);
  return x;
}

AssembledOcp ModelController::assemble(const Eigen::Ref<const VectorXd>& u_ref,
                                       const Eigen::Ref<const VectorXd>& y_ref) const {
  const int L = config_.L;
  const Index m1 = known_.input_dim(), m2 = model_.B.cols();
  const Index p1 = known_.output_dim(), p2 = model_.C.rows();
  const Index n1 = known_.state_dim(), nm = model_.A.rows();
  if (u_ref.size() != m1 + m2 || y_ref.size() != p1 + p2) {
    throw DimensionError("reference size mismatch");
  }
  // [u1(0..L-1); u2(0..L-1); x2(0..L); x1(0..L); u_s; y_s; x1_s]
  const Index u1 = 0, u2 = u1 + L * m1, x2 = u2 + L * m2, x1 = x2 + (L + 1) * nm;
  const Index us = x1 + (L + 1) * n1, ys = us + m1 + m2, x1s = ys + p1 + p2;
  const Index nvar = x1s + n1;
  RowBuilder eq(nvar), in(nvar);
  CostBuilder cost(nvar);

  CommonLayout c;
  c.L = L;
  c.n2 = config_.n2;
  c.m1 = m1;
  c.m2 = m2;
  c.p1 = p1;
  c.p2 = p2;
  c.n1 = n1;
  c.u1_at = [=](int i) { return u1 + i * m1; };
  c.u2_at = [=](int i) { return u2 + i * m2; };
  c.x1_at = [=](int i) { return x1 + i * n1; };
  c.y2_expr = [&, x2, nm](int i) { return Expr{{x2 + i * nm, model_.C}}; };
  c.us = us;
  c.ys = ys;
  c.x1s = x1s;
  add_common(config_, known_, c, x1_now_, u_ref, y_ref, eq, in, cost);

  eq.add(var(x2, nm), estimate_state());
  for (int i = 0; i < L; ++i) {
    eq.add(Expr{{x2 + (i + 1) * nm, eye(nm)}, {x2 + i * nm, -model_.A}, {u2 + i * m2, -model_.B}},
           VectorXd::Zero(nm));
  }

  AssembledOcp out;
  out.layout = OcpLayout::Make(0, L, config_.n2, m1, m2, p1, p2, n1);
  out.layout.u1 = u1;
  out.layout.x1 = x1;
  out.layout.us = us;
  out.layout.ys = ys;
  out.layout.x1s = x1s;
  out.layout.size = nvar;
  out.constant = cost.constant;
  out.qp.P = std::move(cost.P);
  out.qp.q = std::move(cost.q);
  eq.finish(out.qp.Aeq, out.qp.beq);
  in.finish(out.qp.Gin, out.qp.hin);
  return out;
}

StepResult ModelController::step(const Eigen::Ref<const VectorXd>& u_ref,
                                 const Eigen::Ref<const VectorXd>& y_ref) {
  if (!initialized()) throw ConfigError("past window not filled yet");
  const AssembledOcp ocp = assemble(u_ref, y_ref);
  qp::QpSolution raw = run_qp(ocp.qp, config_.qp, warm_start_, &solver_);
  const int L = config_.L;
  const Index m1 = known_.input_dim(), m2 = model_.B.cols(), nm = model_.A.rows();
  const Index u2 = L * m1, x2 = u2 + L * m2;
  StepResult r;
  OcpSolution& s = r.solution;
  const VectorXd& z = raw.primal;
  s.u_traj.resize(m1 + m2, L);
  s.y_traj.resize(known_.output_dim() + model_.C.rows(), L);
  s.x1_traj = Eigen::Map<const MatrixXd>(z.data() + ocp.layout.x1, known_.state_dim(), L + 1);
  for (int i = 0; i < L; ++i) {
    s.u_traj.col(i) << z.segment(i * m1, m1), z.segment(u2 + i * m2, m2);
    s.y_traj.col(i) << known_.C1 * s.x1_traj.col(i), model_.C * z.segment(x2 + i * nm, nm);
  }
  s.artificial_eq.u_s = z.segment(ocp.layout.us, m1 + m2);
  s.artificial_eq.y_s = z.segment(ocp.layout.ys, s.y_traj.rows());
  s.artificial_eq.x1_s = z.segment(ocp.layout.x1s, known_.state_dim());
  s.cost = raw.objective + ocp.constant;
  s.qp = std::move(raw);
  if (s.solved()) {
    r.feasible = true;
    r.input = s.u_traj.col(0);
    warm_start_ = s.qp;
    return r;
  }
  warm_start_.reset();
  if (config_.infeasibility_policy == InfeasibilityPolicy::kError) {
    throw ControllerAbort("baseline OCP not solved (" + qp::to_string(s.qp.status) + ")");
  }
  r.input = last_input_;
  r.held = true;
  return r;
}

void ModelController::observe(const Eigen::Ref<const VectorXd>& applied_u,
                              const Eigen::Ref<const VectorXd>& y2_measured,
                              const Eigen::Ref<const VectorXd>& x1_next) {
  if (applied_u.size() != last_input_.size() || y2_measured.size() != past_y2_.rows() ||
      x1_next.size() != x1_now_.size()) {
    throw DimensionError("observe: sample dimension mismatch");
  }
  last_input_ = applied_u;
  push_window(past_u2_, applied_u.tail(past_u2_.rows()));
  push_window(past_y2_, y2_measured);
  filled_ = std::min(filled_ + 1, config_.n2);
  x1_now_ = x1_next;
}

}  // namespace dfmpc::mpc
