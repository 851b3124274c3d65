#include "dfmpc/linsys.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dfmpc/errors.hpp"

namespace dfmpc::linsys {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

template <typename Derived>
int relative_rank(const Eigen::MatrixBase<Derived>& m, double rel_tol) {
  Eigen::JacobiSVD<typename Derived::PlainObject> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rel_tol * sv(0)) ++rank;
  }
  return rank;
}

}  // namespace

SimulationResult simulate_lti(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              const Eigen::Ref<const Eigen::MatrixXd>& c,
                              const Eigen::Ref<const Eigen::VectorXd>& x0,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const Eigen::Index n = a.rows();
  require(a.cols() == n, "simulate_lti: A must be square");
  require(b.rows() == n && c.cols() == n && x0.size() == n,
          "simulate_lti: inconsistent state dimension");
  require(inputs.rows() == b.cols(), "simulate_lti: input dimension mismatch");
  const Eigen::Index steps = inputs.cols();
  SimulationResult r;
  r.states.resize(n, steps + 1);
  r.outputs.resize(c.rows(), steps);
  r.states.col(0) = x0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    r.outputs.col(k).noalias() = c * r.states.col(k);
    r.states.col(k + 1).noalias() = a * r.states.col(k) + b * inputs.col(k);
  }
  return r;
}

bool hautus_check(const Eigen::Ref<const Eigen::MatrixXd>& a,
                  const Eigen::Ref<const Eigen::MatrixXd>& b_or_c, HautusMode mode,
                  double rank_tol) {
  const Eigen::Index n = a.rows();
  require(a.cols() == n, "hautus_check: A must be square");
  if (n == 0) return true;
  const bool ctrb = mode == HautusMode::kControllability;
  require(ctrb ? b_or_c.rows() == n : b_or_c.cols() == n, "hautus_check: dimension mismatch");

  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  const Eigen::VectorXcd lambdas = es.eigenvalues();
  const Eigen::MatrixXcd ac = a.cast<std::complex<double>>();
  const Eigen::MatrixXcd mc = b_or_c.cast<std::complex<double>>();
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
    const Eigen::MatrixXcd shifted = ac - lambdas(i) * Eigen::MatrixXcd::Identity(n, n);
    Eigen::MatrixXcd pbh;
    if (ctrb) {
      pbh.resize(n, n + mc.cols());
      pbh << shifted, mc;
    } else {
      pbh.resize(n + mc.rows(), n);
      pbh << shifted, mc;
    }
    if (relative_rank(pbh, rank_tol) < n) return false;
  }
  return true;
}

KnownSubsystem KnownSubsystem::Create(Eigen::MatrixXd a1, Eigen::MatrixXd b1,
                                      Eigen::MatrixXd c1, Eigen::MatrixXd e1) {
  const Eigen::Index n = a1.rows();
  require(a1.cols() == n, "known subsystem: A1 must be square");
  require(b1.rows() == n, "known subsystem: B1 row count must equal n1");
  require(c1.cols() == n, "known subsystem: C1 column count must equal n1");
  require(e1.rows() == n, "known subsystem: E1 row count must equal n1");
  return KnownSubsystem{std::move(a1), std::move(b1), std::move(c1), std::move(e1)};
}

KnownSubsystem KnownSubsystem::CreateValidated(Eigen::MatrixXd a1, Eigen::MatrixXd b1,
                                               Eigen::MatrixXd c1, Eigen::MatrixXd e1) {
  KnownSubsystem sub = Create(std::move(a1), std::move(b1), std::move(c1), std::move(e1));
  Eigen::MatrixXd inputs(sub.state_dim(), sub.input_dim() + sub.coupling_dim());
  inputs << sub.B1, sub.E1;
  if (!hautus_check(sub.A1, inputs, HautusMode::kControllability)) {
    throw ConfigError("known subsystem: (A1, [B1 E1]) is not controllable");
  }
  return sub;
}

std::string to_string(OutputMap map) {
  switch (map) {
    case OutputMap::kIdentity: return "identity";
    case OutputMap::kSaturation: return "saturation";
    case OutputMap::kTanh: return "tanh";
    case OutputMap::kCubic: return "cubic";
  }
  return "identity";
}

OutputMap output_map_from_string(const std::string& name) {
  if (name == "identity") return OutputMap::kIdentity;
  if (name == "saturation") return OutputMap::kSaturation;
  if (name == "tanh") return OutputMap::kTanh;
  if (name == "cubic") return OutputMap::kCubic;
  throw ConfigError("unknown output nonlinearity '" + name + "'");
}

double StaticNonlinearity::apply(double v) const {
  switch (kind) {
    case OutputMap::kIdentity: return v;
    case OutputMap::kSaturation: return std::clamp(v, -scale, scale);
    case OutputMap::kTanh: return scale * std::tanh(v / scale);
    case OutputMap::kCubic: return v - scale * v * v * v;
  }
  return v;
}

Eigen::VectorXd StaticNonlinearity::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = apply(v(i));
  return out;
}

HiddenSubsystem HiddenSubsystem::Create(Eigen::MatrixXd a2, Eigen::MatrixXd b2,
                                        Eigen::MatrixXd c2, StaticNonlinearity nonlinearity) {
  const Eigen::Index n = a2.rows();
  require(a2.cols() == n, "hidden subsystem: A2 must be square");
  require(b2.rows() == n, "hidden subsystem: B2 row count must equal n2");
  require(c2.cols() == n, "hidden subsystem: C2 column count must equal n2");
  if ((nonlinearity.kind == OutputMap::kSaturation || nonlinearity.kind == OutputMap::kTanh) &&
      !(nonlinearity.scale > 0.0)) {
    throw ConfigError("hidden subsystem: saturation level must be positive");
  }
  return HiddenSubsystem{std::move(a2), std::move(b2), std::move(c2), nonlinearity};
}

Eigen::VectorXd HiddenSubsystem::output(const Eigen::Ref<const Eigen::VectorXd>& x2) const {
  return nonlinearity.apply(C2 * x2);
}

PolytopicSet::PolytopicSet(Eigen::MatrixXd e_mat, Eigen::VectorXd e_vec)
    : e_mat_(std::move(e_mat)), e_vec_(std::move(e_vec)) {
  require(e_mat_.rows() == e_vec_.size(), "polytope: E and e row counts differ");
  require(e_mat_.rows() >= 1, "polytope: at least one inequality is required");
  for (Eigen::Index j = 0; j < e_mat_.rows(); ++j) {
    if (e_mat_.row(j).norm() == 0.0) {
      throw DimensionError("polytope: row " + std::to_string(j) + " of E is zero");
    }
  }
}

PolytopicSet PolytopicSet::Box(const Eigen::Ref<const Eigen::VectorXd>& lower,
                               const Eigen::Ref<const Eigen::VectorXd>& upper) {
  const Eigen::Index n = lower.size();
  require(upper.size() == n, "box: bound lengths differ");
  Eigen::MatrixXd e(2 * n, n);
  e << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs(2 * n);
  rhs << upper, -lower;
  return PolytopicSet(std::move(e), std::move(rhs));
}

bool PolytopicSet::contains(const Eigen::Ref<const Eigen::VectorXd>& v, double tol) const {
  require(v.size() == dim(), "polytope: point dimension mismatch");
  return ((e_mat_ * v - e_vec_).array() <= tol).all();
}

double induced_inf_norm(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

Eigen::MatrixXd observability_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                     const Eigen::Ref<const Eigen::MatrixXd>& c, int depth) {
  require(a.rows() == a.cols() && c.cols() == a.rows(), "observability: dimension mismatch");
  Eigen::MatrixXd o(c.rows() * depth, a.cols());
  Eigen::MatrixXd block = c;
  for (int i = 0; i < depth; ++i) {
    o.middleRows(i * c.rows(), c.rows()) = block;
    block = block * a;
  }
  return o;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(0) > 0.0 && sv(i) > rel_tol * sv(0)) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::VectorXd equilibrium_state(const KnownSubsystem& sub,
                                  const Eigen::Ref<const Eigen::VectorXd>& u1_s,
                                  const Eigen::Ref<const Eigen::VectorXd>& y2_s) {
  require(u1_s.size() == sub.input_dim(), "equilibrium_state: u1 dimension mismatch");
  require(y2_s.size() == sub.coupling_dim(), "equilibrium_state: y2 dimension mismatch");
  const Eigen::Index n = sub.state_dim();
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - sub.A1;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw EquilibriumUndefined("equilibrium_state: I - A1 is singular");
  }
  return lu.solve(sub.B1 * u1_s + sub.E1 * y2_s);
}

BoundConstants prop1_constants(const KnownSubsystem& known, const HiddenSubsystem& hidden,
                               int horizon) {
  require(horizon >= 1, "prop1_constants: horizon must be positive");
  require(known.coupling_dim() == hidden.output_dim(),
          "prop1_constants: E1 columns must match the hidden output dimension");
  if (!hidden.is_lti()) {
    throw IllPosedError("prop1_constants: hidden subsystem must be LTI");
  }
  const int n2 = static_cast<int>(hidden.state_dim());
  const Eigen::MatrixXd obs = observability_matrix(hidden.A2, hidden.C2, n2);
  if (relative_rank(obs, 1e-9) < n2) {
    throw IllPosedError("prop1_constants: (C2, A2) is not observable");
  }
  const double obs_pinv_norm = induced_inf_norm(pseudo_inverse(obs));

  BoundConstants k;
  k.horizon = horizon;
  const double c1_norm = induced_inf_norm(known.C1);
  const double e1_norm = induced_inf_norm(known.E1);
  const double c2_norm = induced_inf_norm(hidden.C2);

  // Powers of A1 and A2 up to L - 1, with running sums for the convolution term.
  const Eigen::Index n1 = known.state_dim();
  Eigen::MatrixXd a1_pow = Eigen::MatrixXd::Identity(n1, n1);
  Eigen::MatrixXd a2_pow = Eigen::MatrixXd::Identity(n2, n2);
  double conv_sum = 0.0;  // sum_{j=0}^{i-1} ||A1^(i-1-j)|| = sum_{l=0}^{i-1} ||A1^l||
  for (int i = 0; i < horizon; ++i) {
    k.c_sigma1 = std::max(k.c_sigma1, c1_norm * conv_sum * e1_norm);
    k.c_sigma2 = std::max(k.c_sigma2, c2_norm * induced_inf_norm(a2_pow) * obs_pinv_norm);
    conv_sum += induced_inf_norm(a1_pow);
    a1_pow = a1_pow * known.A1;
    a2_pow = a2_pow * hidden.A2;
  }
  return k;
}

CompositeSystem compose(const KnownSubsystem& known, const HiddenSubsystem& hidden) {
  const Eigen::Index n1 = known.state_dim(), n2 = hidden.state_dim();
  const Eigen::Index m1 = known.input_dim(), m2 = hidden.input_dim();
  const Eigen::Index p1 = known.output_dim(), p2 = hidden.output_dim();
  require(known.coupling_dim() == p2, "compose: E1 columns must match p2");
  CompositeSystem s;
  s.A = Eigen::MatrixXd::Zero(n1 + n2, n1 + n2);
  s.A.topLeftCorner(n1, n1) = known.A1;
  s.A.topRightCorner(n1, n2) = known.E1 * hidden.C2;
  s.A.bottomRightCorner(n2, n2) = hidden.A2;
  s.B = Eigen::MatrixXd::Zero(n1 + n2, m1 + m2);
  s.B.topLeftCorner(n1, m1) = known.B1;
  s.B.bottomRightCorner(n2, m2) = hidden.B2;
  s.C = Eigen::MatrixXd::Zero(p1 + p2, n1 + n2);
  s.C.topLeftCorner(p1, n1) = known.C1;
  s.C.bottomRightCorner(p2, n2) = hidden.C2;
  return s;
}

}  // namespace dfmpc::linsys
