#pragma once

#include <string>

#include <Eigen/Dense>

namespace dfmpc::linsys {

struct SimulationResult {
  Eigen::MatrixXd states;   // n x (N + 1), includes the terminal state
  Eigen::MatrixXd outputs;  // p x N
};

/// x(k+1) = A x(k) + B u(k), y(k) = C x(k). Inputs are given column-wise.
SimulationResult simulate_lti(const Eigen::Ref<const Eigen::MatrixXd>& a,
                              const Eigen::Ref<const Eigen::MatrixXd>& b,
                              const Eigen::Ref<const Eigen::MatrixXd>& c,
                              const Eigen::Ref<const Eigen::VectorXd>& x0,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs);

enum class HautusMode { kControllability, kObservability };

/// PBH test: rank [A - lambda I, B] (or [A - lambda I; C]) equals n at every
/// eigenvalue of A. Rank uses singular values relative to the largest one.
bool hautus_check(const Eigen::Ref<const Eigen::MatrixXd>& a,
                  const Eigen::Ref<const Eigen::MatrixXd>& b_or_c, HautusMode mode,
                  double rank_tol = 1e-9);

/// Known subsystem: x1+ = A1 x1 + B1 u1 + E1 y2, y1 = C1 x1.
struct KnownSubsystem {
  Eigen::MatrixXd A1;
  Eigen::MatrixXd B1;
  Eigen::MatrixXd C1;
  Eigen::MatrixXd E1;

  /// Checks dimensions only.
  static KnownSubsystem Create(Eigen::MatrixXd a1, Eigen::MatrixXd b1, Eigen::MatrixXd c1,
                               Eigen::MatrixXd e1);
  /// Additionally requires (A1, [B1 E1]) to pass the controllability test.
  static KnownSubsystem CreateValidated(Eigen::MatrixXd a1, Eigen::MatrixXd b1,
                                        Eigen::MatrixXd c1, Eigen::MatrixXd e1);

  Eigen::Index state_dim() const { return A1.rows(); }
  Eigen::Index input_dim() const { return B1.cols(); }
  Eigen::Index output_dim() const { return C1.rows(); }
  Eigen::Index coupling_dim() const { return E1.cols(); }
};

enum class OutputMap { kIdentity, kSaturation, kTanh, kCubic };

std::string to_string(OutputMap map);
OutputMap output_map_from_string(const std::string& name);

/// Channelwise static output distortion. `scale` is the saturation level for
/// kSaturation / kTanh and the cubic coefficient for kCubic.
struct StaticNonlinearity {
  OutputMap kind = OutputMap::kIdentity;
  double scale = 1.0;

  double apply(double v) const;
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  bool is_identity() const { return kind == OutputMap::kIdentity; }
};

/// Ground-truth realization of the unknown subsystem (no feed-through).
struct HiddenSubsystem {
  Eigen::MatrixXd A2;
  Eigen::MatrixXd B2;
  Eigen::MatrixXd C2;
  StaticNonlinearity nonlinearity;

  static HiddenSubsystem Create(Eigen::MatrixXd a2, Eigen::MatrixXd b2, Eigen::MatrixXd c2,
                                StaticNonlinearity nonlinearity = {});

  bool is_lti() const { return nonlinearity.is_identity(); }
  Eigen::Index state_dim() const { return A2.rows(); }
  Eigen::Index input_dim() const { return B2.cols(); }
  Eigen::Index output_dim() const { return C2.rows(); }
  Eigen::VectorXd output(const Eigen::Ref<const Eigen::VectorXd>& x2) const;
};

/// {v : E v <= e}.
class PolytopicSet {
 public:
  PolytopicSet() = default;
  PolytopicSet(Eigen::MatrixXd e_mat, Eigen::VectorXd e_vec);

  static PolytopicSet Box(const Eigen::Ref<const Eigen::VectorXd>& lower,
                          const Eigen::Ref<const Eigen::VectorXd>& upper);

  const Eigen::MatrixXd& E() const { return e_mat_; }
  const Eigen::VectorXd& e() const { return e_vec_; }
  Eigen::Index dim() const { return e_mat_.cols(); }
  Eigen::Index rows() const { return e_mat_.rows(); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& v, double tol = 0.0) const;

 private:
  Eigen::MatrixXd e_mat_;
  Eigen::VectorXd e_vec_;
};

/// Gains entering the output prediction-error bound.
struct BoundConstants {
  double c_sigma1 = 0.0;
  double c_sigma2 = 0.0;
  int horizon = 0;
};

/// Induced infinity norm (maximum absolute row sum).
double induced_inf_norm(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// [C; C A; ...; C A^(depth-1)].
Eigen::MatrixXd observability_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                     const Eigen::Ref<const Eigen::MatrixXd>& c, int depth);

/// Moore-Penrose pseudo-inverse; singular values below rel_tol * sigma_max are dropped.
Eigen::MatrixXd pseudo_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m,
                               double rel_tol = 1e-9);

/// Solves (I - A1) x1 = B1 u1 + E1 y2. Throws EquilibriumUndefined if I - A1 is singular.
Eigen::VectorXd equilibrium_state(const KnownSubsystem& sub,
                                  const Eigen::Ref<const Eigen::VectorXd>& u1_s,
                                  const Eigen::Ref<const Eigen::VectorXd>& y2_s);

/// Constants of the output prediction-error bound for horizon L. The hidden
/// subsystem must be LTI and observable (IllPosedError otherwise).
BoundConstants prop1_constants(const KnownSubsystem& known, const HiddenSubsystem& hidden,
                               int horizon);

/// Cascade realization with state z = [x1; x2], input [u1; u2], output [y1; y2].
struct CompositeSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
};

CompositeSystem compose(const KnownSubsystem& known, const HiddenSubsystem& hidden);

}  // namespace dfmpc::linsys
