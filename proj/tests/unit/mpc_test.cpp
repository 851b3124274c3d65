#include "dfmpc/mpc.hpp"

#include <gtest/gtest.h>

#include "dfmpc/errors.hpp"
#include "dfmpc/sim.hpp"

namespace dfmpc::mpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd Vec(std::initializer_list<double> values) {
  VectorXd out(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) out(i++) = v;
  return out;
}

behavioral::BehavioralDataset NoiseFreeData(const sim::Scenario& s) {
  return sim::collect_offline_data(s.hidden, s.offline, s.controller.L,
                                   std::max(s.controller.n1, s.controller.n2), 0.0,
                                   s.noise.distribution, s.noise.seed)
      .dataset;
}

// Canonical cascade with noise-free data and a controller primed at x1 with
// n2 samples of (u, y2).
class CanonicalTest : public ::testing::Test {
 protected:
  void SetUp() override {
    scenario_ = sim::canonical_cascade(0.0, 1);
    data_ = NoiseFreeData(scenario_);
  }

  ControllerState Primed(const VectorXd& x1, const VectorXd& u, double y2) const {
    ControllerState state =
        ControllerState::Create(scenario_.known, scenario_.controller, data_, x1);
    for (int j = 0; j < scenario_.controller.n2; ++j) {
      observe(scenario_.controller, state, u, VectorXd::Constant(1, y2), x1);
    }
    return state;
  }

  sim::Scenario scenario_;
  behavioral::BehavioralDataset data_;
};

GTEST_TEST(DefaultWeightsTest, NoiseDependentRules) {
  const Weights w = default_weights(2, 3, 1, 0.01, 200);
  EXPECT_EQ(w.Q, MatrixXd::Identity(3, 3));
  EXPECT_EQ(w.R, 0.1 * MatrixXd::Identity(2, 2));
  EXPECT_EQ(w.S, 0.1 * MatrixXd::Identity(2, 2));
  EXPECT_EQ(w.T, 10.0 * MatrixXd::Identity(3, 3));
  EXPECT_NEAR(w.Gamma(0, 0), 1e4 * 101.0, 1e-6);
  EXPECT_NEAR(w.Lambda, 1e-2 * 1e-4 * 200, 1e-15);
  const Weights noise_free = default_weights(2, 3, 1, 0.0, 200);
  EXPECT_EQ(noise_free.Gamma(0, 0), 1e10);
  EXPECT_EQ(noise_free.Lambda, 1e-4);
}

GTEST_TEST(ControllerConfigTest, Validation) {
  sim::Scenario s = sim::canonical_cascade(0.01, 1);
  EXPECT_NO_THROW(s.controller.validate(2, 2, 1));
  ControllerConfig short_horizon = s.controller;
  short_horizon.L = 1;
  EXPECT_THROW(short_horizon.validate(2, 2, 1), ConfigError);
  ControllerConfig indefinite = s.controller;
  indefinite.weights.Q(0, 0) = -1.0;
  EXPECT_THROW(indefinite.validate(2, 2, 1), ConfigError);
  ControllerConfig bad_lambda = s.controller;
  bad_lambda.weights.Lambda = 0.0;
  EXPECT_THROW(bad_lambda.validate(2, 2, 1), ConfigError);
  EXPECT_THROW(s.controller.validate(3, 2, 1), DimensionError);
  EXPECT_EQ(infeasibility_policy_from_string(to_string(InfeasibilityPolicy::kError)),
            InfeasibilityPolicy::kError);
  EXPECT_THROW(infeasibility_policy_from_string("retry"), ConfigError);
}

TEST_F(CanonicalTest, EquilibriumReferenceIsReached) {
  ControllerConfig cfg = scenario_.controller;
  cfg.input_set = linsys::PolytopicSet::Box(VectorXd::Constant(2, -100), VectorXd::Constant(2, 100));
  cfg.output_set = cfg.input_set;
  const EquilibriumPoint eq =
      reachable_equilibrium(data_, scenario_.known, Vec({0, 1}), Vec({5, 1}), cfg);
  EXPECT_NEAR(eq.u_s(1), 1.0, 1e-6);
  EXPECT_NEAR(eq.y_s(1), 1.0, 1e-6);
  EXPECT_NEAR(eq.x1_s(0), 5.0, 1e-6);
  EXPECT_NEAR(eq.cost, 0.0, 1e-8);
  // Sigma1 steady state.
  EXPECT_NEAR((MatrixXd::Identity(1, 1) - scenario_.known.A1)(0, 0) * eq.x1_s(0),
              (scenario_.known.B1 * eq.u_s.head(1) + scenario_.known.E1 * eq.y_s.tail(1))(0),
              1e-8);
}

TEST_F(CanonicalTest, OriginEquilibrium) {
  const EquilibriumPoint eq = reachable_equilibrium(data_, scenario_.known, VectorXd::Zero(2),
                                                    VectorXd::Zero(2), scenario_.controller);
  EXPECT_LE(eq.u_s.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(eq.y_s.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(eq.cost, 0.0, 1e-9);
}

TEST_F(CanonicalTest, EquilibriumRespectsSetsAndRefMismatch) {
  const VectorXd u_ref = Vec({0, 1}), y_ref = Vec({5, 1});
  ControllerConfig tight = scenario_.controller;
  tight.output_set = linsys::PolytopicSet::Box(Vec({-20, -0.5}), Vec({20, 0.5}));
  const EquilibriumPoint eq = reachable_equilibrium(data_, scenario_.known, u_ref, y_ref, tight);
  EXPECT_LE(eq.y_s(1), 0.5 + 1e-6);
  EXPECT_TRUE(tight.input_set.contains(eq.u_s, 1e-6));
  EXPECT_GT(eq.cost, 0.0);
  ControllerConfig empty = scenario_.controller;
  empty.output_set = linsys::PolytopicSet(
      (MatrixXd(2, 2) << 0, 1, 0, -1).finished(), Vec({-1, -1}));
  EXPECT_THROW(reachable_equilibrium(data_, scenario_.known, u_ref, y_ref, empty), InfeasibleError);
}

// Scalar Sigma2 with unit DC gain behind a Sigma1 without own input; the
// equilibrium y2 = 3 is cut off by the output box at 2.
GTEST_TEST(ReachableEquilibriumTest, ClippedByOutputSet) {
  sim::Scenario s = sim::canonical_cascade(0.0, 1);
  s.known = linsys::KnownSubsystem::Create(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Zero(1, 0),
                                           MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  s.hidden = linsys::HiddenSubsystem::Create(MatrixXd::Constant(1, 1, 0.5),
                                             MatrixXd::Constant(1, 1, 0.5), MatrixXd::Identity(1, 1));
  ControllerConfig& cfg = s.controller;
  cfg.weights = default_weights(1, 2, 1, 0.0, s.offline.N);
  cfg.weights.T = MatrixXd::Identity(2, 2);
  cfg.weights.S = 0.01 * MatrixXd::Identity(1, 1);
  cfg.input_set = linsys::PolytopicSet::Box(Vec({-10}), Vec({10}));
  cfg.output_set = linsys::PolytopicSet::Box(Vec({-100, -2}), Vec({100, 2}));
  const EquilibriumPoint eq =
      reachable_equilibrium(NoiseFreeData(s), s.known, Vec({3}), Vec({4, 3}), cfg);
  EXPECT_NEAR(eq.y_s(1), 2.0, 1e-5);
  EXPECT_NEAR(eq.u_s(0), 2.0, 1e-5);
  EXPECT_NEAR(eq.y_s(0), 4.0, 1e-5);
  EXPECT_NEAR(eq.cost, 1.01, 1e-5);
}

GTEST_TEST(OcpLayoutTest, ColumnCount) {
  sim::Scenario s = sim::turbine_surrogate(0.0, 1);
  s.controller.L = 20;
  s.offline.N = 200;
  s.hidden.nonlinearity = {};
  const behavioral::BehavioralDataset ds = NoiseFreeData(s);
  EXPECT_EQ(ds.columns(), 179);
  const OcpLayout lay = OcpLayout::Make(ds.columns(), 20, 2, 0, 1, 1, 1, 2);
  EXPECT_EQ(lay.g, 0);
  EXPECT_EQ(lay.u1, 179);
  EXPECT_EQ(lay.u2_at(-2), lay.u2);
  EXPECT_EQ(lay.y2_at(0) - lay.y2, 2);
  EXPECT_EQ(lay.size, lay.sigma + 22);
}

TEST_F(CanonicalTest, EquilibriumStartCostsNothing) {
  ControllerState state = Primed(Vec({5}), Vec({0, 1}), 1.0);
  const StepResult r =
      control_step(scenario_.controller, state, scenario_.known, Vec({0, 1}), Vec({5, 1}));
  ASSERT_TRUE(r.feasible);
  // Only the regularizer on g remains; it is not centred on the equilibrium g.
  const double lambda = scenario_.controller.weights.Lambda;
  EXPECT_NEAR(r.solution.cost, lambda * r.solution.g.squaredNorm(), 1e-6);
  EXPECT_LE(r.solution.sigma.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(r.input(0), 0.0, 1e-5);
  EXPECT_NEAR(r.input(1), 1.0, 1e-5);
}

TEST_F(CanonicalTest, StepReferenceSolvesWithInvariants) {
  ControllerState state = Primed(Vec({0}), Vec({0, 0}), 0.0);
  const AssembledOcp ocp =
      assemble_ocp(scenario_.controller, state, scenario_.known, Vec({0, 1}), Vec({5, 1}));
  EXPECT_EQ(ocp.layout.ncol, data_.columns());
  const OcpSolution sol = extract_solution(ocp, scenario_.known, qp::solve(ocp.qp));
  ASSERT_TRUE(sol.solved());
  const OcpInvariantResiduals res = check_ocp_invariants(sol, scenario_.controller, state);
  EXPECT_LE(res.max(), 1e-5);
  // The terminal tail sits on the artificial equilibrium.
  const int L = scenario_.controller.L;
  EXPECT_NEAR(sol.u2_window(0, L + 1 - 1), sol.artificial_eq.u_s(1), 1e-5);
  EXPECT_NEAR(sol.y2_window(0, L + 1 - 1), sol.artificial_eq.y_s(1), 1e-5);
  EXPECT_EQ(sol.u_traj.cols(), L);
  EXPECT_EQ(sol.x1_traj.cols(), L + 1);
}

TEST_F(CanonicalTest, WindowMustBeFilled) {
  ControllerState state =
      ControllerState::Create(scenario_.known, scenario_.controller, data_, Vec({0}));
  EXPECT_FALSE(state.initialized());
  EXPECT_THROW(assemble_ocp(scenario_.controller, state, scenario_.known, Vec({0, 1}),
                            Vec({5, 1})),
               ConfigError);
  EXPECT_THROW(observe(scenario_.controller, state, Vec({0}), Vec({0}), Vec({0})), DimensionError);
}

TEST_F(CanonicalTest, PinnedOutputViolationTriggersPolicy) {
  ControllerConfig cfg = scenario_.controller;
  cfg.output_set = linsys::PolytopicSet::Box(Vec({-1, -20}), Vec({1, 20}));
  cfg.infeasibility_policy = InfeasibilityPolicy::kError;
  ControllerState state = ControllerState::Create(scenario_.known, cfg, data_, Vec({3}));
  observe(cfg, state, Vec({0.2, 0.3}), Vec({0}), Vec({3}));
  EXPECT_THROW(control_step(cfg, state, scenario_.known, Vec({0, 0}), Vec({0, 0})),
               ControllerAbort);
  cfg.infeasibility_policy = InfeasibilityPolicy::kHoldLast;
  const StepResult r = control_step(cfg, state, scenario_.known, Vec({0, 0}), Vec({0, 0}));
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(r.held);
  EXPECT_EQ(r.input, Vec({0.2, 0.3}));
}

TEST_F(CanonicalTest, WeightScalingLeavesInputUnchanged) {
  const VectorXd u_ref = Vec({0, 1}), y_ref = Vec({5, 1});
  ControllerState a = Primed(Vec({1}), Vec({0.3, 0.2}), 0.4);
  ControllerState b = a;
  ControllerConfig scaled = scenario_.controller;
  const double alpha = 7.5;
  scaled.weights.Q *= alpha;
  scaled.weights.R *= alpha;
  scaled.weights.S *= alpha;
  scaled.weights.T *= alpha;
  scaled.weights.Gamma *= alpha;
  scaled.weights.Lambda *= alpha;
  const StepResult ra = control_step(scenario_.controller, a, scenario_.known, u_ref, y_ref);
  const StepResult rb = control_step(scaled, b, scenario_.known, u_ref, y_ref);
  ASSERT_TRUE(ra.feasible);
  ASSERT_TRUE(rb.feasible);
  EXPECT_LE((ra.input - rb.input).cwiseAbs().maxCoeff(), 1e-7);
}

TEST_F(CanonicalTest, OnlineUpdateMarksTheJunction) {
  ControllerConfig cfg = scenario_.controller;
  cfg.online_update = true;
  ControllerState state = ControllerState::Create(scenario_.known, cfg, data_, Vec({0}));
  observe(cfg, state, Vec({0, 0.5}), Vec({0.1}), Vec({0.1}));
  EXPECT_TRUE(state.window_extended);
  ASSERT_EQ(state.dataset.segment_starts.size(), 1u);
  EXPECT_EQ(state.dataset.segment_starts[0], data_.data.length() - 1);
  EXPECT_EQ(state.dataset.data.length(), data_.data.length());
  observe(cfg, state, Vec({0, 0.5}), Vec({0.2}), Vec({0.2}));
  ASSERT_EQ(state.dataset.segment_starts.size(), 1u);
  EXPECT_EQ(state.dataset.segment_starts[0], data_.data.length() - 2);
}

GTEST_TEST(ClosedLoopPropertiesTest, NoiseFreeShiftConsistencyAndSlack) {
  const sim::RunResult run = sim::run_closed_loop(sim::canonical_cascade(0.0, 3, 60));
  ASSERT_FALSE(run.log.aborted);
  for (std::size_t k = 0; k < run.log.steps.size(); ++k) {
    const StepRecord& r = run.log.steps[k];
    ASSERT_TRUE(r.feasible) << k;
    EXPECT_LE(r.sigma_inf, 1e-6) << k;
    if (k > 0) {
      EXPECT_LE(r.cost, run.log.steps[k - 1].cost + 1e-6) << k;
    }
  }
}

GTEST_TEST(BaselineTest, ExactModelMatchesDataDrivenInputs) {
  sim::Scenario s = sim::canonical_cascade(0.0, 5, 40);
  s.comparator = sim::Comparator::kBaselineLinear;
  s.baseline_model = LinearModel{s.hidden.A2, s.hidden.B2, s.hidden.C2};
  const sim::RunResult run = sim::run_closed_loop(s);
  ASSERT_TRUE(run.baseline_log.has_value());
  ASSERT_EQ(run.baseline_log->steps.size(), run.log.steps.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < run.log.steps.size(); ++k) {
    worst = std::max(worst,
                     (run.log.steps[k].u - run.baseline_log->steps[k].u).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-4);
}

GTEST_TEST(BaselineTest, HoldsModelEquilibrium) {
  const sim::Scenario s = sim::canonical_cascade(0.0, 1);
  ControllerConfig cfg = s.controller;
  ModelController ctl(s.known, LinearModel{s.hidden.A2, s.hidden.B2, s.hidden.C2}, cfg, Vec({5}));
  ctl.observe(Vec({0, 1}), Vec({1}), Vec({5}));
  ASSERT_TRUE(ctl.initialized());
  EXPECT_NEAR(ctl.estimate_state()(0), 1.0, 1e-12);
  for (int k = 0; k < 5; ++k) {
    const StepResult r = sim::baseline_step(ctl, Vec({0, 1}), Vec({5, 1}));
    ASSERT_TRUE(r.feasible);
    EXPECT_NEAR(r.input(0), 0.0, 1e-5);
    EXPECT_NEAR(r.input(1), 1.0, 1e-5);
    ctl.observe(r.input, Vec({1}), Vec({5}));
  }
}

}  // namespace
}  // namespace dfmpc::mpc
