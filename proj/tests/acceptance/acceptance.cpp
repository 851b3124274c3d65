// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfmpc/behavioral.hpp"
#include "dfmpc/guarantees.hpp"
#include "dfmpc/qp.hpp"
#include "dfmpc/scenario_io.hpp"
#include "dfmpc/sim.hpp"
#include "oracles.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace dfmpc;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

sim::Scenario FromFile(const std::string& name) {
  return io::load_scenario(std::string(DFMPC_SCENARIO_DIR) + "/" + name).scenario;
}

double ReferenceDistance(const sim::Scenario& s) {
  double d = std::numeric_limits<double>::infinity();
  for (const sim::ReferencePoint& r : s.schedule) {
    d = std::min(d, guarantees::signed_distance(r.y_ref, s.controller.output_set));
  }
  return d;
}

Outcome FundamentalLemma() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> order_dist(1, 3), io_dist(1, 2);
  const int L = 10;
  int checked = 0, failures = 0;
  double worst = 0.0;
  for (int sys_index = 0; sys_index < 50; ++sys_index) {
    const int n = order_dist(rng), m = io_dist(rng), p = io_dist(rng);
    const testing::StateSpace sys = testing::random_minimal_system(rng, n, m, p);
    const int order = L + 2 * n;
    const int N = (m + 1) * order + 50;
    const MatrixXd u = testing::uniform_matrix(rng, m, N);
    if (!behavioral::persistency_order_check(u, order)) {
      ++failures;
      continue;
    }
    const MatrixXd y = testing::simulate(sys, VectorXd::Zero(n), u);
    const behavioral::BehavioralDataset ds =
        behavioral::BehavioralDataset::Create(behavioral::Trajectory::Create(u, y), L + n, 0.0);
    for (int c = 0; c < 20; ++c) {
      const MatrixXd cu = testing::uniform_matrix(rng, m, L + n);
      const MatrixXd cy = testing::simulate(sys, testing::uniform_matrix(rng, n, 1), cu);
      const behavioral::MembershipResult r = behavioral::trajectory_membership(
          ds, behavioral::Trajectory::Create(cu, cy), 1e-8);
      ++checked;
      worst = std::max(worst, r.residual);
      if (!r.member || r.residual > 1e-8) ++failures;
    }
  }
  const double elapsed = Seconds(start);
  return {failures == 0 && elapsed < 30.0,
          Format("50 systems, %d trajectories, %d failures, max residual %.3g, %.2f s", checked,
                 failures, worst, elapsed)};
}

Outcome QpOracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 20), eq(0, 3), ineq(0, 12);
  int status_failures = 0, objective_failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = dim(rng);
    const int r = std::min(eq(rng), d - 1);
    const qp::QuadraticProgram problem = testing::random_qp(rng, d, r, ineq(rng));
    const auto oracle = testing::enumerate_active_sets(problem);
    const qp::QpSolution sol = qp::solve(problem);
    if (!oracle || sol.status != qp::QpStatus::kSolved) {
      ++status_failures;
      continue;
    }
    const double rel = std::abs(sol.objective - oracle->objective) /
                       std::max(1.0, std::abs(oracle->objective));
    worst = std::max(worst, rel);
    if (rel > 1e-6) ++objective_failures;
  }
  return {status_failures == 0 && objective_failures == 0,
          Format("1000 QPs, %d status failures, %d objective mismatches, max rel gap %.3g",
                 status_failures, objective_failures, worst)};
}

Outcome NoiseFreeTracking() {
  const sim::RunResult run = sim::run_closed_loop(sim::canonical_cascade(0.0, 1, 100),
                                                  sim::RunOptions{false});
  const auto& steps = run.log.steps;
  int settled = -1;
  for (int k = static_cast<int>(steps.size()) - 1; k >= 0; --k) {
    if ((steps[k].y_true - steps[k].y_ref).cwiseAbs().maxCoeff() >= 1e-3) break;
    settled = k;
  }
  double sigma = 0.0, rise = 0.0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    sigma = std::max(sigma, steps[k].sigma_inf);
    if (k > 0) {
      const double prev = steps[k - 1].cost - steps[k - 1].eq_cost;
      rise = std::max(rise, (steps[k].cost - steps[k].eq_cost) - prev);
    }
  }
  const bool pass = !run.log.aborted && settled >= 0 && settled <= 50 && sigma <= 1e-6 &&
                    rise <= 1e-6;
  return {pass, Format("error < 1e-3 from step %d, max |sigma| %.3g, max offset increase %.3g",
                       settled, sigma, rise)};
}

Outcome PredictionErrorBound() {
  int violations = 0, checked = 0, runs = 0;
  std::vector<double> ratios;
  for (double eps : {0.005, 0.01, 0.02}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const sim::Scenario s = sim::canonical_cascade(eps, seed);
      const sim::RunResult run = sim::run_closed_loop(s, sim::RunOptions{false});
      const guarantees::TraceReport r =
          guarantees::verify_trace(run.log, s.known, s.hidden, s.controller);
      violations += static_cast<int>(r.violations.size());
      checked += r.checked_steps;
      ratios.push_back(r.median_ratio);
      ++runs;
    }
  }
  return {violations == 0 && checked > 0,
          Format("%d runs, %d checked steps, %d violations, median bound/error ratio %.3g", runs,
                 checked, violations, Median(ratios))};
}

Outcome RecursiveFeasibility() {
  const sim::Scenario fixture = FromFile("certified_cascade.json");
  const double d_ref = ReferenceDistance(fixture);
  int infeasible = 0, steps = 0, uncertified = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    sim::Scenario s = fixture;
    s.noise.seed = seed;
    const sim::RunResult run = sim::run_closed_loop(s, sim::RunOptions{false});
    for (const StepRecord& r : run.log.steps) {
      ++steps;
      if (!r.feasible) ++infeasible;
    }
    if (run.log.aborted) infeasible += s.duration - static_cast<int>(run.log.steps.size());
    const guarantees::RunCertificate cert =
        guarantees::certify_run(run.log, s.known, s.hidden, s.controller, d_ref);
    min_margin = std::min(min_margin, cert.certificate.margin);
    if (!(cert.certificate.margin > 0.0) || !cert.dominance.holds) ++uncertified;
  }
  const bool pass = infeasible == 0 && uncertified == 0 && steps == 20 * fixture.duration;
  return {pass, Format("%d steps over 20 seeds, %d infeasible, min margin %.4g, %d seeds without "
                       "certificate",
                       steps, infeasible, min_margin, uncertified)};
}

Outcome NoiseScaling() {
  auto average_mse = [](double eps) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      total += sim::run_closed_loop(sim::canonical_cascade(eps, seed), sim::RunOptions{false})
                   .metrics.steady_state_mse;
    }
    return total / 10.0;
  };
  const double mse_01 = average_mse(0.01);
  const double mse_02 = average_mse(0.02);
  const double mse_0 =
      sim::run_closed_loop(sim::canonical_cascade(0.0, 1), sim::RunOptions{false})
          .metrics.steady_state_mse;
  const double ratio = mse_02 / mse_01;
  return {ratio <= 4.5 && mse_0 < 1e-6,
          Format("MSE(0.01) %.4g, MSE(0.02) %.4g, ratio %.3f, MSE(0) %.3g", mse_01, mse_02, ratio,
                 mse_0)};
}

Outcome BenchmarkDirection() {
  const sim::RunResult run =
      sim::run_closed_loop(FromFile("turbine_surrogate.json"), sim::RunOptions{false});
  const sim::MetricsReport& m = run.metrics;
  const bool pass = m.has_comparator && !run.log.aborted &&
                    m.overall_rmse < m.baseline_overall_rmse && m.overall_improvement_pct >= 10.0;
  return {pass, Format("DFMPC RMSE %.4f, baseline RMSE %.4f, improvement %.2f%%", m.overall_rmse,
                       m.baseline_overall_rmse, m.overall_improvement_pct)};
}

Outcome SolveTime() {
  sim::Scenario s = FromFile("canonical_cascade.json");
  const sim::RunResult run = sim::run_closed_loop(s, sim::RunOptions{true});
  std::vector<double> ms;
  for (const StepRecord& r : run.log.steps) ms.push_back(r.solve_ms);
  const double median = Median(ms);
  return {s.controller.L == 20 && s.offline.N == 200 && median <= 50.0,
          Format("L %d, N %d, median control step %.3f ms, max %.3f ms", s.controller.L,
                 s.offline.N, median, *std::max_element(ms.begin(), ms.end()))};
}

Outcome Geometry() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 10000; ++trial) {
    const int p = 1 + trial % 5;
    const int rows = 2 + trial % 9;
    const linsys::PolytopicSet set(testing::uniform_matrix(rng, rows, p),
                                   testing::uniform_matrix(rng, rows, 1, 0.0, 3.0));
    const VectorXd y_star = 2.0 * testing::uniform_matrix(rng, p, 1);
    const double kappa = unit(rng);
    const VectorXd y = y_star + kappa * testing::uniform_matrix(rng, p, 1);
    const double slack = guarantees::signed_distance(y, set) -
                         (guarantees::signed_distance(y_star, set) -
                          std::sqrt(static_cast<double>(p)) * kappa);
    worst = std::min(worst, slack);
    if (slack < -1e-9) ++violations;
  }
  return {violations == 0,
          Format("10000 triples, %d violations, most negative slack %.3g", violations, worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1 fundamental lemma", FundamentalLemma},
      {"2 qp oracle equivalence", QpOracle},
      {"3 noise-free tracking", NoiseFreeTracking},
      {"4 prediction-error bound", PredictionErrorBound},
      {"5 recursive feasibility", RecursiveFeasibility},
      {"6 noise scaling", NoiseScaling},
      {"7 benchmark direction", BenchmarkDirection},
      {"8 solve time", SolveTime},
      {"9 geometry", Geometry},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
