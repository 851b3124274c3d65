#include "dfmpc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <utility>

#include <spdlog/spdlog.h>

#include "dfmpc/errors.hpp"

namespace dfmpc::sim {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Offline data and the online noise use separate streams derived from one seed.
constexpr std::uint64_t kOnlineStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kRetryStride = 7919;

class NoiseSource {
 public:
  NoiseSource(double epsilon, NoiseDistribution dist, std::uint64_t seed)
      : epsilon_(epsilon), dist_(dist), rng_(seed) {}

  VectorXd draw(Index dim) {
    VectorXd v(dim);
    for (Index i = 0; i < dim; ++i) v(i) = sample();
    return v;
  }

 private:
  double sample() {
    if (epsilon_ == 0.0) return 0.0;
    if (dist_ == NoiseDistribution::kUniform) {
      return std::uniform_real_distribution<double>(-epsilon_, epsilon_)(rng_);
    }
    std::normal_distribution<double> normal(0.0, 0.5 * epsilon_);
    for (;;) {
      const double v = normal(rng_);
      if (std::abs(v) <= epsilon_) return v;
    }
  }

  double epsilon_;
  NoiseDistribution dist_;
  std::mt19937_64 rng_;
};

const ReferencePoint& active_reference(const std::vector<ReferencePoint>& schedule, int k) {
  const ReferencePoint* active = &schedule.front();
  for (const ReferencePoint& r : schedule) {
    if (r.start <= k) active = &r;
  }
  return *active;
}

// A receding-horizon controller of either kind behind one interface.
struct LoopController {
  virtual ~LoopController() = default;
  virtual mpc::StepResult step(const VectorXd& u_ref, const VectorXd& y_ref) = 0;
  virtual void observe(const VectorXd& u, const VectorXd& y2, const VectorXd& x1) = 0;
  virtual const behavioral::BehavioralDataset* dataset() const { return nullptr; }
};

struct DataDrivenLoop final : LoopController {
  explicit DataDrivenLoop(mpc::Controller c) : ctl(std::move(c)) {}
  mpc::StepResult step(const VectorXd& u_ref, const VectorXd& y_ref) override {
    return ctl.step(u_ref, y_ref);
  }
  void observe(const VectorXd& u, const VectorXd& y2, const VectorXd& x1) override {
    ctl.observe(u, y2, x1);
  }
  const behavioral::BehavioralDataset* dataset() const override { return &ctl.state().dataset; }
  mpc::Controller ctl;
};

struct ModelLoop final : LoopController {
  explicit ModelLoop(mpc::ModelController c) : ctl(std::move(c)) {}
  mpc::StepResult step(const VectorXd& u_ref, const VectorXd& y_ref) override {
    return baseline_step(ctl, u_ref, y_ref);
  }
  void observe(const VectorXd& u, const VectorXd& y2, const VectorXd& x1) override {
    ctl.observe(u, y2, x1);
  }
  mpc::ModelController ctl;
};

ClosedLoopLog simulate(const Scenario& sc, const OfflineData& offline, LoopController& ctl,
                       const RunOptions& options) {
  const auto& known = sc.known;
  const auto& hidden = sc.hidden;
  const Index m1 = known.input_dim(), m2 = hidden.input_dim();
  const Index p2 = hidden.output_dim();
  const double eps = sc.noise.epsilon;

  ClosedLoopLog log;
  log.dataset = offline.dataset;
  log.offline_noise = offline.noise;
  log.offline_states = offline.states;
  log.epsilon = eps;
  log.steps.reserve(static_cast<std::size_t>(sc.duration));

  NoiseSource noise(eps, sc.noise.distribution, sc.noise.seed ^ kOnlineStream);
  VectorXd x1 = sc.x1_initial, x2 = sc.x2_initial;

  // Advances the plant under u and returns the noisy Sigma2 measurement taken at the old state.
  auto advance = [&](const VectorXd& u, const VectorXd& y2_true, const VectorXd& delta) {
    x1 = known.A1 * x1 + known.B1 * u.head(m1) + known.E1 * y2_true;
    x2 = hidden.A2 * x2 + hidden.B2 * u.tail(m2);
    return VectorXd(y2_true + delta);
  };

  VectorXd last_u = sc.warmup_input;
  VectorXd last_y2;
  for (int j = 0; j < sc.controller.n2; ++j) {
    const VectorXd y2_true = hidden.output(x2);
    const VectorXd delta = noise.draw(p2);
    last_y2 = advance(sc.warmup_input, y2_true, delta);
    ctl.observe(sc.warmup_input, last_y2, x1);
  }

  const mpc::ControllerConfig& cfg = sc.controller;
  const behavioral::BehavioralDataset* eq_dataset_seen = nullptr;
  VectorXd eq_u_ref, eq_y_ref;
  mpc::EquilibriumPoint eq;
  bool eq_valid = false;

  for (int k = 0; k < sc.duration; ++k) {
    const ReferencePoint& ref = active_reference(sc.schedule, k);
    VectorXd u_ref = ref.u_ref, y_ref = ref.y_ref;
    if (sc.reference_smoothing) {
      u_ref = last_u;
      y_ref.tail(p2) = last_y2;
    }

    StepRecord rec;
    rec.step = k;
    rec.x1 = x1;
    rec.x2 = x2;
    const VectorXd y2_true = hidden.output(x2);
    rec.noise = noise.draw(p2);
    rec.y_true.resize(sc.p());
    rec.y_true << known.C1 * x1, y2_true;
    rec.y_measured = rec.y_true;
    rec.y_measured.tail(p2) += rec.noise;
    rec.u_ref = ref.u_ref;
    rec.y_ref = ref.y_ref;

    mpc::StepResult r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = ctl.step(u_ref, y_ref);
    } catch (const ControllerAbort& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      spdlog::error("step {}: controller aborted: {}", k, e.what());
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    rec.solve_ms =
        options.record_timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;

    const mpc::OcpSolution& sol = r.solution;
    rec.u = r.input;
    rec.status = sol.qp.status;
    rec.feasible = r.feasible;
    rec.held = r.held;
    rec.iterations = sol.qp.iterations;
    rec.cost = sol.cost;
    rec.g_l1 = sol.g.lpNorm<1>();
    if (sol.sigma.size() > 0) {
      rec.sigma_inf = sol.sigma.lpNorm<Eigen::Infinity>();
      rec.sigma0_inf = sol.sigma.head(cfg.n2 * p2).lpNorm<Eigen::Infinity>();
    }
    if (r.feasible) {
      rec.u_pred = sol.u_traj;
      rec.y_pred = sol.y_traj;
      rec.u_s = sol.artificial_eq.u_s;
      rec.y_s = sol.artificial_eq.y_s;
      rec.x1_s = sol.artificial_eq.x1_s;
    }

    // The reachable equilibrium only changes with the reference or the data.
    if (const behavioral::BehavioralDataset* ds = ctl.dataset()) {
      const bool stale = !eq_valid || eq_dataset_seen != ds || cfg.online_update ||
                         eq_u_ref != u_ref || eq_y_ref != y_ref;
      if (stale) {
        try {
          eq = mpc::reachable_equilibrium(*ds, known, u_ref, y_ref, cfg);
          eq_valid = true;
        } catch (const InfeasibleError& e) {
          spdlog::warn("step {}: reachable equilibrium not found: {}", k, e.what());
          eq_valid = false;
        }
        eq_dataset_seen = ds;
        eq_u_ref = u_ref;
        eq_y_ref = y_ref;
      }
      if (eq_valid) {
        rec.eq_cost = eq.cost;
        rec.eq_u = eq.u_s;
        rec.eq_y = eq.y_s;
        rec.eq_x1 = eq.x1_s;
      }
    }

    last_y2 = advance(r.input, y2_true, rec.noise);
    last_u = r.input;
    ctl.observe(r.input, last_y2, x1);
    log.steps.push_back(std::move(rec));
  }
  return log;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string to_string(NoiseDistribution d) {
  return d == NoiseDistribution::kUniform ? "uniform" : "truncated_gaussian";
}

std::string to_string(Excitation e) { return e == Excitation::kPrbs ? "prbs" : "uniform"; }

std::string to_string(Comparator c) {
  return c == Comparator::kNone ? "none" : "baseline_linear";
}

NoiseDistribution noise_distribution_from_string(const std::string& s) {
  if (s == "uniform") return NoiseDistribution::kUniform;
  if (s == "truncated_gaussian") return NoiseDistribution::kTruncatedGaussian;
  throw ConfigError("unknown noise distribution '" + s + "'");
}

Excitation excitation_from_string(const std::string& s) {
  if (s == "prbs") return Excitation::kPrbs;
  if (s == "uniform") return Excitation::kUniform;
  throw ConfigError("unknown excitation '" + s + "'");
}

Comparator comparator_from_string(const std::string& s) {
  if (s == "none") return Comparator::kNone;
  if (s == "baseline_linear") return Comparator::kBaselineLinear;
  throw ConfigError("unknown comparator '" + s + "'");
}

void Scenario::set_epsilon(double epsilon) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
  noise.epsilon = epsilon;
  const mpc::Weights w =
      mpc::default_weights(m(), p(), hidden.output_dim(), epsilon, offline.N);
  if (derived.gamma) controller.weights.Gamma = w.Gamma;
  if (derived.lambda) controller.weights.Lambda = w.Lambda;
  if (derived.noise_bound) controller.noise_bound = epsilon;
}

void Scenario::validate() const {
  if (duration < 1) throw ConfigError("duration must be at least 1");
  if (!(noise.epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
  if (schedule.empty()) throw ConfigError("reference schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].u_ref.size() != m() || schedule[i].y_ref.size() != p()) {
      throw DimensionError("reference entry has the wrong dimension");
    }
    if (i > 0 && schedule[i].start < schedule[i - 1].start) {
      throw ConfigError("reference schedule must be sorted by start step");
    }
  }
  if (known.coupling_dim() != hidden.output_dim()) {
    throw DimensionError("E1 columns must match the Sigma2 output dimension");
  }
  if (x1_initial.size() != known.state_dim() || x2_initial.size() != hidden.state_dim()) {
    throw DimensionError("initial state has the wrong dimension");
  }
  if (warmup_input.size() != m()) throw DimensionError("warm-up input has the wrong dimension");
  if (offline.offset.size() != 0 && offline.offset.size() != hidden.input_dim()) {
    throw DimensionError("offline offset has the wrong dimension");
  }
  if (offline.max_attempts < 1) throw ConfigError("offline.max_attempts must be positive");
  for (int c : tracked_outputs) {
    if (c < 0 || c >= p()) throw ConfigError("tracked output index out of range");
  }
  if (!(steady_state_fraction > 0.0 && steady_state_fraction <= 1.0)) {
    throw ConfigError("steady_state_fraction must lie in (0, 1]");
  }
  if (comparator == Comparator::kBaselineLinear && !baseline_model) {
    throw ConfigError("baseline comparator requires a baseline model");
  }
  controller.validate(m(), p(), hidden.output_dim());
}

OfflineData collect_offline_data(const linsys::HiddenSubsystem& hidden, const OfflineSpec& spec,
                                 int L, int n, double epsilon, NoiseDistribution distribution,
                                 std::uint64_t seed) {
  const int order = L + 2 * n;
  const Index m2 = hidden.input_dim(), p2 = hidden.output_dim(), n2 = hidden.state_dim();
  if (spec.N < order || spec.N - order + 1 < m2 * order) {
    throw ConfigError("offline length N is too short for persistency of excitation of order " +
                      std::to_string(order));
  }
  if (!(spec.amplitude > 0.0)) throw ConfigError("excitation amplitude must be positive");
  const VectorXd offset = spec.offset.size() == 0 ? VectorXd::Zero(m2) : spec.offset;

  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    const std::uint64_t s = seed + kRetryStride * static_cast<std::uint64_t>(attempt);
    std::mt19937_64 rng(s);
    MatrixXd u(m2, spec.N);
    for (Index k = 0; k < spec.N; ++k) {
      for (Index i = 0; i < m2; ++i) {
        double v;
        if (spec.excitation == Excitation::kPrbs) {
          v = std::bernoulli_distribution(0.5)(rng) ? spec.amplitude : -spec.amplitude;
        } else {
          v = std::uniform_real_distribution<double>(-spec.amplitude, spec.amplitude)(rng);
        }
        u(i, k) = offset(i) + v;
      }
    }
    if (!behavioral::persistency_order_check(u, order)) {
      spdlog::debug("offline data attempt {} not persistently exciting", attempt);
      continue;
    }
    MatrixXd states(n2, spec.N), y(p2, spec.N);
    VectorXd x = VectorXd::Zero(n2);
    for (Index k = 0; k < spec.N; ++k) {
      states.col(k) = x;
      y.col(k) = hidden.output(x);
      x = hidden.A2 * x + hidden.B2 * u.col(k);
    }
    NoiseSource noise(epsilon, distribution, s);
    MatrixXd delta(p2, spec.N);
    for (Index k = 0; k < spec.N; ++k) delta.col(k) = noise.draw(p2);

    OfflineData out;
    out.dataset = behavioral::BehavioralDataset::Create(
        behavioral::Trajectory::Create(u, y + delta), L + n, epsilon);
    out.noise = std::move(delta);
    out.states = std::move(states);
    out.seed_used = s;
    return out;
  }
  throw IllPosedError("offline excitation failed the persistency check in every attempt");
}

double improvement_percent(double proposed, double baseline) {
  if (baseline == 0.0) return proposed == 0.0 ? 0.0 : -100.0;
  return (baseline - proposed) / baseline * 100.0;
}

MetricsReport compute_metrics(const ClosedLoopLog& log, const MetricsOptions& options,
                              const ClosedLoopLog* comparator) {
  if (log.steps.empty()) throw ConfigError("compute_metrics: empty log");
  std::vector<int> channels = options.tracked_outputs;
  if (channels.empty()) {
    for (Index i = 0; i < log.steps.front().y_true.size(); ++i) {
      channels.push_back(static_cast<int>(i));
    }
  }
  const Index nc = static_cast<Index>(channels.size());

  auto rmse_of = [&](const ClosedLoopLog& l, VectorXd& per_channel) {
    per_channel = VectorXd::Zero(nc);
    for (const StepRecord& r : l.steps) {
      for (Index c = 0; c < nc; ++c) {
        const double e = r.y_true(channels[c]) - r.y_ref(channels[c]);
        per_channel(c) += e * e;
      }
    }
    const double total = per_channel.sum();
    per_channel = (per_channel / static_cast<double>(l.steps.size())).cwiseSqrt();
    return std::sqrt(total / static_cast<double>(l.steps.size() * nc));
  };

  MetricsReport m;
  m.steps = static_cast<int>(log.steps.size());
  m.overall_rmse = rmse_of(log, m.rmse);

  const std::size_t tail = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(options.steady_state_fraction *
                                            static_cast<double>(log.steps.size()))));
  double sq = 0.0;
  for (std::size_t k = log.steps.size() - tail; k < log.steps.size(); ++k) {
    const StepRecord& r = log.steps[k];
    for (Index c = 0; c < nc; ++c) {
      const double e = r.y_true(channels[c]) - r.y_ref(channels[c]);
      sq += e * e;
    }
  }
  m.steady_state_mse = sq / static_cast<double>(tail * nc);

  std::vector<double> times;
  int feasible = 0;
  for (const StepRecord& r : log.steps) {
    feasible += r.feasible ? 1 : 0;
    times.push_back(r.solve_ms);
    const bool u_bad = options.input_set && !options.input_set->contains(r.u, 1e-9);
    const bool y_bad = options.output_set && !options.output_set->contains(r.y_true, 1e-9);
    if (u_bad || y_bad) ++m.constraint_violations;
  }
  m.feasibility_rate = static_cast<double>(feasible) / static_cast<double>(log.steps.size());
  m.mean_solve_ms = mean(times);
  m.max_solve_ms = *std::max_element(times.begin(), times.end());
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  m.median_solve_ms =
      sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  if (comparator != nullptr && !comparator->steps.empty()) {
    m.has_comparator = true;
    m.baseline_overall_rmse = rmse_of(*comparator, m.baseline_rmse);
    m.improvement_pct.resize(nc);
    for (Index c = 0; c < nc; ++c) {
      m.improvement_pct(c) = improvement_percent(m.rmse(c), m.baseline_rmse(c));
    }
    m.overall_improvement_pct = improvement_percent(m.overall_rmse, m.baseline_overall_rmse);
  }
  return m;
}

mpc::StepResult baseline_step(mpc::ModelController& controller,
                              const Eigen::Ref<const VectorXd>& u_ref,
                              const Eigen::Ref<const VectorXd>& y_ref) {
  return controller.step(u_ref, y_ref);
}

RunResult run_closed_loop(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  const mpc::ControllerConfig& cfg = scenario.controller;
  const OfflineData offline = collect_offline_data(
      scenario.hidden, scenario.offline, cfg.L, cfg.n2, scenario.noise.epsilon,
      scenario.noise.distribution, scenario.noise.seed);

  RunResult result;
  {
    DataDrivenLoop loop(
        mpc::Controller(scenario.known, cfg, offline.dataset, scenario.x1_initial));
    result.log = simulate(scenario, offline, loop, options);
  }
  if (scenario.comparator == Comparator::kBaselineLinear) {
    ModelLoop loop(mpc::ModelController(scenario.known, *scenario.baseline_model, cfg,
                                        scenario.x1_initial));
    result.baseline_log = simulate(scenario, offline, loop, options);
  }

  MetricsOptions mo;
  mo.tracked_outputs = scenario.tracked_outputs;
  mo.steady_state_fraction = scenario.steady_state_fraction;
  mo.input_set = &cfg.input_set;
  mo.output_set = &cfg.output_set;
  if (!result.log.steps.empty()) {
    result.metrics = compute_metrics(
        result.log, mo, result.baseline_log ? &*result.baseline_log : nullptr);
  }
  return result;
}

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

// Piecewise-constant position profile cycling through `levels` every `dwell`
// steps. The thrust reference is the spring force that holds each position.
std::vector<ReferencePoint> staircase_schedule(int duration, int dwell,
                                               const std::vector<double>& levels,
                                               double stiffness) {
  std::vector<ReferencePoint> out;
  for (int k = 0, i = 0; k < duration; k += dwell, ++i) {
    const double y = levels[static_cast<std::size_t>(i) % levels.size()];
    ReferencePoint r;
    r.start = k;
    r.u_ref = VectorXd::Zero(1);
    r.y_ref = (VectorXd(2) << y, stiffness * y).finished();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

Scenario canonical_cascade(double epsilon, std::uint64_t seed, int duration) {
  Scenario s;
  s.name = "canonical_cascade";
  s.known = linsys::KnownSubsystem::CreateValidated(scalar(0.8), scalar(0.5), scalar(1.0),
                                                    scalar(1.0));
  s.hidden = linsys::HiddenSubsystem::Create(scalar(0.7), scalar(0.3), scalar(1.0));
  s.offline.N = 200;
  s.offline.excitation = Excitation::kUniform;
  s.offline.amplitude = 1.0;

  mpc::ControllerConfig& c = s.controller;
  c.L = 20;
  c.n1 = 1;
  c.n2 = 1;
  c.weights = mpc::default_weights(2, 2, 1, epsilon, s.offline.N);
  c.input_set = linsys::PolytopicSet::Box(VectorXd::Constant(2, -5.0), VectorXd::Constant(2, 5.0));
  c.output_set =
      linsys::PolytopicSet::Box(VectorXd::Constant(2, -20.0), VectorXd::Constant(2, 20.0));
  c.noise_bound = epsilon;

  ReferencePoint r;
  r.u_ref = (VectorXd(2) << 0.0, 1.0).finished();
  r.y_ref = (VectorXd(2) << 5.0, 1.0).finished();
  s.schedule = {r};
  s.noise.epsilon = epsilon;
  s.noise.seed = seed;
  s.duration = duration;
  s.x1_initial = VectorXd::Zero(1);
  s.x2_initial = VectorXd::Zero(1);
  s.warmup_input = VectorXd::Zero(2);
  s.derived = {true, true, true};
  return s;
}

Scenario certified_cascade(double epsilon, std::uint64_t seed, int duration) {
  Scenario s = canonical_cascade(epsilon, seed, duration);
  s.name = "certified_cascade";
  mpc::ControllerConfig& c = s.controller;
  c.input_set = linsys::PolytopicSet::Box(VectorXd::Constant(2, -1e3), VectorXd::Constant(2, 1e3));
  c.output_set = linsys::PolytopicSet::Box(VectorXd::Constant(2, -1e3), VectorXd::Constant(2, 1e3));
  c.weights.Lambda = 1e-2;
  c.weights.Gamma = 1e-2 * MatrixXd::Identity(1, 1);
  s.derived = {false, false, true};
  s.x1_initial = VectorXd::Constant(1, 5.0);
  s.x2_initial = VectorXd::Constant(1, 1.0);
  s.warmup_input = (VectorXd(2) << 0.0, 1.0).finished();
  return s;
}

Scenario turbine_surrogate(double epsilon, std::uint64_t seed, int duration) {
  const double dt = 0.3, stiffness = 1.0, damping = 1.2;
  Scenario s;
  s.name = "turbine_surrogate";
  MatrixXd a1(2, 2), e1(2, 1), c1(1, 2);
  a1 << 1.0, dt, -stiffness * dt, 1.0 - damping * dt;
  e1 << 0.0, dt;
  c1 << 1.0, 0.0;
  s.known = linsys::KnownSubsystem::CreateValidated(a1, MatrixXd::Zero(2, 0), c1, e1);

  MatrixXd a2(2, 2), b2(2, 1), c2(1, 2);
  a2 << 0.6, 0.2, 0.0, 0.7;
  b2 << 0.0, 0.3;
  c2 << 1.0, 0.0;
  // Static gain of the linear part is 0.2 * 0.3 / ((1 - 0.6)(1 - 0.7)) = 0.5.
  s.hidden = linsys::HiddenSubsystem::Create(
      a2, b2, c2, linsys::StaticNonlinearity{linsys::OutputMap::kTanh, 1.2});
  s.baseline_model = mpc::LinearModel{a2, b2, c2};
  s.comparator = Comparator::kBaselineLinear;

  s.offline.N = 200;
  s.offline.excitation = Excitation::kUniform;
  s.offline.amplitude = 2.0;
  s.offline.offset = VectorXd::Constant(1, 2.0);

  mpc::ControllerConfig& c = s.controller;
  c.L = 20;
  c.n1 = 2;
  c.n2 = 2;
  c.weights = mpc::default_weights(1, 2, 1, epsilon, s.offline.N);
  c.weights.Q(1, 1) = 1e-2;  // thrust is not a tracked channel
  c.weights.T(1, 1) = 1e-2;
  // The local linear fit of the saturating map, not the sensor noise, sets the
  // regularization scale here.
  c.weights.Lambda = 0.3;
  c.affine_data = true;
  c.input_set = linsys::PolytopicSet::Box(VectorXd::Constant(1, -6.0), VectorXd::Constant(1, 6.0));
  c.output_set =
      linsys::PolytopicSet::Box(VectorXd::Constant(2, -10.0), VectorXd::Constant(2, 10.0));
  c.noise_bound = epsilon;
  c.online_update = true;

  s.schedule = staircase_schedule(duration, 150, {1.0, 0.5, 1.1, 0.8}, stiffness);
  s.reference_smoothing = true;
  s.tracked_outputs = {0};
  s.noise.epsilon = epsilon;
  s.noise.seed = seed;
  s.duration = duration;
  s.x1_initial = VectorXd::Zero(2);
  s.x2_initial = VectorXd::Zero(2);
  s.warmup_input = VectorXd::Zero(1);
  s.derived = {true, false, true};
  return s;
}

}  // namespace dfmpc::sim
