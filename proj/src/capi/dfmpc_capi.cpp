#include "dfmpc.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dfmpc/artifacts.hpp"
#include "dfmpc/errors.hpp"
#include "dfmpc/guarantees.hpp"
#include "dfmpc/scenario_io.hpp"
#include "dfmpc/sim.hpp"

struct dfmpc_scenario {
  dfmpc::sim::Scenario scenario;
  std::string out_dir;
};

struct dfmpc_run {
  dfmpc::sim::Scenario scenario;
  dfmpc::sim::RunResult result;
};

struct dfmpc_controller {
  std::optional<dfmpc::mpc::Controller> controller;
  Eigen::Index m = 0, p = 0, p2 = 0, n1 = 0;
};

namespace {

using Eigen::Map;
using Eigen::VectorXd;

thread_local std::string g_last_error;

dfmpc_status fail(dfmpc_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
dfmpc_status guard(F&& body) {
  try {
    return body();
  } catch (const dfmpc::DimensionError& e) {
    return fail(DFMPC_ERR_DIMENSION, e.what());
  } catch (const dfmpc::ConfigError& e) {
    return fail(DFMPC_ERR_CONFIG, e.what());
  } catch (const dfmpc::IllPosedError& e) {
    return fail(DFMPC_ERR_ILL_POSED, e.what());
  } catch (const dfmpc::InfeasibleError& e) {
    return fail(DFMPC_ERR_INFEASIBLE, e.what());
  } catch (const dfmpc::ControllerAbort& e) {
    return fail(DFMPC_ERR_ABORTED, e.what());
  } catch (const dfmpc::EquilibriumUndefined& e) {
    return fail(DFMPC_ERR_EQUILIBRIUM, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DFMPC_ERR_OUT_OF_MEMORY, "out of memory");
  } catch (const std::exception& e) {
    return fail(DFMPC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DFMPC_ERR_INTERNAL, "unknown exception");
  }
}

dfmpc_status null_argument(const char* name) {
  return fail(DFMPC_ERR_INVALID_ARGUMENT, std::string(name) + " is null");
}

#define DFMPC_REQUIRE(ptr) \
  if ((ptr) == nullptr) return null_argument(#ptr)

dfmpc_status wrap_scenario(dfmpc::io::ScenarioFile file, dfmpc_scenario** out) {
  *out = new dfmpc_scenario{std::move(file.scenario), std::move(file.out_dir)};
  return DFMPC_OK;
}

dfmpc_status check_length(size_t got, Eigen::Index want, const char* name) {
  if (got != static_cast<size_t>(want)) {
    return fail(DFMPC_ERR_DIMENSION, std::string(name) + " has length " + std::to_string(got) +
                                         ", expected " + std::to_string(want));
  }
  return DFMPC_OK;
}

}  // namespace

extern "C" {

const char* dfmpc_version(void) { return "0.1.0"; }

const char* dfmpc_status_string(dfmpc_status status) {
  switch (status) {
    case DFMPC_OK: return "ok";
    case DFMPC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DFMPC_ERR_DIMENSION: return "dimension mismatch";
    case DFMPC_ERR_CONFIG: return "configuration error";
    case DFMPC_ERR_ILL_POSED: return "ill-posed problem";
    case DFMPC_ERR_INFEASIBLE: return "infeasible";
    case DFMPC_ERR_ABORTED: return "controller aborted";
    case DFMPC_ERR_EQUILIBRIUM: return "equilibrium undefined";
    case DFMPC_ERR_OUT_OF_MEMORY: return "out of memory";
    case DFMPC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dfmpc_last_error(void) { return g_last_error.c_str(); }

dfmpc_status dfmpc_set_log_level(const char* level) {
  DFMPC_REQUIRE(level);
  const std::string name(level);
  spdlog::level::level_enum lvl;
  if (name == "off") {
    lvl = spdlog::level::off;
  } else if (name == "error") {
    lvl = spdlog::level::err;
  } else if (name == "warn") {
    lvl = spdlog::level::warn;
  } else if (name == "info") {
    lvl = spdlog::level::info;
  } else if (name == "debug") {
    lvl = spdlog::level::debug;
  } else {
    return fail(DFMPC_ERR_INVALID_ARGUMENT, "unknown log level '" + name + "'");
  }
  return guard([&] {
    static const bool installed = [] {
      spdlog::set_default_logger(spdlog::stderr_color_mt("dfmpc"));
      return true;
    }();
    (void)installed;
    spdlog::set_level(lvl);
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_scenario_load(const char* path, dfmpc_scenario** out) {
  DFMPC_REQUIRE(path);
  DFMPC_REQUIRE(out);
  *out = nullptr;
  return guard([&] { return wrap_scenario(dfmpc::io::load_scenario(path), out); });
}

dfmpc_status dfmpc_scenario_parse(const char* json_text, dfmpc_scenario** out) {
  DFMPC_REQUIRE(json_text);
  DFMPC_REQUIRE(out);
  *out = nullptr;
  return guard([&] { return wrap_scenario(dfmpc::io::parse_scenario(json_text), out); });
}

dfmpc_status dfmpc_scenario_builtin(const char* name, double epsilon, uint64_t seed,
                                    dfmpc_scenario** out) {
  DFMPC_REQUIRE(name);
  DFMPC_REQUIRE(out);
  *out = nullptr;
  if (!(epsilon >= 0.0)) return fail(DFMPC_ERR_CONFIG, "epsilon must be nonnegative");
  const std::string n(name);
  return guard([&] {
    dfmpc::sim::Scenario s;
    if (n == "canonical_cascade") {
      s = dfmpc::sim::canonical_cascade(epsilon, seed);
    } else if (n == "certified_cascade") {
      s = dfmpc::sim::certified_cascade(epsilon, seed);
    } else if (n == "turbine_surrogate") {
      s = dfmpc::sim::turbine_surrogate(epsilon, seed);
    } else {
      return fail(DFMPC_ERR_INVALID_ARGUMENT, "unknown built-in scenario '" + n + "'");
    }
    *out = new dfmpc_scenario{std::move(s), {}};
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_scenario_clone(const dfmpc_scenario* scenario, dfmpc_scenario** out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  *out = nullptr;
  return guard([&] {
    *out = new dfmpc_scenario(*scenario);
    return DFMPC_OK;
  });
}

void dfmpc_scenario_free(dfmpc_scenario* scenario) { delete scenario; }

dfmpc_status dfmpc_scenario_save(const dfmpc_scenario* scenario, const char* path) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(path);
  return guard([&] {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) return fail(DFMPC_ERR_CONFIG, std::string("cannot write '") + path + "'");
    out << dfmpc::io::dump_scenario(scenario->scenario, scenario->out_dir);
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_scenario_set_seed(dfmpc_scenario* scenario, uint64_t seed) {
  DFMPC_REQUIRE(scenario);
  scenario->scenario.noise.seed = seed;
  return DFMPC_OK;
}

dfmpc_status dfmpc_scenario_seed(const dfmpc_scenario* scenario, uint64_t* out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  *out = scenario->scenario.noise.seed;
  return DFMPC_OK;
}

dfmpc_status dfmpc_scenario_set_epsilon(dfmpc_scenario* scenario, double epsilon) {
  DFMPC_REQUIRE(scenario);
  return guard([&] {
    scenario->scenario.set_epsilon(epsilon);
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_scenario_epsilon(const dfmpc_scenario* scenario, double* out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  *out = scenario->scenario.noise.epsilon;
  return DFMPC_OK;
}

dfmpc_status dfmpc_scenario_is_lti(const dfmpc_scenario* scenario, int* out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  *out = scenario->scenario.hidden.is_lti() ? 1 : 0;
  return DFMPC_OK;
}

const char* dfmpc_scenario_out_dir(const dfmpc_scenario* scenario) {
  return scenario ? scenario->out_dir.c_str() : "";
}

dfmpc_status dfmpc_scenario_dims(const dfmpc_scenario* scenario, dfmpc_dims* out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  const auto& s = scenario->scenario;
  out->m1 = static_cast<size_t>(s.known.input_dim());
  out->m2 = static_cast<size_t>(s.hidden.input_dim());
  out->p1 = static_cast<size_t>(s.known.output_dim());
  out->p2 = static_cast<size_t>(s.hidden.output_dim());
  out->n1 = static_cast<size_t>(s.known.state_dim());
  out->n2 = static_cast<size_t>(s.hidden.state_dim());
  return DFMPC_OK;
}

dfmpc_status dfmpc_run_scenario(const dfmpc_scenario* scenario, const dfmpc_run_options* options,
                                dfmpc_run** out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  *out = nullptr;
  return guard([&] {
    dfmpc::sim::RunOptions opts;
    if (options != nullptr) opts.record_timing = options->record_timing != 0;
    auto run = std::make_unique<dfmpc_run>();
    run->scenario = scenario->scenario;
    run->result = dfmpc::sim::run_closed_loop(run->scenario, opts);
    *out = run.release();
    return DFMPC_OK;
  });
}

void dfmpc_run_free(dfmpc_run* run) { delete run; }

dfmpc_status dfmpc_run_metrics(const dfmpc_run* run, dfmpc_metrics* out) {
  DFMPC_REQUIRE(run);
  DFMPC_REQUIRE(out);
  const dfmpc::sim::MetricsReport& m = run->result.metrics;
  out->steps = m.steps;
  out->aborted = run->result.log.aborted ? 1 : 0;
  out->overall_rmse = m.overall_rmse;
  out->steady_state_mse = m.steady_state_mse;
  out->feasibility_rate = m.feasibility_rate;
  out->constraint_violations = m.constraint_violations;
  out->mean_solve_ms = m.mean_solve_ms;
  out->median_solve_ms = m.median_solve_ms;
  out->max_solve_ms = m.max_solve_ms;
  out->has_comparator = m.has_comparator ? 1 : 0;
  out->baseline_overall_rmse = m.baseline_overall_rmse;
  out->overall_improvement_pct = m.overall_improvement_pct;
  return DFMPC_OK;
}

const char* dfmpc_run_abort_reason(const dfmpc_run* run) {
  return run ? run->result.log.abort_reason.c_str() : "";
}

dfmpc_status dfmpc_run_num_steps(const dfmpc_run* run, size_t* out) {
  DFMPC_REQUIRE(run);
  DFMPC_REQUIRE(out);
  *out = run->result.log.steps.size();
  return DFMPC_OK;
}

dfmpc_status dfmpc_run_step(const dfmpc_run* run, size_t k, double* u, size_t m, double* y_true,
                            size_t p) {
  DFMPC_REQUIRE(run);
  const auto& steps = run->result.log.steps;
  if (k >= steps.size()) {
    return fail(DFMPC_ERR_INVALID_ARGUMENT, "step index " + std::to_string(k) + " out of range");
  }
  const dfmpc::StepRecord& r = steps[k];
  if (u != nullptr) {
    if (dfmpc_status st = check_length(m, r.u.size(), "u"); st != DFMPC_OK) return st;
    Map<VectorXd>(u, r.u.size()) = r.u;
  }
  if (y_true != nullptr) {
    if (dfmpc_status st = check_length(p, r.y_true.size(), "y_true"); st != DFMPC_OK) return st;
    Map<VectorXd>(y_true, r.y_true.size()) = r.y_true;
  }
  return DFMPC_OK;
}

dfmpc_status dfmpc_run_write_artifacts(const dfmpc_run* run, const char* dir) {
  DFMPC_REQUIRE(run);
  DFMPC_REQUIRE(dir);
  return guard([&] {
    dfmpc::io::write_artifacts(dir, run->scenario, run->result);
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_run_verify(const dfmpc_run* run, dfmpc_verify_report* out) {
  DFMPC_REQUIRE(run);
  DFMPC_REQUIRE(out);
  const dfmpc::sim::Scenario& s = run->scenario;
  if (!s.hidden.is_lti()) {
    return fail(DFMPC_ERR_ILL_POSED,
                "verification needs an LTI hidden subsystem; the bounds are stated for the "
                "linear ground truth and '" +
                    dfmpc::linsys::to_string(s.hidden.nonlinearity.kind) +
                    "' output maps are outside them");
  }
  return guard([&] {
    namespace g = dfmpc::guarantees;
    const g::TraceReport trace = g::verify_trace(run->result.log, s.known, s.hidden, s.controller);
    double d_ref = std::numeric_limits<double>::infinity();
    for (const auto& r : s.schedule) {
      d_ref = std::min(d_ref, g::signed_distance(r.y_ref, s.controller.output_set));
    }
    const g::RunCertificate cert =
        g::certify_run(run->result.log, s.known, s.hidden, s.controller, d_ref);

    *out = dfmpc_verify_report{};
    out->checked_steps = trace.checked_steps;
    out->bound_violations = static_cast<int>(trace.violations.size());
    out->decay_violations = static_cast<int>(trace.decay_violations.size());
    out->median_ratio = trace.median_ratio;
    for (double b : trace.bounds) out->max_bound = std::max(out->max_bound, b);
    for (double e : trace.max_errors) out->max_error = std::max(out->max_error, e);
    out->V_max = cert.quantities.V_max;
    out->certificate_evaluated = cert.evaluated ? 1 : 0;
    out->d_ref = cert.certificate.d_ref;
    out->d_safe = cert.certificate.d_safe;
    out->c_e = cert.certificate.c_e;
    out->margin = cert.certificate.margin;
    out->dominance_lhs = cert.dominance.lhs;
    out->dominance_rhs = cert.dominance.rhs;
    out->dominance_holds = cert.dominance.holds ? 1 : 0;
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_controller_create(const dfmpc_scenario* scenario, dfmpc_controller** out) {
  DFMPC_REQUIRE(scenario);
  DFMPC_REQUIRE(out);
  *out = nullptr;
  return guard([&] {
    const dfmpc::sim::Scenario& s = scenario->scenario;
    s.validate();
    const dfmpc::mpc::ControllerConfig& cfg = s.controller;
    dfmpc::sim::OfflineData offline = dfmpc::sim::collect_offline_data(
        s.hidden, s.offline, cfg.L, cfg.n2, s.noise.epsilon, s.noise.distribution, s.noise.seed);
    auto c = std::make_unique<dfmpc_controller>();
    c->controller.emplace(s.known, cfg, std::move(offline.dataset), s.x1_initial);
    c->m = s.m();
    c->p = s.p();
    c->p2 = s.hidden.output_dim();
    c->n1 = s.known.state_dim();
    *out = c.release();
    return DFMPC_OK;
  });
}

void dfmpc_controller_free(dfmpc_controller* controller) { delete controller; }

dfmpc_status dfmpc_controller_step(dfmpc_controller* controller, const double* u_ref, size_t m,
                                   const double* y_ref, size_t p, double* u_out, int* feasible) {
  DFMPC_REQUIRE(controller);
  DFMPC_REQUIRE(u_ref);
  DFMPC_REQUIRE(y_ref);
  DFMPC_REQUIRE(u_out);
  if (dfmpc_status st = check_length(m, controller->m, "u_ref"); st != DFMPC_OK) return st;
  if (dfmpc_status st = check_length(p, controller->p, "y_ref"); st != DFMPC_OK) return st;
  return guard([&] {
    const dfmpc::mpc::StepResult r = controller->controller->step(
        Map<const VectorXd>(u_ref, controller->m), Map<const VectorXd>(y_ref, controller->p));
    Map<VectorXd>(u_out, controller->m) = r.input;
    if (feasible != nullptr) *feasible = r.feasible ? 1 : 0;
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_controller_observe(dfmpc_controller* controller, const double* u_applied,
                                      size_t m, const double* y2_measured, size_t p2,
                                      const double* x1_next, size_t n1) {
  DFMPC_REQUIRE(controller);
  DFMPC_REQUIRE(u_applied);
  DFMPC_REQUIRE(y2_measured);
  if (n1 > 0) DFMPC_REQUIRE(x1_next);
  if (dfmpc_status st = check_length(m, controller->m, "u_applied"); st != DFMPC_OK) return st;
  if (dfmpc_status st = check_length(p2, controller->p2, "y2_measured"); st != DFMPC_OK) {
    return st;
  }
  if (dfmpc_status st = check_length(n1, controller->n1, "x1_next"); st != DFMPC_OK) return st;
  return guard([&] {
    const VectorXd x1 = n1 > 0 ? VectorXd(Map<const VectorXd>(x1_next, controller->n1))
                               : VectorXd(0);
    controller->controller->observe(Map<const VectorXd>(u_applied, controller->m),
                                    Map<const VectorXd>(y2_measured, controller->p2), x1);
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_signed_distance(const double* E, size_t rows, size_t cols, const double* e,
                                   const double* y, double* out) {
  DFMPC_REQUIRE(E);
  DFMPC_REQUIRE(e);
  DFMPC_REQUIRE(y);
  DFMPC_REQUIRE(out);
  return guard([&] {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto r = static_cast<Eigen::Index>(rows), c = static_cast<Eigen::Index>(cols);
    const dfmpc::linsys::PolytopicSet set(Eigen::MatrixXd(Map<const RowMajor>(E, r, c)),
                                          VectorXd(Map<const VectorXd>(e, r)));
    *out = dfmpc::guarantees::signed_distance(Map<const VectorXd>(y, c), set);
    return DFMPC_OK;
  });
}

dfmpc_status dfmpc_prediction_error_bound(double c_sigma1, double c_sigma2, double g_l1,
                                          double sigma_inf, double sigma0_inf, double epsilon,
                                          double* out) {
  DFMPC_REQUIRE(out);
  return guard([&] {
    dfmpc::linsys::BoundConstants constants;
    constants.c_sigma1 = c_sigma1;
    constants.c_sigma2 = c_sigma2;
    *out = dfmpc::guarantees::prediction_error_bound(constants, g_l1, sigma_inf, sigma0_inf,
                                                     epsilon);
    return DFMPC_OK;
  });
}

}  // extern "C"
