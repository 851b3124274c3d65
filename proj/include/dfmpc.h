/* Data-driven predictive control for partially known cascades: C interface.
 *
 * All functions return a dfmpc_status. On failure a description is available
 * from dfmpc_last_error() on the calling thread until the next failing call.
 * Handles are opaque; each must be released with its matching _free function.
 * Distinct handles may be used concurrently from different threads; a single
 * handle must not. Matrices are passed row-major. */
#ifndef DFMPC_H_
#define DFMPC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DFMPC_BUILDING_LIBRARY)
#define DFMPC_API __attribute__((visibility("default")))
#else
#define DFMPC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dfmpc_status {
  DFMPC_OK = 0,
  DFMPC_ERR_INVALID_ARGUMENT = 1, /* null pointer, unknown name, out-of-range index */
  DFMPC_ERR_DIMENSION = 2,
  DFMPC_ERR_CONFIG = 3, /* invalid scenario, unreadable or malformed file */
  DFMPC_ERR_ILL_POSED = 4,
  DFMPC_ERR_INFEASIBLE = 5,
  DFMPC_ERR_ABORTED = 6,
  DFMPC_ERR_EQUILIBRIUM = 7,
  DFMPC_ERR_OUT_OF_MEMORY = 8,
  DFMPC_ERR_INTERNAL = 99
} dfmpc_status;

typedef struct dfmpc_scenario dfmpc_scenario;
typedef struct dfmpc_run dfmpc_run;
typedef struct dfmpc_controller dfmpc_controller;

DFMPC_API const char* dfmpc_version(void);
DFMPC_API const char* dfmpc_status_string(dfmpc_status status);
/* Message of the last failure on this thread, "" if none. */
DFMPC_API const char* dfmpc_last_error(void);
/* Library diagnostics go to stderr. level: "off", "error", "warn", "info" or "debug". */
DFMPC_API dfmpc_status dfmpc_set_log_level(const char* level);

/* ---- scenarios ---------------------------------------------------------- */

DFMPC_API dfmpc_status dfmpc_scenario_load(const char* path, dfmpc_scenario** out);
DFMPC_API dfmpc_status dfmpc_scenario_parse(const char* json_text, dfmpc_scenario** out);
/* name: "canonical_cascade", "certified_cascade" or "turbine_surrogate". */
DFMPC_API dfmpc_status dfmpc_scenario_builtin(const char* name, double epsilon, uint64_t seed,
                                              dfmpc_scenario** out);
DFMPC_API dfmpc_status dfmpc_scenario_clone(const dfmpc_scenario* scenario,
                                            dfmpc_scenario** out);
DFMPC_API void dfmpc_scenario_free(dfmpc_scenario* scenario);

/* Writes the scenario as a loadable JSON document. */
DFMPC_API dfmpc_status dfmpc_scenario_save(const dfmpc_scenario* scenario, const char* path);

DFMPC_API dfmpc_status dfmpc_scenario_set_seed(dfmpc_scenario* scenario, uint64_t seed);
DFMPC_API dfmpc_status dfmpc_scenario_seed(const dfmpc_scenario* scenario, uint64_t* out);
/* Also refreshes the weights and noise bound the file declared as "auto". */
DFMPC_API dfmpc_status dfmpc_scenario_set_epsilon(dfmpc_scenario* scenario, double epsilon);
DFMPC_API dfmpc_status dfmpc_scenario_epsilon(const dfmpc_scenario* scenario, double* out);
DFMPC_API dfmpc_status dfmpc_scenario_is_lti(const dfmpc_scenario* scenario, int* out);
/* Output directory named in the file; "" when absent. Valid while the handle lives. */
DFMPC_API const char* dfmpc_scenario_out_dir(const dfmpc_scenario* scenario);

typedef struct dfmpc_dims {
  size_t m1, m2, p1, p2, n1, n2; /* n2: true order of the hidden subsystem */
} dfmpc_dims;

DFMPC_API dfmpc_status dfmpc_scenario_dims(const dfmpc_scenario* scenario, dfmpc_dims* out);

/* ---- closed-loop runs ---------------------------------------------------- */

typedef struct dfmpc_run_options {
  int record_timing; /* 0 writes solve_ms = 0 so that logs are reproducible byte for byte */
} dfmpc_run_options;

/* A controller abort under the "error" infeasibility policy is not a failure:
 * the partial run is returned and dfmpc_metrics.aborted is set. */
DFMPC_API dfmpc_status dfmpc_run_scenario(const dfmpc_scenario* scenario,
                                          const dfmpc_run_options* options, dfmpc_run** out);
DFMPC_API void dfmpc_run_free(dfmpc_run* run);

typedef struct dfmpc_metrics {
  int steps;
  int aborted;
  double overall_rmse;
  double steady_state_mse;
  double feasibility_rate;
  int constraint_violations;
  double mean_solve_ms;
  double median_solve_ms;
  double max_solve_ms;
  int has_comparator;
  double baseline_overall_rmse;
  double overall_improvement_pct;
} dfmpc_metrics;

DFMPC_API dfmpc_status dfmpc_run_metrics(const dfmpc_run* run, dfmpc_metrics* out);
/* "" unless the run aborted. Valid while the handle lives. */
DFMPC_API const char* dfmpc_run_abort_reason(const dfmpc_run* run);
DFMPC_API dfmpc_status dfmpc_run_num_steps(const dfmpc_run* run, size_t* out);
/* Applied input (m values) and true output (p values) at logged step k; either
 * pointer may be null. */
DFMPC_API dfmpc_status dfmpc_run_step(const dfmpc_run* run, size_t k, double* u, size_t m,
                                      double* y_true, size_t p);
/* log.csv, metrics.json and plotdata/ under dir. */
DFMPC_API dfmpc_status dfmpc_run_write_artifacts(const dfmpc_run* run, const char* dir);

typedef struct dfmpc_verify_report {
  int checked_steps;
  int bound_violations;
  int decay_violations;
  double median_ratio; /* bound / observed error */
  double max_bound;
  double max_error;
  double V_max;
  int certificate_evaluated; /* 0 when V_max = 0 leaves nothing to bound */
  double d_ref, d_safe, c_e, margin;
  double dominance_lhs, dominance_rhs;
  int dominance_holds;
} dfmpc_verify_report;

/* Checks the prediction-error bound and cost decay on the run and evaluates
 * the safety certificate and dominance inequality. DFMPC_ERR_ILL_POSED when
 * the hidden subsystem is not LTI. */
DFMPC_API dfmpc_status dfmpc_run_verify(const dfmpc_run* run, dfmpc_verify_report* out);

/* ---- stepwise control ---------------------------------------------------- */

/* Collects the scenario's offline data and builds a controller at the
 * scenario's initial known-subsystem state. Feed n2 samples through
 * dfmpc_controller_observe before the first step. */
DFMPC_API dfmpc_status dfmpc_controller_create(const dfmpc_scenario* scenario,
                                               dfmpc_controller** out);
DFMPC_API void dfmpc_controller_free(dfmpc_controller* controller);
DFMPC_API dfmpc_status dfmpc_controller_step(dfmpc_controller* controller, const double* u_ref,
                                             size_t m, const double* y_ref, size_t p,
                                             double* u_out, int* feasible);
DFMPC_API dfmpc_status dfmpc_controller_observe(dfmpc_controller* controller,
                                                const double* u_applied, size_t m,
                                                const double* y2_measured, size_t p2,
                                                const double* x1_next, size_t n1);

/* ---- geometry and bounds -------------------------------------------------- */

/* Signed distance of y (cols values) to {v : E v <= e}, E being rows x cols. */
DFMPC_API dfmpc_status dfmpc_signed_distance(const double* E, size_t rows, size_t cols,
                                             const double* e, const double* y, double* out);
DFMPC_API dfmpc_status dfmpc_prediction_error_bound(double c_sigma1, double c_sigma2,
                                                    double g_l1, double sigma_inf,
                                                    double sigma0_inf, double epsilon,
                                                    double* out);

#ifdef __cplusplus
}
#endif

#endif /* DFMPC_H_ */
