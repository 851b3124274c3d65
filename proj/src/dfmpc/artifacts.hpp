#pragma once

#include <ostream>
#include <string>

#include "dfmpc/sim.hpp"
#include "dfmpc/trace.hpp"

namespace dfmpc::io {

/// Shortest round-trip decimal form, independent of the global locale.
std::string format_double(double v);

/// One row per step. Columns, in order: step, u_i, y_measured_i, y_true_i,
/// u_ref_i, y_ref_i, cost, eq_cost, g_l1, sigma_inf, sigma0_inf, status,
/// feasible, held, iterations, solve_ms.
void write_log_csv(const ClosedLoopLog& log, std::ostream& out);

/// Metrics plus run identification as a JSON document.
std::string metrics_json(const sim::Scenario& scenario, const sim::RunResult& result);

/// Writes log.csv, metrics.json and plotdata/{y_j,u_j,offset}.csv under
/// `dir`, creating it if needed. Throws ConfigError when a file cannot be written.
void write_artifacts(const std::string& dir, const sim::Scenario& scenario,
                     const sim::RunResult& result);

}  // namespace dfmpc::io
