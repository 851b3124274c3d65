#include "dfmpc/artifacts.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <locale>
#include <sstream>

#include <json.hpp>

#include "dfmpc/errors.hpp"

namespace dfmpc::io {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void header_block(std::ostream& out, const char* name, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << name << '_' << i;
}

void value_block(std::ostream& out, const Eigen::VectorXd& v, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << (i < v.size() ? format_double(v(i)) : "");
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out.imbue(std::locale::classic());
  return out;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_log_csv(const ClosedLoopLog& log, std::ostream& sink) {
  // Integers go through the stream too, so format against the classic locale.
  std::ostringstream out;
  out.imbue(std::locale::classic());
  Eigen::Index m = 0, p = 0;
  if (!log.steps.empty()) {
    m = log.steps.front().u.size();
    p = log.steps.front().y_true.size();
  }
  out << "step";
  header_block(out, "u", m);
  header_block(out, "y_measured", p);
  header_block(out, "y_true", p);
  header_block(out, "u_ref", m);
  header_block(out, "y_ref", p);
  out << ",cost,eq_cost,g_l1,sigma_inf,sigma0_inf,status,feasible,held,iterations,solve_ms\n";
  for (const StepRecord& r : log.steps) {
    out << r.step;
    value_block(out, r.u, m);
    value_block(out, r.y_measured, p);
    value_block(out, r.y_true, p);
    value_block(out, r.u_ref, m);
    value_block(out, r.y_ref, p);
    out << ',' << format_double(r.cost) << ',' << format_double(r.eq_cost) << ','
        << format_double(r.g_l1) << ',' << format_double(r.sigma_inf) << ','
        << format_double(r.sigma0_inf) << ',' << qp::to_string(r.status) << ','
        << (r.feasible ? 1 : 0) << ',' << (r.held ? 1 : 0) << ',' << r.iterations << ','
        << format_double(r.solve_ms) << '\n';
  }
  sink << out.str();
}

std::string metrics_json(const sim::Scenario& scenario, const sim::RunResult& result) {
  const sim::MetricsReport& m = result.metrics;
  json doc = {{"scenario", scenario.name},
              {"seed", scenario.noise.seed},
              {"epsilon", scenario.noise.epsilon},
              {"steps", m.steps},
              {"aborted", result.log.aborted},
              {"abort_reason", result.log.abort_reason},
              {"rmse", vector_json(m.rmse)},
              {"overall_rmse", m.overall_rmse},
              {"steady_state_mse", m.steady_state_mse},
              {"feasibility_rate", m.feasibility_rate},
              {"constraint_violations", m.constraint_violations},
              {"mean_solve_ms", m.mean_solve_ms},
              {"median_solve_ms", m.median_solve_ms},
              {"max_solve_ms", m.max_solve_ms}};
  if (m.has_comparator) {
    doc["comparator"] = {{"kind", sim::to_string(scenario.comparator)},
                         {"rmse", vector_json(m.baseline_rmse)},
                         {"overall_rmse", m.baseline_overall_rmse},
                         {"improvement_pct", vector_json(m.improvement_pct)},
                         {"overall_improvement_pct", m.overall_improvement_pct}};
  }
  return doc.dump(2) + "\n";
}

void write_artifacts(const std::string& dir, const sim::Scenario& scenario,
                     const sim::RunResult& result) {
  const fs::path root(dir);
  const fs::path plots = root / "plotdata";
  std::error_code ec;
  fs::create_directories(plots, ec);
  if (ec) throw ConfigError("cannot create '" + plots.string() + "': " + ec.message());

  {
    std::ofstream out = open_for_write(root / "log.csv");
    write_log_csv(result.log, out);
  }
  {
    std::ofstream out = open_for_write(root / "metrics.json");
    out << metrics_json(scenario, result);
  }

  const auto& steps = result.log.steps;
  const ClosedLoopLog* base = result.baseline_log ? &*result.baseline_log : nullptr;
  auto base_at = [&](std::size_t k) -> const StepRecord* {
    return base && k < base->steps.size() ? &base->steps[k] : nullptr;
  };
  const Eigen::Index p = scenario.p(), m = scenario.m();
  for (Eigen::Index j = 0; j < p; ++j) {
    std::ofstream out = open_for_write(plots / ("y_" + std::to_string(j) + ".csv"));
    out << "step,reference,measured,true" << (base ? ",baseline_true" : "") << '\n';
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const StepRecord& r = steps[k];
      out << r.step << ',' << format_double(r.y_ref(j)) << ',' << format_double(r.y_measured(j))
          << ',' << format_double(r.y_true(j));
      if (base) out << ',' << (base_at(k) ? format_double(base_at(k)->y_true(j)) : "");
      out << '\n';
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    std::ofstream out = open_for_write(plots / ("u_" + std::to_string(j) + ".csv"));
    out << "step,applied" << (base ? ",baseline" : "") << '\n';
    for (std::size_t k = 0; k < steps.size(); ++k) {
      out << steps[k].step << ',' << format_double(steps[k].u(j));
      if (base) out << ',' << (base_at(k) ? format_double(base_at(k)->u(j)) : "");
      out << '\n';
    }
  }
  std::ofstream out = open_for_write(plots / "offset.csv");
  out << "step,cost,eq_cost,offset\n";
  for (const StepRecord& r : steps) {
    out << r.step << ',' << format_double(r.cost) << ',' << format_double(r.eq_cost) << ','
        << format_double(r.cost - r.eq_cost) << '\n';
  }
}

}  // namespace dfmpc::io
