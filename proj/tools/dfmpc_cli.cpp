// Command-line front end: run, sweep and verify scenario files.
//
// Exit codes: 0 success, 1 configuration or input error, 2 controller abort
// (verify: 1 also when any prediction-error bound is violated).

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dfmpc.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAbort = 2;

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int report(dfmpc_status status, const std::string& context) {
  std::cerr << "dfmpc: " << context << ": " << dfmpc_status_string(status) << ": "
            << dfmpc_last_error() << '\n';
  return kExitError;
}

struct ScenarioHandle {
  dfmpc_scenario* ptr = nullptr;
  ~ScenarioHandle() { dfmpc_scenario_free(ptr); }
};

struct RunHandle {
  dfmpc_run* ptr = nullptr;
  ~RunHandle() { dfmpc_run_free(ptr); }
};

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  bool no_timing = false;
};

int load(const std::string& path, const CommonOptions& common, ScenarioHandle& out) {
  if (dfmpc_status st = dfmpc_scenario_load(path.c_str(), &out.ptr); st != DFMPC_OK) {
    return report(st, "cannot load '" + path + "'");
  }
  if (common.seed) dfmpc_scenario_set_seed(out.ptr, *common.seed);
  return kExitOk;
}

dfmpc_run_options run_options(const CommonOptions& common) {
  dfmpc_run_options opts;
  opts.record_timing = common.no_timing ? 0 : 1;
  return opts;
}

int cmd_run(const std::string& file, std::string out_dir, const CommonOptions& common) {
  ScenarioHandle scenario;
  if (int rc = load(file, common, scenario); rc != kExitOk) return rc;
  if (out_dir.empty()) out_dir = dfmpc_scenario_out_dir(scenario.ptr);
  if (out_dir.empty()) {
    std::cerr << "dfmpc: no output directory: pass --out or set output.dir in the file\n";
    return kExitError;
  }
  RunHandle run;
  const dfmpc_run_options opts = run_options(common);
  if (dfmpc_status st = dfmpc_run_scenario(scenario.ptr, &opts, &run.ptr); st != DFMPC_OK) {
    return report(st, "run failed");
  }
  if (dfmpc_status st = dfmpc_run_write_artifacts(run.ptr, out_dir.c_str()); st != DFMPC_OK) {
    return report(st, "cannot write artifacts");
  }
  dfmpc_metrics m;
  dfmpc_run_metrics(run.ptr, &m);
  std::cout << "steps " << m.steps << "  overall_rmse " << fmt(m.overall_rmse)
            << "  feasibility " << fmt(m.feasibility_rate) << "  mean_solve_ms "
            << fmt(m.mean_solve_ms) << '\n';
  if (m.has_comparator) {
    std::cout << "baseline_rmse " << fmt(m.baseline_overall_rmse) << "  improvement_pct "
              << fmt(m.overall_improvement_pct) << '\n';
  }
  if (m.aborted) {
    std::cerr << "dfmpc: controller aborted: " << dfmpc_run_abort_reason(run.ptr) << '\n';
    return kExitAbort;
  }
  return kExitOk;
}

struct SweepJob {
  double value = 0.0;
  std::uint64_t seed = 0;
  fs::path dir;
  int rc = kExitOk;
  dfmpc_metrics metrics{};
};

int cmd_sweep(const std::string& file, const std::string& param,
              const std::vector<std::string>& tokens, std::string out_dir, int jobs, int seeds,
              const CommonOptions& common) {
  if (param != "epsilon") {
    std::cerr << "dfmpc: unsupported sweep parameter '" << param << "' (only epsilon)\n";
    return kExitError;
  }
  std::vector<double> values;
  for (const std::string& t : tokens) {
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
      std::cerr << "dfmpc: --values: '" << t << "' is not a number\n";
      return kExitError;
    }
    values.push_back(v);
  }
  if (values.empty()) {
    std::cerr << "dfmpc: sweep needs at least one value\n";
    return kExitError;
  }
  std::vector<double> unique;
  for (double v : values) {
    if (std::find(unique.begin(), unique.end(), v) != unique.end()) {
      std::cerr << "dfmpc: warning: duplicate value " << fmt(v) << " ignored\n";
      continue;
    }
    unique.push_back(v);
  }
  if (seeds < 1 || jobs < 1) {
    std::cerr << "dfmpc: --seeds and --jobs must be positive\n";
    return kExitError;
  }

  ScenarioHandle base;
  if (int rc = load(file, common, base); rc != kExitOk) return rc;
  if (out_dir.empty()) out_dir = dfmpc_scenario_out_dir(base.ptr);
  if (out_dir.empty()) {
    std::cerr << "dfmpc: no output directory: pass --out or set output.dir in the file\n";
    return kExitError;
  }
  std::uint64_t seed0 = 0;
  dfmpc_scenario_seed(base.ptr, &seed0);
  // Validate every value before any output is produced.
  for (double v : unique) {
    ScenarioHandle probe;
    dfmpc_scenario_clone(base.ptr, &probe.ptr);
    if (dfmpc_status st = dfmpc_scenario_set_epsilon(probe.ptr, v); st != DFMPC_OK) {
      return report(st, "invalid value " + fmt(v));
    }
  }

  std::vector<SweepJob> work;
  for (double v : unique) {
    const fs::path vdir = fs::path(out_dir) / ("epsilon_" + fmt(v));
    for (int s = 0; s < seeds; ++s) {
      SweepJob job;
      job.value = v;
      job.seed = seed0 + static_cast<std::uint64_t>(s);
      job.dir = seeds == 1 ? vdir : vdir / ("seed_" + std::to_string(job.seed));
      work.push_back(job);
    }
  }

  const dfmpc_run_options opts = run_options(common);
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      SweepJob& job = work[i];
      ScenarioHandle scenario;
      RunHandle run;
      dfmpc_scenario_clone(base.ptr, &scenario.ptr);
      dfmpc_scenario_set_epsilon(scenario.ptr, job.value);
      dfmpc_scenario_set_seed(scenario.ptr, job.seed);
      dfmpc_status st = dfmpc_run_scenario(scenario.ptr, &opts, &run.ptr);
      if (st == DFMPC_OK) st = dfmpc_run_write_artifacts(run.ptr, job.dir.string().c_str());
      std::lock_guard<std::mutex> lock(io_mutex);
      if (st != DFMPC_OK) {
        job.rc = report(st, "epsilon " + fmt(job.value) + " seed " + std::to_string(job.seed));
        continue;
      }
      dfmpc_run_metrics(run.ptr, &job.metrics);
      if (job.metrics.aborted) job.rc = kExitAbort;
      std::cerr << "epsilon " << fmt(job.value) << " seed " << job.seed << ": rmse "
                << fmt(job.metrics.overall_rmse) << (job.metrics.aborted ? " (aborted)" : "")
                << '\n';
    }
  };
  const int threads = std::min<int>(jobs, static_cast<int>(work.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  int rc = kExitOk;
  for (const SweepJob& job : work) {
    if (job.rc == kExitError) rc = kExitError;
    if (job.rc == kExitAbort && rc == kExitOk) rc = kExitAbort;
  }
  if (rc == kExitError) return rc;

  const fs::path summary = fs::path(out_dir) / "sweep_summary.csv";
  std::ofstream out(summary, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "dfmpc: cannot write '" << summary.string() << "'\n";
    return kExitError;
  }
  out << "value,overall_rmse,feasibility_rate,mean_solve_ms,seeds\n";
  for (double v : unique) {
    double rmse = 0.0, feas = 0.0, ms = 0.0;
    for (const SweepJob& job : work) {
      if (job.value != v) continue;
      rmse += job.metrics.overall_rmse;
      feas += job.metrics.feasibility_rate;
      ms += job.metrics.mean_solve_ms;
    }
    out << fmt(v) << ',' << fmt(rmse / seeds) << ',' << fmt(feas / seeds) << ','
        << fmt(ms / seeds) << ',' << seeds << '\n';
  }
  return rc;
}

int cmd_verify(const std::string& file, const CommonOptions& common) {
  ScenarioHandle scenario;
  if (int rc = load(file, common, scenario); rc != kExitOk) return rc;
  int lti = 0;
  dfmpc_scenario_is_lti(scenario.ptr, &lti);
  if (!lti) {
    std::cerr << "dfmpc: verify needs an LTI hidden subsystem: the prediction-error bound and "
                 "certificate are stated for linear ground truth, and this scenario has a "
                 "nonlinear output map\n";
    return kExitError;
  }
  RunHandle run;
  const dfmpc_run_options opts = run_options(common);
  if (dfmpc_status st = dfmpc_run_scenario(scenario.ptr, &opts, &run.ptr); st != DFMPC_OK) {
    return report(st, "run failed");
  }
  dfmpc_verify_report r;
  if (dfmpc_status st = dfmpc_run_verify(run.ptr, &r); st != DFMPC_OK) {
    return report(st, "verification failed");
  }
  std::cout << "checked_steps " << r.checked_steps << '\n'
            << "bound_violations " << r.bound_violations << '\n'
            << "decay_violations " << r.decay_violations << '\n'
            << "max_bound " << fmt(r.max_bound) << '\n'
            << "max_error " << fmt(r.max_error) << '\n'
            << "median_bound_to_error " << fmt(r.median_ratio) << '\n'
            << "V_max " << fmt(r.V_max) << (r.certificate_evaluated ? "" : " (limit V_max -> 0)")
            << '\n'
            << "d_ref " << fmt(r.d_ref) << '\n'
            << "d_safe " << fmt(r.d_safe) << '\n'
            << "c_e " << fmt(r.c_e) << '\n'
            << "margin " << fmt(r.margin) << '\n'
            << "dominance_lhs " << fmt(r.dominance_lhs) << '\n'
            << "dominance_rhs " << fmt(r.dominance_rhs) << '\n'
            << "dominance_holds " << (r.dominance_holds ? "true" : "false") << '\n';
  return r.bound_violations == 0 ? kExitOk : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  const char* level = std::getenv("DFMPC_LOG_LEVEL");
  if (dfmpc_status st = dfmpc_set_log_level(level ? level : "warn"); st != DFMPC_OK) {
    std::cerr << "dfmpc: DFMPC_LOG_LEVEL: " << dfmpc_last_error() << '\n';
    return kExitError;
  }

  CLI::App app{"Data-driven predictive control experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dfmpc_version()));

  CommonOptions common;
  std::string file, out_dir, param = "epsilon";
  std::vector<std::string> values;
  int jobs = 1, seeds = 1;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("file", file, "Scenario JSON file")->required();
    sub->add_option("--seed", seed, "Override the scenario seed");
    sub->add_flag("--no-timing", common.no_timing,
                  "Record solve_ms as 0 for byte-identical logs");
  };

  CLI::App* run = app.add_subcommand("run", "Run one closed-loop experiment");
  add_common(run);
  run->add_option("--out", out_dir, "Artifact directory (default: output.dir from the file)");

  CLI::App* sweep = app.add_subcommand("sweep", "Run a scenario over several noise levels");
  add_common(sweep);
  sweep->add_option("--out", out_dir, "Artifact directory (default: output.dir from the file)");
  sweep->add_option("--param", param, "Swept parameter")->default_val("epsilon");
  sweep->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();
  sweep->add_option("--jobs", jobs, "Parallel subruns")->default_val(1);
  sweep->add_option("--seeds", seeds, "Seeds per value, averaged in the summary")
      ->default_val(1);

  CLI::App* verify = app.add_subcommand("verify", "Check the bounds and certificate on a run");
  add_common(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }
  for (CLI::App* sub : {run, sweep, verify}) {
    if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed;
  }

  if (run->parsed()) return cmd_run(file, out_dir, common);
  if (sweep->parsed()) return cmd_sweep(file, param, values, out_dir, jobs, seeds, common);
  return cmd_verify(file, common);
}
