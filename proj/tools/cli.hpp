#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carbonsched/advisor.hpp"
#include "carbonsched/advisor_server.hpp"
#include "carbonsched/carbonsched.hpp"

namespace carbonsched::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kInfeasible = 3, kRuntime = 4 };

/// Called with the server and its port after `serve` binds and before it blocks.
using ServeHook = std::function<void(advisor::Server&, int)>;

namespace detail {

struct JobOptions {
  std::string trace_path;
  std::string job_path;
  std::string curve_path;
  std::string policy = "greedy";
  std::optional<int> scale;
  double percentile = 25.0;
  std::string mode = "prorated";
  std::string out_path;
  std::string format;  // empty: json, except csv for sweep
  std::optional<int> arrival;
  std::optional<double> length;
  std::optional<int> deadline;
  std::optional<double> power;
  int start_offset = 0;
};

struct SimOptions {
  double forecast_error = 0.0;
  double profile_error = 0.0;
  double denial = 0.0;
  std::uint64_t seed = kDefaultSeed;
  int runs = 1;
  double threshold = kDefaultRecomputeThreshold;
  bool no_recompute = false;
  double overhead = 0.0;
  std::string summary_path;
};

struct SweepOptions {
  std::string axis = "start_time";
  std::vector<double> values;
  int stride = 24;
  std::vector<std::string> policies{"agnostic", "sr_deadline", "greedy"};
};

struct Loaded {
  CarbonTrace trace = CarbonTrace::from_values({0.0});
  JobSpec job;
  MarginalCapacityCurve curve = MarginalCapacityCurve::create(1, 1, {1.0});
};

inline void add_job_options(CLI::App* cmd, JobOptions& o) {
  cmd->add_option("--trace", o.trace_path, "carbon trace CSV")->required();
  cmd->add_option("--job", o.job_path, "job fixture JSON (job fields + curve)")->required();
  cmd->add_option("--curve", o.curve_path, "curve fixture JSON overriding the job file's curve");
  cmd->add_option("--policy", o.policy, "greedy | agnostic | sr_deadline | sr_threshold[:p] | static[:k]");
  cmd->add_option("--k", o.scale, "scale factor for the static policy");
  cmd->add_option("--percentile", o.percentile, "threshold percentile for sr_threshold");
  cmd->add_option("--mode", o.mode, "carbon accounting: whole | prorated");
  cmd->add_option("--out", o.out_path, "write output here instead of stdout");
  cmd->add_option("--format", o.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--arrival", o.arrival, "override arrival slot");
  cmd->add_option("--length", o.length, "override job length in slots");
  cmd->add_option("--deadline", o.deadline, "override completion slot");
  cmd->add_option("--power", o.power, "override per-server power in watts");
  cmd->add_option("--start-offset", o.start_offset, "drop this many leading trace slots");
}

inline void add_sim_options(CLI::App* cmd, SimOptions& o) {
  cmd->add_option("--forecast-error", o.forecast_error, "forecast error X (%)");
  cmd->add_option("--profile-error", o.profile_error, "profile error X (%)");
  cmd->add_option("--denial", o.denial, "scale-up denial probability");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--runs", o.runs, "number of seeds (seed, seed+1, ...)");
  cmd->add_option("--threshold", o.threshold, "relative deviation that triggers a recompute");
  cmd->add_flag("--no-recompute", o.no_recompute, "execute the initial plan without recomputing");
  cmd->add_option("--overhead", o.overhead, "dead time per allocation change (seconds)");
  cmd->add_option("--summary", o.summary_path, "write the JSON summary here");
}

inline Loaded load(JobOptions const& o) {
  Loaded l;
  auto trace = load_trace(o.trace_path, std::filesystem::path(o.trace_path).stem().string());
  if (o.start_offset < 0 || o.start_offset >= static_cast<int>(trace.size())) {
    throw ValidationError("--start-offset outside the trace", {"start_offset"});
  }
  l.trace = o.start_offset == 0 ? trace
                                : slice(trace, static_cast<std::size_t>(o.start_offset),
                                        trace.size() - static_cast<std::size_t>(o.start_offset));
  auto fixture = load_fixture(o.job_path);
  if (!o.curve_path.empty()) {
    auto const curve = load_fixture(o.curve_path);
    fixture.curve = curve.curve;
    fixture.min_servers = curve.min_servers;
    fixture.max_servers = curve.max_servers;
    if (curve.power && !fixture.power) fixture.power = curve.power;
  }
  if (o.arrival) fixture.arrival_slot = *o.arrival;
  if (o.length) fixture.length = *o.length;
  if (o.deadline) fixture.completion_slot = *o.deadline;
  if (o.power) fixture.power = PowerModel::create(*o.power);
  l.job = fixture.job();
  l.curve = fixture.curve;
  return l;
}

inline void emit(std::string const& text, std::string const& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path);
  if (!file) throw ValidationError("cannot write '" + path + "'", {"out"});
  file << text;
}

inline SimConfig sim_config(JobOptions const& j, SimOptions const& s) {
  SimConfig c;
  c.forecast_error_pct = s.forecast_error;
  c.profile_error_pct = s.profile_error;
  c.denial_probability = s.denial;
  c.seed = s.seed;
  c.recompute_threshold = s.threshold;
  c.recompute = !s.no_recompute;
  c.scaling_overhead_s = s.overhead;
  c.accounting = parse_mode(j.mode);
  c.validate();
  return c;
}

inline int cmd_schedule(JobOptions const& o, std::ostream& out) {
  auto const l = load(o);
  auto const mode = parse_mode(o.mode);
  auto const policy = Policy::parse(o.policy, o.percentile, o.scale);
  auto const schedule = plan_policy(policy, l.job, l.curve, l.trace);
  auto const metrics =
      planned_carbon(schedule, l.curve, l.trace, work_requirement(l.job, l.curve), l.job.power, mode);
  std::ostringstream text;
  if (o.format == "csv") {
    text << "slot,servers\n";
    for (std::size_t i = 0; i < schedule.allocations.size(); ++i) {
      text << schedule.window_start + static_cast<int>(i) << ',' << schedule.allocations[i] << '\n';
    }
  } else {
    auto doc = to_json(schedule, metrics);
    doc["policy"] = policy.name();
    doc["accounting_mode"] = std::string(mode_name(mode));
    text << doc.dump(2) << '\n';
  }
  emit(text.str(), o.out_path, out);
  return kOk;
}

inline int cmd_simulate(JobOptions const& o, SimOptions const& s, std::ostream& out) {
  auto const l = load(o);
  auto const policy = Policy::parse(o.policy, o.percentile, o.scale);
  auto config = sim_config(o, s);
  if (s.runs < 1) throw ValidationError("--runs must be >= 1", {"runs"});

  std::ostringstream text;
  if (s.runs == 1) {
    auto const result = simulate(l.job, l.curve, l.trace, policy, config);
    if (o.format == "csv") {
      text << "slot,requested_servers,granted_servers,intensity_actual,intensity_forecast,work_done,carbon_g,"
              "recomputed\n";
      for (auto const& r : result.timeline) {
        text << r.slot << ',' << r.requested_servers << ',' << r.granted_servers << ','
             << carbonsched::detail::format_double(r.intensity_actual) << ','
             << carbonsched::detail::format_double(r.intensity_forecast) << ','
             << carbonsched::detail::format_double(r.work_done) << ','
             << carbonsched::detail::format_double(r.carbon) << ',' << (r.recomputed ? "true" : "false") << '\n';
      }
    } else {
      auto doc = to_json(result);
      doc["policy"] = policy.name();
      doc["seed"] = config.seed;
      text << doc.dump(2) << '\n';
    }
    emit(text.str(), o.out_path, out);
    return kOk;
  }

  SweepTable table;
  table.axis = SweepAxis::forecast_error;
  Scenario scenario{l.job, l.curve, config, {policy}};
  carbonsched::detail::run_scenario(table, config.forecast_error_pct, scenario, l.trace, s.runs);
  carbonsched::detail::summarize(table);
  auto const summary = to_json(table);
  if (o.format == "csv") {
    write_sweep_csv(text, table);
  } else {
    text << summary.dump(2) << '\n';
  }
  emit(text.str(), o.out_path, out);
  if (!s.summary_path.empty()) emit(summary.at("summary").dump(2) + "\n", s.summary_path, out);
  return kOk;
}

inline int cmd_sweep(JobOptions const& o, SimOptions const& s, SweepOptions const& w, std::ostream& out) {
  auto const l = load(o);
  auto const config = sim_config(o, s);
  std::vector<Policy> policies;
  for (auto const& p : w.policies) policies.push_back(Policy::parse(p, o.percentile, o.scale));
  auto const axis = parse_axis(w.axis);
  SweepTable table = axis == SweepAxis::start_time
                         ? sweep_start_times(l.job, l.curve, l.trace, policies, config, w.stride, s.runs)
                         : sweep_parameter(l.job, l.curve, l.trace, axis, w.values, policies, config, s.runs);
  auto const doc = to_json(table);
  std::ostringstream text;
  if (o.format == "json") {
    text << doc.dump(2) << '\n';
  } else {
    write_sweep_csv(text, table);
  }
  emit(text.str(), o.out_path, out);
  if (!s.summary_path.empty()) emit(doc.at("summary").dump(2) + "\n", s.summary_path, out);
  return kOk;
}

inline int cmd_stats(std::string const& trace_path, std::ostream& out) {
  auto const region = std::filesystem::path(trace_path).stem().string();
  auto const trace = load_trace(trace_path, region);
  auto doc = to_json(region_stats(trace));
  doc["region"] = region;
  doc["slots"] = trace.size();
  out << doc.dump(2) << '\n';
  return kOk;
}

inline bool split_addr(std::string const& addr, std::string& host, int& port) {
  auto const colon = addr.rfind(':');
  if (colon == std::string::npos) return false;
  host = addr.substr(0, colon);
  return carbonsched::detail::parse_int(addr.substr(colon + 1), port) && port >= 0 && port <= 65535 && !host.empty();
}

inline int cmd_serve(std::string dir, std::string addr, std::size_t budget, std::ostream& err, ServeHook const& hook) {
  if (dir.empty()) {
    if (char const* env = std::getenv("CARBONSCHED_TRACES")) dir = env;
  }
  if (addr.empty()) {
    char const* env = std::getenv("CARBONSCHED_ADDR");
    addr = env ? env : "127.0.0.1:8080";
  }
  if (dir.empty()) throw ValidationError("--traces (or CARBONSCHED_TRACES) is required", {"traces"});
  std::string host;
  int port = 0;
  if (!split_addr(addr, host, port)) throw ValidationError("--addr must be HOST:PORT", {"addr"});

  advisor::Server server(advisor::load_context(dir, budget));
  for (auto const& e : server.context().load_errors) err << "warning: " << e << '\n';
  int const bound = server.bind(host, port);
  if (bound < 0) {
    err << "error: cannot listen on " << addr << '\n';
    return kRuntime;
  }
  err << "carbonsched advisor listening on " << host << ':' << bound << " with "
      << server.context().traces.size() << " region(s)\n";
  if (hook) hook(server, bound);
  return server.serve() ? kOk : kRuntime;
}

}  // namespace detail

/// Runs the command line and returns the process exit code.
inline int run(int argc, char const* const* argv, std::ostream& out, std::ostream& err, ServeHook const& hook = {}) {
  CLI::App app{"Carbon-aware scheduling of elastic batch jobs"};
  app.require_subcommand(1);

  detail::JobOptions job_opts;
  detail::SimOptions sim_opts;
  detail::SweepOptions sweep_opts;
  std::string stats_trace, serve_dir, serve_addr;
  std::size_t cell_budget = advisor::kDefaultCellBudget;

  auto* schedule = app.add_subcommand("schedule", "plan a schedule for one job");
  detail::add_job_options(schedule, job_opts);

  auto* simulate = app.add_subcommand("simulate", "execute a policy against the trace with injected errors");
  detail::add_job_options(simulate, job_opts);
  detail::add_sim_options(simulate, sim_opts);

  auto* sweep = app.add_subcommand("sweep", "sweep one parameter or the start time");
  detail::add_job_options(sweep, job_opts);
  detail::add_sim_options(sweep, sim_opts);
  sweep->add_option("--axis", sweep_opts.axis,
                    "start_time | completion_time | job_length | cluster_size | scale_factor | denial | "
                    "forecast_error | profile_error")
      ->capture_default_str();
  sweep->add_option("--values", sweep_opts.values, "axis values")->delimiter(',');
  sweep->add_option("--stride", sweep_opts.stride, "start_time stride in slots");
  sweep->add_option("--policies", sweep_opts.policies, "policies to compare")->delimiter(',');

  auto* stats = app.add_subcommand("stats", "mean, standard deviation and CoV of a trace");
  stats->add_option("--trace", stats_trace, "carbon trace CSV")->required();

  auto* serve = app.add_subcommand("serve", "run the what-if advisor HTTP service");
  serve->add_option("--traces", serve_dir, "directory of region traces (*.csv)");
  serve->add_option("--addr", serve_addr, "listen address HOST:PORT");
  serve->add_option("--cell-budget", cell_budget, "maximum simulations per sweep request");

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const& e) {
    int const code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*schedule) return detail::cmd_schedule(job_opts, out);
    if (*simulate) return detail::cmd_simulate(job_opts, sim_opts, out);
    if (*sweep) return detail::cmd_sweep(job_opts, sim_opts, sweep_opts, out);
    if (*stats) return detail::cmd_stats(stats_trace, out);
    if (*serve) return detail::cmd_serve(serve_dir, serve_addr, cell_budget, err, hook);
  } catch (InfeasibleError const& e) {
    err << "infeasible: " << e.what() << " (max achievable work " << e.max_work() << ")\n";
    return kInfeasible;
  } catch (ValidationError const& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (ParseError const& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (BoundsError const& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (std::exception const& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}

}  // namespace carbonsched::cli
