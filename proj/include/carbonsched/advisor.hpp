#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/io.hpp"
#include "carbonsched/presets.hpp"
#include "carbonsched/scheduler.hpp"
#include "carbonsched/sim.hpp"
#include "carbonsched/sweep.hpp"
#include "carbonsched/trace.hpp"

namespace carbonsched::advisor {

inline constexpr std::size_t kDefaultCellBudget = 20000;

/// Read-only state shared by all requests: the trace library loaded at startup.
struct Context {
  std::map<std::string, CarbonTrace> traces;
  std::vector<std::string> load_errors;  // "<file>: <reason>"
  std::size_t cell_budget = kDefaultCellBudget;
};

/// Loads every `*.csv` in `dir` as a region named after the file stem. Unreadable traces
/// are recorded, not fatal; a missing directory is.
inline Context load_context(std::filesystem::path const& dir, std::size_t cell_budget = kDefaultCellBudget) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ValidationError("trace directory '" + dir.string() + "' does not exist", {"traces"});
  Context ctx;
  ctx.cell_budget = cell_budget;
  std::vector<fs::path> files;
  for (auto const& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (auto const& file : files) {
    try {
      ctx.traces.emplace(file.stem().string(), load_trace(file.string(), file.stem().string()));
    } catch (Error const& e) {
      ctx.load_errors.push_back(file.filename().string() + ": " + e.what());
    }
  }
  return ctx;
}

struct Reply {
  int status = 200;
  Json body;
};

namespace detail {

inline Reply error_reply(int status, std::string const& message, std::vector<std::string> fields = {}) {
  Json body{{"error", message}};
  if (!fields.empty()) body["fields"] = fields;
  return {status, std::move(body)};
}

class NotFound : public Error {
 public:
  using Error::Error;
};

struct Request {
  CarbonTrace trace = CarbonTrace::from_values({0.0});
  JobSpec job;
  MarginalCapacityCurve curve = MarginalCapacityCurve::create(1, 1, {1.0});
  std::vector<Policy> policies;
  SimConfig config;
};

inline CarbonTrace request_trace(Context const& ctx, Json const& body) {
  bool const has_region = body.contains("region");
  bool const has_trace = body.contains("trace");
  if (has_region == has_trace) throw ValidationError("give exactly one of 'region' or 'trace'", {"region", "trace"});
  CarbonTrace base = CarbonTrace::from_values({0.0});
  if (has_region) {
    auto const region = carbonsched::detail::get_field<std::string>(body, "region", "");
    auto const it = ctx.traces.find(region);
    if (it == ctx.traces.end()) throw NotFound("unknown region '" + region + "'");
    base = it->second;
  } else {
    auto const& t = body.at("trace");
    carbonsched::detail::reject_unknown(t, {"region", "start", "slot_minutes", "intensities"}, "trace");
    TimePoint start{};
    if (auto s = carbonsched::detail::get_optional<std::string>(t, "start", "trace")) {
      if (!parse_timestamp(*s, start)) throw ValidationError("trace.start is not an ISO-8601 UTC timestamp", {"trace.start"});
    }
    double const minutes = carbonsched::detail::get_optional<double>(t, "slot_minutes", "trace").value_or(60.0);
    if (!(minutes > 0.0) || std::floor(minutes * 60.0) != minutes * 60.0) {
      throw ValidationError("trace.slot_minutes must be a positive whole number of seconds", {"trace.slot_minutes"});
    }
    base = CarbonTrace::create(carbonsched::detail::get_optional<std::string>(t, "region", "trace").value_or("inline"),
                               start, Seconds{static_cast<long>(minutes * 60.0)},
                               carbonsched::detail::get_field<std::vector<double>>(t, "intensities", "trace"));
  }
  int const offset = carbonsched::detail::get_optional<int>(body, "start_offset", "").value_or(0);
  if (offset < 0 || offset >= static_cast<int>(base.size())) {
    throw ValidationError("start_offset outside the trace", {"start_offset"});
  }
  return offset == 0 ? base : slice(base, static_cast<std::size_t>(offset), base.size() - static_cast<std::size_t>(offset));
}

inline Request parse_request(Context const& ctx, Json const& body, std::initializer_list<std::string_view> extra_fields) {
  std::vector<std::string_view> allowed{"region", "trace", "start_offset", "job", "curve", "policies", "config"};
  allowed.insert(allowed.end(), extra_fields.begin(), extra_fields.end());
  if (!body.is_object()) throw ValidationError("request body must be a JSON object");
  for (auto it = body.begin(); it != body.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ValidationError("unknown field " + it.key(), {it.key()});
    }
  }

  Request req;
  req.trace = request_trace(ctx, body);

  if (!body.contains("job")) throw ValidationError("missing 'job'", {"job"});
  auto const& j = body.at("job");
  carbonsched::detail::reject_unknown(
      j, {"name", "arrival_slot", "length", "completion_slot", "min_servers", "max_servers", "power_watts"}, "job");
  req.job.name = carbonsched::detail::get_optional<std::string>(j, "name", "job").value_or("job");
  req.job.arrival_slot = carbonsched::detail::get_optional<int>(j, "arrival_slot", "job").value_or(0);
  req.job.base_length_slots = carbonsched::detail::get_field<double>(j, "length", "job");
  req.job.completion_slot = carbonsched::detail::get_field<int>(j, "completion_slot", "job");
  req.job.min_servers = carbonsched::detail::get_optional<int>(j, "min_servers", "job").value_or(1);
  req.job.max_servers = carbonsched::detail::get_optional<int>(j, "max_servers", "job").value_or(req.job.min_servers);
  if (auto w = carbonsched::detail::get_optional<double>(j, "power_watts", "job")) {
    req.job.power = PowerModel::create(*w);
  }
  try {
    req.job.validate();
  } catch (ValidationError const& e) {
    std::vector<std::string> fields;
    for (auto const& f : e.fields()) fields.push_back("job." + f);
    throw ValidationError(e.what(), fields);
  }

  if (!body.contains("curve")) throw ValidationError("missing 'curve'", {"curve"});
  auto const& c = body.at("curve");
  carbonsched::detail::reject_unknown(c, {"preset", "mc", "throughput", "alpha_minutes", "beta"}, "curve");
  if (c.contains("preset")) {
    auto const name = carbonsched::detail::get_field<std::string>(c, "preset", "curve");
    auto preset = find_preset(name);
    if (!preset) throw NotFound("unknown curve preset '" + name + "'");
    req.curve = preset->curve;
    if (!req.job.power) req.job.power = preset->power;
  } else {
    Json doc = c;
    doc["m"] = req.job.min_servers;
    doc["M"] = req.job.max_servers;
    req.curve = fixture_from_json(doc, "curve").curve;
  }
  if (req.curve.min_servers() != req.job.min_servers || req.curve.max_servers() < req.job.max_servers) {
    throw ValidationError("curve server range does not match job.min_servers/job.max_servers",
                          {"curve", "job.min_servers", "job.max_servers"});
  }

  if (body.contains("policies")) {
    auto const& p = body.at("policies");
    if (!p.is_array() || p.empty()) throw ValidationError("'policies' must be a non-empty array", {"policies"});
    for (auto const& name : p) {
      if (!name.is_string()) throw ValidationError("policy names must be strings", {"policies"});
      req.policies.push_back(Policy::parse(name.get<std::string>()));
    }
  } else {
    req.policies = {Policy::agnostic(), Policy::sr_deadline(), Policy::greedy()};
  }

  if (body.contains("config")) {
    auto const& cfg = body.at("config");
    carbonsched::detail::reject_unknown(cfg,
                                        {"forecast_error_pct", "profile_error_pct", "denial_probability",
                                         "recompute_threshold", "recompute", "accounting_mode", "scaling_overhead_s",
                                         "seed"},
                                        "config");
    auto& sc = req.config;
    sc.forecast_error_pct = carbonsched::detail::get_optional<double>(cfg, "forecast_error_pct", "config").value_or(0.0);
    sc.profile_error_pct = carbonsched::detail::get_optional<double>(cfg, "profile_error_pct", "config").value_or(0.0);
    sc.denial_probability = carbonsched::detail::get_optional<double>(cfg, "denial_probability", "config").value_or(0.0);
    sc.recompute_threshold = carbonsched::detail::get_optional<double>(cfg, "recompute_threshold", "config")
                                 .value_or(kDefaultRecomputeThreshold);
    sc.recompute = carbonsched::detail::get_optional<bool>(cfg, "recompute", "config").value_or(true);
    sc.scaling_overhead_s = carbonsched::detail::get_optional<double>(cfg, "scaling_overhead_s", "config").value_or(0.0);
    sc.seed = carbonsched::detail::get_optional<std::uint64_t>(cfg, "seed", "config").value_or(kDefaultSeed);
    if (auto mode = carbonsched::detail::get_optional<std::string>(cfg, "accounting_mode", "config")) {
      sc.accounting = parse_mode(*mode);
    }
    sc.validate();
  }
  if (req.job.completion_slot > static_cast<int>(req.trace.size())) {
    throw ValidationError("trace has " + std::to_string(req.trace.size()) + " slots after start_offset but job runs to " +
                              std::to_string(req.job.completion_slot),
                          {"job.completion_slot"});
  }
  return req;
}

inline Json trace_excerpt(CarbonTrace const& trace, int from, int to) {
  auto const values = trace.intensities();
  to = std::min(to, static_cast<int>(trace.size()));
  return Json{{"region", trace.region()},
              {"start", format_timestamp(trace.slot_start(static_cast<std::size_t>(from)))},
              {"slot_minutes", trace.slot_duration().count() / 60.0},
              {"first_slot", from},
              {"intensities", std::vector<double>(values.begin() + from, values.begin() + to)}};
}

template <typename Fn>
Reply guarded(Fn&& fn) {
  try {
    return fn();
  } catch (NotFound const& e) {
    return error_reply(404, e.what());
  } catch (InfeasibleError const& e) {
    Reply r = error_reply(422, e.what());
    r.body["max_work"] = e.max_work();
    r.body["required_work"] = e.required();
    return r;
  } catch (ValidationError const& e) {
    return error_reply(400, e.what(), e.fields());
  } catch (BoundsError const& e) {
    return error_reply(400, e.what());
  } catch (nlohmann::json::exception const& e) {
    return error_reply(400, std::string("malformed request: ") + e.what());
  }
}

}  // namespace detail

/// POST /api/v1/simulate: every requested policy (plus the agnostic reference) through the
/// simulator. Deterministic for a given body.
inline Reply simulate(Context const& ctx, Json const& body) {
  return detail::guarded([&]() -> Reply {
    auto req = detail::parse_request(ctx, body, {});
    auto policies = carbonsched::detail::with_agnostic(req.policies);

    struct Run {
      Policy policy;
      SimResult result;
      ScheduleMetrics planned;
    };
    std::vector<Run> runs;
    for (auto const& policy : policies) {
      Run run{policy, {}, {}};
      try {
        run.result = carbonsched::simulate(req.job, req.curve, req.trace, policy, req.config);
      } catch (InfeasibleError const& e) {
        throw InfeasibleError(policy.name() + ": " + e.what(), e.max_work(), e.required());
      }
      auto const& plan = run.result.initial_plan;
      run.planned = planned_carbon(plan, req.curve, req.trace, run.result.work_required, req.job.power,
                                   req.config.accounting);
      runs.push_back(std::move(run));
    }

    double const agnostic_carbon = runs.front().result.carbon_g;
    Json out_policies = Json::array();
    Json warnings = Json::array();
    int horizon = req.job.completion_slot;
    for (auto const& run : runs) {
      auto const& r = run.result;
      Json timeline = Json::array();
      for (auto const& rec : r.timeline) timeline.push_back(to_json(rec));
      if (!r.timeline.empty()) horizon = std::max(horizon, r.timeline.back().slot + 1);
      Json schedule = to_json(r.initial_plan, run.planned);
      schedule["policy"] = run.policy.name();
      out_policies.push_back(Json{{"policy", run.policy.name()},
                                  {"schedule", std::move(schedule)},
                                  {"metrics",
                                   {{"carbon_g", r.carbon_g},
                                    {"compute_slot_hours", r.compute_slot_hours},
                                    {"completion_slot", r.completion_slot},
                                    {"met_deadline", r.met_deadline},
                                    {"recomputations", r.recomputations}}},
                                  {"savings_vs_agnostic_pct", savings_pct(r.carbon_g, agnostic_carbon)},
                                  {"timeline", std::move(timeline)}});
      if (!r.met_deadline) warnings.push_back(run.policy.name() + " did not finish by the completion slot");
    }
    return Reply{200, Json{{"accounting_mode", std::string(mode_name(req.config.accounting))},
                           {"seed", req.config.seed},
                           {"policies", std::move(out_policies)},
                           {"trace_excerpt", detail::trace_excerpt(req.trace, req.job.arrival_slot, horizon)},
                           {"warnings", std::move(warnings)}}};
  });
}

/// POST /api/v1/sweep: body as for simulate plus
/// "axis": {"name": <axis>, "values": [...]} or {"name": "start_time", "stride": n}, and "runs".
inline Reply sweep(Context const& ctx, Json const& body) {
  return detail::guarded([&]() -> Reply {
    auto req = detail::parse_request(ctx, body, {"axis", "runs"});
    if (!body.contains("axis")) throw ValidationError("missing 'axis'", {"axis"});
    auto const& axis_doc = body.at("axis");
    carbonsched::detail::reject_unknown(axis_doc, {"name", "values", "stride"}, "axis");
    auto const axis = parse_axis(carbonsched::detail::get_field<std::string>(axis_doc, "name", "axis"));
    int const runs = carbonsched::detail::get_optional<int>(body, "runs", "").value_or(1);
    if (runs < 1) throw ValidationError("runs must be >= 1", {"runs"});
    std::size_t const policy_count = carbonsched::detail::with_agnostic(req.policies).size();

    SweepTable table;
    if (axis == SweepAxis::start_time) {
      int const stride = carbonsched::detail::get_field<int>(axis_doc, "stride", "axis");
      if (stride < 1) throw ValidationError("stride must be >= 1", {"axis.stride"});
      std::size_t const starts = req.trace.size() / static_cast<std::size_t>(stride) + 1;
      if (starts * policy_count * static_cast<std::size_t>(runs) > ctx.cell_budget) {
        return detail::error_reply(413, "sweep exceeds the cell budget of " + std::to_string(ctx.cell_budget));
      }
      table = sweep_start_times(req.job, req.curve, req.trace, req.policies, req.config, stride, runs);
    } else {
      auto const values = carbonsched::detail::get_field<std::vector<double>>(axis_doc, "values", "axis");
      if (values.empty()) throw ValidationError("axis.values must not be empty", {"axis.values"});
      if (values.size() * policy_count * static_cast<std::size_t>(runs) > ctx.cell_budget) {
        return detail::error_reply(413, "sweep exceeds the cell budget of " + std::to_string(ctx.cell_budget));
      }
      table = sweep_parameter(req.job, req.curve, req.trace, axis, values, req.policies, req.config, runs);
    }
    return Reply{200, to_json(table)};
  });
}

/// GET /api/v1/regions: loaded regions sorted by mean intensity.
inline Reply regions(Context const& ctx) {
  if (!ctx.load_errors.empty()) {
    return detail::error_reply(500, "unreadable trace " + ctx.load_errors.front(), ctx.load_errors);
  }
  std::vector<std::pair<std::string, RegionStats>> stats;
  for (auto const& [name, trace] : ctx.traces) stats.emplace_back(name, region_stats(trace));
  std::stable_sort(stats.begin(), stats.end(), [](auto const& a, auto const& b) { return a.second.mean < b.second.mean; });
  Json list = Json::array();
  for (auto const& [name, s] : stats) {
    list.push_back(Json{{"region", name},
                        {"slots", ctx.traces.at(name).size()},
                        {"mean", s.mean},
                        {"std_dev", s.std_dev},
                        {"cov", s.coefficient_of_variation}});
  }
  return Reply{200, Json{{"regions", std::move(list)}}};
}

}  // namespace carbonsched::advisor
