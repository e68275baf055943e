#pragma once

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "carbonsched/errors.hpp"
#include "carbonsched/profile.hpp"
#include "carbonsched/scheduler.hpp"
#include "carbonsched/sim.hpp"
#include "carbonsched/sweep.hpp"
#include "carbonsched/trace.hpp"

namespace carbonsched {

using Json = nlohmann::json;

/// A job/curve fixture file. Job fields are optional so the same format serves curve-only
/// files.
struct Fixture {
  std::string name = "job";
  std::optional<int> arrival_slot;
  std::optional<double> length;
  std::optional<int> completion_slot;
  int min_servers = 1;
  int max_servers = 1;
  std::optional<ThroughputProfile> profile;  // set when the file gave raw throughput
  MarginalCapacityCurve curve = MarginalCapacityCurve::create(1, 1, {1.0});
  std::optional<PowerModel> power;

  JobSpec job() const {
    if (!length || !completion_slot) {
      throw ValidationError("fixture lacks job fields (length, completion_slot)", {"length", "completion_slot"});
    }
    JobSpec j{name, arrival_slot.value_or(0), *length, min_servers, max_servers, *completion_slot, power};
    j.validate();
    return j;
  }
};

namespace detail {

inline void reject_unknown(Json const& obj, std::initializer_list<std::string_view> allowed, std::string const& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object", {where});
  std::vector<std::string> unknown;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) unknown.push_back(where.empty() ? it.key() : where + "." + it.key());
  }
  if (!unknown.empty()) {
    std::string msg = "unknown field";
    msg += unknown.size() > 1 ? "s " : " ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ValidationError(msg, unknown);
  }
}

template <typename T>
T get_field(Json const& obj, char const* key, std::string const& where) {
  try {
    return obj.at(key).get<T>();
  } catch (nlohmann::json::exception const&) {
    std::string const field = where.empty() ? key : where + "." + key;
    throw ValidationError("field '" + field + "' is missing or has the wrong type", {field});
  }
}

template <typename T>
std::optional<T> get_optional(Json const& obj, char const* key, std::string const& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return get_field<T>(obj, key, where);
}

}  // namespace detail

/// Parses {name, m, M, throughput: {j: value} | mc: [...], power_watts, alpha_minutes, beta}
/// plus optional job fields {arrival_slot, length, completion_slot}.
inline Fixture fixture_from_json(Json const& doc, std::string const& where = "") {
  detail::reject_unknown(doc,
                         {"name", "m", "M", "throughput", "mc", "power_watts", "alpha_minutes", "beta", "arrival_slot",
                          "length", "completion_slot", "description"},
                         where);
  Fixture f;
  f.name = detail::get_optional<std::string>(doc, "name", where).value_or("job");
  f.min_servers = detail::get_field<int>(doc, "m", where);
  f.max_servers = detail::get_field<int>(doc, "M", where);
  f.arrival_slot = detail::get_optional<int>(doc, "arrival_slot", where);
  f.length = detail::get_optional<double>(doc, "length", where);
  f.completion_slot = detail::get_optional<int>(doc, "completion_slot", where);
  if (auto w = detail::get_optional<double>(doc, "power_watts", where)) f.power = PowerModel::create(*w);

  bool const has_tp = doc.contains("throughput");
  bool const has_mc = doc.contains("mc");
  if (has_tp == has_mc) throw ValidationError("give exactly one of 'throughput' or 'mc'", {"throughput", "mc"});
  if (has_tp) {
    ThroughputProfile p;
    p.min_servers = f.min_servers;
    p.max_servers = f.max_servers;
    p.alpha_minutes = detail::get_optional<double>(doc, "alpha_minutes", where).value_or(0.0);
    p.beta = detail::get_optional<int>(doc, "beta", where).value_or(1);
    auto const& tp = doc.at("throughput");
    if (!tp.is_object()) throw ValidationError("'throughput' must map server counts to values", {"throughput"});
    for (auto it = tp.begin(); it != tp.end(); ++it) {
      int j = 0;
      if (!detail::parse_int(it.key(), j) || !it.value().is_number()) {
        throw ValidationError("bad throughput entry '" + it.key() + "'", {"throughput"});
      }
      p.samples[j] = it.value().get<double>();
    }
    f.curve = curve_from_profile(p);
    f.profile = p;
  } else {
    f.curve = MarginalCapacityCurve::create(f.min_servers, f.max_servers,
                                            detail::get_field<std::vector<double>>(doc, "mc", where));
  }
  return f;
}

inline Json read_json_file(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'", {path});
  try {
    return Json::parse(in);
  } catch (nlohmann::json::parse_error const& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what(), {path});
  }
}

inline Fixture load_fixture(std::string const& path) { return fixture_from_json(read_json_file(path)); }

inline CarbonTrace load_trace(std::string const& path, std::string region) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'", {path});
  return parse_trace(in, std::move(region));
}

inline std::string_view mode_name(AccountingMode mode) {
  return mode == AccountingMode::prorated ? "prorated" : "whole_slot";
}

inline AccountingMode parse_mode(std::string_view text) {
  if (text == "prorated") return AccountingMode::prorated;
  if (text == "whole" || text == "whole_slot") return AccountingMode::whole_slot;
  throw ValidationError("accounting mode must be 'whole' or 'prorated'", {"accounting_mode"});
}

inline Json to_json(ScheduleMetrics const& m) {
  return Json{{"carbon_g", m.carbon}, {"compute_slot_hours", m.compute_slot_hours}, {"completion_slot", m.completion_slot}};
}

inline Json to_json(Schedule const& s, ScheduleMetrics const& metrics) {
  return Json{{"window_start", s.window_start},
              {"allocations", s.allocations},
              {"policy", s.policy},
              {"metrics", to_json(metrics)}};
}

inline Json to_json(SlotRecord const& r) {
  return Json{{"slot", r.slot},
              {"requested_servers", r.requested_servers},
              {"granted_servers", r.granted_servers},
              {"intensity_actual", r.intensity_actual},
              {"intensity_forecast", r.intensity_forecast},
              {"work_done", r.work_done},
              {"carbon_g", r.carbon},
              {"recomputed", r.recomputed}};
}

inline Json to_json(SimResult const& r) {
  Json timeline = Json::array();
  for (auto const& rec : r.timeline) timeline.push_back(to_json(rec));
  return Json{{"carbon_g", r.carbon_g},
              {"compute_slot_hours", r.compute_slot_hours},
              {"completion_slot", r.completion_slot},
              {"met_deadline", r.met_deadline},
              {"work_done", r.work_done},
              {"work_required", r.work_required},
              {"recomputations", r.recomputations},
              {"timeline", std::move(timeline)}};
}

inline Json to_json(RegionStats const& s) {
  return Json{{"mean", s.mean}, {"std_dev", s.std_dev}, {"cov", s.coefficient_of_variation}};
}

inline Json to_json(SweepTable const& table) {
  auto const num = [](double v) { return std::isnan(v) ? Json(nullptr) : Json(v); };
  Json rows = Json::array();
  for (auto const& r : table.rows) {
    rows.push_back(Json{{"axis_value", r.axis_value},
                        {"policy", r.policy},
                        {"seed", r.seed},
                        {"infeasible", r.infeasible},
                        {"carbon_g", num(r.carbon_g)},
                        {"compute_slot_hours", num(r.compute_slot_hours)},
                        {"completion_slot", num(r.completion_slot)},
                        {"met_deadline", r.met_deadline},
                        {"savings_pct", num(r.savings_pct)}});
  }
  Json cells = Json::array();
  for (auto const& c : table.cells) {
    cells.push_back(Json{{"axis_value", c.axis_value},
                         {"policy", c.policy},
                         {"runs", c.runs},
                         {"infeasible", c.infeasible_runs},
                         {"mean_carbon_g", num(c.mean_carbon_g)},
                         {"p95_carbon_g", num(c.p95_carbon_g)},
                         {"mean_compute_slot_hours", num(c.mean_compute_slot_hours)},
                         {"mean_completion_slot", num(c.mean_completion_slot)},
                         {"mean_savings_pct", num(c.mean_savings_pct)},
                         {"p95_savings_pct", num(c.p95_savings_pct)}});
  }
  return Json{{"axis", std::string(axis_name(table.axis))}, {"omitted", table.omitted}, {"rows", rows}, {"summary", cells}};
}

}  // namespace carbonsched
