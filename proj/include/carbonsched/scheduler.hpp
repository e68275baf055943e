#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/profile.hpp"
#include "carbonsched/trace.hpp"

namespace carbonsched {

/// True once `work` covers `required` up to accumulated floating-point error.
inline bool work_reached(double work, double required) noexcept {
  return work >= required - 1e-9 * std::max(1.0, std::abs(required));
}

/// An elastic batch job. Times are slot indices from the trace origin.
struct JobSpec {
  std::string name = "job";
  int arrival_slot = 0;              // t
  double base_length_slots = 0.0;    // l, duration at min_servers
  int min_servers = 1;               // m
  int max_servers = 1;               // M
  int completion_slot = 0;           // T, exclusive deadline
  std::optional<PowerModel> power;   // absent: abstract intensity * server * slot units

  double slack() const noexcept { return completion_slot - (arrival_slot + base_length_slots); }
  int window_slots() const noexcept { return completion_slot - arrival_slot; }

  void validate() const {
    if (arrival_slot < 0) throw ValidationError("arrival slot must be >= 0", {"arrival_slot"});
    if (!(base_length_slots >= 0.0) || !std::isfinite(base_length_slots)) {
      throw ValidationError("job length must be finite and >= 0", {"length"});
    }
    if (min_servers < 1) throw ValidationError("min servers must be >= 1", {"min_servers"});
    if (max_servers < min_servers) throw ValidationError("max servers must be >= min servers", {"max_servers"});
    if (static_cast<double>(completion_slot) < arrival_slot + base_length_slots - 1e-9) {
      throw ValidationError("completion slot T must be at least t + l", {"completion_slot"});
    }
  }
};

enum class AccountingMode { whole_slot, prorated };

/// Which part of the marginal slot runs fractionally under prorated accounting.
enum class PartialKind {
  top_increment,     // only the highest increment (the whole block when S[i] == m)
  whole_allocation,  // every server in the slot, i.e. the slot is cut short
};

/// Per-slot server allocation over [window_start, window_start + allocations.size()).
struct Schedule {
  int window_start = 0;
  std::vector<int> allocations;
  std::string policy;
  // Index into `allocations` of the increment charged fractionally. Unset: the least
  // efficient committed top increment is used.
  std::optional<std::size_t> partial_slot;
  PartialKind partial_kind = PartialKind::top_increment;

  int window_end() const noexcept { return window_start + static_cast<int>(allocations.size()); }
  bool idle() const noexcept {
    return std::all_of(allocations.begin(), allocations.end(), [](int s) { return s == 0; });
  }
  int allocation_at(int slot) const noexcept {
    if (slot < window_start || slot >= window_end()) return 0;
    return allocations[static_cast<std::size_t>(slot - window_start)];
  }
};

struct ScheduleMetrics {
  double carbon = 0.0;
  double compute_slot_hours = 0.0;
  double completion_slot = 0.0;
  double overallocation = 0.0;
};

/// Energy per server per slot in kWh, or 1 abstract unit when no power model is given.
inline double energy_per_server_slot(std::optional<PowerModel> const& power, double slot_hours) noexcept {
  return power ? power->per_server_watts / 1000.0 * slot_hours : 1.0;
}

/// Carbon for one slot. Shared by planning and simulation so both sum identical terms.
inline double slot_carbon(double intensity, double charged_servers, double energy) noexcept {
  return intensity * charged_servers * energy;
}

/// Fraction of a slot elapsed when work stops, with `dead` leading dead time and `active`
/// the fraction of the remaining time the job runs.
inline double elapsed_fraction(double dead, double active) noexcept { return dead + active * (1.0 - dead); }

/// Server-equivalents charged in a slot holding `servers` whose marginal part runs `fraction`.
inline double partial_charge(int servers, int min_servers, PartialKind kind, double fraction) noexcept {
  if (kind == PartialKind::whole_allocation || servers == min_servers) return fraction * servers;
  return (servers - 1) + fraction;
}

inline double partial_work(MarginalCapacityCurve const& curve, int servers, PartialKind kind, double fraction) {
  if (kind == PartialKind::whole_allocation || servers == curve.min_servers()) {
    return fraction * curve.cumulative(servers);
  }
  return curve.cumulative(servers - 1) + fraction * curve.marginal(servers);
}

/// How a schedule realizes exactly W units of work: per-slot work and charged servers with
/// the marginal increment prorated.
struct PlanProfile {
  std::vector<double> work;
  std::vector<double> charged;
  std::optional<std::size_t> partial_slot;
  PartialKind partial_kind = PartialKind::top_increment;
  double fraction = 1.0;
  double total_work = 0.0;  // whole-slot work
  double completion_slot = 0.0;
};

namespace detail {

/// Work per carbon of the top increment in a slot; infinite for zero-carbon slots.
inline double top_score(MarginalCapacityCurve const& curve, int servers, double intensity) {
  int const m = curve.min_servers();
  double const work = servers == m ? curve.cumulative(m) : curve.marginal(servers);
  double const cost = (servers == m ? m : 1) * intensity;
  return cost > 0.0 ? work / cost : std::numeric_limits<double>::infinity();
}

inline void check_covers(CarbonTrace const& trace, int from, int to) {
  if (from < 0 || to > static_cast<int>(trace.size())) {
    throw BoundsError("trace of length " + std::to_string(trace.size()) + " does not cover slots [" +
                      std::to_string(from) + ", " + std::to_string(to) + ")");
  }
}

}  // namespace detail

inline PlanProfile plan_profile(Schedule const& schedule, MarginalCapacityCurve const& curve,
                                CarbonTrace const& trace, double required_work) {
  auto const n = schedule.allocations.size();
  int const m = curve.min_servers();
  PlanProfile p;
  p.work.resize(n);
  p.charged.resize(n);
  std::optional<std::size_t> last_active;
  for (std::size_t i = 0; i < n; ++i) {
    int const s = schedule.allocations[i];
    p.work[i] = curve.cumulative(s);
    p.charged[i] = s;
    p.total_work += p.work[i];
    if (s > 0) last_active = i;
  }
  p.completion_slot = last_active ? static_cast<double>(schedule.window_start) + static_cast<double>(*last_active) + 1.0
                                  : static_cast<double>(schedule.window_start);
  if (!last_active) return p;

  if (schedule.partial_slot && *schedule.partial_slot < n && schedule.allocations[*schedule.partial_slot] > 0) {
    p.partial_slot = schedule.partial_slot;
    p.partial_kind = schedule.partial_kind;
  } else {
    // Least efficient top increment; later slots lose ties, matching greedy commit order.
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      int const s = schedule.allocations[i];
      if (s == 0) continue;
      double const score = detail::top_score(curve, s, trace[static_cast<std::size_t>(schedule.window_start) + i]);
      if (!p.partial_slot || score <= worst) {
        worst = score;
        p.partial_slot = i;
      }
    }
    p.partial_kind = PartialKind::top_increment;
  }

  std::size_t const k = *p.partial_slot;
  int const s = schedule.allocations[k];
  double const increment_work = (p.partial_kind == PartialKind::whole_allocation || s == m)
                                    ? curve.cumulative(s)
                                    : curve.marginal(s);
  double const other = p.total_work - increment_work;
  p.fraction = std::clamp((required_work - other) / increment_work, 0.0, 1.0);
  if (p.fraction < 1.0) {
    p.work[k] = partial_work(curve, s, p.partial_kind, p.fraction);
    p.charged[k] = partial_charge(s, m, p.partial_kind, p.fraction);
    bool const slot_cut_short = p.partial_kind == PartialKind::whole_allocation || s == m;
    if (k == *last_active && slot_cut_short) {
      p.completion_slot = static_cast<double>(schedule.window_start) + static_cast<double>(k) +
                          elapsed_fraction(0.0, p.fraction);
    }
  }
  return p;
}

/// Carbon, compute and completion of a schedule that must deliver `required_work`.
inline ScheduleMetrics planned_carbon(Schedule const& schedule, MarginalCapacityCurve const& curve,
                                      CarbonTrace const& trace, double required_work,
                                      std::optional<PowerModel> const& power, AccountingMode mode) {
  detail::check_covers(trace, schedule.window_start, schedule.window_end());
  auto const p = plan_profile(schedule, curve, trace, required_work);
  double const energy = energy_per_server_slot(power, trace.slot_hours());
  ScheduleMetrics out;
  for (std::size_t i = 0; i < schedule.allocations.size(); ++i) {
    double const charged = mode == AccountingMode::prorated ? p.charged[i] : schedule.allocations[i];
    out.carbon += slot_carbon(trace[static_cast<std::size_t>(schedule.window_start) + i], charged, energy);
    out.compute_slot_hours += charged * trace.slot_hours();
  }
  out.completion_slot = p.completion_slot;
  out.overallocation = std::max(0.0, p.total_work - required_work);
  return out;
}

/// Server-slot hours charged. Whole-slot mode charges every allocated server for its full slot.
inline double compute_cost(Schedule const& schedule, MarginalCapacityCurve const& curve, CarbonTrace const& trace,
                           double required_work, AccountingMode mode) {
  return planned_carbon(schedule, curve, trace, required_work, std::nullopt, mode).compute_slot_hours;
}

/// W = l * MC_m.
inline double work_requirement(JobSpec const& job, MarginalCapacityCurve const& curve) {
  if (curve.min_servers() != job.min_servers || curve.max_servers() < job.max_servers) {
    throw ValidationError("curve covers servers [" + std::to_string(curve.min_servers()) + ", " +
                              std::to_string(curve.max_servers()) + "] but job needs [" +
                              std::to_string(job.min_servers) + ", " + std::to_string(job.max_servers) + "]",
                          {"min_servers", "max_servers"});
  }
  return job.base_length_slots * curve.marginal(curve.min_servers());
}

// ---------------------------------------------------------------------------
// Greedy carbon scaling

/// Greedy allocation over [from, to) for `required_work` with at most `max_servers` per slot.
///
/// Candidates are (slot, server) increments scored by work per unit carbon. Opening a slot
/// commits the m-server block, scored MC_m / (m * c_i); after that the slot offers its
/// next server j at MC_j / c_i until it reaches `max_servers`. The best admissible
/// increment is committed until the work is covered. Ties go to the earlier slot, then the
/// lower server index.
inline Schedule greedy_window(MarginalCapacityCurve const& curve, CarbonTrace const& forecast, int from, int to,
                              double required_work, int max_servers) {
  detail::check_covers(forecast, from, to);
  int const m = curve.min_servers();
  int const n = to - from;
  Schedule out{from, std::vector<int>(static_cast<std::size_t>(std::max(n, 0)), 0), "greedy", std::nullopt,
               PartialKind::top_increment};
  if (required_work <= 0.0 || work_reached(0.0, required_work)) return out;

  double const capacity = n * curve.cumulative(max_servers);
  if (!work_reached(capacity, required_work)) {
    throw InfeasibleError("job needs " + detail::format_double(required_work) + " work units but at most " +
                              detail::format_double(capacity) + " fit in slots [" + std::to_string(from) + ", " +
                              std::to_string(to) + ")",
                          capacity, required_work);
  }

  struct Candidate {
    double score;
    int slot;
    int server;
  };
  auto const worse = [](Candidate const& a, Candidate const& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.slot != b.slot) return a.slot > b.slot;
    return a.server > b.server;
  };
  auto const score = [&](int slot, int server) {
    double const c = forecast[static_cast<std::size_t>(slot)];
    double const work = server == m ? curve.cumulative(m) : curve.marginal(server);
    double const cost = (server == m ? m : 1) * c;
    return cost > 0.0 ? work / cost : std::numeric_limits<double>::infinity();
  };

  std::vector<Candidate> heap;
  heap.reserve(static_cast<std::size_t>(n));
  for (int i = from; i < to; ++i) heap.push_back({score(i, m), i, m});
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> queue(worse, std::move(heap));

  double work = 0.0;
  while (!queue.empty()) {
    auto const next = queue.top();
    queue.pop();
    auto const idx = static_cast<std::size_t>(next.slot - from);
    out.allocations[idx] = next.server;
    work += next.server == m ? curve.cumulative(m) : curve.marginal(next.server);
    out.partial_slot = idx;
    if (work_reached(work, required_work)) break;
    if (next.server < max_servers) queue.push({score(next.slot, next.server + 1), next.slot, next.server + 1});
  }
  return out;
}

/// Carbon-minimizing schedule for the whole job window [t, T).
inline Schedule greedy_schedule(JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& forecast) {
  job.validate();
  double const work = work_requirement(job, curve);
  return greedy_window(curve, forecast, job.arrival_slot, job.completion_slot, work, job.max_servers);
}

/// Replans the remainder [current_slot, T) for the work still outstanding.
inline Schedule recompute(JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& updated_forecast,
                          int current_slot, double work_done) {
  job.validate();
  double const total = work_requirement(job, curve);
  if (current_slot < job.arrival_slot || current_slot >= job.completion_slot) {
    throw ValidationError("current slot outside [t, T)", {"current_slot"});
  }
  if (work_done < 0.0 || (work_done > total && !work_reached(total, work_done))) {
    throw ValidationError("work done must be within [0, W]", {"work_done"});
  }
  return greedy_window(curve, updated_forecast, current_slot, job.completion_slot, total - work_done, job.max_servers);
}

// ---------------------------------------------------------------------------
// Baselines

namespace detail {

/// Slot indices of [from, to) ordered by (intensity, index).
inline std::vector<int> slots_by_carbon(CarbonTrace const& forecast, int from, int to) {
  std::vector<int> order(static_cast<std::size_t>(std::max(to - from, 0)));
  std::iota(order.begin(), order.end(), from);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return forecast[static_cast<std::size_t>(a)] < forecast[static_cast<std::size_t>(b)];
  });
  return order;
}

/// Runs `scale` servers on the cheapest slots of [from, to) until `required_work` is covered.
inline Schedule lowest_carbon_fill(MarginalCapacityCurve const& curve, CarbonTrace const& forecast, int from, int to,
                                   double required_work, int scale, std::string policy) {
  check_covers(forecast, from, to);
  Schedule out{from, std::vector<int>(static_cast<std::size_t>(std::max(to - from, 0)), 0), std::move(policy),
               std::nullopt, PartialKind::whole_allocation};
  if (required_work <= 0.0 || work_reached(0.0, required_work)) return out;
  double const per_slot = curve.cumulative(scale);
  if (!work_reached((to - from) * per_slot, required_work)) {
    throw InfeasibleError("only " + std::to_string(to - from) + " slots available at scale " + std::to_string(scale) +
                              " for " + format_double(required_work) + " work units",
                          (to - from) * per_slot, required_work);
  }
  double work = 0.0;
  for (int slot : slots_by_carbon(forecast, from, to)) {
    auto const idx = static_cast<std::size_t>(slot - from);
    out.allocations[idx] = scale;
    out.partial_slot = idx;
    work += per_slot;
    if (work_reached(work, required_work)) break;
  }
  return out;
}

inline Schedule agnostic_window(MarginalCapacityCurve const& curve, int from, int to, double required_work) {
  int const m = curve.min_servers();
  Schedule out{from, std::vector<int>(static_cast<std::size_t>(std::max(to - from, 0)), 0), "agnostic",
               std::nullopt, PartialKind::whole_allocation};
  double const per_slot = curve.cumulative(m);
  double work = 0.0;
  for (std::size_t i = 0; i < out.allocations.size() && !work_reached(work, required_work); ++i) {
    out.allocations[i] = m;
    out.partial_slot = i;
    work += per_slot;
  }
  if (!work_reached(work, required_work)) {
    throw InfeasibleError("carbon-agnostic run does not fit before the deadline", work, required_work);
  }
  return out;
}

/// Nearest-rank percentile: the smallest value with at least p% of samples at or below it.
inline double nearest_rank_percentile(std::vector<double> values, double percentile) {
  std::sort(values.begin(), values.end());
  auto const n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

}  // namespace detail

/// Status quo: m servers from arrival until the work is done, last slot cut short.
inline Schedule carbon_agnostic(JobSpec const& job, MarginalCapacityCurve const& curve) {
  job.validate();
  double const work = work_requirement(job, curve);
  return detail::agnostic_window(curve, job.arrival_slot, job.completion_slot, work);
}

/// Suspend-resume at m servers on the ceil(l) lowest-carbon slots before the deadline.
inline Schedule suspend_resume_deadline(JobSpec const& job, MarginalCapacityCurve const& curve,
                                        CarbonTrace const& forecast) {
  job.validate();
  double const work = work_requirement(job, curve);
  return detail::lowest_carbon_fill(curve, forecast, job.arrival_slot, job.completion_slot, work, job.min_servers,
                                    "sr_deadline");
}

/// Runs `scale` servers on the fewest lowest-carbon slots that cover the work.
inline Schedule static_scale(JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& forecast,
                             int scale) {
  job.validate();
  if (scale < job.min_servers || scale > job.max_servers) {
    throw ValidationError("static scale factor must lie in [m, M]", {"k"});
  }
  double const work = work_requirement(job, curve);
  return detail::lowest_carbon_fill(curve, forecast, job.arrival_slot, job.completion_slot, work, scale,
                                    "static:" + std::to_string(scale));
}

inline double threshold_for(CarbonTrace const& forecast, int from, int to, double percentile) {
  detail::check_covers(forecast, from, to);
  if (to <= from) return 0.0;
  auto const values = forecast.intensities();
  return detail::nearest_rank_percentile(
      std::vector<double>(values.begin() + from, values.begin() + to), percentile);
}

/// Deadline-unaware suspend-resume: m servers whenever intensity is at or below the
/// percentile of [t, T), in time order, possibly running past T until the trace ends.
inline Schedule suspend_resume_threshold(JobSpec const& job, MarginalCapacityCurve const& curve,
                                         CarbonTrace const& trace, double percentile) {
  job.validate();
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw ValidationError("percentile must be in [0, 100]", {"percentile"});
  double const required = work_requirement(job, curve);
  detail::check_covers(trace, job.arrival_slot, job.completion_slot);
  Schedule out{job.arrival_slot, {}, "sr_threshold:" + detail::format_double(percentile), std::nullopt,
               PartialKind::whole_allocation};
  if (work_reached(0.0, required)) {
    out.allocations.assign(static_cast<std::size_t>(job.window_slots()), 0);
    return out;
  }
  double const threshold = threshold_for(trace, job.arrival_slot, job.completion_slot, percentile);
  double const per_slot = curve.cumulative(job.min_servers);
  double work = 0.0;
  for (auto slot = static_cast<std::size_t>(job.arrival_slot); slot < trace.size(); ++slot) {
    bool const run = trace[slot] <= threshold;
    out.allocations.push_back(run ? job.min_servers : 0);
    if (!run) continue;
    out.partial_slot = out.allocations.size() - 1;
    work += per_slot;
    if (work_reached(work, required)) break;
  }
  if (!work_reached(work, required)) {
    throw InfeasibleError("trace ends before threshold policy completes the job", work, required);
  }
  if (out.allocations.size() < static_cast<std::size_t>(job.window_slots())) {
    out.allocations.resize(static_cast<std::size_t>(job.window_slots()), 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Policy selection

struct Policy {
  enum class Kind { greedy, agnostic, sr_deadline, sr_threshold, static_scale };

  Kind kind = Kind::greedy;
  double percentile = 25.0;  // sr_threshold
  int scale = 1;             // static_scale

  static Policy greedy() { return {Kind::greedy}; }
  static Policy agnostic() { return {Kind::agnostic}; }
  static Policy sr_deadline() { return {Kind::sr_deadline}; }
  static Policy sr_threshold(double p) { return {Kind::sr_threshold, p}; }
  static Policy static_scale(int k) { return {Kind::static_scale, 25.0, k}; }

  bool deadline_aware() const noexcept { return kind != Kind::sr_threshold; }

  std::string name() const {
    switch (kind) {
      case Kind::greedy: return "greedy";
      case Kind::agnostic: return "agnostic";
      case Kind::sr_deadline: return "sr_deadline";
      case Kind::sr_threshold: return "sr_threshold:" + detail::format_double(percentile);
      case Kind::static_scale: return "static:" + std::to_string(scale);
    }
    return "unknown";
  }

  /// Accepts greedy, agnostic, sr_deadline, sr_threshold[:p] and static:k. Dashes may replace
  /// underscores.
  static Policy parse(std::string_view text, double default_percentile = 25.0, std::optional<int> default_scale = {}) {
    std::string s(text);
    std::replace(s.begin(), s.end(), '-', '_');
    auto const colon = s.find(':');
    std::string const head = s.substr(0, colon);
    std::string const arg = colon == std::string::npos ? "" : s.substr(colon + 1);
    if (head == "greedy") return greedy();
    if (head == "agnostic" || head == "carbon_agnostic") return agnostic();
    if (head == "sr_deadline" || head == "suspend_resume") return sr_deadline();
    if (head == "sr_threshold") {
      double p = default_percentile;
      if (!arg.empty() && !detail::parse_double(arg, p)) throw ValidationError("bad percentile in '" + s + "'", {"policy"});
      return sr_threshold(p);
    }
    if (head == "static" || head == "static_scale") {
      int k = 0;
      if (!arg.empty()) {
        if (!detail::parse_int(arg, k)) throw ValidationError("bad scale factor in '" + s + "'", {"policy"});
      } else if (default_scale) {
        k = *default_scale;
      } else {
        throw ValidationError("static policy needs a scale factor", {"k"});
      }
      return static_scale(k);
    }
    throw ValidationError("unknown policy '" + std::string(text) + "'", {"policy"});
  }

  friend bool operator==(Policy const&, Policy const&) = default;
};

/// Plans `policy` over [from, T) for `required_work`. The threshold policy ignores the
/// deadline and may extend to the end of `forecast`.
inline Schedule plan_policy(Policy const& policy, JobSpec const& job, MarginalCapacityCurve const& curve,
                            CarbonTrace const& forecast, int from, double required_work) {
  int const to = job.completion_slot;
  switch (policy.kind) {
    case Policy::Kind::greedy:
      return greedy_window(curve, forecast, from, to, required_work, job.max_servers);
    case Policy::Kind::agnostic:
      return detail::agnostic_window(curve, from, to, required_work);
    case Policy::Kind::sr_deadline:
      return detail::lowest_carbon_fill(curve, forecast, from, to, required_work, job.min_servers, "sr_deadline");
    case Policy::Kind::static_scale:
      if (policy.scale < job.min_servers || policy.scale > job.max_servers) {
        throw ValidationError("static scale factor must lie in [m, M]", {"k"});
      }
      return detail::lowest_carbon_fill(curve, forecast, from, to, required_work, policy.scale, policy.name());
    case Policy::Kind::sr_threshold: {
      JobSpec shifted = job;
      shifted.arrival_slot = from;
      shifted.base_length_slots = required_work / curve.cumulative(job.min_servers);
      shifted.completion_slot = std::max(to, from + static_cast<int>(std::ceil(shifted.base_length_slots - 1e-9)));
      return suspend_resume_threshold(shifted, curve, forecast, policy.percentile);
    }
  }
  throw ValidationError("unknown policy", {"policy"});
}

inline Schedule plan_policy(Policy const& policy, JobSpec const& job, MarginalCapacityCurve const& curve,
                            CarbonTrace const& forecast) {
  job.validate();
  return plan_policy(policy, job, curve, forecast, job.arrival_slot, work_requirement(job, curve));
}

}  // namespace carbonsched
