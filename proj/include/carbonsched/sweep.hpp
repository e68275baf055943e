#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/profile.hpp"
#include "carbonsched/scheduler.hpp"
#include "carbonsched/sim.hpp"
#include "carbonsched/trace.hpp"

namespace carbonsched {

enum class SweepAxis {
  start_time,
  completion_time,  // value: window length T - t in slots
  job_length,       // value: l; window keeps the template's (T - t) / l ratio
  cluster_size,     // value: integer multiplier applied to m and M
  scale_factor,     // value: k for static policies
  denial,           // value: denial probability
  forecast_error,   // value: percent
  profile_error,    // value: percent
};

inline std::string_view axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::start_time: return "start_time";
    case SweepAxis::completion_time: return "completion_time";
    case SweepAxis::job_length: return "job_length";
    case SweepAxis::cluster_size: return "cluster_size";
    case SweepAxis::scale_factor: return "scale_factor";
    case SweepAxis::denial: return "denial";
    case SweepAxis::forecast_error: return "forecast_error";
    case SweepAxis::profile_error: return "profile_error";
  }
  return "unknown";
}

inline SweepAxis parse_axis(std::string_view text) {
  for (auto axis : {SweepAxis::start_time, SweepAxis::completion_time, SweepAxis::job_length, SweepAxis::cluster_size,
                    SweepAxis::scale_factor, SweepAxis::denial, SweepAxis::forecast_error, SweepAxis::profile_error}) {
    if (axis_name(axis) == text) return axis;
  }
  throw ValidationError("unknown sweep axis '" + std::string(text) + "'", {"axis"});
}

struct SweepRow {
  double axis_value = 0.0;
  std::string policy;
  std::uint64_t seed = 0;
  bool infeasible = false;
  double carbon_g = std::numeric_limits<double>::quiet_NaN();
  double compute_slot_hours = std::numeric_limits<double>::quiet_NaN();
  double completion_slot = std::numeric_limits<double>::quiet_NaN();
  bool met_deadline = false;
  double savings_pct = std::numeric_limits<double>::quiet_NaN();  // vs agnostic at same value and seed
};

struct SweepCell {
  double axis_value = 0.0;
  std::string policy;
  int runs = 0;
  int infeasible_runs = 0;
  double mean_carbon_g = std::numeric_limits<double>::quiet_NaN();
  double p95_carbon_g = std::numeric_limits<double>::quiet_NaN();
  double mean_compute_slot_hours = std::numeric_limits<double>::quiet_NaN();
  double mean_completion_slot = std::numeric_limits<double>::quiet_NaN();
  double mean_savings_pct = std::numeric_limits<double>::quiet_NaN();
  double p95_savings_pct = std::numeric_limits<double>::quiet_NaN();
};

struct SweepTable {
  SweepAxis axis = SweepAxis::start_time;
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;
  int omitted = 0;  // start offsets whose window overran the trace
};

inline constexpr std::string_view kSweepCsvHeader =
    "axis_value,policy,seed,carbon_g,compute_slot_hours,completion_slot,met_deadline";

/// Nearest-rank percentile of `values`.
inline double percentile_of(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return detail::nearest_rank_percentile(std::move(values), p);
}

/// Pearson correlation coefficient; NaN when either side is constant.
inline double pearson(std::vector<double> const& x, std::vector<double> const& y) {
  auto const n = static_cast<double>(std::min(x.size(), y.size()));
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

inline double savings_pct(double policy_carbon, double agnostic_carbon) {
  if (agnostic_carbon <= 0.0) return 0.0;
  return (1.0 - policy_carbon / agnostic_carbon) * 100.0;
}

/// A job scenario after applying one axis value.
struct Scenario {
  JobSpec job;
  MarginalCapacityCurve curve;
  SimConfig config;
  std::vector<Policy> policies;
};

/// Bigger job on a bigger cluster: m and M scaled by `factor`, the curve extended to the
/// new M and renormalized so the new m-server block does one unit per slot. Job length in
/// slots is unchanged, so total work grows with the cluster.
inline MarginalCapacityCurve scale_cluster_curve(MarginalCapacityCurve const& curve, int factor) {
  if (factor < 1) throw ValidationError("cluster multiplier must be >= 1", {"axis_value"});
  int const m = curve.min_servers() * factor;
  int const M = curve.max_servers() * factor;
  auto const extended = extrapolate_curve(curve, M);
  double const base = extended.cumulative(m);
  std::vector<double> values;
  values.push_back(1.0);
  for (int j = m + 1; j <= M; ++j) values.push_back(std::max(extended.marginal(j) / base, kMarginalFloor));
  return MarginalCapacityCurve::create_estimate(m, M, std::move(values));
}

inline Scenario apply_axis(SweepAxis axis, double value, JobSpec const& job, MarginalCapacityCurve const& curve,
                           SimConfig const& config, std::vector<Policy> const& policies) {
  Scenario s{job, curve, config, policies};
  switch (axis) {
    case SweepAxis::start_time:
      s.job.completion_slot = job.completion_slot + static_cast<int>(value);
      s.job.arrival_slot = job.arrival_slot + static_cast<int>(value);
      break;
    case SweepAxis::completion_time:
      s.job.completion_slot = job.arrival_slot + static_cast<int>(std::lround(value));
      break;
    case SweepAxis::job_length: {
      double const ratio = job.base_length_slots > 0.0 ? job.window_slots() / job.base_length_slots : 1.0;
      s.job.base_length_slots = value;
      s.job.completion_slot = job.arrival_slot + static_cast<int>(std::ceil(value * ratio - 1e-9));
      break;
    }
    case SweepAxis::cluster_size: {
      auto const factor = static_cast<int>(std::lround(value));
      s.curve = scale_cluster_curve(curve, factor);
      s.job.min_servers = s.curve.min_servers();
      s.job.max_servers = s.curve.max_servers();
      break;
    }
    case SweepAxis::scale_factor:
      for (auto& p : s.policies) {
        if (p.kind == Policy::Kind::static_scale) p.scale = static_cast<int>(std::lround(value));
      }
      break;
    case SweepAxis::denial: s.config.denial_probability = value; break;
    case SweepAxis::forecast_error: s.config.forecast_error_pct = value; break;
    case SweepAxis::profile_error: s.config.profile_error_pct = value; break;
  }
  return s;
}

namespace detail {

inline std::vector<Policy> with_agnostic(std::vector<Policy> policies) {
  bool const has = std::any_of(policies.begin(), policies.end(),
                               [](Policy const& p) { return p.kind == Policy::Kind::agnostic; });
  if (!has) policies.insert(policies.begin(), Policy::agnostic());
  return policies;
}

inline void summarize(SweepTable& table) {
  std::map<std::pair<double, std::string>, std::size_t> index;
  for (auto const& row : table.rows) {
    auto const key = std::make_pair(row.axis_value, row.policy);
    if (!index.contains(key)) {
      index.emplace(key, table.cells.size());
      table.cells.push_back(SweepCell{row.axis_value, row.policy});
    }
  }
  for (auto& cell : table.cells) {
    std::vector<double> carbon, compute, completion, savings;
    for (auto const& row : table.rows) {
      if (row.axis_value != cell.axis_value || row.policy != cell.policy) continue;
      ++cell.runs;
      if (row.infeasible) {
        ++cell.infeasible_runs;
        continue;
      }
      carbon.push_back(row.carbon_g);
      compute.push_back(row.compute_slot_hours);
      completion.push_back(row.completion_slot);
      if (!std::isnan(row.savings_pct)) savings.push_back(row.savings_pct);
    }
    auto const mean = [](std::vector<double> const& v) {
      if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    cell.mean_carbon_g = mean(carbon);
    cell.p95_carbon_g = percentile_of(carbon, 95.0);
    cell.mean_compute_slot_hours = mean(compute);
    cell.mean_completion_slot = mean(completion);
    cell.mean_savings_pct = mean(savings);
    cell.p95_savings_pct = percentile_of(savings, 95.0);
  }
}

/// Runs every (policy, seed) combination for one scenario and appends rows in input order.
inline void run_scenario(SweepTable& table, double axis_value, Scenario const& s, CarbonTrace const& trace, int runs) {
  std::size_t const first = table.rows.size();
  for (auto const& policy : s.policies) {
    for (int r = 0; r < runs; ++r) {
      SweepRow row;
      row.axis_value = axis_value;
      row.policy = policy.name();
      row.seed = s.config.seed + static_cast<std::uint64_t>(r);
      SimConfig cfg = s.config;
      cfg.seed = row.seed;
      try {
        auto const res = simulate(s.job, s.curve, trace, policy, cfg);
        row.carbon_g = res.carbon_g;
        row.compute_slot_hours = res.compute_slot_hours;
        row.completion_slot = res.completion_slot;
        row.met_deadline = res.met_deadline;
      } catch (InfeasibleError const&) {
        row.infeasible = true;
      } catch (BoundsError const&) {
        row.infeasible = true;
      } catch (ValidationError const&) {
        row.infeasible = true;
      }
      table.rows.push_back(row);
    }
  }
  // Savings against the agnostic row with the same seed.
  for (std::size_t i = first; i < table.rows.size(); ++i) {
    for (std::size_t a = first; a < table.rows.size(); ++a) {
      auto const& base = table.rows[a];
      if (base.policy == "agnostic" && base.seed == table.rows[i].seed && !base.infeasible &&
          !table.rows[i].infeasible) {
        table.rows[i].savings_pct = savings_pct(table.rows[i].carbon_g, base.carbon_g);
      }
    }
  }
}

}  // namespace detail

/// One row set per start offset 0, stride, 2*stride, ... whose job window fits the trace.
inline SweepTable sweep_start_times(JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& trace,
                                    std::vector<Policy> const& policies, SimConfig const& config, int stride,
                                    int runs = 1) {
  if (stride < 1) throw ValidationError("stride must be >= 1 slot", {"stride"});
  if (runs < 1) throw ValidationError("runs must be >= 1", {"runs"});
  SweepTable table;
  table.axis = SweepAxis::start_time;
  auto const all = detail::with_agnostic(policies);
  for (int offset = 0; offset < static_cast<int>(trace.size()); offset += stride) {
    if (job.completion_slot + offset > static_cast<int>(trace.size())) {
      ++table.omitted;
      continue;
    }
    auto const s = apply_axis(SweepAxis::start_time, offset, job, curve, config, all);
    detail::run_scenario(table, offset, s, trace, runs);
  }
  detail::summarize(table);
  return table;
}

inline SweepTable sweep_parameter(JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& trace,
                                  SweepAxis axis, std::vector<double> const& values,
                                  std::vector<Policy> const& policies, SimConfig const& config, int runs = 1) {
  if (runs < 1) throw ValidationError("runs must be >= 1", {"runs"});
  if (axis == SweepAxis::start_time) throw ValidationError("use sweep_start_times for the start_time axis", {"axis"});
  SweepTable table;
  table.axis = axis;
  auto const all = detail::with_agnostic(policies);
  for (double value : values) {
    std::optional<Scenario> s;
    try {
      s = apply_axis(axis, value, job, curve, config, all);
      s->job.validate();
      s->config.validate();
    } catch (ValidationError const&) {
      s.reset();
    }
    if (!s) {
      for (auto const& p : all) {
        for (int r = 0; r < runs; ++r) {
          SweepRow row;
          row.axis_value = value;
          row.policy = p.name();
          row.seed = config.seed + static_cast<std::uint64_t>(r);
          row.infeasible = true;
          table.rows.push_back(row);
        }
      }
      continue;
    }
    detail::run_scenario(table, value, *s, trace, runs);
  }
  detail::summarize(table);
  return table;
}

inline void write_sweep_csv(std::ostream& out, SweepTable const& table) {
  auto const num = [](double v) { return std::isnan(v) ? std::string("nan") : detail::format_double(v); };
  out << kSweepCsvHeader << '\n';
  for (auto const& row : table.rows) {
    out << num(row.axis_value) << ',' << row.policy << ',' << row.seed << ',' << num(row.carbon_g) << ','
        << num(row.compute_slot_hours) << ',' << num(row.completion_slot) << ','
        << (row.met_deadline ? "true" : "false") << '\n';
  }
}

}  // namespace carbonsched
