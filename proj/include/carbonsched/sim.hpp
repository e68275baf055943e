#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/profile.hpp"
#include "carbonsched/random.hpp"
#include "carbonsched/scheduler.hpp"
#include "carbonsched/trace.hpp"

namespace carbonsched {

inline constexpr double kDefaultRecomputeThreshold = 0.05;
inline constexpr double kMeasuredScalingOverheadSeconds = 30.0;
inline constexpr std::uint64_t kDefaultSeed = 42;

struct SimConfig {
  double forecast_error_pct = 0.0;
  double profile_error_pct = 0.0;
  double denial_probability = 0.0;  // per scale-up server per slot
  double recompute_threshold = kDefaultRecomputeThreshold;
  bool recompute = true;            // false: error-agnostic execution of the initial plan
  AccountingMode accounting = AccountingMode::prorated;
  double scaling_overhead_s = 0.0;  // dead time per allocation change
  std::uint64_t seed = kDefaultSeed;

  void validate() const {
    if (!(forecast_error_pct >= 0.0)) throw ValidationError("forecast error must be >= 0", {"forecast_error_pct"});
    if (!(profile_error_pct >= 0.0)) throw ValidationError("profile error must be >= 0", {"profile_error_pct"});
    if (!(denial_probability >= 0.0 && denial_probability <= 1.0)) {
      throw ValidationError("denial probability must be in [0, 1]", {"denial_probability"});
    }
    if (!(recompute_threshold >= 0.0)) throw ValidationError("recompute threshold must be >= 0", {"recompute_threshold"});
    if (!(scaling_overhead_s >= 0.0)) throw ValidationError("scaling overhead must be >= 0", {"scaling_overhead_s"});
  }
};

struct SlotRecord {
  int slot = 0;
  int requested_servers = 0;
  int granted_servers = 0;
  double intensity_actual = 0.0;
  double intensity_forecast = 0.0;
  double work_done = 0.0;
  double carbon = 0.0;
  bool recomputed = false;
};

struct SimResult {
  double carbon_g = 0.0;
  double compute_slot_hours = 0.0;
  double completion_slot = 0.0;
  bool met_deadline = false;
  double work_done = 0.0;
  double work_required = 0.0;
  int recomputations = 0;
  Schedule initial_plan;
  std::vector<SlotRecord> timeline;
};

namespace detail {

/// Plan used when the believed inputs say the job cannot finish: run at the policy's
/// largest scale in every remaining slot.
inline Schedule best_effort_plan(Policy const& policy, JobSpec const& job, int from, int to) {
  int const scale = policy.kind == Policy::Kind::greedy         ? job.max_servers
                    : policy.kind == Policy::Kind::static_scale ? policy.scale
                                                                : job.min_servers;
  Schedule out{from, std::vector<int>(static_cast<std::size_t>(std::max(to - from, 0)), scale),
               policy.name() + ":best_effort", std::nullopt, PartialKind::whole_allocation};
  return out;
}

/// Believed marginals replaced by the true ones at every level whose throughput and the
/// level below it have both been observed. Level m is always known (normalized to 1).
inline MarginalCapacityCurve corrected_curve(MarginalCapacityCurve const& believed, MarginalCapacityCurve const& truth,
                                             std::vector<bool> const& visited) {
  int const m = believed.min_servers();
  std::vector<double> values(believed.values().begin(), believed.values().end());
  for (int j = m + 1; j <= believed.max_servers(); ++j) {
    auto const idx = static_cast<std::size_t>(j - m);
    bool const below_known = j - 1 == m || visited[idx - 1];
    if (visited[idx] && below_known) values[idx] = truth.marginal(j);
  }
  return MarginalCapacityCurve::create_estimate(m, believed.max_servers(), std::move(values));
}

inline double relative_gap(double realized, double believed) noexcept {
  if (believed == realized) return 0.0;
  if (believed <= 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(realized - believed) / believed;
}

}  // namespace detail

/// Executes `policy` slot by slot against the true trace and curve.
///
/// The plan is built from believed inputs: a perturbed forecast and a perturbed curve.
/// Each slot requests the planned allocation; servers beyond the current grant are denied
/// independently with `denial_probability` (the opening m-block never is). Work follows the
/// true curve, carbon the true intensity. After each slot, if cumulative work or carbon
/// drifts from the plan by more than `recompute_threshold`, or the plan can no longer
/// cover the remaining work, deadline-aware policies replan from the next slot with a
/// freshly drawn forecast and a curve corrected at the levels observed so far.
inline SimResult simulate(JobSpec const& job, MarginalCapacityCurve const& true_curve, CarbonTrace const& true_trace,
                          Policy const& policy, SimConfig const& config) {
  job.validate();
  config.validate();
  double const required = work_requirement(job, true_curve);
  detail::check_covers(true_trace, job.arrival_slot, job.completion_slot);

  int const m = job.min_servers;
  auto forecast = perturb_forecast(true_trace, config.forecast_error_pct, derive_seed(config.seed, seed_stream::forecast));
  auto believed = perturb_curve(true_curve, config.profile_error_pct, derive_seed(config.seed, seed_stream::curve));
  Rng denial_rng{derive_seed(config.seed, seed_stream::denial)};
  std::bernoulli_distribution denied(config.denial_probability);

  SimResult result;
  result.work_required = required;

  Schedule plan;
  try {
    plan = plan_policy(policy, job, believed, forecast, job.arrival_slot, required);
  } catch (InfeasibleError const&) {
    // Distinguish a truly infeasible job from a pessimistic belief.
    (void)plan_policy(policy, job, true_curve, true_trace, job.arrival_slot, required);
    plan = detail::best_effort_plan(policy, job, job.arrival_slot, job.completion_slot);
  }
  result.initial_plan = plan;

  double const energy = energy_per_server_slot(job.power, true_trace.slot_hours());
  double const slot_seconds = static_cast<double>(true_trace.slot_duration().count());
  double const overhead_fraction = std::min(1.0, config.scaling_overhead_s / slot_seconds);
  int const horizon = policy.deadline_aware() ? job.completion_slot : static_cast<int>(true_trace.size());

  auto profile = plan_profile(plan, believed, forecast, required);
  double believed_work = 0.0;
  double believed_carbon = 0.0;
  int prev_grant = 0;
  std::vector<bool> visited(static_cast<std::size_t>(job.max_servers - m + 1), false);
  visited[0] = true;

  for (int slot = job.arrival_slot; slot < horizon; ++slot) {
    auto const slot_idx = static_cast<std::size_t>(slot);
    SlotRecord record;
    record.slot = slot;
    record.intensity_actual = true_trace[slot_idx];
    record.intensity_forecast = forecast[slot_idx];
    record.requested_servers = plan.allocation_at(slot);

    int granted = record.requested_servers;
    if (granted > prev_grant) {
      granted = std::max(prev_grant, m);
      for (int extra = granted + 1; extra <= record.requested_servers; ++extra) {
        if (config.denial_probability <= 0.0 || !denied(denial_rng)) ++granted;
      }
    }
    record.granted_servers = granted;

    std::optional<std::size_t> const plan_idx =
        slot >= plan.window_start && slot < plan.window_end()
            ? std::optional<std::size_t>(static_cast<std::size_t>(slot - plan.window_start))
            : std::nullopt;
    bool const partial =
        plan_idx && profile.partial_slot == plan_idx && granted == record.requested_servers && profile.fraction < 1.0;

    double capacity = 0.0;
    double charged = 0.0;
    double active = 1.0;
    if (granted > 0) {
      if (partial) {
        capacity = partial_work(true_curve, granted, profile.partial_kind, profile.fraction);
        charged = partial_charge(granted, m, profile.partial_kind, profile.fraction);
        if (profile.partial_kind == PartialKind::whole_allocation || granted == m) active = profile.fraction;
      } else {
        capacity = true_curve.cumulative(granted);
        charged = granted;
      }
      visited[static_cast<std::size_t>(granted - m)] = true;
    }
    double const dead = granted > 0 && granted != prev_grant ? overhead_fraction : 0.0;
    capacity *= 1.0 - dead;

    double const remaining = required - result.work_done;
    double slot_work = capacity;
    double run_share = 1.0;
    if (capacity > remaining && !work_reached(remaining, capacity)) {
      run_share = remaining / capacity;
      slot_work = remaining;
      charged *= run_share;
    }
    if (config.accounting == AccountingMode::whole_slot) charged = granted;

    record.work_done = slot_work;
    record.carbon = slot_carbon(record.intensity_actual, charged, energy);
    result.carbon_g += record.carbon;
    result.compute_slot_hours += charged * true_trace.slot_hours();
    result.work_done += slot_work;
    if (slot_work > 0.0) {
      result.completion_slot = static_cast<double>(slot) + elapsed_fraction(dead, active * run_share);
    }
    prev_grant = granted;

    if (plan_idx) {
      double const planned_charge =
          config.accounting == AccountingMode::prorated ? profile.charged[*plan_idx] : plan.allocations[*plan_idx];
      believed_work += profile.work[*plan_idx];
      believed_carbon += slot_carbon(record.intensity_forecast, planned_charge, energy);
    }

    bool const done = work_reached(result.work_done, required);
    if (!done && config.recompute && policy.deadline_aware() && slot + 1 < horizon) {
      double const deviation = std::max(detail::relative_gap(result.work_done, believed_work),
                                        detail::relative_gap(result.carbon_g, believed_carbon));
      double future_work = 0.0;
      for (int s = slot + 1; s < plan.window_end(); ++s) {
        if (s >= plan.window_start) future_work += profile.work[static_cast<std::size_t>(s - plan.window_start)];
      }
      bool const plan_short = !work_reached(future_work, required - result.work_done);
      if (deviation > config.recompute_threshold || plan_short) {
        ++result.recomputations;
        record.recomputed = true;
        forecast = refresh_forecast(true_trace, static_cast<std::size_t>(slot + 1), config.forecast_error_pct,
                                    derive_seed(derive_seed(config.seed, seed_stream::refresh),
                                                static_cast<std::uint64_t>(result.recomputations)));
        believed = detail::corrected_curve(believed, true_curve, visited);
        double const residual = required - result.work_done;
        try {
          plan = plan_policy(policy, job, believed, forecast, slot + 1, residual);
        } catch (InfeasibleError const&) {
          plan = detail::best_effort_plan(policy, job, slot + 1, job.completion_slot);
        }
        profile = plan_profile(plan, believed, forecast, residual);
        believed_work = result.work_done;
        believed_carbon = result.carbon_g;
      }
    }
    result.timeline.push_back(record);
    if (done) break;
  }

  result.met_deadline = work_reached(result.work_done, required) &&
                        result.completion_slot <= static_cast<double>(job.completion_slot) + 1e-9;
  if (work_reached(0.0, required)) result.completion_slot = job.arrival_slot;
  return result;
}

}  // namespace carbonsched
