#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/scheduler.hpp"

namespace carbonsched {

inline constexpr double kOracleBudget = 1e7;

/// Exhaustive minimum-carbon schedule for small instances.
///
/// Every vector in ({0} u [m, M])^n is enumerated. A vector qualifies when it covers W and
/// dropping its prorated increment (the least efficient top increment) would not, so that
/// the fractional charge is well defined. The cheapest qualifying vector under prorated
/// accounting wins; earlier enumeration order breaks ties.
inline Schedule brute_force_optimal(JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& trace) {
  job.validate();
  double const required = work_requirement(job, curve);
  int const n = job.window_slots();
  int const m = job.min_servers;
  int const M = job.max_servers;
  int const choices = M - m + 2;
  if (std::pow(static_cast<double>(choices), n) > kOracleBudget) {
    throw BudgetError("oracle enumeration of " + std::to_string(choices) + "^" + std::to_string(n) +
                      " vectors exceeds budget");
  }
  detail::check_covers(trace, job.arrival_slot, job.completion_slot);

  Schedule best{job.arrival_slot, std::vector<int>(static_cast<std::size_t>(n), 0), "oracle", std::nullopt, PartialKind::top_increment};
  if (work_reached(0.0, required)) return best;

  double best_carbon = std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<int> digit(static_cast<std::size_t>(n), 0);
  Schedule candidate{job.arrival_slot, std::vector<int>(static_cast<std::size_t>(n), 0), "oracle", std::nullopt, PartialKind::top_increment};
  while (true) {
    for (std::size_t i = 0; i < digit.size(); ++i) candidate.allocations[i] = digit[i] == 0 ? 0 : m + digit[i] - 1;

    auto const profile = plan_profile(candidate, curve, trace, required);
    if (work_reached(profile.total_work, required) && profile.partial_slot) {
      int const s = candidate.allocations[*profile.partial_slot];
      double const increment = s == m ? curve.cumulative(m) : curve.marginal(s);
      if (!work_reached(profile.total_work - increment, required)) {
        auto const metrics = planned_carbon(candidate, curve, trace, required, std::nullopt, AccountingMode::prorated);
        if (metrics.carbon < best_carbon) {
          best_carbon = metrics.carbon;
          best.allocations = candidate.allocations;
          found = true;
        }
      }
    }

    std::size_t pos = 0;
    while (pos < digit.size() && ++digit[pos] == choices) digit[pos++] = 0;
    if (pos == digit.size()) break;
  }
  if (!found) {
    double const capacity = n * curve.cumulative(M);
    throw InfeasibleError("no allocation vector covers the work", capacity, required);
  }
  return best;
}

/// Carbon needed to redo work MC_j elsewhere when increment (i, j) is swapped for (k, l).
///
/// When MC_l >= MC_j the work fits in part of slot k. Otherwise slot k runs fully and the
/// shortfall MC_j - MC_l stays in slot i for the matching fraction of the slot.
inline double exchange_gamma(double c_i, double c_k, double mc_j, double mc_l) {
  if (!(c_i > 0.0 && c_k > 0.0 && mc_j > 0.0 && mc_l > 0.0)) {
    throw ValidationError("exchange inputs must be positive", {"c_i", "c_k", "mc_j", "mc_l"});
  }
  if (mc_l >= mc_j) return c_k * mc_j / mc_l;
  return c_k + ((mc_j - mc_l) / mc_j) * c_i;
}

}  // namespace carbonsched
