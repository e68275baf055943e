#include <gtest/gtest.h>

#include <random>

#include "carbonsched/optimality.hpp"
#include "test_support.hpp"

using namespace carbonsched;

namespace {

double prorated(Schedule const& s, JobSpec const& job, MarginalCapacityCurve const& curve, CarbonTrace const& trace) {
  return planned_carbon(s, curve, trace, work_requirement(job, curve), std::nullopt, AccountingMode::prorated).carbon;
}

}  // namespace

TEST(BruteForceOptimal, GoldenDiminishingMatchesGreedy) {
  auto const job = testkit::golden_job();
  auto const curve = testkit::diminishing_curve();
  auto const best = brute_force_optimal(job, curve, testkit::golden_trace());
  EXPECT_NEAR(prorated(best, job, curve, testkit::golden_trace()), 26.0, 1e-12);
  EXPECT_EQ(best.allocations, (std::vector<int>{2, 0, 1}));
}

TEST(BruteForceOptimal, SingleSlot) {
  JobSpec job;
  job.base_length_slots = 1;
  job.completion_slot = 1;
  auto const curve = MarginalCapacityCurve::create(1, 1, {1.0});
  EXPECT_EQ(brute_force_optimal(job, curve, CarbonTrace::from_values({42})).allocations, std::vector<int>{1});
}

TEST(BruteForceOptimal, RefusesLargeInstances) {
  JobSpec job;
  job.base_length_slots = 5;
  job.completion_slot = 30;
  job.max_servers = 3;
  auto const curve = synthetic_curve(CurveKind::linear, 1, 3);
  EXPECT_THROW(brute_force_optimal(job, curve, CarbonTrace::from_values(std::vector<double>(30, 1.0))), BudgetError);
}

TEST(BruteForceOptimal, MatchesGreedyOnRandomInstances) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    auto const in = testkit::random_instance(rng, 2, 6, 1, 3);
    double const g = prorated(greedy_schedule(in.job, in.curve, in.trace), in.job, in.curve, in.trace);
    double const o = prorated(brute_force_optimal(in.job, in.curve, in.trace), in.job, in.curve, in.trace);
    EXPECT_NEAR(g, o, 1e-9 * std::max(1.0, o));
  }
}

TEST(ExchangeGamma, Examples) {
  EXPECT_DOUBLE_EQ(exchange_gamma(100, 10, 1, 1), 10.0);
  EXPECT_DOUBLE_EQ(exchange_gamma(20, 10, 1, 0.7), 16.0);
  EXPECT_THROW(exchange_gamma(0, 10, 1, 1), ValidationError);
}

TEST(ExchangeGamma, BeatsOriginalWhenSwapIsMoreEfficient) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> c(1.0, 1000.0), mc(1e-3, 1.0);
  int checked = 0;
  while (checked < 2000) {
    double const ci = c(rng), ck = c(rng), j = mc(rng), l = mc(rng);
    if (!(l / ck > j / ci)) continue;
    EXPECT_LT(exchange_gamma(ci, ck, j, l), ci);
    ++checked;
  }
}
