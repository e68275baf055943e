#include <gtest/gtest.h>

#include <sstream>

#include "carbonsched/sweep.hpp"
#include "test_support.hpp"

using namespace carbonsched;

namespace {

JobSpec day_job() {
  JobSpec job;
  job.base_length_slots = 6;
  job.completion_slot = 12;
  job.max_servers = 4;
  return job;
}

double cell_mean(SweepTable const& t, double value, std::string const& policy) {
  for (auto const& c : t.cells) {
    if (c.axis_value == value && c.policy == policy) return c.mean_carbon_g;
  }
  ADD_FAILURE() << "no cell " << value << " " << policy;
  return 0;
}

double cell_savings(SweepTable const& t, double value, std::string const& policy) {
  for (auto const& c : t.cells) {
    if (c.axis_value == value && c.policy == policy) return c.mean_savings_pct;
  }
  ADD_FAILURE() << "no cell " << value << " " << policy;
  return 0;
}

}  // namespace

TEST(SweepStartTimes, ConstantTraceSavesNothing) {
  auto const trace = CarbonTrace::from_values(std::vector<double>(72, 250.0));
  auto const curve = synthetic_curve(CurveKind::diminishing, 1, 4, 0.8);
  auto const t = sweep_start_times(day_job(), curve, trace, {Policy::greedy(), Policy::sr_deadline()}, {}, 6);
  ASSERT_FALSE(t.rows.empty());
  for (auto const& row : t.rows) EXPECT_NEAR(row.savings_pct, 0.0, 1e-9) << row.policy;
  auto const flat = sweep_start_times(day_job(), synthetic_curve(CurveKind::linear, 1, 4), trace,
                                      {Policy::greedy()}, {}, 6);
  for (auto const& row : flat.rows) EXPECT_NEAR(row.savings_pct, 0.0, 1e-9);
}

TEST(SweepStartTimes, RowCountFollowsStride) {
  auto const trace = carbonsched::testkit::diurnal_trace(100, 300, 100, 10, 1);
  auto const curve = synthetic_curve(CurveKind::linear, 1, 4);
  for (int stride : {1, 5, 7, 24}) {
    auto const t = sweep_start_times(day_job(), curve, trace, {Policy::greedy()}, {}, stride);
    std::size_t const starts = (100 - 12) / stride + 1;
    EXPECT_EQ(t.rows.size(), 2 * starts);
    EXPECT_EQ(static_cast<std::size_t>(t.omitted), (100 + stride - 1) / stride - starts);
  }
  auto const single = sweep_start_times(day_job(), curve, trace, {Policy::greedy()}, {}, 100);
  EXPECT_EQ(single.rows.size(), 2u);
  EXPECT_THROW(sweep_start_times(day_job(), curve, trace, {Policy::greedy()}, {}, 0), ValidationError);
}

TEST(SweepParameter, CompletionTimeAtLengthMatchesAgnostic) {
  auto const trace = carbonsched::testkit::diurnal_trace(48, 300, 100, 10, 2);
  auto const curve = synthetic_curve(CurveKind::diminishing, 1, 4, 0.8);
  auto const t = sweep_parameter(day_job(), curve, trace, SweepAxis::completion_time, {6, 9, 12, 18},
                                 {Policy::sr_deadline(), Policy::greedy()}, {});
  EXPECT_EQ(cell_mean(t, 6, "sr_deadline"), cell_mean(t, 6, "agnostic"));
  double prev = std::numeric_limits<double>::infinity();
  for (double v : {6.0, 9.0, 12.0, 18.0}) {
    double const g = cell_mean(t, v, "greedy");
    EXPECT_LE(g, prev + 1e-9);
    prev = g;
  }
}

TEST(SweepParameter, InfeasibleCellsAreReported) {
  auto const trace = carbonsched::testkit::diurnal_trace(48, 300, 100, 10, 2);
  auto const t = sweep_parameter(day_job(), synthetic_curve(CurveKind::linear, 1, 4), trace,
                                 SweepAxis::completion_time, {3, 12}, {Policy::greedy()}, {});
  int infeasible = 0;
  for (auto const& row : t.rows) {
    if (row.axis_value == 3) {
      EXPECT_TRUE(row.infeasible);
      ++infeasible;
    }
  }
  EXPECT_EQ(infeasible, 2);
  std::ostringstream csv;
  write_sweep_csv(csv, t);
  EXPECT_NE(csv.str().find("3,greedy,42,nan,nan,nan,false"), std::string::npos);
}

TEST(SweepParameter, ClusterSizeKeepsSuspendResumeSavings) {
  auto const trace = carbonsched::testkit::diurnal_trace(48, 300, 100, 10, 4);
  auto const curve = synthetic_curve(CurveKind::diminishing, 1, 4, 0.8);
  auto const t = sweep_parameter(day_job(), curve, trace, SweepAxis::cluster_size, {1, 2, 4, 8},
                                 {Policy::sr_deadline(), Policy::greedy()}, {});
  double const base = cell_savings(t, 1, "sr_deadline");
  for (double v : {2.0, 4.0, 8.0}) EXPECT_NEAR(cell_savings(t, v, "sr_deadline"), base, 1e-9);
}

TEST(SweepParameter, GreedyBeatsEveryStaticScale) {
  auto const trace = carbonsched::testkit::diurnal_trace(48, 300, 100, 10, 5);
  auto const curve = synthetic_curve(CurveKind::diminishing, 1, 4, 0.7);
  auto const t = sweep_parameter(day_job(), curve, trace, SweepAxis::scale_factor, {1, 2, 3, 4},
                                 {Policy::static_scale(1), Policy::greedy()}, {});
  for (double k : {1.0, 2.0, 3.0, 4.0}) {
    EXPECT_LE(cell_mean(t, k, "greedy"), cell_mean(t, k, "static:" + std::to_string(static_cast<int>(k))) + 1e-9);
  }
}

TEST(SweepParameter, JobLengthKeepsDeadlineRatio) {
  auto const s = apply_axis(SweepAxis::job_length, 10, day_job(), synthetic_curve(CurveKind::linear, 1, 4), {}, {});
  EXPECT_EQ(s.job.base_length_slots, 10);
  EXPECT_EQ(s.job.completion_slot, 20);
}

TEST(SweepParameter, SeedsAndSummary) {
  auto const trace = carbonsched::testkit::diurnal_trace(48, 300, 100, 10, 6);
  SimConfig cfg;
  cfg.seed = 100;
  auto const t = sweep_parameter(day_job(), synthetic_curve(CurveKind::linear, 1, 4), trace,
                                 SweepAxis::forecast_error, {0, 30}, {Policy::greedy()}, cfg, 5);
  EXPECT_EQ(t.rows.size(), 2u * 2u * 5u);
  EXPECT_EQ(t.rows.front().seed, 100u);
  EXPECT_EQ(t.rows[4].seed, 104u);
  EXPECT_EQ(t.cells.size(), 4u);
  for (auto const& c : t.cells) {
    EXPECT_EQ(c.runs, 5);
    EXPECT_GE(c.p95_carbon_g, c.mean_carbon_g - 1e-9);
  }
}

TEST(SweepCsv, Header) {
  std::ostringstream out;
  write_sweep_csv(out, SweepTable{});
  EXPECT_EQ(out.str(), std::string(kSweepCsvHeader) + "\n");
}

TEST(SweepAxisNames, RoundTrip) {
  for (auto axis : {SweepAxis::start_time, SweepAxis::completion_time, SweepAxis::job_length,
                    SweepAxis::cluster_size, SweepAxis::scale_factor, SweepAxis::denial, SweepAxis::forecast_error,
                    SweepAxis::profile_error}) {
    EXPECT_EQ(parse_axis(axis_name(axis)), axis);
  }
  EXPECT_THROW(parse_axis("temperature"), ValidationError);
}

TEST(Statistics, PearsonAndPercentile) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
  EXPECT_EQ(percentile_of({5, 1, 3, 2, 4}, 95), 5);
  EXPECT_EQ(percentile_of({5, 1, 3, 2, 4}, 40), 2);
  EXPECT_DOUBLE_EQ(savings_pct(40, 110), (1 - 40.0 / 110.0) * 100);
}
