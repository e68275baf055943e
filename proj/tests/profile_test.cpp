#include <gtest/gtest.h>

#include <random>

#include "carbonsched/profile.hpp"

using namespace carbonsched;

namespace {

ThroughputProfile profile(int m, int max, std::map<int, double> samples, int beta = 1) {
  ThroughputProfile p;
  p.min_servers = m;
  p.max_servers = max;
  p.samples = std::move(samples);
  p.beta = beta;
  return p;
}

std::vector<double> values(MarginalCapacityCurve const& c) { return {c.values().begin(), c.values().end()}; }

}  // namespace

TEST(CurveFromProfile, PerfectScalingIsFlat) {
  EXPECT_EQ(values(curve_from_profile(profile(1, 2, {{1, 100}, {2, 200}}))), (std::vector<double>{1.0, 1.0}));
}

TEST(CurveFromProfile, DiminishingExample) {
  auto const c = curve_from_profile(profile(1, 2, {{1, 100}, {2, 170}}));
  EXPECT_EQ(c.marginal(1), 1.0);
  EXPECT_NEAR(c.marginal(2), 0.7, 1e-12);
}

TEST(CurveFromProfile, InterpolatesSkippedLevels) {
  auto const c = curve_from_profile(profile(1, 3, {{1, 100}, {3, 280}}, 2));
  ASSERT_EQ(c.values().size(), 3u);
  EXPECT_EQ(c.marginal(1), 1.0);
  EXPECT_NEAR(c.marginal(2), 0.9, 1e-12);
  EXPECT_NEAR(c.marginal(3), 0.9, 1e-12);
}

TEST(CurveFromProfile, MinimumBlockAboveOne) {
  // Four servers as the minimum block; each extra server adds a quarter of its throughput.
  auto const c = curve_from_profile(profile(4, 6, {{4, 400}, {5, 480}, {6, 540}}));
  EXPECT_EQ(c.marginal(4), 1.0);
  EXPECT_NEAR(c.marginal(5), 0.2, 1e-12);
  EXPECT_NEAR(c.marginal(6), 0.15, 1e-12);
}

TEST(CurveFromProfile, RejectsNonMonotoneMarginals) {
  try {
    curve_from_profile(profile(1, 3, {{1, 100}, {2, 150}, {3, 260}}));
    FAIL();
  } catch (ValidationError const& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(CurveFromProfile, RejectsBadSamples) {
  EXPECT_THROW(curve_from_profile(profile(1, 3, {{1, 100}, {2, 150}})), ValidationError);
  EXPECT_THROW(curve_from_profile(profile(1, 2, {{1, 100}, {2, 90}})), ValidationError);
  EXPECT_THROW(curve_from_profile(profile(1, 2, {{1, 0}, {2, 90}})), ValidationError);
  EXPECT_THROW(curve_from_profile(profile(1, 2, {{1, 100}, {2, 150}, {5, 300}})), ValidationError);
}

TEST(CurveFromProfile, ConcaveThroughputAlwaysYieldsValidCurve) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> decay(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 500; ++trial) {
    int const m = size(rng);
    int const max = m + size(rng) - 1;
    std::map<int, double> samples;
    double th = 50.0 + 100.0 * decay(rng);
    double gain = th / m;
    for (int j = m; j <= max; ++j) {
      samples[j] = th;
      gain *= decay(rng);
      th += gain;
    }
    auto const c = curve_from_profile(profile(m, max, samples));
    EXPECT_EQ(c.values().front(), 1.0);
    EXPECT_TRUE(c.is_monotone());
  }
}

TEST(MarginalCapacityCurve, Invariants) {
  EXPECT_THROW(MarginalCapacityCurve::create(1, 2, {1.0, 1.1}), ValidationError);
  EXPECT_THROW(MarginalCapacityCurve::create(1, 2, {0.9, 0.5}), ValidationError);
  EXPECT_THROW(MarginalCapacityCurve::create(1, 2, {1.0}), ValidationError);
  EXPECT_THROW(MarginalCapacityCurve::create(1, 2, {1.0, 0.0}), ValidationError);
  EXPECT_THROW(MarginalCapacityCurve::create(0, 2, {1.0, 0.5, 0.2}), ValidationError);
  auto const est = MarginalCapacityCurve::create_estimate(1, 3, {1.0, 0.5, 0.6});
  EXPECT_FALSE(est.is_monotone());
  EXPECT_EQ(est.violations(), std::vector<int>{3});
}

TEST(MarginalCapacityCurve, Cumulative) {
  auto const c = MarginalCapacityCurve::create(2, 4, {1.0, 0.4, 0.25});
  EXPECT_EQ(c.cumulative(0), 0.0);
  EXPECT_EQ(c.cumulative(2), 1.0);
  EXPECT_DOUBLE_EQ(c.cumulative(4), 1.65);
}

TEST(PerturbCurve, ZeroErrorIsIdentity) {
  auto const c = synthetic_curve(CurveKind::diminishing, 1, 5, 0.8);
  EXPECT_EQ(perturb_curve(c, 0.0, 123), c);
}

TEST(PerturbCurve, FlatCurveStaysInBandAfterRenormalization) {
  auto const flat = synthetic_curve(CurveKind::linear, 1, 3);
  for (double x : {5.0, 20.0, 50.0}) {
    double const lo = (1 - x / 100) / (1 + x / 100);
    double const hi = (1 + x / 100) / (1 - x / 100);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      auto const p = perturb_curve(flat, x, seed);
      EXPECT_EQ(p.values().front(), 1.0);
      for (double v : p.values()) {
        EXPECT_GE(v, lo - 1e-12);
        EXPECT_LE(v, hi + 1e-12);
      }
    }
  }
}

TEST(PerturbCurve, DeterministicAndFlagsViolations) {
  auto const c = synthetic_curve(CurveKind::linear, 1, 6);
  EXPECT_EQ(perturb_curve(c, 30, 9), perturb_curve(c, 30, 9));
  bool saw_violation = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto const p = perturb_curve(c, 30, seed);
    EXPECT_EQ(p.is_monotone(), p.violations().empty());
    saw_violation |= !p.is_monotone();
  }
  EXPECT_TRUE(saw_violation);
}

TEST(Monotonize, ProjectsToNonIncreasing) {
  auto const est = MarginalCapacityCurve::create_estimate(1, 4, {1.0, 0.5, 0.7, 0.2});
  auto const fixed = monotonize(est);
  EXPECT_TRUE(fixed.is_monotone());
  EXPECT_NEAR(fixed.marginal(2), 0.6, 1e-12);
  EXPECT_NEAR(fixed.marginal(3), 0.6, 1e-12);
  EXPECT_EQ(fixed.marginal(4), 0.2);
  auto const ok = synthetic_curve(CurveKind::diminishing, 1, 4, 0.5);
  EXPECT_EQ(monotonize(ok), ok);
}

TEST(SyntheticCurve, Examples) {
  EXPECT_EQ(values(synthetic_curve(CurveKind::linear, 1, 4)), (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(values(synthetic_curve(CurveKind::diminishing, 1, 2, 0.7)), (std::vector<double>{1, 0.7}));
  EXPECT_EQ(synthetic_curve(CurveKind::diminishing, 1, 5, 1.0), synthetic_curve(CurveKind::linear, 1, 5));
  EXPECT_THROW(synthetic_curve(CurveKind::linear, 2, 1), ValidationError);
  EXPECT_THROW(synthetic_curve(CurveKind::diminishing, 1, 3, 0.0), ValidationError);
}

TEST(ExtrapolateCurve, GeometricContinuation) {
  auto const c = extrapolate_curve(synthetic_curve(CurveKind::diminishing, 1, 2, 0.7), 4);
  ASSERT_EQ(c.values().size(), 4u);
  EXPECT_NEAR(c.marginal(3), 0.49, 1e-12);
  EXPECT_NEAR(c.marginal(4), 0.343, 1e-12);
  EXPECT_EQ(values(extrapolate_curve(synthetic_curve(CurveKind::linear, 1, 2), 3)), (std::vector<double>{1, 1, 1}));
  auto const same = synthetic_curve(CurveKind::diminishing, 1, 3, 0.5);
  EXPECT_EQ(extrapolate_curve(same, 3), same);
}

TEST(PowerModel, RejectsNonPositive) {
  EXPECT_THROW(PowerModel::create(0), ValidationError);
  EXPECT_EQ(PowerModel::create(60).per_server_watts, 60);
}
