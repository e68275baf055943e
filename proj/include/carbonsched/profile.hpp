#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/random.hpp"

namespace carbonsched {

inline constexpr double kMarginalFloor = 1e-6;
inline constexpr double kMonotoneTolerance = 1e-12;

/// Measured throughput (work units per slot) at a subset of server counts.
struct ThroughputProfile {
  std::map<int, double> samples;
  int min_servers = 1;
  int max_servers = 1;
  double alpha_minutes = 0.0;  // profiling time per level, metadata only
  int beta = 1;                // stride between profiled levels
};

struct PowerModel {
  double per_server_watts = 1.0;

  static PowerModel create(double watts) {
    if (!(watts > 0.0) || !std::isfinite(watts)) throw ValidationError("power must be > 0", {"power_watts"});
    return PowerModel{watts};
  }
};

/// Normalized marginal work per slot for server counts m..M.
///
/// The first value is the aggregate capacity of the minimum allocation of m servers and is
/// always exactly 1; later entries are the marginal gain of the j-th server in the same unit.
/// Curves built with `create` are non-increasing. `create_estimate` admits a non-monotone
/// belief (e.g. a perturbed profile) and records that in `is_monotone`.
class MarginalCapacityCurve {
 public:
  static MarginalCapacityCurve create(int min_servers, int max_servers, std::vector<double> values) {
    auto curve = create_estimate(min_servers, max_servers, std::move(values));
    if (!curve.monotone_) {
      throw ValidationError("marginal capacity curve is not non-increasing at server counts " +
                                describe(curve.violations()),
                            {"mc"});
    }
    return curve;
  }

  static MarginalCapacityCurve create_estimate(int min_servers, int max_servers, std::vector<double> values) {
    if (min_servers < 1) throw ValidationError("m must be >= 1", {"m"});
    if (max_servers < min_servers) throw ValidationError("M must be >= m", {"M"});
    if (values.size() != static_cast<std::size_t>(max_servers - min_servers + 1)) {
      throw ValidationError("curve needs exactly M - m + 1 values", {"mc"});
    }
    for (double v : values) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("marginal capacities must be finite and > 0", {"mc"});
    }
    if (std::abs(values.front() - 1.0) > 1e-9) {
      throw ValidationError("first marginal capacity (aggregate at m servers) must be 1", {"mc"});
    }
    values.front() = 1.0;
    return MarginalCapacityCurve(min_servers, max_servers, std::move(values));
  }

  int min_servers() const noexcept { return m_; }
  int max_servers() const noexcept { return M_; }
  std::span<double const> values() const noexcept { return values_; }
  bool is_monotone() const noexcept { return monotone_; }

  /// Marginal capacity of the j-th server (j in [m, M]); for j == m, the whole minimum block.
  double marginal(int j) const { return values_.at(static_cast<std::size_t>(j - m_)); }

  /// Work per slot with k servers allocated; 0 when suspended.
  double cumulative(int k) const {
    if (k <= 0) return 0.0;
    double total = 0.0;
    for (int j = m_; j <= k; ++j) total += marginal(j);
    return total;
  }

  /// Server counts j where MC_j < MC_{j+1}.
  std::vector<int> violations() const {
    std::vector<int> bad;
    for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
      if (values_[i + 1] > values_[i] + kMonotoneTolerance) bad.push_back(m_ + static_cast<int>(i) + 1);
    }
    return bad;
  }

  friend bool operator==(MarginalCapacityCurve const&, MarginalCapacityCurve const&) = default;

 private:
  MarginalCapacityCurve(int m, int M, std::vector<double> values)
      : m_(m), M_(M), values_(std::move(values)) {
    monotone_ = violations().empty();
  }

  static std::string describe(std::vector<int> const& idx) {
    std::string s;
    for (int j : idx) s += (s.empty() ? "" : ", ") + std::to_string(j);
    return s;
  }

  int m_;
  int M_;
  std::vector<double> values_;
  bool monotone_ = true;
};

/// Fills unprofiled levels by linear interpolation, then normalizes so that the m-server
/// baseline performs one unit of work per slot.
inline MarginalCapacityCurve curve_from_profile(ThroughputProfile const& profile) {
  int const m = profile.min_servers;
  int const M = profile.max_servers;
  if (m < 1) throw ValidationError("m must be >= 1", {"m"});
  if (M < m) throw ValidationError("M must be >= m", {"M"});
  if (!profile.samples.contains(m) || !profile.samples.contains(M)) {
    throw ValidationError("throughput samples must include m and M", {"throughput"});
  }
  double prev = 0.0;
  for (auto const& [j, th] : profile.samples) {
    if (j < m || j > M) throw ValidationError("sample at " + std::to_string(j) + " outside [m, M]", {"throughput"});
    if (!(th > 0.0) || !std::isfinite(th)) throw ValidationError("throughput must be > 0", {"throughput"});
    if (th < prev) throw ValidationError("throughput must be non-decreasing in server count", {"throughput"});
    prev = th;
  }

  std::vector<double> throughput(static_cast<std::size_t>(M - m + 1));
  auto hi = profile.samples.begin();
  for (int j = m; j <= M; ++j) {
    while (hi->first < j) ++hi;
    if (hi->first == j) {
      throughput[static_cast<std::size_t>(j - m)] = hi->second;
      continue;
    }
    auto const lo = std::prev(hi);
    double const frac = static_cast<double>(j - lo->first) / static_cast<double>(hi->first - lo->first);
    throughput[static_cast<std::size_t>(j - m)] = lo->second + frac * (hi->second - lo->second);
  }

  double const base = throughput.front();
  std::vector<double> mc(throughput.size());
  mc.front() = 1.0;
  for (std::size_t i = 1; i < throughput.size(); ++i) {
    // Zero marginals (flat throughput) get the floor so the curve stays strictly positive.
    mc[i] = std::max((throughput[i] - throughput[i - 1]) / base, kMarginalFloor);
  }
  return MarginalCapacityCurve::create(m, M, std::move(mc));
}

/// Scales each value by U[1 - X/100, 1 + X/100], renormalizes to a leading 1 and floors at
/// `kMarginalFloor`. Monotonicity is not restored.
inline MarginalCapacityCurve perturb_curve(MarginalCapacityCurve const& curve, double error_pct, std::uint64_t seed) {
  if (!(error_pct >= 0.0)) throw ValidationError("profile error must be >= 0", {"profile_error_pct"});
  if (error_pct == 0.0) return curve;
  Rng rng{seed};
  double const bound = error_pct / 100.0;
  std::uniform_real_distribution<double> noise(-bound, bound);
  std::vector<double> values(curve.values().begin(), curve.values().end());
  for (double& v : values) v *= 1.0 + noise(rng);
  double const lead = values.front();
  for (double& v : values) v = std::max(v / lead, kMarginalFloor);
  values.front() = 1.0;
  return MarginalCapacityCurve::create_estimate(curve.min_servers(), curve.max_servers(), std::move(values));
}

/// Isotonic (non-increasing) least-squares projection via pool-adjacent-violators, then
/// renormalized to a leading 1. Never applied implicitly.
inline MarginalCapacityCurve monotonize(MarginalCapacityCurve const& curve) {
  struct Block {
    double sum;
    std::size_t count;
    double mean() const { return sum / static_cast<double>(count); }
  };
  std::vector<Block> blocks;
  for (double v : curve.values()) {
    blocks.push_back({v, 1});
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() < blocks.back().mean()) {
      auto const last = blocks.back();
      blocks.pop_back();
      blocks.back().sum += last.sum;
      blocks.back().count += last.count;
    }
  }
  std::vector<double> values;
  for (auto const& b : blocks) values.insert(values.end(), b.count, b.mean());
  double const lead = values.front();
  for (double& v : values) v = std::max(v / lead, kMarginalFloor);
  values.front() = 1.0;
  return MarginalCapacityCurve::create(curve.min_servers(), curve.max_servers(), std::move(values));
}

enum class CurveKind { linear, diminishing };

inline MarginalCapacityCurve synthetic_curve(CurveKind kind, int min_servers, int max_servers, double decay = 1.0) {
  if (min_servers < 1 || max_servers < min_servers) throw ValidationError("require 1 <= m <= M", {"m", "M"});
  if (kind == CurveKind::diminishing && !(decay > 0.0 && decay <= 1.0)) {
    throw ValidationError("decay must be in (0, 1]", {"decay"});
  }
  std::vector<double> values(static_cast<std::size_t>(max_servers - min_servers + 1), 1.0);
  if (kind == CurveKind::diminishing) {
    for (std::size_t k = 1; k < values.size(); ++k) values[k] = values[k - 1] * decay;
  }
  return MarginalCapacityCurve::create(min_servers, max_servers, std::move(values));
}

/// Extends a curve to `new_max` servers by continuing the ratio of its last two marginals.
/// Flat and single-value curves extend flat.
inline MarginalCapacityCurve extrapolate_curve(MarginalCapacityCurve const& curve, int new_max) {
  if (new_max < curve.max_servers()) throw ValidationError("new M must be >= current M", {"M"});
  std::vector<double> values(curve.values().begin(), curve.values().end());
  double ratio = 1.0;
  if (values.size() >= 2) ratio = std::min(1.0, values.back() / values[values.size() - 2]);
  while (values.size() < static_cast<std::size_t>(new_max - curve.min_servers() + 1)) {
    values.push_back(std::max(values.back() * ratio, kMarginalFloor));
  }
  return MarginalCapacityCurve::create_estimate(curve.min_servers(), new_max, std::move(values));
}

}  // namespace carbonsched
