#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "carbonsched/errors.hpp"
#include "carbonsched/random.hpp"

namespace carbonsched {

using TimePoint = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline constexpr Seconds kDefaultSlotDuration{3600};
inline constexpr std::string_view kTraceHeader = "timestamp,carbon_intensity_avg";

/// Grid carbon intensity (gCO2eq/kWh) sampled once per fixed-length slot for one region.
///
/// Immutable after construction; `create` enforces the invariants.
class CarbonTrace {
 public:
  static CarbonTrace create(std::string region, TimePoint start, Seconds slot_duration,
                            std::vector<double> intensities) {
    if (intensities.empty()) throw ValidationError("empty trace", {"intensities"});
    if (slot_duration.count() <= 0) throw ValidationError("slot duration must be positive", {"slot_duration"});
    for (std::size_t i = 0; i < intensities.size(); ++i) {
      double const v = intensities[i];
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("intensity at slot " + std::to_string(i) + " must be finite and >= 0",
                              {"intensities"});
      }
    }
    return CarbonTrace(std::move(region), start, slot_duration, std::move(intensities));
  }

  /// Convenience for tests and synthetic traces: epoch start, hourly slots.
  static CarbonTrace from_values(std::vector<double> intensities, std::string region = "synthetic") {
    return create(std::move(region), TimePoint{}, kDefaultSlotDuration, std::move(intensities));
  }

  std::string const& region() const noexcept { return region_; }
  TimePoint start() const noexcept { return start_; }
  Seconds slot_duration() const noexcept { return slot_duration_; }
  double slot_hours() const noexcept { return static_cast<double>(slot_duration_.count()) / 3600.0; }
  std::span<double const> intensities() const noexcept { return intensities_; }
  std::size_t size() const noexcept { return intensities_.size(); }
  double operator[](std::size_t slot) const { return intensities_.at(slot); }

  TimePoint slot_start(std::size_t slot) const noexcept {
    return start_ + slot_duration_ * static_cast<std::int64_t>(slot);
  }

  friend bool operator==(CarbonTrace const&, CarbonTrace const&) = default;

 private:
  CarbonTrace(std::string region, TimePoint start, Seconds slot_duration, std::vector<double> intensities)
      : region_(std::move(region)),
        start_(start),
        slot_duration_(slot_duration),
        intensities_(std::move(intensities)) {}

  std::string region_;
  TimePoint start_;
  Seconds slot_duration_;
  std::vector<double> intensities_;
};

struct RegionStats {
  double mean = 0.0;
  double std_dev = 0.0;
  double coefficient_of_variation = 0.0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  auto const first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto const last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool parse_int(std::string_view s, int& out) {
  auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[64];
  auto const [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ec == std::errc{} ? ptr : buf);
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM[:SS[.fff]]` with an optional `Z` or `+00:00` suffix.
/// A space is accepted in place of `T`. Only UTC is accepted.
inline bool parse_timestamp(std::string_view text, TimePoint& out) {
  using namespace std::chrono;
  text = detail::trim(text);
  if (text.ends_with('Z') || text.ends_with('z')) {
    text.remove_suffix(1);
  } else if (text.ends_with("+00:00")) {
    text.remove_suffix(6);
  }
  if (text.size() < 16 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':') {
    return false;
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!detail::parse_int(text.substr(0, 4), y) || !detail::parse_int(text.substr(5, 2), mo) ||
      !detail::parse_int(text.substr(8, 2), d) || !detail::parse_int(text.substr(11, 2), h) ||
      !detail::parse_int(text.substr(14, 2), mi)) {
    return false;
  }
  if (text.size() > 16) {
    if (text[16] != ':' || text.size() < 19 || !detail::parse_int(text.substr(17, 2), s)) return false;
    auto frac = text.substr(19);
    if (!frac.empty()) {
      if (frac.front() != '.') return false;
      frac.remove_prefix(1);
      if (frac.empty() || frac.find_first_not_of("0123456789") != std::string_view::npos) return false;
    }
  }
  year_month_day const ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60 || h < 0 || mi < 0 || s < 0) return false;
  out = sys_days{ymd} + hours{h} + minutes{mi} + std::chrono::seconds{s};
  return true;
}

inline std::string format_timestamp(TimePoint tp) {
  using namespace std::chrono;
  auto const day_point = floor<days>(tp);
  year_month_day const ymd{day_point};
  hh_mm_ss const hms{tp - day_point};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

/// Reads the trace CSV format. Errors name the 1-based line that failed.
inline CarbonTrace parse_trace(std::istream& in, std::string region = "unknown") {
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::vector<double> values;
  std::vector<TimePoint> stamps;

  while (std::getline(in, line)) {
    ++line_no;
    auto const row = detail::trim(line);
    if (row.empty()) continue;
    if (!saw_header) {
      if (row != kTraceHeader) {
        throw ParseError("expected header '" + std::string(kTraceHeader) + "'", line_no);
      }
      saw_header = true;
      continue;
    }
    auto const comma = row.find(',');
    if (comma == std::string_view::npos || row.find(',', comma + 1) != std::string_view::npos) {
      throw ParseError("expected exactly two columns", line_no);
    }
    TimePoint ts;
    if (!parse_timestamp(row.substr(0, comma), ts)) throw ParseError("malformed timestamp", line_no);
    double v = 0.0;
    if (!detail::parse_double(detail::trim(row.substr(comma + 1)), v) || !std::isfinite(v)) {
      throw ParseError("malformed carbon intensity", line_no);
    }
    if (v < 0.0) throw ParseError("negative carbon intensity", line_no);
    if (!stamps.empty()) {
      if (ts <= stamps.back()) throw ParseError("timestamps must be strictly increasing", line_no);
      if (stamps.size() >= 2 && ts - stamps.back() != stamps[1] - stamps[0]) {
        throw ParseError("inconsistent slot spacing", line_no);
      }
    }
    stamps.push_back(ts);
    values.push_back(v);
  }
  if (values.empty()) throw ParseError("empty trace", 0);
  Seconds const spacing =
      stamps.size() >= 2 ? std::chrono::duration_cast<Seconds>(stamps[1] - stamps[0]) : kDefaultSlotDuration;
  return CarbonTrace::create(std::move(region), stamps.front(), spacing, std::move(values));
}

inline CarbonTrace parse_trace(std::string_view text, std::string region = "unknown") {
  std::istringstream in{std::string(text)};
  return parse_trace(in, std::move(region));
}

inline void write_trace(std::ostream& out, CarbonTrace const& trace) {
  out << kTraceHeader << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << format_timestamp(trace.slot_start(i)) << ',' << detail::format_double(trace[i]) << '\n';
  }
}

inline std::string serialize_trace(CarbonTrace const& trace) {
  std::ostringstream out;
  write_trace(out, trace);
  return out.str();
}

/// Population mean and standard deviation; CoV is 0 when the mean is 0.
inline RegionStats region_stats(CarbonTrace const& trace) {
  auto const values = trace.intensities();
  auto const n = static_cast<double>(values.size());
  double const mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  double const std_dev = std::sqrt(sq / n);
  return RegionStats{mean, std_dev, mean > 0.0 ? std_dev / mean : 0.0};
}

inline CarbonTrace slice(CarbonTrace const& trace, std::size_t start_slot, std::size_t n) {
  if (start_slot > trace.size() || n > trace.size() - start_slot || n == 0) {
    throw BoundsError("slice [" + std::to_string(start_slot) + ", " + std::to_string(start_slot + n) +
                      ") outside trace of length " + std::to_string(trace.size()));
  }
  auto const values = trace.intensities();
  return CarbonTrace::create(trace.region(), trace.slot_start(start_slot), trace.slot_duration(),
                             std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(start_slot),
                                                 values.begin() + static_cast<std::ptrdiff_t>(start_slot + n)));
}

/// Multiplies every slot by an independent factor drawn from U[1 - X/100, 1 + X/100], clamped at 0.
inline CarbonTrace perturb_forecast(CarbonTrace const& trace, double error_pct, std::uint64_t seed) {
  if (!(error_pct >= 0.0)) throw ValidationError("forecast error must be >= 0", {"forecast_error_pct"});
  if (error_pct == 0.0) return trace;
  Rng rng{seed};
  double const bound = error_pct / 100.0;
  std::uniform_real_distribution<double> noise(-bound, bound);
  std::vector<double> out;
  out.reserve(trace.size());
  for (double v : trace.intensities()) out.push_back(std::max(0.0, v * (1.0 + noise(rng))));
  return CarbonTrace::create(trace.region(), trace.start(), trace.slot_duration(), std::move(out));
}

/// Replaces slots at or after `from_slot` with a fresh perturbation of `truth`; earlier slots are kept.
inline CarbonTrace refresh_forecast(CarbonTrace const& truth, std::size_t from_slot, double error_pct,
                                    std::uint64_t seed) {
  auto const fresh = perturb_forecast(truth, error_pct, seed);
  std::vector<double> values(truth.intensities().begin(), truth.intensities().end());
  for (std::size_t i = from_slot; i < values.size(); ++i) values[i] = fresh[i];
  return CarbonTrace::create(truth.region(), truth.start(), truth.slot_duration(), std::move(values));
}

}  // namespace carbonsched
