#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace airtwin {

/// Whole-second UTC instant. Every timestamp in the twin has second resolution.
using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

/// Parses ISO 8601 date-times of the forms the feeds produce:
/// "2021-02-04T17:20:00Z", "2021-02-04T17:20:00.00Z", "2021-02-04T17:20:00+00:00".
/// Fractional seconds are truncated. Throws std::invalid_argument on malformed input.
Timestamp parse_timestamp(std::string_view text);
std::optional<Timestamp> try_parse_timestamp(std::string_view text);

/// Wire format of DateTime values: "%Y-%m-%dT%H:%M:%S.00Z".
std::string format_timestamp(Timestamp t);

/// Offset form used by the schedule feed: "%Y-%m-%dT%H:%M:%S+00:00".
std::string format_offset_timestamp(Timestamp t);

inline Timestamp from_epoch(std::int64_t seconds) { return Timestamp{Seconds{seconds}}; }
inline std::int64_t to_epoch(Timestamp t) { return t.time_since_epoch().count(); }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
};

/// Clock advanced explicitly; used by lockstep runs and tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start) : epoch_(to_epoch(start)) {}
  Timestamp now() const override { return from_epoch(epoch_.load()); }
  void set(Timestamp t) { epoch_.store(to_epoch(t)); }
  void advance(Seconds by) { epoch_.fetch_add(by.count()); }

 private:
  std::atomic<std::int64_t> epoch_;
};

/// Simulated time running `scale` times faster than wall time from `start`.
class ScaledClock final : public Clock {
 public:
  ScaledClock(Timestamp start, double scale);
  Timestamp now() const override;
  double scale() const { return scale_; }

 private:
  Timestamp start_;
  double scale_;
  std::chrono::steady_clock::time_point wall_start_;
};

}  // namespace airtwin
