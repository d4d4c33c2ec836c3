#include "airtwin/time.hpp"

#include <cctype>
#include <cstdio>
#include <stdexcept>

namespace airtwin {

namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const char c = s[pos + i];
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

bool expect(std::string_view s, std::size_t pos, char c) { return pos < s.size() && s[pos] == c; }

}  // namespace

std::optional<Timestamp> try_parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  int y, mo, d, h, mi, se;
  if (!read_digits(s, 0, 4, y) || !expect(s, 4, '-') || !read_digits(s, 5, 2, mo) || !expect(s, 7, '-') ||
      !read_digits(s, 8, 2, d) || !(expect(s, 10, 'T') || expect(s, 10, ' ')) || !read_digits(s, 11, 2, h) ||
      !expect(s, 13, ':') || !read_digits(s, 14, 2, mi) || !expect(s, 16, ':') || !read_digits(s, 17, 2, se)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (expect(s, pos, '.')) {
    ++pos;
    const std::size_t digits_start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == digits_start) return std::nullopt;
  }
  int offset_minutes = 0;
  if (expect(s, pos, 'Z')) {
    ++pos;
  } else if (expect(s, pos, '+') || expect(s, pos, '-')) {
    const int sign = s[pos] == '-' ? -1 : 1;
    int oh, om;
    if (!read_digits(s, pos + 1, 2, oh) || !expect(s, pos + 3, ':') || !read_digits(s, pos + 4, 2, om)) {
      return std::nullopt;
    }
    offset_minutes = sign * (oh * 60 + om);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 60) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{se} - minutes{offset_minutes};
}

Timestamp parse_timestamp(std::string_view text) {
  if (auto t = try_parse_timestamp(text)) return *t;
  throw std::invalid_argument("not an ISO 8601 UTC timestamp: '" + std::string(text) + "'");
}

namespace {

std::string format_with_suffix(Timestamp t, const char* suffix) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld%s", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()), suffix);
  return buf;
}

}  // namespace

std::string format_timestamp(Timestamp t) { return format_with_suffix(t, ".00Z"); }

std::string format_offset_timestamp(Timestamp t) { return format_with_suffix(t, "+00:00"); }

Timestamp SystemClock::now() const {
  return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
}

ScaledClock::ScaledClock(Timestamp start, double scale)
    : start_(start), scale_(scale), wall_start_(std::chrono::steady_clock::now()) {
  if (!(scale > 0.0)) throw std::invalid_argument("clock scale must be positive");
}

Timestamp ScaledClock::now() const {
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - wall_start_;
  return start_ + Seconds{static_cast<std::int64_t>(elapsed.count() * scale_)};
}

}  // namespace airtwin
