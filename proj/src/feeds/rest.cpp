#include <condition_variable>

#include "airtwin/feeds.hpp"

namespace airtwin {

RestPoller::RestPoller(RestPollerOptions options, const Clock& clock) : options_(std::move(options)), clock_(clock) {
  if (options_.interval_seconds < 1) throw ConfigError("poll interval must be at least 1 second");
}

std::optional<FlowRecord> RestPoller::poll_once() {
  const std::uint64_t tick = ++polls_;
  const auto response = http_get(options_.url, options_.http);
  last_status_ = response ? response->status : 0;
  if (!response || response->status < 200 || response->status >= 300) {
    ++failures_;
    return std::nullopt;
  }
  Json payload = Json::parse(response->body, nullptr, false);
  if (payload.is_discarded()) {
    ++failures_;
    return std::nullopt;
  }
  return FlowRecord{std::move(payload), {}, options_.source_name, {tick}};
}

std::optional<FlowRecord> RestPoller::next(std::stop_token stop) {
  std::mutex m;
  std::condition_variable_any cv;
  while (!stop.stop_requested()) {
    const Timestamp now = clock_.now();
    if (!due_ || now >= *due_) {
      const Seconds interval{options_.interval_seconds};
      if (!due_) due_ = now;
      while (*due_ <= now) *due_ += interval;
      if (auto record = poll_once()) return record;
      continue;
    }
    std::unique_lock lock(m);
    cv.wait_for(lock, stop, std::chrono::milliseconds(10), [] { return false; });
  }
  return std::nullopt;
}

Json RestPoller::status() const {
  Json s = Json::object();
  s["kind"] = "http-poll";
  s["url"] = options_.url;
  s["intervalSeconds"] = options_.interval_seconds;
  s["polls"] = polls_.load();
  s["failures"] = failures_.load();
  s["lastStatus"] = last_status_.load();
  return s;
}

}  // namespace airtwin
