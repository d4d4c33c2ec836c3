#include <algorithm>

#include "airtwin/broker_api.hpp"
#include "airtwin/history.hpp"

namespace airtwin {

namespace {

std::optional<Timestamp> time_param(const HttpRequest& req, const std::string& name) {
  const auto v = req.param(name);
  if (!v) return std::nullopt;
  const auto t = try_parse_timestamp(*v);
  if (!t) throw std::invalid_argument(name + " is not an ISO 8601 timestamp");
  return t;
}

}  // namespace

HistoryService::HistoryService(HistoryStore& store, HistoryServiceOptions options)
    : store_(store), options_(std::move(options)) {
  register_notification_route(server_, "/notify", inbox_);
  server_.get("/history/(.+)", [this](const HttpRequest& req) {
    const auto id = EntityId::try_parse(req.captures.at(1));
    if (!id) return error_response(400, "BadRequestData", "'" + req.captures.at(1) + "' is not an entity id");
    try {
      const Timestamp from = time_param(req, "from").value_or(Timestamp::min());
      const Timestamp to = time_param(req, "to").value_or(Timestamp::max());
      if (from > to) return error_response(400, "BadRequestData", "from must not be after to");
      Json out = Json::array();
      for (const auto& e : store_.query(*id, from, to)) out.push_back(e.to_json());
      return json_response(200, out.dump());
    } catch (const std::invalid_argument& e) {
      return error_response(400, "BadRequestData", e.what());
    }
  });
  server_.get("/history", [this](const HttpRequest&) {
    Json doc = Json::object();
    doc["events"] = store_.size();
    doc["lastSequence"] = store_.last_sequence();
    doc["corruptLines"] = store_.corrupt_lines();
    doc["checksum"] = store_.checksum();
    return json_response(200, doc.dump());
  });
}

HistoryService::~HistoryService() { stop(); }

int HistoryService::start() { return server_.start(options_.host, options_.port); }

void HistoryService::stop() {
  if (consumer_.joinable()) {
    consumer_.request_stop();
    consumer_.join();
  }
  server_.stop();
}

std::string HistoryService::notify_url() const { return "http://127.0.0.1:" + std::to_string(port()) + "/notify"; }

std::vector<Subscription> HistoryService::subscriptions() const {
  std::vector<Subscription> subs;
  for (const auto& type : options_.entity_types) {
    Subscription s;
    s.entity_type = type;
    s.endpoint = notify_url();
    subs.push_back(std::move(s));
  }
  return subs;
}

std::size_t HistoryService::absorb(std::vector<NotificationPayload> ready) {
  std::lock_guard lock(pump_mutex_);
  // Payloads of different subscriptions are interleaved by notification time, ties broken by the
  // configured type order so the log does not depend on delivery timing.
  auto rank = [this](const NotificationPayload& p) {
    if (p.data.empty()) return options_.entity_types.size();
    const auto it = std::find(options_.entity_types.begin(), options_.entity_types.end(), p.data.front().type());
    return static_cast<std::size_t>(it - options_.entity_types.begin());
  };
  std::stable_sort(ready.begin(), ready.end(), [&](const auto& a, const auto& b) {
    return std::pair(a.notified_at, rank(a)) < std::pair(b.notified_at, rank(b));
  });
  for (auto& p : ready) {
    for (auto& e : p.data) pending_.emplace_back(p.notified_at, std::move(e));
  }
  std::size_t appended = 0;
  while (!pending_.empty()) {
    store_.append(pending_.front().second, pending_.front().first);
    pending_.pop_front();
    ++appended;
  }
  return appended;
}

std::size_t HistoryService::pump() { return absorb(inbox_.take_ready()); }

void HistoryService::start_consumer() {
  consumer_ = std::jthread([this](std::stop_token stop) {
    while (!stop.stop_requested()) {
      try {
        absorb(inbox_.wait_ready(std::chrono::milliseconds(100)));
      } catch (const HistoryError&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
      }
    }
  });
}

}  // namespace airtwin
