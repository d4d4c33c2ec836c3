#include <functional>

#include "airtwin/engine_service.hpp"

namespace airtwin {

namespace {

HttpResponse turnaround_error(const TurnaroundError& e) {
  const std::string& code = e.code();
  if (code == "unknown-task" || code == "unknown-flight") return error_response(404, "ResourceNotFound", e.what());
  if (code == "dependency" || code == "ordering" || code == "immutable" || code == "estimate-after-actual") {
    Json doc = Json::parse(error_response(409, "Conflict", e.what()).body);
    doc["code"] = code;
    return json_response(409, doc.dump());
  }
  Json doc = Json::parse(error_response(400, "BadRequestData", e.what()).body);
  doc["code"] = code;
  return json_response(400, doc.dump());
}

template <typename Fn>
HttpResponse guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const TurnaroundError& e) {
    return turnaround_error(e);
  } catch (const BrokerError& e) {
    return error_response(e.status() == 0 ? 503 : 502, "BrokerError", e.what());
  } catch (const ModelError& e) {
    return error_response(400, "BadRequestData", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "InvalidRequest", e.what());
  }
}

EntityId id_from_path(const std::string& text) {
  const auto id = EntityId::try_parse(text);
  if (!id) throw TurnaroundError("bad-id", "'" + text + "' is not an entity id");
  return *id;
}

}  // namespace

EngineService::EngineService(TurnaroundEngine& engine, BrokerClient broker, const Clock& clock,
                             EngineServiceOptions options)
    : engine_(engine), broker_(std::move(broker)), clock_(clock), options_(std::move(options)) {
  register_notification_route(server_, "/notify", inbox_);

  server_.get("/turnaround/status", [this](const HttpRequest& req) {
    return guarded([&] {
      Timestamp at = clock_.now();
      if (const auto p = req.param("at")) {
        const auto t = try_parse_timestamp(*p);
        if (!t) throw TurnaroundError("bad-time", "at is not an ISO 8601 timestamp");
        at = *t;
      }
      return json_response(200, engine_.status(at).dump());
    });
  });

  server_.get("/turnaround/links", [this](const HttpRequest&) {
    Json out = Json::array();
    for (const auto& l : engine_.links()) out.push_back(l.to_json());
    return json_response(200, out.dump());
  });

  server_.get("/turnaround/flights/(.+)/tasks", [this](const HttpRequest& req) {
    return guarded([&] {
      const EntityId id = id_from_path(req.captures.at(1));
      const auto plan = engine_.plan(id);
      if (!plan) return error_response(404, "ResourceNotFound", "no task plan for " + id.str());
      return json_response(200, plan->to_json().dump());
    });
  });

  server_.post("/turnaround/flights/(.+)/milestones", [this](const HttpRequest& req) {
    return guarded([&] {
      const EntityId id = id_from_path(req.captures.at(1));
      const Json body = Json::parse(req.body);
      const auto m = parse_milestone(body.at("milestone").get<std::string>());
      if (!m) throw TurnaroundError("bad-milestone", "unknown milestone " + body.at("milestone").dump());
      const auto at = try_parse_timestamp(body.at("at").get<std::string>());
      if (!at) throw TurnaroundError("bad-time", "at is not an ISO 8601 timestamp");
      ensure_known(id);
      const EntityUpdates updates = engine_.apply(id, *m, *at, clock_.now());
      write(updates);
      Json doc = Json::object();
      doc["flight"] = id.str();
      doc["changed"] = !updates.empty();
      const auto f = engine_.flight(id);
      doc["state"] = f && f->state ? Json(std::string(to_string(*f->state))) : Json(nullptr);
      return json_response(200, doc.dump());
    });
  });

  server_.post("/turnaround/tasks/(.+)", [this](const HttpRequest& req) {
    return guarded([&] {
      const EntityId id = id_from_path(req.captures.at(1));
      const Json body = Json::parse(req.body);
      const auto status = parse_notification_status(body.at("status").get<std::string>());
      if (!status) throw TurnaroundError("bad-status", "unknown status " + body.at("status").dump());
      const ContextEntity doc = engine_.update_task(id, *status, clock_.now(), body.value("issuer", std::string()));
      broker_.upsert(doc);
      return json_response(200, serialize_entity(doc).dump());
    });
  });
}

EngineService::~EngineService() { stop(); }

int EngineService::start() { return server_.start(options_.host, options_.port); }

void EngineService::stop() {
  if (dispatcher_.joinable()) {
    dispatcher_.request_stop();
    dispatcher_.join();
  }
  for (auto& s : strands_) {
    s->thread.request_stop();
    s->cv.notify_all();
    if (s->thread.joinable()) s->thread.join();
  }
  strands_.clear();
  server_.stop();
}

std::string EngineService::notify_url() const { return "http://127.0.0.1:" + std::to_string(port()) + "/notify"; }

Subscription EngineService::subscription() const {
  Subscription s;
  s.entity_type = "Flight";
  s.endpoint = notify_url();
  return s;
}

void EngineService::restore() {
  engine_.restore_tasks(broker_.query(EntityQuery{"FlightNotification", {}, std::nullopt}));
  for (const auto& f : broker_.query(EntityQuery{"Flight", {}, std::nullopt})) handle(f);
}

void EngineService::ensure_known(const EntityId& id) {
  if (engine_.flight(id)) return;
  const auto current = broker_.get(id);
  if (!current) throw TurnaroundError("unknown-flight", "no flight " + id.str());
  handle(*current);
}

void EngineService::write(const EntityUpdates& updates) {
  for (const auto& e : updates) {
    try {
      broker_.upsert(e);
    } catch (const BrokerError&) {
      ++write_failures_;
      throw;
    }
  }
}

void EngineService::handle(const ContextEntity& flight) {
  write(engine_.on_flight(flight, clock_.now()));
  ++processed_;
}

std::size_t EngineService::pump() {
  std::lock_guard lock(pump_mutex_);
  std::size_t n = 0;
  for (const auto& payload : inbox_.take_ready()) {
    for (const auto& e : payload.data) {
      handle(e);
      ++n;
    }
  }
  return n;
}

void EngineService::start_consumer() {
  const int count = std::max(1, options_.strands);
  for (int i = 0; i < count; ++i) {
    auto strand = std::make_unique<Strand>();
    Strand* s = strand.get();
    s->thread = std::jthread([this, s](std::stop_token stop) {
      std::unique_lock lock(s->mutex);
      while (!stop.stop_requested()) {
        if (s->queue.empty()) {
          s->cv.wait_for(lock, std::chrono::milliseconds(100));
          continue;
        }
        ContextEntity e = std::move(s->queue.front());
        s->queue.pop_front();
        s->busy = true;
        lock.unlock();
        try {
          handle(e);
        } catch (const std::exception&) {
          // Counted in write_failures; the next notification for the flight retries the derivation.
        }
        lock.lock();
        s->busy = false;
      }
    });
    strands_.push_back(std::move(strand));
  }
  dispatcher_ = std::jthread([this](std::stop_token stop) {
    while (!stop.stop_requested()) {
      for (auto& payload : inbox_.wait_ready(std::chrono::milliseconds(100))) {
        for (auto& e : payload.data) {
          Strand& s = *strands_[std::hash<std::string>{}(e.id().str()) % strands_.size()];
          {
            std::lock_guard lock(s.mutex);
            s.queue.push_back(std::move(e));
          }
          s.cv.notify_one();
        }
      }
    }
  });
}

bool EngineService::idle() const {
  if (inbox_.buffered() > 0) return false;
  for (const auto& s : strands_) {
    std::lock_guard lock(s->mutex);
    if (s->busy || !s->queue.empty()) return false;
  }
  return true;
}

}  // namespace airtwin
