#include "airtwin/broker_api.hpp"

#include <sstream>

namespace airtwin {

namespace {

HttpResponse from_error(const BrokerError& e) {
  const char* title = e.status() == 404 ? "ResourceNotFound" : e.status() == 409 ? "AlreadyExists" : "BadRequestData";
  HttpResponse r = error_response(e.status(), title, e.what());
  if (!e.details().is_null()) {
    Json doc = Json::parse(r.body);
    doc["report"] = e.details();
    r.body = doc.dump();
  }
  return r;
}

template <typename Fn>
HttpResponse guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const BrokerError& e) {
    return from_error(e);
  } catch (const ParseError& e) {
    return error_response(400, "BadRequestData", e.what());
  } catch (const ModelError& e) {
    return error_response(400, "BadRequestData", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "InvalidRequest", e.what());
  }
}

Json entity_list(const std::vector<ContextEntity>& entities) {
  Json out = Json::array();
  for (const auto& e : entities) out.push_back(serialize_entity(e));
  return out;
}

EntityId path_entity_id(const HttpRequest& req) {
  const auto id = EntityId::try_parse(req.captures.at(1));
  if (!id) throw NotFoundError("entity " + req.captures.at(1));
  return *id;
}

std::string comparator_symbol(Comparator c) {
  switch (c) {
    case Comparator::Eq: return "==";
    case Comparator::Lt: return "<";
    case Comparator::Gt: return ">";
    case Comparator::Le: return "<=";
    case Comparator::Ge: return ">=";
  }
  return "==";
}

}  // namespace

EntityQuery query_from_params(const std::multimap<std::string, std::string>& params) {
  auto get = [&](const std::string& name) -> std::optional<std::string> {
    const auto it = params.find(name);
    return it == params.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  EntityQuery query;
  query.type = get("type").value_or("");
  if (query.type.empty()) throw BadRequestError("type parameter is required");
  for (auto [it, end] = params.equal_range("q"); it != end; ++it) {
    auto filters = parse_q(it->second);
    query.filters.insert(query.filters.end(), filters.begin(), filters.end());
  }
  if (const auto timerel = get("timerel")) {
    const auto property = get("timeproperty");
    const auto at = get("timeAt");
    if (!property || !at) throw BadRequestError("timerel requires timeproperty and timeAt");
    const auto t0 = try_parse_timestamp(*at);
    if (!t0) throw BadRequestError("timeAt is not an ISO 8601 timestamp");
    TimeWindow window{*property, Timestamp::min(), Timestamp::max()};
    if (*timerel == "between") {
      const auto end_at = get("endTimeAt");
      const auto t1 = end_at ? try_parse_timestamp(*end_at) : std::nullopt;
      if (!t1) throw BadRequestError("timerel=between requires an ISO 8601 endTimeAt");
      window.from = *t0;
      window.to = *t1;
    } else if (*timerel == "before") {
      window.to = *t0;
    } else if (*timerel == "after") {
      window.from = *t0;
    } else {
      throw BadRequestError("unknown timerel '" + *timerel + "'");
    }
    query.window = window;
  }
  return query;
}

std::string query_string(const EntityQuery& query) {
  std::string out = "type=" + url_encode(query.type);
  if (!query.filters.empty()) {
    std::string q;
    for (const auto& f : query.filters) {
      if (!q.empty()) q += ';';
      q += f.name + comparator_symbol(f.comparator) + (f.value.is_string() ? f.value.get<std::string>() : f.value.dump());
    }
    out += "&q=" + url_encode(q);
  }
  if (query.window) {
    const TimeWindow& w = *query.window;
    out += "&timeproperty=" + url_encode(w.attribute);
    if (w.from == Timestamp::min()) {
      out += "&timerel=before&timeAt=" + url_encode(format_timestamp(w.to));
    } else if (w.to == Timestamp::max()) {
      out += "&timerel=after&timeAt=" + url_encode(format_timestamp(w.from));
    } else {
      out += "&timerel=between&timeAt=" + url_encode(format_timestamp(w.from));
      out += "&endTimeAt=" + url_encode(format_timestamp(w.to));
    }
  }
  return out;
}

void register_notification_route(HttpServer& server, const std::string& path, NotificationInbox& inbox) {
  server.post(path, [&inbox](const HttpRequest& req) {
    return guarded([&] {
      inbox.accept(NotificationPayload::from_json(Json::parse(req.body)));
      return HttpResponse{204, "", "application/json", {}};
    });
  });
}

void register_broker_routes(HttpServer& server, ContextBroker& broker) {
  server.post("/entities", [&broker](const HttpRequest& req) {
    return guarded([&] {
      const ContextEntity entity = parse_entity(Json::parse(req.body));
      const UpsertResult result = broker.upsert(entity);
      HttpResponse r{result.created ? 201 : 204, ""};
      if (result.created) r.headers.emplace("Location", "/entities/" + entity.id().str());
      return r;
    });
  });
  server.get("/entities/(.+)", [&broker](const HttpRequest& req) {
    return guarded([&] { return json_response(200, serialize_entity(broker.get(path_entity_id(req))).dump()); });
  });
  server.get("/entities", [&broker](const HttpRequest& req) {
    return guarded([&] { return json_response(200, entity_list(broker.query(query_from_params(req.params))).dump()); });
  });
  server.del("/entities/(.+)", [&broker](const HttpRequest& req) {
    return guarded([&] {
      broker.remove(path_entity_id(req));
      return HttpResponse{204, ""};
    });
  });
  server.post("/subscriptions", [&broker](const HttpRequest& req) {
    return guarded([&] {
      const std::string id = broker.subscribe(Subscription::from_json(Json::parse(req.body)));
      HttpResponse r{201, Json{{"id", id}}.dump()};
      r.headers.emplace("Location", "/subscriptions/" + id);
      return r;
    });
  });
  server.get("/subscriptions", [&broker](const HttpRequest&) {
    Json out = Json::array();
    for (const auto& s : broker.subscriptions()) out.push_back(s.to_json());
    return json_response(200, out.dump());
  });
  server.get("/subscriptions/(.+)", [&broker](const HttpRequest& req) {
    return guarded([&] { return json_response(200, broker.subscription(req.captures.at(1)).to_json().dump()); });
  });
  server.del("/subscriptions/(.+)", [&broker](const HttpRequest& req) {
    return guarded([&] {
      broker.unsubscribe(req.captures.at(1));
      return HttpResponse{204, ""};
    });
  });
  server.get("/metrics", [&broker](const HttpRequest&) { return json_response(200, broker.metrics().to_json().dump()); });
}

BrokerServer::BrokerServer(ContextBroker& broker) { register_broker_routes(server_, broker); }

int BrokerServer::start(const std::string& host, int port) { return server_.start(host, port); }

// ---- client -----------------------------------------------------------------

namespace {

[[noreturn]] void fail(const std::optional<HttpResponse>& r, const std::string& what) {
  if (!r) throw BrokerError(0, what + ": broker unreachable");
  std::string detail = r->body;
  const Json doc = Json::parse(r->body, nullptr, false);
  if (doc.is_object() && doc.contains("detail") && doc["detail"].is_string()) detail = doc["detail"].get<std::string>();
  throw BrokerError(r->status, what + ": " + detail, doc.is_object() && doc.contains("report") ? doc["report"] : Json());
}

}  // namespace

BrokerClient::BrokerClient(std::string base_url, HttpClientOptions options)
    : base_url_(std::move(base_url)), options_(std::move(options)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

UpsertStatus BrokerClient::upsert(const ContextEntity& entity) const {
  const auto r = http_post(base_url_ + "/entities", serialize_entity(entity).dump(), "application/json", options_);
  if (r && r->status == 201) return UpsertStatus::Created;
  if (r && r->status == 204) return UpsertStatus::Updated;
  fail(r, "upsert " + entity.id().str());
}

std::optional<ContextEntity> BrokerClient::get(const EntityId& id) const {
  const auto r = http_get(base_url_ + "/entities/" + url_encode(id.str()), options_);
  if (r && r->status == 404) return std::nullopt;
  if (r && r->status == 200) return parse_entity(Json::parse(r->body));
  fail(r, "get " + id.str());
}

std::vector<ContextEntity> BrokerClient::query(const EntityQuery& query) const {
  const auto r = http_get(base_url_ + "/entities?" + query_string(query), options_);
  if (!r || r->status != 200) fail(r, "query " + query.type);
  std::vector<ContextEntity> out;
  for (const auto& doc : Json::parse(r->body)) out.push_back(parse_entity(doc));
  return out;
}

bool BrokerClient::remove(const EntityId& id) const {
  const auto r = http_delete(base_url_ + "/entities/" + url_encode(id.str()), options_);
  if (r && r->status == 404) return false;
  if (r && r->status == 204) return true;
  fail(r, "delete " + id.str());
}

std::string BrokerClient::subscribe(const Subscription& subscription) const {
  const auto r = http_post(base_url_ + "/subscriptions", subscription.to_json().dump(), "application/json", options_);
  if (!r || r->status != 201) fail(r, "subscribe");
  return Json::parse(r->body).at("id").get<std::string>();
}

bool BrokerClient::unsubscribe(const std::string& id) const {
  const auto r = http_delete(base_url_ + "/subscriptions/" + url_encode(id), options_);
  if (r && r->status == 404) return false;
  if (r && r->status == 204) return true;
  fail(r, "unsubscribe " + id);
}

std::vector<Subscription> BrokerClient::subscriptions() const {
  const auto r = http_get(base_url_ + "/subscriptions", options_);
  if (!r || r->status != 200) fail(r, "list subscriptions");
  std::vector<Subscription> out;
  for (const auto& doc : Json::parse(r->body)) {
    Subscription s = Subscription::from_json(doc);
    if (doc.contains("createdAt")) s.created_at = parse_timestamp(doc["createdAt"].get<std::string>());
    s.delivered_count = doc.value("deliveredCount", std::uint64_t{0});
    out.push_back(std::move(s));
  }
  return out;
}

Json BrokerClient::metrics() const {
  const auto r = http_get(base_url_ + "/metrics", options_);
  if (!r || r->status != 200) fail(r, "metrics");
  return Json::parse(r->body);
}

}  // namespace airtwin
