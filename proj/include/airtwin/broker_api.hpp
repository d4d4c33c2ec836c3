#pragma once

#include <optional>
#include <string>
#include <vector>

#include "airtwin/broker.hpp"
#include "airtwin/http.hpp"

namespace airtwin {

/// Exposes a ContextBroker over HTTP:
///   POST /entities, GET /entities/{id}, GET /entities?type=&q=&timerel=&timeproperty=&timeAt=&endTimeAt=,
///   DELETE /entities/{id}, POST /subscriptions, GET /subscriptions, GET /subscriptions/{id},
///   DELETE /subscriptions/{id}, GET /metrics.
void register_broker_routes(HttpServer& server, ContextBroker& broker);

/// Registers a POST handler at `path` that parses notification payloads into `inbox`.
/// Malformed payloads get 400; duplicates are acknowledged with 204 like fresh ones.
void register_notification_route(HttpServer& server, const std::string& path, NotificationInbox& inbox);

/// Builds an EntityQuery from GET /entities parameters. Throws BadRequestError.
EntityQuery query_from_params(const std::multimap<std::string, std::string>& params);

/// Inverse of query_from_params, used by clients.
std::string query_string(const EntityQuery& query);

class BrokerServer {
 public:
  explicit BrokerServer(ContextBroker& broker);
  int start(const std::string& host, int port);
  void stop() { server_.stop(); }
  int port() const noexcept { return server_.port(); }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port()); }

 private:
  HttpServer server_;
};

enum class UpsertStatus { Created, Updated };

/// HTTP client for the broker API. Throws BrokerError with the response status on failure and
/// status 0 when the broker is unreachable.
class BrokerClient {
 public:
  explicit BrokerClient(std::string base_url, HttpClientOptions options = {});

  UpsertStatus upsert(const ContextEntity& entity) const;
  std::optional<ContextEntity> get(const EntityId& id) const;
  std::vector<ContextEntity> query(const EntityQuery& query) const;
  /// Returns false when the entity did not exist.
  bool remove(const EntityId& id) const;

  std::string subscribe(const Subscription& subscription) const;
  bool unsubscribe(const std::string& id) const;
  std::vector<Subscription> subscriptions() const;
  Json metrics() const;

  const std::string& base_url() const noexcept { return base_url_; }

 private:
  std::string base_url_;
  HttpClientOptions options_;
};

}  // namespace airtwin
