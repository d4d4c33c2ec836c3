#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "airtwin/model.hpp"
#include "airtwin/time.hpp"

namespace airtwin {

/// Error carrying the HTTP status class the broker API maps it to.
class BrokerError : public std::runtime_error {
 public:
  BrokerError(int status, const std::string& message, Json details = nullptr)
      : std::runtime_error(message), status_(status), details_(std::move(details)) {}
  int status() const noexcept { return status_; }
  const Json& details() const noexcept { return details_; }

 private:
  int status_;
  Json details_;
};

class NotFoundError : public BrokerError {
 public:
  explicit NotFoundError(const std::string& what) : BrokerError(404, what + " not found") {}
};

class BadRequestError : public BrokerError {
 public:
  explicit BadRequestError(const std::string& message, Json details = nullptr)
      : BrokerError(400, message, std::move(details)) {}
};

// ---- subscriptions ----------------------------------------------------------

struct Subscription {
  std::string id;
  std::string entity_type;
  /// ECMAScript regular expression matched against the whole entity id.
  std::optional<std::string> id_pattern;
  /// Empty means every attribute.
  std::set<std::string> watched_attributes;
  std::string endpoint;
  Timestamp created_at{};
  std::uint64_t delivered_count = 0;

  Json to_json() const;
  /// Throws BadRequestError naming the malformed member.
  static Subscription from_json(const Json& doc);
};

struct NotificationPayload {
  std::string subscription_id;
  /// 1-based, consecutive per subscription; receivers use it to restore order and drop duplicates.
  std::uint64_t sequence = 0;
  Timestamp notified_at{};
  std::vector<ContextEntity> data;

  Json to_json() const;
  static NotificationPayload from_json(const Json& doc);
};

// ---- queries ----------------------------------------------------------------

enum class Comparator { Eq, Lt, Gt, Le, Ge };

/// Accepts "eq", "lt", "gt", "le", "ge". Throws BadRequestError otherwise.
Comparator parse_comparator(std::string_view text);

struct AttributeFilter {
  std::string name;
  Comparator comparator = Comparator::Eq;
  Json value;
};

/// Inclusive window over a DateTime attribute.
struct TimeWindow {
  std::string attribute;
  Timestamp from{};
  Timestamp to{};
};

struct EntityQuery {
  std::string type;
  std::vector<AttributeFilter> filters;
  std::optional<TimeWindow> window;
};

/// Parses "name==v;name<v;name>=v" (";"-separated). Throws BadRequestError on unknown operators.
std::vector<AttributeFilter> parse_q(std::string_view q);

bool matches(const ContextEntity& entity, const EntityQuery& query);

// ---- broker -----------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;

  std::chrono::milliseconds backoff_before(int attempt) const;
};

/// Posts `body` to `endpoint`; returns the HTTP status or 0 when the endpoint is unreachable.
using NotificationSender = std::function<int(const std::string& endpoint, const std::string& body)>;

NotificationSender http_notification_sender();

struct BrokerOptions {
  RetryPolicy retry;
  int delivery_threads = 4;
};

struct BrokerMetrics {
  std::size_t entities = 0;
  std::size_t subscriptions = 0;
  std::uint64_t change_events = 0;
  std::uint64_t notifications_queued = 0;
  std::uint64_t notifications_delivered = 0;
  std::uint64_t failed_attempts = 0;
  std::uint64_t notifications_dropped = 0;

  Json to_json() const;
};

struct UpsertResult {
  bool created = false;
  /// Attributes whose stored value changed; every attribute on creation.
  std::vector<std::string> changed;
  /// Sequence of the emitted change event, 0 when nothing changed.
  std::uint64_t change_sequence = 0;
};

class NotificationDispatcher;

/// Current-state store with merge-patch upserts and change notifications.
class ContextBroker {
 public:
  ContextBroker(BrokerOptions options, const Clock& clock, NotificationSender sender);
  ~ContextBroker();
  ContextBroker(const ContextBroker&) = delete;
  ContextBroker& operator=(const ContextBroker&) = delete;

  /// Throws BadRequestError carrying the validation report when the merged entity is invalid.
  UpsertResult upsert(const ContextEntity& entity);
  ContextEntity get(const EntityId& id) const;
  std::vector<ContextEntity> query(const EntityQuery& query) const;
  void remove(const EntityId& id);

  std::string subscribe(Subscription subscription);
  void unsubscribe(const std::string& id);
  std::vector<Subscription> subscriptions() const;
  Subscription subscription(const std::string& id) const;

  BrokerMetrics metrics() const;

  /// Blocks until every queued notification is delivered or dropped.
  bool wait_idle(std::chrono::milliseconds timeout) const;

 private:
  struct SubscriptionState {
    Subscription subscription;
    std::uint64_t next_sequence = 1;
  };

  void on_delivered(const std::string& subscription_id);

  const Clock& clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, ContextEntity> entities_;
  std::map<std::string, SubscriptionState> subscriptions_;
  std::uint64_t change_events_ = 0;
  std::uint64_t next_subscription_ = 1;
  std::unique_ptr<NotificationDispatcher> dispatcher_;
};

/// Receiver-side reordering of notifications: releases each subscription's payloads in sequence order,
/// drops duplicates, and skips a missing sequence number once it has been outstanding for `gap_timeout`.
class NotificationInbox {
 public:
  explicit NotificationInbox(std::chrono::milliseconds gap_timeout = std::chrono::seconds(10));

  /// Returns false for a duplicate or already released sequence number.
  bool accept(NotificationPayload payload);
  std::vector<NotificationPayload> take_ready();
  std::vector<NotificationPayload> wait_ready(std::chrono::milliseconds timeout);

  std::size_t buffered() const;
  std::uint64_t duplicates() const;
  std::uint64_t gaps_skipped() const;

 private:
  struct Stream {
    std::uint64_t next = 1;
    std::map<std::uint64_t, NotificationPayload> held;
    std::optional<std::chrono::steady_clock::time_point> gap_since;
  };

  std::vector<NotificationPayload> collect_locked();

  std::chrono::milliseconds gap_timeout_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::string, Stream> streams_;
  std::uint64_t duplicates_ = 0;
  std::uint64_t gaps_skipped_ = 0;
};

}  // namespace airtwin
