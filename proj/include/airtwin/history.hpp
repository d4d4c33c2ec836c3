#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "airtwin/broker.hpp"
#include "airtwin/http.hpp"
#include "airtwin/model.hpp"

namespace airtwin {

/// Storage failure. The event was not acknowledged and may be appended again.
class HistoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HistoryEvent {
  std::uint64_t sequence = 0;
  Timestamp recorded_at{};
  EntityId entity_id;
  std::string entity_type;
  std::vector<std::string> changed_attributes;
  /// Full entity document after the change.
  Json snapshot;

  Json to_json() const;
  /// Throws ParseError.
  static HistoryEvent from_json(const Json& doc);
};

/// Append-only event log in newline-delimited JSON, one segment file per UTC day of `recordedAt`
/// ("history-2021-02-04.ndjson"). Each line carries a CRC-32 of the rest of the line.
/// Single writer; readers see a consistent prefix.
class HistoryStore {
 public:
  /// Opens or creates the log in `dir` and rebuilds the index. Lines that fail their checksum are
  /// skipped and counted; a torn final line is cut off.
  explicit HistoryStore(std::filesystem::path dir);

  /// Appends the entity snapshot and returns its sequence number. The changed attribute set is the
  /// difference to the previous snapshot of the same entity. recordedAt never goes backwards: an
  /// earlier `recorded_at` is raised to the last recorded one. Throws HistoryError on I/O failure.
  std::uint64_t append(const ContextEntity& snapshot, Timestamp recorded_at);

  /// Events of `id` with recordedAt in [from, to), ascending sequence. Empty when from >= to.
  std::vector<HistoryEvent> query(const EntityId& id, Timestamp from, Timestamp to) const;
  std::vector<HistoryEvent> events() const;
  /// Latest snapshot of every entity, merged in sequence order.
  std::map<EntityId, ContextEntity> replay() const;

  std::size_t size() const;
  std::uint64_t last_sequence() const;
  std::size_t corrupt_lines() const;
  std::vector<std::filesystem::path> segments() const;
  /// CRC-32 over every segment's bytes in order, as 8 hex digits.
  std::string checksum() const;
  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  void load_segment(const std::filesystem::path& path);
  std::filesystem::path segment_for(Timestamp t) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::vector<HistoryEvent> events_;
  std::map<EntityId, std::vector<std::size_t>> by_entity_;
  std::size_t corrupt_ = 0;
  std::filesystem::path open_path_;
  std::ofstream out_;
};

/// Serialises one event as a log line (without the trailing newline).
std::string encode_history_line(const HistoryEvent& event);
/// Returns nullopt when the line is malformed or fails its checksum.
std::optional<HistoryEvent> decode_history_line(const std::string& line);

struct HistoryServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8092;
  /// One subscription per type.
  std::vector<std::string> entity_types{"Airport", "Airline", "Aircraft", "Flight", "FlightNotification"};
};

/// Subscribes the store to broker changes and serves GET /history/{entityId}?from=&to=.
/// Notifications arrive on POST /notify and are appended in per-subscription sequence order with
/// recordedAt = notifiedAt.
class HistoryService {
 public:
  HistoryService(HistoryStore& store, HistoryServiceOptions options = {});
  ~HistoryService();

  /// Starts the HTTP endpoint; returns the bound port or -1.
  int start();
  void stop();
  int port() const noexcept { return server_.port(); }
  std::string notify_url() const;
  /// Subscriptions to register with the broker.
  std::vector<Subscription> subscriptions() const;

  /// Appends every notification that is ready. Returns the number of events appended.
  /// On a storage failure the remaining events stay queued for the next call.
  std::size_t pump();
  /// Runs pump() on a background thread until stop().
  void start_consumer();

  const NotificationInbox& inbox() const noexcept { return inbox_; }

 private:
  std::size_t absorb(std::vector<NotificationPayload> ready);

  HistoryStore& store_;
  HistoryServiceOptions options_;
  HttpServer server_;
  NotificationInbox inbox_;
  std::mutex pump_mutex_;
  std::deque<std::pair<Timestamp, ContextEntity>> pending_;
  std::jthread consumer_;
};

}  // namespace airtwin
