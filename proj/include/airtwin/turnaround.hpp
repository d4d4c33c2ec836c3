#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "airtwin/records.hpp"

namespace airtwin {

/// Raised for rejected operations; `code` is a short machine-readable reason.
class TurnaroundError : public std::runtime_error {
 public:
  TurnaroundError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// ---- derived times ----------------------------------------------------------

struct TaxiTimes {
  std::optional<std::int64_t> axot;
  std::optional<std::int64_t> axit;
};

/// AXOT = ATOT - AOBT, AXIT = AIBT - ALDT. Components with a missing timestamp are omitted;
/// a negative component throws TurnaroundError("validation").
TaxiTimes compute_taxi_times(const FlightRecord& flight);

struct BlockTimes {
  std::optional<std::int64_t> in_air;
  std::optional<std::int64_t> block_to_block;
};

/// in-air = ALDT - ATOT, block-to-block = AIBT - AOBT.
BlockTimes compute_block_times(const FlightRecord& flight);

// ---- legs and links ---------------------------------------------------------

/// Which side of the turnaround a flight is on, seen from the twin's airport.
enum class Leg { Arrival, Departure, Other };

Leg leg_of(const FlightRecord& flight, const EntityId& home_airport);
std::string_view to_string(Leg leg);

/// Scheduled reference: SIBT (arrival) or SOBT (departure), else dateScheduled.
std::optional<Timestamp> scheduled_reference(const FlightRecord& flight, Leg leg);

struct TurnaroundLink {
  EntityId inbound;
  EntityId outbound;
  std::string stand_code;
  std::optional<std::int64_t> attt;
  std::optional<std::int64_t> sttt;
  std::optional<std::int64_t> ettt;

  Json to_json() const;
};

/// Throws TurnaroundError("link") when the aircraft or airports do not match or the actuals are reversed.
TurnaroundLink link_turnaround(const FlightRecord& inbound, const FlightRecord& outbound, const EntityId& home_airport);

// ---- delay classification ---------------------------------------------------

enum class DelayClass { Future, OnTime, Late, Unknown };
std::string_view to_string(DelayClass c);

struct DelayStatus {
  DelayClass classification = DelayClass::Unknown;
  /// Set for OnTime and Late only.
  std::optional<std::int64_t> delay_seconds;
  std::string reference_milestone;

  Json to_json() const;
};

inline constexpr std::int64_t kDefaultDelayThreshold = 300;

/// Arrivals compare the best-known in-block time (AIBT, else EIBT) with SIBT; departures the best-known
/// off-block time (AOBT, else TOBT, else EOBT) with SOBT. Until the actual is known the best estimate
/// is never earlier than `now`. Future until an actual milestone has happened or the scheduled time
/// has passed.
DelayStatus classify_delay(const FlightRecord& flight, Leg leg, Timestamp now,
                           std::int64_t threshold_seconds = kDefaultDelayThreshold);

// ---- milestones -------------------------------------------------------------

struct MilestoneResult {
  /// False for an idempotent repeat.
  bool changed = false;
  std::optional<FlightState> previous_state;
  std::optional<FlightState> state;
};

/// Records `m` at `at` on `flight` and recomputes taxi times and state.
/// Actuals are immutable once set (a repeat of the same value is a no-op) and must respect
/// AOBT <= ATOT <= ALDT <= AIBT. Estimates and targets may change until their actual is known.
/// Throws TurnaroundError with code "ordering", "immutable" or "estimate-after-actual".
MilestoneResult apply_milestone(FlightRecord& flight, Milestone m, Timestamp at, Leg leg);

/// State after the actuals present: scheduled -> active on the first actual; active -> landed on ALDT
/// for arrivals. Explicit cancelled/diverted/redirected states are kept.
std::optional<FlightState> derive_state(const FlightRecord& flight, Leg leg);

// ---- task plans -------------------------------------------------------------

struct TaskTemplate {
  std::string key;
  std::string description;
  std::vector<std::string> depends_on;
};

/// deboarding -> cleaning -> boarding -> pushback, with fueling and catering in parallel before pushback.
const std::vector<TaskTemplate>& default_task_template();

/// Throws ConfigError-like TurnaroundError("template") on unknown dependencies or cycles.
std::vector<TaskTemplate> parse_task_template(const Json& doc);

EntityId task_id(const EntityId& flight, const std::string& key);

class TaskPlan {
 public:
  TaskPlan(EntityId flight, const std::vector<TaskTemplate>& tasks, Timestamp issued, const std::string& issuer);
  /// Rebuilds a plan from stored FlightNotification records of one flight.
  static TaskPlan from_records(EntityId flight, std::vector<FlightNotificationRecord> records);

  const EntityId& flight() const noexcept { return flight_; }
  const std::vector<FlightNotificationRecord>& tasks() const noexcept { return tasks_; }
  const FlightNotificationRecord* find(const EntityId& task) const;

  /// Throws TurnaroundError("transition") for a move the status machine forbids and
  /// TurnaroundError("dependency") naming the first uncompleted dependency when completing.
  /// A non-empty `issuer` replaces the recorded one.
  const FlightNotificationRecord& update(const EntityId& task, NotificationStatus status, Timestamp at,
                                         const std::string& issuer);

  bool can_complete(const EntityId& task, std::string* blocking = nullptr) const;
  Json to_json() const;

 private:
  FlightNotificationRecord* find_mut(const EntityId& task);

  EntityId flight_;
  std::vector<FlightNotificationRecord> tasks_;
};

// ---- engine -----------------------------------------------------------------

struct EngineOptions {
  std::string airport_iata = "ABZ";
  std::int64_t delay_threshold = kDefaultDelayThreshold;
  std::vector<TaskTemplate> task_template = default_task_template();
  std::string issuer = "turnaround-engine";
};

/// Entities the engine wants written back: partial Flight patches and FlightNotification documents.
using EntityUpdates = std::vector<ContextEntity>;

/// Broker-independent engine state. Thread-safe; callers serialise work per flight.
class TurnaroundEngine {
 public:
  explicit TurnaroundEngine(EngineOptions options = {});

  const EngineOptions& options() const noexcept { return options_; }
  const EntityId& home_airport() const noexcept { return home_; }

  /// Takes the current broker state of a Flight and returns the derived attributes that differ,
  /// for this flight and for any flight linked to it, plus task plans for new departures.
  EntityUpdates on_flight(const ContextEntity& flight, Timestamp now);

  /// Operator or feed milestone entry. Returns the patches to write.
  EntityUpdates apply(const EntityId& flight, Milestone m, Timestamp at, Timestamp now);

  /// Returns the FlightNotification document to write.
  ContextEntity update_task(const EntityId& task, NotificationStatus status, Timestamp at, const std::string& issuer);

  /// Restores task plans from FlightNotification entities read back from the broker.
  void restore_tasks(const std::vector<ContextEntity>& notifications);

  std::optional<FlightRecord> flight(const EntityId& id) const;
  std::optional<TaskPlan> plan(const EntityId& flight) const;
  std::vector<TurnaroundLink> links() const;
  /// One entry per known flight at the home airport, ordered by scheduled time then id.
  Json status(Timestamp now) const;

 private:
  void recompute(FlightRecord& flight) const;
  /// Recomputes departures flown by the same aircraft after an arrival changed.
  void refresh_departures(const FlightRecord& arrival, EntityUpdates& out);
  std::optional<TurnaroundLink> link_for(const FlightRecord& outbound) const;
  void ensure_plan(const FlightRecord& flight, Timestamp now, EntityUpdates& out);

  EngineOptions options_;
  EntityId home_;
  mutable std::mutex mutex_;
  std::map<EntityId, FlightRecord> flights_;
  std::map<EntityId, TaskPlan> plans_;
  std::map<EntityId, EntityId> task_owner_;
};

}  // namespace airtwin
