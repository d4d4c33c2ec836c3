#pragma once

// Typed views over the SmartAeronautics entity types.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "airtwin/model.hpp"

namespace airtwin {

enum class FlightState { Scheduled, Active, Unknown, Redirected, Landed, Diverted, Cancelled };

std::string_view to_string(FlightState state);
std::optional<FlightState> parse_flight_state(std::string_view text);

/// A-CDM instants carried by a Flight as "date<NAME>" attributes.
enum class Milestone : std::uint8_t {
  SOBT, EOBT, AOBT, TOBT,
  ETOT, ATOT, CTOT, TTOT,
  ELDT, ALDT, TLDT,
  SIBT, EIBT, AIBT,
};
inline constexpr std::size_t kMilestoneCount = 14;

/// Durations in seconds carried as "date<NAME>" attributes.
enum class Interval : std::uint8_t { EXOT, AXOT, EXIT, AXIT, STTT, ETTT, ATTT };
inline constexpr std::size_t kIntervalCount = 7;

std::string_view to_string(Milestone m);
std::string_view to_string(Interval i);
/// Accepts "AOBT" and "dateAOBT".
std::optional<Milestone> parse_milestone(std::string_view text);
std::optional<Interval> parse_interval(std::string_view text);
std::string attribute_name(Milestone m);
std::string attribute_name(Interval i);

/// The four actual milestones in the order a flight must pass them.
inline constexpr std::array<Milestone, 4> kActualChain{Milestone::AOBT, Milestone::ATOT, Milestone::ALDT,
                                                       Milestone::AIBT};

inline bool is_actual(Milestone m) {
  return m == Milestone::AOBT || m == Milestone::ATOT || m == Milestone::ALDT || m == Milestone::AIBT;
}

struct FlightRecord {
  EntityId id;
  std::optional<std::string> flight_number;
  std::optional<std::string> flight_number_iata;
  std::optional<std::string> flight_number_icao;
  std::optional<FlightState> state;
  std::optional<std::int64_t> passenger_count;
  std::optional<Timestamp> date_departure;
  std::optional<Timestamp> date_arrival;
  std::optional<Timestamp> date_scheduled;
  std::array<std::optional<Timestamp>, kMilestoneCount> times{};
  std::array<std::optional<std::int64_t>, kIntervalCount> intervals{};
  std::optional<std::string> stand_code;
  std::optional<std::string> gate_code;
  std::optional<EntityId> has_aircraft;
  std::optional<EntityId> has_aircraft_model;
  std::optional<EntityId> departs_from_airport;
  std::optional<EntityId> arrives_to_airport;
  std::optional<EntityId> belongs_to_airline;

  std::optional<Timestamp>& time(Milestone m) { return times[static_cast<std::size_t>(m)]; }
  const std::optional<Timestamp>& time(Milestone m) const { return times[static_cast<std::size_t>(m)]; }
  std::optional<std::int64_t>& interval(Interval i) { return intervals[static_cast<std::size_t>(i)]; }
  const std::optional<std::int64_t>& interval(Interval i) const { return intervals[static_cast<std::size_t>(i)]; }

  /// Throws ModelError when an attribute has the wrong shape for its field.
  static FlightRecord from_entity(const ContextEntity& entity);
  ContextEntity to_entity() const;
  ValidationReport check() const;
};

struct AircraftRecord {
  EntityId id;
  std::optional<std::string> adshex;
  std::optional<std::string> flight_number;
  std::optional<std::string> flight_number_iata;
  std::optional<GeoPoint> location;
  std::optional<double> heading;
  std::optional<double> speed;
  std::optional<double> vertical_speed;
  std::optional<bool> is_on_ground;
  std::optional<Timestamp> date_issued;

  /// Registration without hyphens; the id key.
  std::string registration() const { return std::string(id.local_key()); }

  static AircraftRecord from_entity(const ContextEntity& entity);
  ContextEntity to_entity() const;
  ValidationReport check() const;
};

struct AircraftModelRecord {
  EntityId id;
  std::optional<std::string> iata_code;
  std::optional<std::string> icao_code;
  std::optional<double> length;
  std::optional<double> wingspan;
  std::optional<double> height;
  std::optional<double> maximum_speed;

  static AircraftModelRecord from_entity(const ContextEntity& entity);
  ValidationReport check() const;
};

struct AirlineRecord {
  EntityId id;
  std::optional<std::string> iata_code;
  std::optional<std::string> icao_code;
  std::optional<std::string> callsign;
  std::optional<std::string> name;
  std::optional<std::string> short_name;
  std::optional<std::string> country_address;

  static AirlineRecord from_entity(const ContextEntity& entity);
  ValidationReport check() const;
};

struct AirportRecord {
  EntityId id;
  std::optional<std::string> iata_code;
  std::optional<std::string> icao_code;
  std::optional<std::string> name;
  std::optional<std::string> address;
  std::optional<GeoPoint> location;

  static AirportRecord from_entity(const ContextEntity& entity);
  ValidationReport check() const;
};

enum class NotificationStatus { Active, Inactive, Completed, Unknown };

std::string_view to_string(NotificationStatus status);
std::optional<NotificationStatus> parse_notification_status(std::string_view text);

/// unknown<->active, active->inactive, inactive->active, active->completed. completed is terminal.
bool status_transition_allowed(NotificationStatus from, NotificationStatus to);

struct FlightNotificationRecord {
  EntityId id;
  std::string description;
  Timestamp date_issued{};
  Timestamp date_modified{};
  std::string issuer;
  NotificationStatus status = NotificationStatus::Unknown;
  std::optional<EntityId> ref_flight;
  /// Tasks that must be completed before this one. Not part of the standard data model; used by task plans.
  std::vector<EntityId> depends_on;

  static FlightNotificationRecord from_entity(const ContextEntity& entity);
  ContextEntity to_entity() const;
  ValidationReport check() const;
};

}  // namespace airtwin
