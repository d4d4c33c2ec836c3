#include "airtwin/records.hpp"

#include <array>
#include <cmath>

namespace airtwin {

namespace {

constexpr std::array<std::string_view, kMilestoneCount> kMilestoneNames{
    "SOBT", "EOBT", "AOBT", "TOBT", "ETOT", "ATOT", "CTOT", "TTOT", "ELDT", "ALDT", "TLDT", "SIBT", "EIBT", "AIBT"};
constexpr std::array<std::string_view, kIntervalCount> kIntervalNames{"EXOT", "AXOT", "EXIT", "AXIT",
                                                                      "STTT", "ETTT", "ATTT"};

std::string_view strip_date_prefix(std::string_view text) {
  return text.substr(0, 4) == "date" ? text.substr(4) : text;
}

std::optional<std::string> get_string(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  if (!a->value.is_string()) throw ModelError(std::string(name) + " must be a string");
  return a->value.get<std::string>();
}

std::optional<double> get_number(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  if (!a->value.is_number()) throw ModelError(std::string(name) + " must be numeric");
  return a->value.get<double>();
}

std::optional<std::int64_t> get_integer(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  if (a->value.is_number_integer()) return a->value.get<std::int64_t>();
  if (a->value.is_number_float()) {
    const double d = a->value.get<double>();
    if (std::floor(d) == d) return static_cast<std::int64_t>(d);
  }
  throw ModelError(std::string(name) + " must be an integer");
}

std::optional<bool> get_bool(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  if (!a->value.is_boolean()) throw ModelError(std::string(name) + " must be a boolean");
  return a->value.get<bool>();
}

std::optional<Timestamp> get_time(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  if (!a->value.is_string()) throw ModelError(std::string(name) + " must be a DateTime");
  auto t = try_parse_timestamp(a->value.get_ref<const std::string&>());
  if (!t) throw ModelError(std::string(name) + " is not an ISO 8601 timestamp");
  return t;
}

std::optional<EntityId> get_relationship(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  if (!a->value.is_string()) throw ModelError(std::string(name) + " must reference an entity id");
  auto id = EntityId::try_parse(a->value.get_ref<const std::string&>());
  if (!id) throw ModelError(std::string(name) + " must reference an entity id");
  return id;
}

std::optional<GeoPoint> get_point(const ContextEntity& e, std::string_view name) {
  const Attribute* a = e.find(name);
  if (a == nullptr) return std::nullopt;
  return GeoPoint::from_geojson(a->value);
}

template <typename T>
void put(ContextEntity& e, std::string_view name, const std::optional<T>& v) {
  if (v) e.set(std::string(name), Attribute::property(*v));
}

// Whole numbers are written without a fraction, as the feeds publish them.
void put(ContextEntity& e, std::string_view name, const std::optional<double>& v) {
  if (!v) return;
  if (std::floor(*v) == *v && std::fabs(*v) < 9.0e15) {
    e.set(std::string(name), Attribute::property(static_cast<std::int64_t>(*v)));
  } else {
    e.set(std::string(name), Attribute::property(*v));
  }
}

void put_time(ContextEntity& e, std::string_view name, const std::optional<Timestamp>& t) {
  if (t) e.set(std::string(name), Attribute::date_time(*t));
}

void put_rel(ContextEntity& e, std::string_view name, const std::optional<EntityId>& id) {
  if (id) e.set(std::string(name), Attribute::relationship(*id));
}

void require_type(const ContextEntity& e, std::string_view type) {
  if (e.type() != type) throw ModelError("expected a " + std::string(type) + " entity, got " + e.type());
}

void check_point(const GeoPoint& p, ValidationReport& report) {
  if (!(p.latitude >= -90.0 && p.latitude <= 90.0)) report.push_back({"latitude range", "latitude outside [-90, 90]"});
  if (!(p.longitude >= -180.0 && p.longitude <= 180.0)) {
    report.push_back({"longitude range", "longitude outside [-180, 180]"});
  }
}

}  // namespace

// ---- enums ------------------------------------------------------------------

std::string_view to_string(FlightState state) {
  switch (state) {
    case FlightState::Scheduled: return "scheduled";
    case FlightState::Active: return "active";
    case FlightState::Unknown: return "unknown";
    case FlightState::Redirected: return "redirected";
    case FlightState::Landed: return "landed";
    case FlightState::Diverted: return "diverted";
    case FlightState::Cancelled: return "cancelled";
  }
  return "unknown";
}

std::optional<FlightState> parse_flight_state(std::string_view text) {
  for (auto s : {FlightState::Scheduled, FlightState::Active, FlightState::Unknown, FlightState::Redirected,
                 FlightState::Landed, FlightState::Diverted, FlightState::Cancelled}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::string_view to_string(Milestone m) { return kMilestoneNames[static_cast<std::size_t>(m)]; }
std::string_view to_string(Interval i) { return kIntervalNames[static_cast<std::size_t>(i)]; }

std::optional<Milestone> parse_milestone(std::string_view text) {
  text = strip_date_prefix(text);
  for (std::size_t i = 0; i < kMilestoneCount; ++i) {
    if (kMilestoneNames[i] == text) return static_cast<Milestone>(i);
  }
  return std::nullopt;
}

std::optional<Interval> parse_interval(std::string_view text) {
  text = strip_date_prefix(text);
  for (std::size_t i = 0; i < kIntervalCount; ++i) {
    if (kIntervalNames[i] == text) return static_cast<Interval>(i);
  }
  return std::nullopt;
}

std::string attribute_name(Milestone m) { return "date" + std::string(to_string(m)); }
std::string attribute_name(Interval i) { return "date" + std::string(to_string(i)); }

std::string_view to_string(NotificationStatus status) {
  switch (status) {
    case NotificationStatus::Active: return "active";
    case NotificationStatus::Inactive: return "inactive";
    case NotificationStatus::Completed: return "completed";
    case NotificationStatus::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<NotificationStatus> parse_notification_status(std::string_view text) {
  for (auto s : {NotificationStatus::Active, NotificationStatus::Inactive, NotificationStatus::Completed,
                 NotificationStatus::Unknown}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

bool status_transition_allowed(NotificationStatus from, NotificationStatus to) {
  using S = NotificationStatus;
  switch (from) {
    case S::Unknown: return to == S::Active;
    case S::Active: return to == S::Unknown || to == S::Inactive || to == S::Completed;
    case S::Inactive: return to == S::Active;
    case S::Completed: return false;
  }
  return false;
}

// ---- Flight -----------------------------------------------------------------

FlightRecord FlightRecord::from_entity(const ContextEntity& e) {
  require_type(e, "Flight");
  FlightRecord f{e.id()};
  f.flight_number = get_string(e, "flightNumber");
  f.flight_number_iata = get_string(e, "flightNumberIATA");
  f.flight_number_icao = get_string(e, "flightNumberICAO");
  if (auto s = get_string(e, "state")) {
    f.state = parse_flight_state(*s);
    if (!f.state) throw ModelError("state '" + *s + "' is not a flight state");
  }
  f.passenger_count = get_integer(e, "passengerCount");
  f.date_departure = get_time(e, "dateDeparture");
  f.date_arrival = get_time(e, "dateArrival");
  f.date_scheduled = get_time(e, "dateScheduled");
  for (std::size_t i = 0; i < kMilestoneCount; ++i) {
    f.times[i] = get_time(e, attribute_name(static_cast<Milestone>(i)));
  }
  for (std::size_t i = 0; i < kIntervalCount; ++i) {
    f.intervals[i] = get_integer(e, attribute_name(static_cast<Interval>(i)));
  }
  f.stand_code = get_string(e, "standCode");
  f.gate_code = get_string(e, "gateCode");
  f.has_aircraft = get_relationship(e, "hasAircraft");
  f.has_aircraft_model = get_relationship(e, "hasAircraftModel");
  f.departs_from_airport = get_relationship(e, "departsFromAirport");
  f.arrives_to_airport = get_relationship(e, "arrivesToAirport");
  f.belongs_to_airline = get_relationship(e, "belongsToAirline");
  return f;
}

ContextEntity FlightRecord::to_entity() const {
  ContextEntity e(id, "Flight");
  put(e, "flightNumber", flight_number);
  put(e, "flightNumberIATA", flight_number_iata);
  put(e, "flightNumberICAO", flight_number_icao);
  if (state) e.set("state", Attribute::property(std::string(to_string(*state))));
  put(e, "passengerCount", passenger_count);
  put_rel(e, "belongsToAirline", belongs_to_airline);
  put_rel(e, "departsFromAirport", departs_from_airport);
  put_rel(e, "arrivesToAirport", arrives_to_airport);
  put_rel(e, "hasAircraft", has_aircraft);
  put_rel(e, "hasAircraftModel", has_aircraft_model);
  put(e, "standCode", stand_code);
  put(e, "gateCode", gate_code);
  put_time(e, "dateDeparture", date_departure);
  put_time(e, "dateArrival", date_arrival);
  for (std::size_t i = 0; i < kMilestoneCount; ++i) {
    put_time(e, attribute_name(static_cast<Milestone>(i)), times[i]);
  }
  for (std::size_t i = 0; i < kIntervalCount; ++i) {
    put(e, attribute_name(static_cast<Interval>(i)), intervals[i]);
  }
  put_time(e, "dateScheduled", date_scheduled);
  return e;
}

ValidationReport FlightRecord::check() const {
  ValidationReport report;
  if (flight_number && flight_number->empty()) report.push_back({"flight number", "flightNumber is empty"});
  if (passenger_count && *passenger_count < 0) {
    report.push_back({"passenger count", "passengerCount is negative"});
  }

  // The chain is checked over whichever actuals are present.
  std::optional<Timestamp> previous;
  Milestone previous_name = Milestone::AOBT;
  for (Milestone m : kActualChain) {
    const auto& t = time(m);
    if (!t) continue;
    if (previous && *t < *previous) {
      report.push_back({"time ordering", attribute_name(m) + " precedes " + attribute_name(previous_name)});
      break;
    }
    previous = t;
    previous_name = m;
  }

  for (std::size_t i = 0; i < kIntervalCount; ++i) {
    if (intervals[i] && *intervals[i] < 0) {
      report.push_back({"negative duration", attribute_name(static_cast<Interval>(i)) + " is negative"});
    }
  }
  const auto derived = [&](Interval which, Milestone from, Milestone to) {
    const auto& stored = interval(which);
    if (stored && time(from) && time(to) && *stored != (*time(to) - *time(from)).count()) {
      report.push_back({"derived duration mismatch", attribute_name(which) + " differs from " + attribute_name(to) +
                                                         " - " + attribute_name(from)});
    }
  };
  derived(Interval::AXOT, Milestone::AOBT, Milestone::ATOT);
  derived(Interval::AXIT, Milestone::ALDT, Milestone::AIBT);
  return report;
}

// ---- Aircraft ---------------------------------------------------------------

AircraftRecord AircraftRecord::from_entity(const ContextEntity& e) {
  require_type(e, "Aircraft");
  AircraftRecord a{e.id()};
  a.adshex = get_string(e, "adshex");
  a.flight_number = get_string(e, "flightNumber");
  a.flight_number_iata = get_string(e, "flightNumberIATA");
  a.location = get_point(e, "location");
  a.heading = get_number(e, "heading");
  a.speed = get_number(e, "speed");
  a.vertical_speed = get_number(e, "verticalSpeed");
  a.is_on_ground = get_bool(e, "isOnGround");
  a.date_issued = get_time(e, "dateIssued");
  return a;
}

ContextEntity AircraftRecord::to_entity() const {
  ContextEntity e(id, "Aircraft");
  put(e, "flightNumber", flight_number);
  put(e, "flightNumberIATA", flight_number_iata);
  put(e, "adshex", adshex);
  if (location) e.set("location", Attribute::geo_point(*location));
  put(e, "heading", heading);
  put(e, "speed", speed);
  put(e, "verticalSpeed", vertical_speed);
  put(e, "isOnGround", is_on_ground);
  put_time(e, "dateIssued", date_issued);
  return e;
}

ValidationReport AircraftRecord::check() const {
  ValidationReport report;
  if (registration().find('-') != std::string::npos) {
    report.push_back({"registration", "registration must not contain hyphens"});
  }
  if (location) check_point(*location, report);
  if (heading && !(*heading >= 0.0 && *heading < 360.0)) report.push_back({"heading range", "heading outside [0, 360)"});
  if (speed && *speed < 0.0) report.push_back({"speed range", "speed is negative"});
  return report;
}

// ---- AircraftModel / Airline / Airport --------------------------------------

AircraftModelRecord AircraftModelRecord::from_entity(const ContextEntity& e) {
  require_type(e, "AircraftModel");
  AircraftModelRecord m{e.id()};
  m.iata_code = get_string(e, "iataCode");
  m.icao_code = get_string(e, "icaoCode");
  m.length = get_number(e, "length");
  m.wingspan = get_number(e, "wingspan");
  m.height = get_number(e, "height");
  m.maximum_speed = get_number(e, "maximumSpeed");
  return m;
}

ValidationReport AircraftModelRecord::check() const {
  ValidationReport report;
  const auto positive = [&](const std::optional<double>& v, const char* name) {
    if (v && !(*v > 0.0)) report.push_back({"dimension range", std::string(name) + " must be positive"});
  };
  positive(length, "length");
  positive(wingspan, "wingspan");
  positive(height, "height");
  positive(maximum_speed, "maximumSpeed");
  return report;
}

AirlineRecord AirlineRecord::from_entity(const ContextEntity& e) {
  require_type(e, "Airline");
  AirlineRecord a{e.id()};
  a.iata_code = get_string(e, "iataCode");
  a.icao_code = get_string(e, "icaoCode");
  a.callsign = get_string(e, "callsign");
  a.name = get_string(e, "name");
  a.short_name = get_string(e, "shortName");
  a.country_address = get_string(e, "countryAddress");
  return a;
}

ValidationReport AirlineRecord::check() const {
  if (!iata_code && !icao_code) return {{"designator", "an airline needs an IATA or ICAO code"}};
  return {};
}

AirportRecord AirportRecord::from_entity(const ContextEntity& e) {
  require_type(e, "Airport");
  AirportRecord a{e.id()};
  a.iata_code = get_string(e, "iataCode");
  a.icao_code = get_string(e, "icaoCode");
  a.name = get_string(e, "name");
  a.address = get_string(e, "address");
  a.location = get_point(e, "location");
  return a;
}

ValidationReport AirportRecord::check() const {
  ValidationReport report;
  if (!iata_code && !icao_code) report.push_back({"designator", "an airport needs an IATA or ICAO code"});
  if (location) check_point(*location, report);
  return report;
}

// ---- FlightNotification -----------------------------------------------------

FlightNotificationRecord FlightNotificationRecord::from_entity(const ContextEntity& e) {
  require_type(e, "FlightNotification");
  FlightNotificationRecord n{e.id()};
  n.description = get_string(e, "description").value_or("");
  n.issuer = get_string(e, "issuer").value_or("");
  const auto issued = get_time(e, "dateIssued");
  const auto modified = get_time(e, "dateModified");
  if (!issued) throw ModelError("dateIssued is required");
  n.date_issued = *issued;
  n.date_modified = modified.value_or(*issued);
  if (auto s = get_string(e, "status")) {
    auto status = parse_notification_status(*s);
    if (!status) throw ModelError("status '" + *s + "' is not a notification status");
    n.status = *status;
  }
  n.ref_flight = get_relationship(e, "refFlight");
  if (const Attribute* deps = e.find("dependsOn")) {
    if (!deps->value.is_array()) throw ModelError("dependsOn must be a list of entity ids");
    for (const auto& d : deps->value) {
      auto id = d.is_string() ? EntityId::try_parse(d.get_ref<const std::string&>()) : std::nullopt;
      if (!id) throw ModelError("dependsOn must be a list of entity ids");
      n.depends_on.push_back(*id);
    }
  }
  return n;
}

ContextEntity FlightNotificationRecord::to_entity() const {
  ContextEntity e(id, "FlightNotification");
  e.set("description", Attribute::property(description));
  e.set("dateIssued", Attribute::date_time(date_issued));
  e.set("dateModified", Attribute::date_time(date_modified));
  e.set("issuer", Attribute::property(issuer));
  e.set("status", Attribute::property(std::string(to_string(status))));
  if (ref_flight) e.set("refFlight", Attribute::relationship(*ref_flight));
  if (!depends_on.empty()) {
    Json deps = Json::array();
    for (const auto& d : depends_on) deps.push_back(d.str());
    e.set("dependsOn", Attribute::property(std::move(deps)));
  }
  return e;
}

ValidationReport FlightNotificationRecord::check() const {
  ValidationReport report;
  if (date_modified < date_issued) report.push_back({"modification order", "dateModified precedes dateIssued"});
  return report;
}

}  // namespace airtwin
