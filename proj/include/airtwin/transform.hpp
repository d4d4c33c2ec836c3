#pragma once

#include <optional>
#include <string>
#include <vector>

#include "airtwin/flow.hpp"

namespace airtwin {

enum class Unit { Feet, Metres, Knots, KilometresPerHour, FeetPerMinute, MetresPerSecond };

/// "ft->m", "kn->km/h", "ft/min->m/s". Throws ConfigError for any other pair.
struct UnitConversion {
  Unit from;
  Unit to;

  static UnitConversion parse(std::string_view text);
  double apply(double value) const;
  std::string text() const;
};

/// Rounds half away from zero to `digits` decimals.
double round_to(double value, int digits);

/// Where a rule takes its value from. Exactly one of these is set.
struct ValueSource {
  std::vector<JsonPath> paths;         // first path that resolves to non-null wins
  std::optional<Template> templ;       // rendered against record attributes and variables
  std::optional<Json> constant;
};

enum class ValueType { Auto, String, Number, Integer, Boolean };

struct AttributeRule {
  std::string name;
  AttributeKind kind = AttributeKind::Property;
  /// Marks a Property whose value is an ISO 8601 DateTime.
  bool date_time = false;
  ValueSource source;
  /// Relationship target type; the value becomes make_entity_id(entity, value).
  std::string target_type;
  /// GeoProperty point components.
  std::optional<ValueSource> lat, lon, alt;
  std::optional<UnitConversion> convert;
  std::optional<int> round;
  ValueType value_type = ValueType::Auto;
  std::optional<Expression> when;
  bool required = false;
};

/// Declarative mapping from a feed document plus record attributes to an NGSI-LD entity document.
///
///   {"entityType": "Flight",
///    "id": {"from": ["$.id"]},
///    "attributes": [
///      {"name": "flightNumber", "from": "$.FlightNumber", "required": true},
///      {"name": "belongsToAirline", "kind": "Relationship", "entity": "Airline", "from": "$.AirlineIATA"},
///      {"name": "dateAIBT", "kind": "DateTime", "from": "$.AIBT"},
///      {"name": "speed", "from": "$.speed", "convert": "kn->km/h", "round": 6},
///      {"name": "location", "kind": "GeoProperty",
///       "point": {"lat": "$.lat", "lon": "$.lon", "alt": "$.altitude"}, "convert": "ft->m", "round": 6}]}
///
/// A value source is one of "from" (path or list of fallback paths), "template" or "constant".
/// Values that are null or unresolved omit the attribute unless "required" is set, which fails the record.
/// {"identity": true} passes the payload through untouched.
class TransformSpec {
 public:
  /// Throws ConfigError naming the first invalid rule.
  static TransformSpec from_json(const Json& spec);

  /// Throws RecordError when a required value is missing or a value cannot be coerced.
  Json apply(const Json& payload, const Scope& scope) const;

  bool identity() const noexcept { return identity_; }
  const std::string& entity_type() const noexcept { return entity_type_; }
  /// Names referenced by templates and conditions.
  std::set<std::string> references() const;

 private:
  bool identity_ = false;
  std::string entity_type_;
  ValueSource id_;
  std::vector<AttributeRule> rules_;
};

}  // namespace airtwin
