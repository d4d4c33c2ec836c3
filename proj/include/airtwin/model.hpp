#pragma once

#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "airtwin/time.hpp"

namespace airtwin {

/// Documents keep key insertion order so emitted entities match the wire listings byte for byte.
using Json = nlohmann::ordered_json;

/// Structural equality that ignores object key order.
bool json_equal(const Json& a, const Json& b);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a wire document cannot be read as an entity. `field()` names the offending member.
class ParseError : public ModelError {
 public:
  ParseError(std::string field, const std::string& message)
      : ModelError(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// "urn:ngsi-ld:<Type>:<typePrefix>-<key>"
class EntityId {
 public:
  static EntityId parse(std::string_view urn);
  static std::optional<EntityId> try_parse(std::string_view urn);

  const std::string& str() const noexcept { return urn_; }
  /// Third URN segment.
  std::string_view type() const;
  /// Fourth URN segment, e.g. "flight-1234".
  std::string_view name() const;
  /// Fourth segment after the "<typePrefix>-" head, e.g. "1234".
  std::string_view local_key() const;

  friend auto operator<=>(const EntityId&, const EntityId&) = default;
  friend bool operator==(const EntityId&, const EntityId&) = default;

 private:
  explicit EntityId(std::string urn) : urn_(std::move(urn)) {}
  std::string urn_;
};

/// Lower-camel form of a type name used as the id head: "Flight" -> "flight", "AircraftModel" -> "aircraftModel".
std::string id_prefix(std::string_view entity_type);

/// Throws ModelError when the type is not alphanumeric or the key holds URN-reserved characters.
EntityId make_entity_id(std::string_view entity_type, std::string_view local_key);

enum class AttributeKind { Property, Relationship, GeoProperty };

std::string_view to_string(AttributeKind kind);
std::optional<AttributeKind> parse_attribute_kind(std::string_view text);

inline constexpr std::string_view kDateTimeType = "DateTime";

/// Point with coordinates in the order the position listing uses: latitude, longitude, altitude (m).
struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<double> altitude;

  Json to_geojson() const;
  static GeoPoint from_geojson(const Json& value);
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct Attribute {
  AttributeKind kind = AttributeKind::Property;
  Json value;
  /// "@type" tag of a typed value, e.g. "DateTime".
  std::optional<std::string> value_type;
  std::optional<Timestamp> observed_at;

  static Attribute property(Json value);
  static Attribute relationship(const EntityId& target);
  static Attribute date_time(Timestamp t);
  static Attribute geo_point(const GeoPoint& point);

  bool is_date_time() const { return value_type && *value_type == kDateTimeType; }
  std::optional<Timestamp> as_timestamp() const;

  friend bool operator==(const Attribute& a, const Attribute& b);
};

const std::vector<std::string>& default_context();

class ContextEntity {
 public:
  using AttributeList = std::vector<std::pair<std::string, Attribute>>;

  ContextEntity(EntityId id, std::string type);

  const EntityId& id() const noexcept { return id_; }
  const std::string& type() const noexcept { return type_; }

  const Attribute* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  /// Replaces in place when the name exists, otherwise appends.
  void set(std::string name, Attribute attribute);
  bool erase(std::string_view name);

  const AttributeList& attributes() const noexcept { return attributes_; }
  std::size_t size() const noexcept { return attributes_.size(); }

  const std::vector<std::string>& context() const noexcept { return context_; }
  /// An empty list resets to the default context.
  void set_context(std::vector<std::string> context);

  friend bool operator==(const ContextEntity& a, const ContextEntity& b);

 private:
  EntityId id_;
  std::string type_;
  AttributeList attributes_;
  std::vector<std::string> context_;
};

Json serialize_entity(const ContextEntity& entity);
ContextEntity parse_entity(const Json& document);

struct Violation {
  std::string rule;
  std::string detail;
};
using ValidationReport = std::vector<Violation>;

Json to_json(const ValidationReport& report);

/// Generic attribute checks plus the typed checks of the record matching `entity.type()`.
ValidationReport validate_entity(const ContextEntity& entity);

/// Applies `patch` onto `base` attribute by attribute; attributes absent from the patch are kept.
ContextEntity merge_entity(const ContextEntity& base, const ContextEntity& patch);

}  // namespace airtwin
