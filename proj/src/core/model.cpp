#include "airtwin/model.hpp"

#include <algorithm>
#include <cctype>

#include "airtwin/records.hpp"

namespace airtwin {

namespace {

constexpr std::string_view kUrnHead = "urn:ngsi-ld:";

bool is_alnum(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; });
}

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '_' || c == '.' || c == '~';
}

bool iequal(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

bool json_equal(const Json& a, const Json& b) {
  return nlohmann::json::parse(a.dump()) == nlohmann::json::parse(b.dump());
}

// ---- EntityId ---------------------------------------------------------------

std::optional<EntityId> EntityId::try_parse(std::string_view urn) {
  if (urn.substr(0, kUrnHead.size()) != kUrnHead) return std::nullopt;
  const std::string_view rest = urn.substr(kUrnHead.size());
  const auto colon = rest.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  const std::string_view type = rest.substr(0, colon);
  const std::string_view name = rest.substr(colon + 1);
  if (!is_alnum(type) || name.empty() || name.find(':') != std::string_view::npos) return std::nullopt;
  if (!std::all_of(name.begin(), name.end(), is_key_char)) return std::nullopt;
  const auto dash = name.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == name.size()) return std::nullopt;
  if (!iequal(name.substr(0, dash), type)) return std::nullopt;
  return EntityId(std::string(urn));
}

EntityId EntityId::parse(std::string_view urn) {
  if (auto id = try_parse(urn)) return *id;
  throw ModelError("malformed entity id '" + std::string(urn) + "'");
}

std::string_view EntityId::type() const {
  const std::string_view rest = std::string_view(urn_).substr(kUrnHead.size());
  return rest.substr(0, rest.find(':'));
}

std::string_view EntityId::name() const {
  const std::string_view rest = std::string_view(urn_).substr(kUrnHead.size());
  return rest.substr(rest.find(':') + 1);
}

std::string_view EntityId::local_key() const {
  const std::string_view n = name();
  return n.substr(n.find('-') + 1);
}

std::string id_prefix(std::string_view entity_type) {
  std::string out(entity_type);
  if (!out.empty()) out[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[0])));
  return out;
}

EntityId make_entity_id(std::string_view entity_type, std::string_view local_key) {
  if (!is_alnum(entity_type)) {
    throw ModelError("entity type must be non-empty alphanumeric, got '" + std::string(entity_type) + "'");
  }
  if (local_key.empty() || !std::all_of(local_key.begin(), local_key.end(), is_key_char)) {
    throw ModelError("entity key must be non-empty and free of URN-reserved characters, got '" +
                     std::string(local_key) + "'");
  }
  std::string urn;
  urn.reserve(kUrnHead.size() + 2 * entity_type.size() + local_key.size() + 2);
  urn.append(kUrnHead).append(entity_type).append(":").append(id_prefix(entity_type)).append("-").append(local_key);
  return EntityId::parse(urn);
}

// ---- Attribute --------------------------------------------------------------

std::string_view to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::Property: return "Property";
    case AttributeKind::Relationship: return "Relationship";
    case AttributeKind::GeoProperty: return "GeoProperty";
  }
  return "Property";
}

std::optional<AttributeKind> parse_attribute_kind(std::string_view text) {
  if (text == "Property") return AttributeKind::Property;
  if (text == "Relationship") return AttributeKind::Relationship;
  if (text == "GeoProperty") return AttributeKind::GeoProperty;
  return std::nullopt;
}

Json GeoPoint::to_geojson() const {
  Json coords = Json::array({latitude, longitude});
  if (altitude) coords.push_back(*altitude);
  Json out = Json::object();
  out["type"] = "Point";
  out["coordinates"] = std::move(coords);
  return out;
}

GeoPoint GeoPoint::from_geojson(const Json& value) {
  if (!value.is_object() || value.value("type", "") != "Point") throw ModelError("geometry is not a Point");
  const auto it = value.find("coordinates");
  if (it == value.end() || !it->is_array() || it->size() < 2 || it->size() > 3) {
    throw ModelError("Point coordinates must hold two or three numbers");
  }
  for (const auto& c : *it) {
    if (!c.is_number()) throw ModelError("Point coordinates must be numeric");
  }
  GeoPoint p;
  p.latitude = (*it)[0].get<double>();
  p.longitude = (*it)[1].get<double>();
  if (it->size() == 3) p.altitude = (*it)[2].get<double>();
  return p;
}

Attribute Attribute::property(Json value) { return Attribute{AttributeKind::Property, std::move(value), {}, {}}; }

Attribute Attribute::relationship(const EntityId& target) {
  return Attribute{AttributeKind::Relationship, target.str(), {}, {}};
}

Attribute Attribute::date_time(Timestamp t) {
  return Attribute{AttributeKind::Property, format_timestamp(t), std::string(kDateTimeType), {}};
}

Attribute Attribute::geo_point(const GeoPoint& point) {
  return Attribute{AttributeKind::GeoProperty, point.to_geojson(), {}, {}};
}

std::optional<Timestamp> Attribute::as_timestamp() const {
  if (!is_date_time() || !value.is_string()) return std::nullopt;
  return try_parse_timestamp(value.get_ref<const std::string&>());
}

bool operator==(const Attribute& a, const Attribute& b) {
  return a.kind == b.kind && a.value_type == b.value_type && a.observed_at == b.observed_at &&
         json_equal(a.value, b.value);
}

// ---- ContextEntity ----------------------------------------------------------

const std::vector<std::string>& default_context() {
  static const std::vector<std::string> urls{
      "https://smartdatamodels.org/context.jsonld",
      "https://uri.etsi.org/ngsi-ld/v1/ngsi-ld-core-context.jsonld",
  };
  return urls;
}

ContextEntity::ContextEntity(EntityId id, std::string type)
    : id_(std::move(id)), type_(std::move(type)), context_(default_context()) {}

const Attribute* ContextEntity::find(std::string_view name) const {
  for (const auto& [n, a] : attributes_) {
    if (n == name) return &a;
  }
  return nullptr;
}

void ContextEntity::set(std::string name, Attribute attribute) {
  for (auto& [n, a] : attributes_) {
    if (n == name) {
      a = std::move(attribute);
      return;
    }
  }
  attributes_.emplace_back(std::move(name), std::move(attribute));
}

bool ContextEntity::erase(std::string_view name) {
  const auto it = std::find_if(attributes_.begin(), attributes_.end(), [&](const auto& p) { return p.first == name; });
  if (it == attributes_.end()) return false;
  attributes_.erase(it);
  return true;
}

void ContextEntity::set_context(std::vector<std::string> context) {
  context_ = context.empty() ? default_context() : std::move(context);
}

bool operator==(const ContextEntity& a, const ContextEntity& b) {
  if (a.id_ != b.id_ || a.type_ != b.type_ || a.context_ != b.context_ || a.size() != b.size()) return false;
  for (const auto& [name, attr] : a.attributes_) {
    const Attribute* other = b.find(name);
    if (other == nullptr || !(*other == attr)) return false;
  }
  return true;
}

ContextEntity merge_entity(const ContextEntity& base, const ContextEntity& patch) {
  ContextEntity out = base;
  for (const auto& [name, attr] : patch.attributes()) out.set(name, attr);
  return out;
}

// ---- wire format ------------------------------------------------------------

Json serialize_entity(const ContextEntity& entity) {
  Json doc = Json::object();
  doc["id"] = entity.id().str();
  doc["type"] = entity.type();
  for (const auto& [name, attr] : entity.attributes()) {
    Json a = Json::object();
    if (attr.value_type) {
      Json typed = Json::object();
      typed["@type"] = *attr.value_type;
      typed["@value"] = attr.value;
      a["value"] = std::move(typed);
    } else {
      a["value"] = attr.value;
    }
    a["type"] = std::string(to_string(attr.kind));
    if (attr.observed_at) a["observedAt"] = format_timestamp(*attr.observed_at);
    doc[name] = std::move(a);
  }
  doc["@context"] = entity.context();
  return doc;
}

ContextEntity parse_entity(const Json& document) {
  if (!document.is_object()) throw ParseError("$", "entity document must be a JSON object");
  const auto id_it = document.find("id");
  if (id_it == document.end() || !id_it->is_string()) throw ParseError("id", "missing or not a string");
  const auto type_it = document.find("type");
  if (type_it == document.end() || !type_it->is_string()) throw ParseError("type", "missing or not a string");
  auto id = EntityId::try_parse(id_it->get_ref<const std::string&>());
  if (!id) throw ParseError("id", "malformed URN '" + id_it->get<std::string>() + "'");

  ContextEntity entity(*id, type_it->get<std::string>());
  for (auto it = document.begin(); it != document.end(); ++it) {
    const std::string& key = it.key();
    if (key == "id" || key == "type") continue;
    if (key == "@context") {
      std::vector<std::string> context;
      if (it->is_string()) {
        context.push_back(it->get<std::string>());
      } else if (it->is_array()) {
        for (const auto& url : *it) {
          if (!url.is_string()) throw ParseError("@context", "context entries must be strings");
          context.push_back(url.get<std::string>());
        }
      } else {
        throw ParseError("@context", "must be a string or an array of strings");
      }
      entity.set_context(std::move(context));
      continue;
    }
    if (!it->is_object()) throw ParseError(key, "attribute must be an object");
    const auto kind_it = it->find("type");
    if (kind_it == it->end() || !kind_it->is_string()) throw ParseError(key + ".type", "missing attribute kind");
    const auto kind = parse_attribute_kind(kind_it->get_ref<const std::string&>());
    if (!kind) throw ParseError(key + ".type", "unknown attribute kind '" + kind_it->get<std::string>() + "'");

    auto value_it = it->find("value");
    if (value_it == it->end() && *kind == AttributeKind::Relationship) value_it = it->find("object");
    if (value_it == it->end()) throw ParseError(key + ".value", "missing attribute value");

    Attribute attr;
    attr.kind = *kind;
    if (value_it->is_object() && value_it->contains("@type") && value_it->contains("@value")) {
      const auto& tag = (*value_it)["@type"];
      if (!tag.is_string()) throw ParseError(key + ".value.@type", "must be a string");
      attr.value_type = tag.get<std::string>();
      attr.value = (*value_it)["@value"];
    } else {
      attr.value = *value_it;
    }
    if (const auto obs = it->find("observedAt"); obs != it->end()) {
      if (!obs->is_string()) throw ParseError(key + ".observedAt", "must be a timestamp string");
      auto t = try_parse_timestamp(obs->get_ref<const std::string&>());
      if (!t) throw ParseError(key + ".observedAt", "not an ISO 8601 timestamp");
      attr.observed_at = t;
    }
    entity.set(key, std::move(attr));
  }
  return entity;
}

// ---- validation -------------------------------------------------------------

Json to_json(const ValidationReport& report) {
  Json out = Json::array();
  for (const auto& v : report) {
    Json item = Json::object();
    item["rule"] = v.rule;
    item["detail"] = v.detail;
    out.push_back(std::move(item));
  }
  return out;
}

namespace {

template <typename Record>
void append_typed(const ContextEntity& entity, ValidationReport& report) {
  try {
    auto more = Record::from_entity(entity).check();
    report.insert(report.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  } catch (const ModelError& e) {
    report.push_back({"attribute shape", e.what()});
  }
}

}  // namespace

ValidationReport validate_entity(const ContextEntity& entity) {
  ValidationReport report;
  if (entity.id().type() != entity.type()) {
    report.push_back({"id type", "id segment '" + std::string(entity.id().type()) + "' differs from type '" +
                                     entity.type() + "'"});
  }
  for (const auto& [name, attr] : entity.attributes()) {
    if (attr.kind == AttributeKind::Relationship &&
        !(attr.value.is_string() && EntityId::try_parse(attr.value.get_ref<const std::string&>()))) {
      report.push_back({"relationship target", name + " does not reference a valid entity id"});
    }
    if (attr.is_date_time() && !attr.as_timestamp()) {
      report.push_back({"datetime format", name + " is not an ISO 8601 UTC timestamp"});
    }
    if (attr.kind == AttributeKind::GeoProperty) {
      try {
        (void)GeoPoint::from_geojson(attr.value);
      } catch (const ModelError& e) {
        report.push_back({"geometry", name + ": " + e.what()});
      }
    }
  }
  if (!report.empty()) return report;

  const std::string& type = entity.type();
  if (type == "Flight") append_typed<FlightRecord>(entity, report);
  else if (type == "Aircraft") append_typed<AircraftRecord>(entity, report);
  else if (type == "AircraftModel") append_typed<AircraftModelRecord>(entity, report);
  else if (type == "Airline") append_typed<AirlineRecord>(entity, report);
  else if (type == "Airport") append_typed<AirportRecord>(entity, report);
  else if (type == "FlightNotification") append_typed<FlightNotificationRecord>(entity, report);
  return report;
}

}  // namespace airtwin
