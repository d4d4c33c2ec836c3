#include "airtwin/transform.hpp"

#include <cmath>

namespace airtwin {

namespace {

// Divisors rather than multipliers: these reproduce the sample aircraft document to every printed digit.
constexpr double kFeetPerMetre = 3.28084;
constexpr double kKnotsPerKmh = 0.539957;
constexpr double kFpmPerMetreSecond = 196.85;

}  // namespace

UnitConversion UnitConversion::parse(std::string_view text) {
  if (text == "ft->m") return {Unit::Feet, Unit::Metres};
  if (text == "kn->km/h") return {Unit::Knots, Unit::KilometresPerHour};
  if (text == "ft/min->m/s") return {Unit::FeetPerMinute, Unit::MetresPerSecond};
  throw ConfigError("unknown unit conversion '" + std::string(text) + "'");
}

double UnitConversion::apply(double value) const {
  switch (from) {
    case Unit::Feet: return value / kFeetPerMetre;
    case Unit::Knots: return value / kKnotsPerKmh;
    case Unit::FeetPerMinute: return value / kFpmPerMetreSecond;
    default: return value;
  }
}

std::string UnitConversion::text() const {
  switch (from) {
    case Unit::Feet: return "ft->m";
    case Unit::Knots: return "kn->km/h";
    case Unit::FeetPerMinute: return "ft/min->m/s";
    default: return "?";
  }
}

double round_to(double value, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(value * scale) / scale;
}

namespace {

ValueSource parse_source(const Json& rule, const std::string& where, bool optional = false) {
  ValueSource s;
  int n = 0;
  if (const auto it = rule.find("from"); it != rule.end()) {
    ++n;
    if (it->is_string()) {
      s.paths.push_back(JsonPath::parse(it->get<std::string>()));
    } else if (it->is_array() && !it->empty()) {
      for (const auto& p : *it) {
        if (!p.is_string()) throw ConfigError(where + ".from must hold path strings");
        s.paths.push_back(JsonPath::parse(p.get<std::string>()));
      }
    } else {
      throw ConfigError(where + ".from must be a path or a non-empty list of paths");
    }
  }
  if (const auto it = rule.find("template"); it != rule.end()) {
    ++n;
    if (!it->is_string()) throw ConfigError(where + ".template must be a string");
    s.templ = Template::parse(it->get<std::string>());
  }
  if (const auto it = rule.find("constant"); it != rule.end()) {
    ++n;
    s.constant = *it;
  }
  if (n > 1) throw ConfigError(where + " sets more than one of from/template/constant");
  if (n == 0 && !optional) throw ConfigError(where + " needs one of from/template/constant");
  return s;
}

/// A component of a point given either as a bare path string or as a source object.
ValueSource parse_component(const Json& value, const std::string& where) {
  if (value.is_string()) return ValueSource{{JsonPath::parse(value.get<std::string>())}, std::nullopt, std::nullopt};
  if (value.is_object()) return parse_source(value, where);
  throw ConfigError(where + " must be a path or a source object");
}

std::optional<Json> resolve(const ValueSource& s, const Json& payload, const Scope& scope) {
  for (const auto& p : s.paths) {
    const Json* v = p.resolve(payload);
    if (v != nullptr && !v->is_null()) return std::optional<Json>(std::in_place, *v);
  }
  if (s.templ) {
    std::string text = s.templ->render(scope);
    if (text == "null") return std::nullopt;
    return Json(std::move(text));
  }
  if (s.constant && !s.constant->is_null()) return std::optional<Json>(std::in_place, *s.constant);
  return std::nullopt;
}

std::optional<double> to_number(const Json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const Json parsed = Json::parse(v.get_ref<const std::string&>(), nullptr, false);
    if (parsed.is_number()) return parsed.get<double>();
  }
  return std::nullopt;
}

Json coerce(const Json& v, ValueType type, const std::string& name) {
  switch (type) {
    case ValueType::Auto: return v;
    case ValueType::String: return attribute_text(v);
    case ValueType::Number: {
      const auto n = to_number(v);
      if (!n) throw RecordError(name + ": '" + attribute_text(v) + "' is not a number");
      return v.is_number() ? v : Json(*n);
    }
    case ValueType::Integer: {
      const auto n = to_number(v);
      if (!n || std::floor(*n) != *n) throw RecordError(name + ": '" + attribute_text(v) + "' is not an integer");
      return static_cast<std::int64_t>(*n);
    }
    case ValueType::Boolean: {
      if (v.is_boolean()) return v;
      if (v == "true") return true;
      if (v == "false") return false;
      throw RecordError(name + ": '" + attribute_text(v) + "' is not a boolean");
    }
  }
  return v;
}

Json convert_number(const Json& v, const AttributeRule& rule) {
  if (!rule.convert && !rule.round) return v;
  const auto n = to_number(v);
  if (!n) throw RecordError(rule.name + ": '" + attribute_text(v) + "' is not numeric");
  double x = rule.convert ? rule.convert->apply(*n) : *n;
  if (rule.round) x = round_to(x, *rule.round);
  return x;
}

std::optional<Timestamp> to_timestamp(const Json& v) {
  if (v.is_string()) {
    if (const auto t = try_parse_timestamp(v.get_ref<const std::string&>())) return t;
    const auto n = to_number(v);
    if (n) return from_epoch(static_cast<std::int64_t>(*n));
    return std::nullopt;
  }
  if (v.is_number()) return from_epoch(v.get<std::int64_t>());
  return std::nullopt;
}

ValueType parse_value_type(const std::string& text, const std::string& where) {
  if (text == "auto") return ValueType::Auto;
  if (text == "string") return ValueType::String;
  if (text == "number") return ValueType::Number;
  if (text == "integer") return ValueType::Integer;
  if (text == "boolean") return ValueType::Boolean;
  throw ConfigError(where + ".valueType '" + text + "' is not one of auto/string/number/integer/boolean");
}

void collect(const ValueSource& s, std::set<std::string>& out) {
  if (s.templ) out.insert(s.templ->references().begin(), s.templ->references().end());
}

}  // namespace

TransformSpec TransformSpec::from_json(const Json& spec) {
  if (!spec.is_object()) throw ConfigError("transform spec must be an object");
  TransformSpec t;
  if (spec.value("identity", false)) {
    t.identity_ = true;
    return t;
  }
  if (!spec.contains("entityType") || !spec["entityType"].is_string()) {
    throw ConfigError("transform spec needs a string entityType");
  }
  t.entity_type_ = spec["entityType"].get<std::string>();
  if (!spec.contains("id") || !spec["id"].is_object()) throw ConfigError("transform spec needs an id source object");
  t.id_ = parse_source(spec["id"], "id");
  if (!spec.contains("attributes") || !spec["attributes"].is_array()) {
    throw ConfigError("transform spec needs an attributes array");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < spec["attributes"].size(); ++i) {
    const Json& r = spec["attributes"][i];
    const std::string where = "attributes[" + std::to_string(i) + "]";
    if (!r.is_object() || !r.contains("name") || !r["name"].is_string()) throw ConfigError(where + " needs a name");
    AttributeRule rule;
    rule.name = r["name"].get<std::string>();
    if (rule.name == "id" || rule.name == "type" || rule.name == "@context") {
      throw ConfigError(where + " may not be named '" + rule.name + "'");
    }
    if (!seen.insert(rule.name).second) throw ConfigError(where + ": output '" + rule.name + "' is mapped twice");
    const std::string kind = r.value("kind", std::string("Property"));
    if (kind == "DateTime") {
      rule.date_time = true;
    } else if (const auto k = parse_attribute_kind(kind)) {
      rule.kind = *k;
    } else {
      throw ConfigError(where + ".kind '" + kind + "' is not Property/Relationship/GeoProperty/DateTime");
    }
    if (rule.kind == AttributeKind::GeoProperty) {
      if (!r.contains("point") || !r["point"].is_object() || !r["point"].contains("lat") || !r["point"].contains("lon")) {
        throw ConfigError(where + " GeoProperty needs point.lat and point.lon");
      }
      rule.lat = parse_component(r["point"]["lat"], where + ".point.lat");
      rule.lon = parse_component(r["point"]["lon"], where + ".point.lon");
      if (r["point"].contains("alt")) rule.alt = parse_component(r["point"]["alt"], where + ".point.alt");
    } else {
      rule.source = parse_source(r, where);
    }
    if (rule.kind == AttributeKind::Relationship) rule.target_type = r.value("entity", std::string());
    if (r.contains("convert")) rule.convert = UnitConversion::parse(r["convert"].get<std::string>());
    if (r.contains("round")) {
      if (!r["round"].is_number_integer() || r["round"].get<int>() < 0 || r["round"].get<int>() > 12) {
        throw ConfigError(where + ".round must be an integer in 0..12");
      }
      rule.round = r["round"].get<int>();
    }
    if (r.contains("valueType")) rule.value_type = parse_value_type(r["valueType"].get<std::string>(), where);
    if (r.contains("when")) rule.when = Expression::parse(r["when"].get<std::string>());
    rule.required = r.value("required", false);
    t.rules_.push_back(std::move(rule));
  }
  return t;
}

std::set<std::string> TransformSpec::references() const {
  std::set<std::string> out;
  collect(id_, out);
  for (const auto& r : rules_) {
    collect(r.source, out);
    for (const auto* c : {&r.lat, &r.lon, &r.alt}) {
      if (*c) collect(**c, out);
    }
    if (r.when) out.insert(r.when->references().begin(), r.when->references().end());
  }
  return out;
}

Json TransformSpec::apply(const Json& payload, const Scope& scope) const {
  if (identity_) return payload;
  const auto id_value = resolve(id_, payload, scope);
  if (!id_value) throw RecordError("no value for the entity id");
  EntityId id = [&] {
    try {
      return make_entity_id(entity_type_, attribute_text(*id_value));
    } catch (const ModelError& e) {
      throw RecordError(std::string("entity id: ") + e.what());
    }
  }();

  ContextEntity entity(id, entity_type_);
  for (const auto& rule : rules_) {
    if (rule.when && !rule.when->evaluate(scope)) continue;

    if (rule.kind == AttributeKind::GeoProperty) {
      const auto lat = resolve(*rule.lat, payload, scope);
      const auto lon = resolve(*rule.lon, payload, scope);
      if (!lat || !lon) {
        if (rule.required) throw RecordError("required attribute '" + rule.name + "' has no position");
        continue;
      }
      const auto la = to_number(*lat);
      const auto lo = to_number(*lon);
      if (!la || !lo) throw RecordError(rule.name + ": latitude/longitude are not numeric");
      GeoPoint point{*la, *lo, std::nullopt};
      if (rule.alt) {
        if (const auto alt = resolve(*rule.alt, payload, scope)) point.altitude = convert_number(*alt, rule).get<double>();
      }
      entity.set(rule.name, Attribute::geo_point(point));
      continue;
    }

    const auto value = resolve(rule.source, payload, scope);
    if (!value) {
      if (rule.required) throw RecordError("required attribute '" + rule.name + "' is missing");
      continue;
    }
    if (rule.date_time) {
      const auto t = to_timestamp(*value);
      if (!t) throw RecordError(rule.name + ": '" + attribute_text(*value) + "' is not a timestamp");
      entity.set(rule.name, Attribute::date_time(*t));
    } else if (rule.kind == AttributeKind::Relationship) {
      const std::string text = attribute_text(*value);
      if (rule.target_type.empty()) {
        const auto target = EntityId::try_parse(text);
        if (!target) throw RecordError(rule.name + ": '" + text + "' is not an entity id");
        entity.set(rule.name, Attribute::relationship(*target));
      } else {
        try {
          entity.set(rule.name, Attribute::relationship(make_entity_id(rule.target_type, text)));
        } catch (const ModelError& e) {
          throw RecordError(rule.name + ": " + e.what());
        }
      }
    } else {
      entity.set(rule.name, Attribute::property(convert_number(coerce(*value, rule.value_type, rule.name), rule)));
    }
  }
  return serialize_entity(entity);
}

}  // namespace airtwin
