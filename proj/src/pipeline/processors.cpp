#include <algorithm>
#include <cctype>

#include "airtwin/pipeline.hpp"

namespace airtwin {

StageResult StageResult::pass(FlowRecord r) {
  StageResult s;
  s.records.push_back(std::move(r));
  return s;
}

StageResult StageResult::drop(std::string reason) { return StageResult{Outcome::Dropped, {}, std::move(reason)}; }

StageResult StageResult::fail(std::string reason) { return StageResult{Outcome::Failed, {}, std::move(reason)}; }

StageResult SplitProcessor::process(FlowRecord record) const {
  const Json* target = path_.resolve(record.payload);
  StageResult result;
  if (mode_ == Mode::Array) {
    if (target == nullptr || !target->is_array()) return StageResult::fail(path_.text() + " is not an array");
    for (std::size_t i = 0; i < target->size(); ++i) {
      FlowRecord child{(*target)[i], record.attributes, record.source, record.sequence};
      child.sequence.push_back(i);
      result.records.push_back(std::move(child));
    }
  } else {
    if (target == nullptr || !target->is_object()) return StageResult::fail(path_.text() + " is not an object");
    std::size_t i = 0;
    for (const auto& [key, value] : target->items()) {
      FlowRecord child{value, record.attributes, record.source, record.sequence};
      child.attributes["split.key"] = key;
      child.sequence.push_back(i++);
      result.records.push_back(std::move(child));
    }
  }
  return result;
}

StageResult EvaluateProcessor::process(FlowRecord record) const {
  for (const auto& [name, path] : extractions_) {
    const Json* v = path.resolve(record.payload);
    record.attributes[name] = v ? attribute_text(*v) : "null";
  }
  return StageResult::pass(std::move(record));
}

std::set<std::string> EvaluateProcessor::produces() const {
  std::set<std::string> out;
  for (const auto& [name, path] : extractions_) out.insert(name);
  return out;
}

StageResult RouteProcessor::process(FlowRecord record) const {
  if (!predicate_.evaluate(Scope{&record.attributes, &variables_})) {
    return StageResult::drop("predicate false: " + predicate_.text());
  }
  return StageResult::pass(std::move(record));
}

StageResult UpdateProcessor::process(FlowRecord record) const {
  for (const auto& rule : rules_) {
    const Scope scope{&record.attributes, &variables_};
    if (rule.when && !rule.when->evaluate(scope)) continue;
    const auto current = record.attributes.find(rule.target);
    const bool present = current != record.attributes.end() && current->second != "null";
    switch (rule.kind) {
      case UpdateRule::Kind::Set:
        record.attributes[rule.target] = rule.value->render(scope);
        break;
      case UpdateRule::Kind::Strip: {
        if (!present) break;
        std::string text = current->second;
        std::erase_if(text, [&](char c) { return rule.chars.find(c) != std::string::npos; });
        record.attributes[rule.into] = std::move(text);
        break;
      }
      case UpdateRule::Kind::SplitPrefix: {
        if (!present) break;
        const std::string text = current->second;
        if (text.size() <= rule.length) {
          return StageResult::fail(rule.target + " '" + text + "' is too short to split a " +
                                   std::to_string(rule.length) + "-character prefix");
        }
        if (!rule.into.empty()) record.attributes[rule.into] = text.substr(0, rule.length);
        record.attributes[rule.target] = text.substr(rule.length);
        break;
      }
      case UpdateRule::Kind::EpochToIso: {
        const std::string text = present ? current->second : "null";
        const bool numeric = !text.empty() && std::all_of(text.begin(), text.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c)) != 0;
        });
        if (!numeric) return StageResult::fail(rule.target + " '" + text + "' is not an epoch timestamp");
        record.attributes[rule.into] = format_timestamp(from_epoch(std::stoll(text)));
        break;
      }
    }
  }
  return StageResult::pass(std::move(record));
}

std::set<std::string> UpdateProcessor::produces() const {
  std::set<std::string> out;
  for (const auto& r : rules_) {
    out.insert(r.kind == UpdateRule::Kind::Set ? r.target : r.into);
    if (r.kind == UpdateRule::Kind::SplitPrefix) out.insert(r.target);
  }
  out.erase("");
  return out;
}

std::set<std::string> UpdateProcessor::consumes() const {
  // Names produced by an earlier rule of the same stage are satisfied locally.
  std::set<std::string> out;
  std::set<std::string> local;
  auto need = [&](const std::string& n) {
    if (!local.count(n)) out.insert(n);
  };
  for (const auto& r : rules_) {
    if (r.when) {
      for (const auto& n : r.when->references()) need(n);
    }
    if (r.value) {
      for (const auto& n : r.value->references()) need(n);
    }
    if (r.kind != UpdateRule::Kind::Set) need(r.target);
    local.insert(r.kind == UpdateRule::Kind::Set ? r.target : r.into);
    if (r.kind == UpdateRule::Kind::SplitPrefix) local.insert(r.target);
  }
  return out;
}

StageResult TransformProcessor::process(FlowRecord record) const {
  record.payload = spec_.apply(record.payload, Scope{&record.attributes, &variables_});
  return StageResult::pass(std::move(record));
}

std::string strip_forbidden(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (const char c : text) {
    if (kForbiddenChars.find(c) == std::string_view::npos) out += c;
  }
  return out;
}

namespace {

void sanitize_value(Json& v, std::string& bad_name) {
  if (v.is_string()) {
    v = strip_forbidden(v.get_ref<const std::string&>());
  } else if (v.is_array()) {
    for (auto& item : v) sanitize_value(item, bad_name);
  } else if (v.is_object()) {
    for (auto& [key, item] : v.items()) {
      if (bad_name.empty() && strip_forbidden(key) != key) bad_name = key;
      sanitize_value(item, bad_name);
    }
  }
}

}  // namespace

StageResult SanitizeProcessor::process(FlowRecord record) const {
  std::string bad_name;
  sanitize_value(record.payload, bad_name);
  if (!bad_name.empty()) return StageResult::fail("member name '" + bad_name + "' holds characters not allowed in NGSI-LD");
  return StageResult::pass(std::move(record));
}

// ---- factory ----------------------------------------------------------------

namespace {

std::string require_string(const Json& params, const std::string& key, const std::string& where) {
  if (!params.contains(key) || !params[key].is_string() || params[key].get<std::string>().empty()) {
    throw ConfigError(where + ": '" + key + "' must be a non-empty string");
  }
  return params[key].get<std::string>();
}

UpdateRule parse_update_rule(const Json& r, const std::string& where) {
  if (!r.is_object()) throw ConfigError(where + " must be an object");
  UpdateRule rule{};
  if (r.contains("set")) {
    rule.kind = UpdateRule::Kind::Set;
    rule.target = require_string(r, "set", where);
    if (!r.contains("value") || !r["value"].is_string()) throw ConfigError(where + ": 'value' template is required");
    rule.value = Template::parse(r["value"].get<std::string>());
  } else if (r.contains("strip")) {
    rule.kind = UpdateRule::Kind::Strip;
    rule.target = require_string(r, "strip", where);
    rule.chars = require_string(r, "chars", where);
    rule.into = r.value("into", rule.target);
  } else if (r.contains("splitPrefix")) {
    rule.kind = UpdateRule::Kind::SplitPrefix;
    rule.target = require_string(r, "splitPrefix", where);
    if (!r.contains("length") || !r["length"].is_number_unsigned() || r["length"].get<std::size_t>() == 0) {
      throw ConfigError(where + ": 'length' must be a positive integer");
    }
    rule.length = r["length"].get<std::size_t>();
    rule.into = r.value("prefixInto", std::string());
  } else if (r.contains("epochToIso")) {
    rule.kind = UpdateRule::Kind::EpochToIso;
    rule.target = require_string(r, "epochToIso", where);
    rule.into = r.value("into", rule.target);
  } else {
    throw ConfigError(where + " must be one of set/strip/splitPrefix/epochToIso");
  }
  if (r.contains("when")) {
    if (!r["when"].is_string()) throw ConfigError(where + ": 'when' must be an expression string");
    rule.when = Expression::parse(r["when"].get<std::string>());
  }
  return rule;
}

}  // namespace

std::unique_ptr<Processor> make_processor(const StageSpec& spec, const std::map<std::string, std::string>& variables) {
  const std::string where = "stage '" + spec.name + "'";
  const Json& p = spec.params;
  if (spec.kind == "split") {
    const std::string mode = p.value("mode", std::string("array"));
    if (mode != "array" && mode != "object") throw ConfigError(where + ": mode must be 'array' or 'object'");
    return std::make_unique<SplitProcessor>(JsonPath::parse(p.value("path", std::string("$"))),
                                            mode == "array" ? SplitProcessor::Mode::Array : SplitProcessor::Mode::Object);
  }
  if (spec.kind == "evaluate") {
    if (!p.contains("extract") || !p["extract"].is_object() || p["extract"].empty()) {
      throw ConfigError(where + ": 'extract' must map attribute names to paths");
    }
    std::vector<std::pair<std::string, JsonPath>> extractions;
    for (const auto& [name, path] : p["extract"].items()) {
      if (!path.is_string()) throw ConfigError(where + ": path for '" + name + "' must be a string");
      extractions.emplace_back(name, JsonPath::parse(path.get<std::string>()));
    }
    return std::make_unique<EvaluateProcessor>(std::move(extractions));
  }
  if (spec.kind == "route") {
    return std::make_unique<RouteProcessor>(Expression::parse(require_string(p, "predicate", where)), variables);
  }
  if (spec.kind == "update") {
    if (!p.contains("rules") || !p["rules"].is_array()) throw ConfigError(where + ": 'rules' must be an array");
    std::vector<UpdateRule> rules;
    for (std::size_t i = 0; i < p["rules"].size(); ++i) {
      rules.push_back(parse_update_rule(p["rules"][i], where + " rules[" + std::to_string(i) + "]"));
    }
    return std::make_unique<UpdateProcessor>(std::move(rules), variables);
  }
  if (spec.kind == "transform") {
    if (!p.contains("spec")) throw ConfigError(where + ": 'spec' is required");
    try {
      return std::make_unique<TransformProcessor>(TransformSpec::from_json(p["spec"]), variables);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (spec.kind == "sanitize") return std::make_unique<SanitizeProcessor>();
  throw ConfigError(where + ": unknown processor kind '" + spec.kind + "'");
}

}  // namespace airtwin
