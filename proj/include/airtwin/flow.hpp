#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "airtwin/model.hpp"

namespace airtwin {

/// A document travelling through a pipeline.
struct FlowRecord {
  Json payload;
  /// Routing metadata extracted en route. Values are string renditions; "null" marks an absent value.
  std::map<std::string, std::string> attributes;
  std::string source;
  /// Source sequence number, extended with the element index by every split.
  std::vector<std::uint64_t> sequence;

  std::string sequence_string() const;
};

/// Raised for malformed pipeline configuration; collected into a list by the config loader.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by a stage when a record must go to the failure route.
class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal JSONPath: "$", "$.a.b", "$.a[0]", "$['odd key']", "$[2].x".
class JsonPath {
 public:
  static JsonPath parse(std::string_view text);

  /// nullptr when any step is missing or has the wrong shape.
  const Json* resolve(const Json& doc) const;
  const std::string& text() const noexcept { return text_; }
  bool is_root() const noexcept { return steps_.empty(); }

 private:
  using Step = std::variant<std::string, std::size_t>;
  std::string text_;
  std::vector<Step> steps_;
};

/// String rendition used for attributes: strings verbatim, null as "null", everything else as compact JSON.
std::string attribute_text(const Json& value);

/// Lookup of ${name} references. Record attributes shadow pipeline variables.
struct Scope {
  const std::map<std::string, std::string>* attributes = nullptr;
  const std::map<std::string, std::string>* variables = nullptr;

  std::optional<std::string> find(const std::string& name) const;
};

/// Text with ${name} placeholders. "$${" escapes a literal "${".
class Template {
 public:
  static Template parse(std::string_view text);

  /// Unknown names expand to "null".
  std::string render(const Scope& scope) const;
  const std::set<std::string>& references() const noexcept { return references_; }
  /// True when the template is exactly one placeholder.
  std::optional<std::string> single_reference() const;

 private:
  struct Piece {
    bool is_ref = false;
    std::string text;
  };
  std::vector<Piece> pieces_;
  std::set<std::string> references_;
};

/// Boolean predicate over record attributes:
///   expr    := or
///   or      := and ("||" and)*
///   and     := unary ("&&" unary)*
///   unary   := "!" unary | compare
///   compare := operand (("==" | "!=") operand)?
///   operand := "(" expr ")" | ${name} | 'text' | null | true | false | call
///   call    := isNull(x) | notNull(x) | startsWith(x, y) | endsWith(x, y) | contains(x, y) | equalsIgnoreCase(x, y)
///            | concat(x, y)
/// The attribute value "null" compares equal to null.
class Expression {
 public:
  /// Throws ConfigError with the offending position.
  static Expression parse(std::string_view text);

  bool evaluate(const Scope& scope) const;
  const std::set<std::string>& references() const noexcept { return references_; }
  const std::string& text() const noexcept { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
  std::set<std::string> references_;
};

}  // namespace airtwin
