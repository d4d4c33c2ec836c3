#include "airtwin/flow.hpp"

#include <cctype>
#include <charconv>

namespace airtwin {

std::string FlowRecord::sequence_string() const {
  std::string out;
  for (const auto n : sequence) {
    if (!out.empty()) out += '.';
    out += std::to_string(n);
  }
  return out;
}

// ---- JsonPath ---------------------------------------------------------------

JsonPath JsonPath::parse(std::string_view text) {
  JsonPath path;
  path.text_ = std::string(text);
  if (text.empty() || text[0] != '$') throw ConfigError("path '" + path.text_ + "' must start with '$'");
  std::size_t i = 1;
  while (i < text.size()) {
    if (text[i] == '.') {
      const std::size_t start = ++i;
      while (i < text.size() && text[i] != '.' && text[i] != '[') ++i;
      if (i == start) throw ConfigError("path '" + path.text_ + "' has an empty member name");
      path.steps_.emplace_back(std::string(text.substr(start, i - start)));
    } else if (text[i] == '[') {
      const std::size_t close = text.find(']', i);
      if (close == std::string_view::npos) throw ConfigError("path '" + path.text_ + "' has an unclosed '['");
      const std::string_view inner = text.substr(i + 1, close - i - 1);
      if (inner.size() >= 2 && (inner.front() == '\'' || inner.front() == '"') && inner.back() == inner.front()) {
        path.steps_.emplace_back(std::string(inner.substr(1, inner.size() - 2)));
      } else {
        std::size_t index = 0;
        const auto [end, ec] = std::from_chars(inner.data(), inner.data() + inner.size(), index);
        if (inner.empty() || ec != std::errc{} || end != inner.data() + inner.size()) {
          throw ConfigError("path '" + path.text_ + "' has a bad index '" + std::string(inner) + "'");
        }
        path.steps_.emplace_back(index);
      }
      i = close + 1;
    } else {
      throw ConfigError("path '" + path.text_ + "' has an unexpected '" + std::string(1, text[i]) + "'");
    }
  }
  return path;
}

const Json* JsonPath::resolve(const Json& doc) const {
  const Json* at = &doc;
  for (const auto& step : steps_) {
    if (const auto* key = std::get_if<std::string>(&step)) {
      if (!at->is_object()) return nullptr;
      const auto it = at->find(*key);
      if (it == at->end()) return nullptr;
      at = &*it;
    } else {
      const auto index = std::get<std::size_t>(step);
      if (!at->is_array() || index >= at->size()) return nullptr;
      at = &(*at)[index];
    }
  }
  return at;
}

std::string attribute_text(const Json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_null()) return "null";
  return value.dump();
}

std::optional<std::string> Scope::find(const std::string& name) const {
  if (attributes) {
    if (const auto it = attributes->find(name); it != attributes->end()) return it->second;
  }
  if (variables) {
    if (const auto it = variables->find(name); it != variables->end()) return it->second;
  }
  return std::nullopt;
}

// ---- Template ---------------------------------------------------------------

Template Template::parse(std::string_view text) {
  Template t;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, 3) == "$${") {
      literal += "${";
      i += 3;
    } else if (text.substr(i, 2) == "${") {
      const std::size_t close = text.find('}', i);
      if (close == std::string_view::npos) throw ConfigError("template '" + std::string(text) + "' has an unclosed '${'");
      const std::string name(text.substr(i + 2, close - i - 2));
      if (name.empty()) throw ConfigError("template '" + std::string(text) + "' has an empty reference");
      if (!literal.empty()) t.pieces_.push_back({false, std::move(literal)});
      literal.clear();
      t.pieces_.push_back({true, name});
      t.references_.insert(name);
      i = close + 1;
    } else {
      literal += text[i++];
    }
  }
  if (!literal.empty()) t.pieces_.push_back({false, std::move(literal)});
  return t;
}

std::string Template::render(const Scope& scope) const {
  std::string out;
  for (const auto& p : pieces_) out += p.is_ref ? scope.find(p.text).value_or("null") : p.text;
  return out;
}

std::optional<std::string> Template::single_reference() const {
  if (pieces_.size() == 1 && pieces_[0].is_ref) return pieces_[0].text;
  return std::nullopt;
}

// ---- Expression -------------------------------------------------------------

namespace {

/// null, text or boolean.
struct Value {
  enum class Kind { Null, Text, Bool } kind = Kind::Null;
  std::string text;
  bool flag = false;

  bool truthy() const { return kind == Kind::Bool ? flag : kind == Kind::Text && text == "true"; }
  std::string as_text() const { return kind == Kind::Bool ? (flag ? "true" : "false") : text; }
};

bool values_equal(const Value& a, const Value& b) {
  if (a.kind == Value::Kind::Null || b.kind == Value::Kind::Null) return a.kind == b.kind;
  return a.as_text() == b.as_text();
}

}  // namespace

struct Expression::Node {
  enum class Op { Or, And, Not, Eq, Ne, Ref, Literal, Null, True, False, Call } op;
  std::string text;
  std::vector<std::shared_ptr<const Node>> args;

  Value eval(const Scope& scope) const {
    switch (op) {
      case Op::Or: return boolean(args[0]->eval(scope).truthy() || args[1]->eval(scope).truthy());
      case Op::And: return boolean(args[0]->eval(scope).truthy() && args[1]->eval(scope).truthy());
      case Op::Not: return boolean(!args[0]->eval(scope).truthy());
      case Op::Eq: return boolean(values_equal(args[0]->eval(scope), args[1]->eval(scope)));
      case Op::Ne: return boolean(!values_equal(args[0]->eval(scope), args[1]->eval(scope)));
      case Op::Ref: {
        const auto v = scope.find(text);
        if (!v || *v == "null") return Value{};
        return Value{Value::Kind::Text, *v};
      }
      case Op::Literal: return Value{Value::Kind::Text, text};
      case Op::Null: return Value{};
      case Op::True: return boolean(true);
      case Op::False: return boolean(false);
      case Op::Call: return call(scope);
    }
    return Value{};
  }

  static Value boolean(bool b) { return Value{Value::Kind::Bool, {}, b}; }

  Value call(const Scope& scope) const {
    const Value a = args[0]->eval(scope);
    if (text == "isNull") return boolean(a.kind == Value::Kind::Null);
    if (text == "notNull") return boolean(a.kind != Value::Kind::Null);
    const Value b = args[1]->eval(scope);
    if (text == "concat") {
      if (a.kind == Value::Kind::Null || b.kind == Value::Kind::Null) return Value{};
      return Value{Value::Kind::Text, a.as_text() + b.as_text()};
    }
    if (a.kind == Value::Kind::Null || b.kind == Value::Kind::Null) return boolean(false);
    const std::string x = a.as_text();
    const std::string y = b.as_text();
    if (text == "startsWith") return boolean(x.starts_with(y));
    if (text == "endsWith") return boolean(x.ends_with(y));
    if (text == "contains") return boolean(x.find(y) != std::string::npos);
    if (text == "equalsIgnoreCase") {
      return boolean(x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), [](char l, char r) {
                       return std::tolower(static_cast<unsigned char>(l)) == std::tolower(static_cast<unsigned char>(r));
                     }));
    }
    return boolean(false);
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

const std::map<std::string, std::size_t, std::less<>>& functions() {
  static const std::map<std::string, std::size_t, std::less<>> arity{
      {"isNull", 1}, {"notNull", 1}, {"startsWith", 2}, {"endsWith", 2}, {"contains", 2}, {"equalsIgnoreCase", 2},
      {"concat", 2}};
  return arity;
}

class Parser {
 public:
  Parser(std::string_view text, std::set<std::string>& refs) : text_(text), refs_(refs) {}

  NodePtr parse() {
    NodePtr n = parse_or();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression '" + std::string(text_) + "' at " + std::to_string(pos_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  static NodePtr make(Op op, std::vector<NodePtr> args = {}, std::string text = {}) {
    return std::make_shared<Expression::Node>(Expression::Node{op, std::move(text), std::move(args)});
  }

  NodePtr parse_or() {
    NodePtr left = parse_and();
    while (eat("||")) {
      NodePtr right = parse_and();
      left = make(Op::Or, {left, right});
    }
    return left;
  }

  NodePtr parse_and() {
    NodePtr left = parse_unary();
    while (eat("&&")) {
      NodePtr right = parse_unary();
      left = make(Op::And, {left, right});
    }
    return left;
  }

  NodePtr parse_unary() {
    skip_space();
    // Operands are parsed into locals first: GCC 11 leaks initializer-list elements when a later one throws.
    if (text_.substr(pos_, 2) != "!=" && eat("!")) {
      NodePtr operand = parse_unary();
      return make(Op::Not, {operand});
    }
    NodePtr left = parse_operand();
    for (const auto& [token, op] : {std::pair{"==", Op::Eq}, std::pair{"!=", Op::Ne}}) {
      if (eat(token)) {
        NodePtr right = parse_operand();
        return make(op, {left, right});
      }
    }
    return left;
  }

  NodePtr parse_operand() {
    skip_space();
    if (pos_ >= text_.size()) fail("expected an operand");
    if (eat("(")) {
      NodePtr inner = parse_or();
      if (!eat(")")) fail("expected ')'");
      return inner;
    }
    if (eat("${")) {
      const std::size_t close = text_.find('}', pos_);
      if (close == std::string_view::npos || close == pos_) fail("bad attribute reference");
      std::string name(text_.substr(pos_, close - pos_));
      pos_ = close + 1;
      refs_.insert(name);
      return make(Op::Ref, {}, std::move(name));
    }
    if (text_[pos_] == '\'') {
      const std::size_t close = text_.find('\'', pos_ + 1);
      if (close == std::string_view::npos) fail("unterminated string literal");
      std::string literal(text_.substr(pos_ + 1, close - pos_ - 1));
      pos_ = close + 1;
      return make(Op::Literal, {}, std::move(literal));
    }
    std::size_t end = pos_;
    while (end < text_.size() && std::isalpha(static_cast<unsigned char>(text_[end]))) ++end;
    const std::string word(text_.substr(pos_, end - pos_));
    if (word.empty()) fail("expected an operand");
    pos_ = end;
    if (word == "null") return make(Op::Null);
    if (word == "true") return make(Op::True);
    if (word == "false") return make(Op::False);
    const auto fn = functions().find(word);
    if (fn == functions().end()) fail("unknown function '" + word + "'");
    if (!eat("(")) fail("expected '(' after " + word);
    std::vector<NodePtr> args;
    args.push_back(parse_or());
    while (eat(",")) args.push_back(parse_or());
    if (!eat(")")) fail("expected ')' to close " + word);
    if (args.size() != fn->second) fail(word + " takes " + std::to_string(fn->second) + " argument(s)");
    return make(Op::Call, std::move(args), word);
  }

  std::string_view text_;
  std::set<std::string>& refs_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.text_ = std::string(text);
  e.root_ = Parser(e.text_, e.references_).parse();
  return e;
}

bool Expression::evaluate(const Scope& scope) const { return root_->eval(scope).truthy(); }

}  // namespace airtwin
