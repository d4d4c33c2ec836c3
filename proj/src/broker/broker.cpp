#include "airtwin/broker.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include "airtwin/http.hpp"
#include "dispatcher.hpp"

namespace airtwin {

// ---- Subscription / NotificationPayload wire --------------------------------

Json Subscription::to_json() const {
  Json doc = Json::object();
  doc["id"] = id;
  doc["type"] = "Subscription";
  Json selector = Json::object();
  selector["type"] = entity_type;
  if (id_pattern) selector["idPattern"] = *id_pattern;
  doc["entities"] = Json::array({selector});
  if (!watched_attributes.empty()) doc["watchedAttributes"] = watched_attributes;
  Json endpoint_doc = Json::object();
  endpoint_doc["uri"] = endpoint;
  endpoint_doc["accept"] = "application/json";
  doc["notification"] = Json{{"endpoint", endpoint_doc}};
  doc["createdAt"] = format_timestamp(created_at);
  doc["deliveredCount"] = delivered_count;
  return doc;
}

Subscription Subscription::from_json(const Json& doc) {
  if (!doc.is_object()) throw BadRequestError("subscription must be a JSON object");
  Subscription s;
  if (const auto it = doc.find("id"); it != doc.end()) {
    if (!it->is_string()) throw BadRequestError("subscription id must be a string");
    s.id = it->get<std::string>();
  }
  const auto entities = doc.find("entities");
  if (entities == doc.end() || !entities->is_array() || entities->size() != 1 || !(*entities)[0].is_object()) {
    throw BadRequestError("entities must hold exactly one entity selector");
  }
  const Json& selector = (*entities)[0];
  if (!selector.contains("type") || !selector["type"].is_string() || selector["type"].get<std::string>().empty()) {
    throw BadRequestError("entities[0].type must be a non-empty string");
  }
  s.entity_type = selector["type"].get<std::string>();
  if (selector.contains("idPattern")) {
    if (!selector["idPattern"].is_string()) throw BadRequestError("entities[0].idPattern must be a string");
    s.id_pattern = selector["idPattern"].get<std::string>();
    try {
      std::regex check(*s.id_pattern);
    } catch (const std::regex_error&) {
      throw BadRequestError("entities[0].idPattern is not a valid regular expression");
    }
  } else if (selector.contains("id")) {
    if (!selector["id"].is_string()) throw BadRequestError("entities[0].id must be a string");
    // An exact id is an anchored pattern with every metacharacter escaped.
    static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
    s.id_pattern = std::regex_replace(selector["id"].get<std::string>(), special, R"(\$&)");
  }
  if (const auto it = doc.find("watchedAttributes"); it != doc.end()) {
    if (!it->is_array()) throw BadRequestError("watchedAttributes must be an array of names");
    for (const auto& name : *it) {
      if (!name.is_string()) throw BadRequestError("watchedAttributes must be an array of names");
      s.watched_attributes.insert(name.get<std::string>());
    }
  }
  const auto notification = doc.find("notification");
  if (notification == doc.end() || !notification->is_object() || !notification->contains("endpoint") ||
      !(*notification)["endpoint"].is_object() || !(*notification)["endpoint"].contains("uri") ||
      !(*notification)["endpoint"]["uri"].is_string()) {
    throw BadRequestError("notification.endpoint.uri is required");
  }
  s.endpoint = (*notification)["endpoint"]["uri"].get<std::string>();
  if (!parse_http_url(s.endpoint)) {
    throw BadRequestError("notification endpoint '" + s.endpoint + "' is not an absolute HTTP URL");
  }
  return s;
}

Json NotificationPayload::to_json() const {
  Json doc = Json::object();
  doc["id"] = "urn:ngsi-ld:Notification:notification-" + std::to_string(sequence);
  doc["type"] = "Notification";
  doc["subscriptionId"] = subscription_id;
  doc["sequence"] = sequence;
  doc["notifiedAt"] = format_timestamp(notified_at);
  Json items = Json::array();
  for (const auto& e : data) items.push_back(serialize_entity(e));
  doc["data"] = std::move(items);
  return doc;
}

NotificationPayload NotificationPayload::from_json(const Json& doc) {
  if (!doc.is_object()) throw ParseError("$", "notification must be a JSON object");
  NotificationPayload p;
  if (!doc.contains("subscriptionId") || !doc["subscriptionId"].is_string()) {
    throw ParseError("subscriptionId", "missing or not a string");
  }
  p.subscription_id = doc["subscriptionId"].get<std::string>();
  if (!doc.contains("sequence") || !doc["sequence"].is_number_unsigned()) {
    throw ParseError("sequence", "missing or not a positive integer");
  }
  p.sequence = doc["sequence"].get<std::uint64_t>();
  if (!doc.contains("notifiedAt") || !doc["notifiedAt"].is_string()) throw ParseError("notifiedAt", "missing");
  const auto at = try_parse_timestamp(doc["notifiedAt"].get_ref<const std::string&>());
  if (!at) throw ParseError("notifiedAt", "not an ISO 8601 timestamp");
  p.notified_at = *at;
  if (!doc.contains("data") || !doc["data"].is_array() || doc["data"].empty()) {
    throw ParseError("data", "must be a non-empty array");
  }
  for (const auto& item : doc["data"]) p.data.push_back(parse_entity(item));
  return p;
}

// ---- queries ----------------------------------------------------------------

Comparator parse_comparator(std::string_view text) {
  if (text == "eq" || text == "==") return Comparator::Eq;
  if (text == "lt" || text == "<") return Comparator::Lt;
  if (text == "gt" || text == ">") return Comparator::Gt;
  if (text == "le" || text == "<=") return Comparator::Le;
  if (text == "ge" || text == ">=") return Comparator::Ge;
  throw BadRequestError("unknown comparator '" + std::string(text) + "'");
}

namespace {

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '@' || c == '.';
}

Json parse_q_value(std::string_view raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return std::string(raw.substr(1, raw.size() - 2));
  if (raw == "true") return true;
  if (raw == "false") return false;
  const Json number = Json::parse(raw.begin(), raw.end(), nullptr, false);
  if (number.is_number()) return number;
  return std::string(raw);
}

template <typename T>
bool ordered(const T& lhs, Comparator c, const T& rhs) {
  switch (c) {
    case Comparator::Eq: return lhs == rhs;
    case Comparator::Lt: return lhs < rhs;
    case Comparator::Gt: return lhs > rhs;
    case Comparator::Le: return lhs <= rhs;
    case Comparator::Ge: return lhs >= rhs;
  }
  return false;
}

std::optional<double> as_number(const Json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const Json parsed = Json::parse(v.get_ref<const std::string&>(), nullptr, false);
    if (parsed.is_number()) return parsed.get<double>();
  }
  return std::nullopt;
}

std::string as_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

bool attribute_matches(const Attribute& attr, Comparator c, const Json& wanted) {
  if (attr.is_date_time()) {
    const auto have = attr.as_timestamp();
    const auto want = wanted.is_string() ? try_parse_timestamp(wanted.get_ref<const std::string&>()) : std::nullopt;
    return have && want && ordered(*have, c, *want);
  }
  if (attr.value.is_number()) {
    const auto want = as_number(wanted);
    return want && ordered(attr.value.get<double>(), c, *want);
  }
  if (attr.value.is_string()) return ordered(attr.value.get<std::string>(), c, as_text(wanted));
  if (attr.value.is_boolean()) {
    if (c != Comparator::Eq) return false;
    if (wanted.is_boolean()) return attr.value.get<bool>() == wanted.get<bool>();
    return as_text(wanted) == (attr.value.get<bool>() ? "true" : "false");
  }
  return c == Comparator::Eq && json_equal(attr.value, wanted);
}

}  // namespace

std::vector<AttributeFilter> parse_q(std::string_view q) {
  std::vector<AttributeFilter> filters;
  std::size_t start = 0;
  while (start <= q.size()) {
    const std::size_t end = std::min(q.find(';', start), q.size());
    const std::string_view term = q.substr(start, end - start);
    start = end + 1;
    if (term.empty()) continue;
    std::size_t i = 0;
    while (i < term.size() && is_name_char(term[i])) ++i;
    if (i == 0) throw BadRequestError("query term '" + std::string(term) + "' lacks an attribute name");
    std::size_t j = i;
    while (j < term.size() && std::string_view("=<>!~").find(term[j]) != std::string_view::npos) ++j;
    AttributeFilter f;
    f.name = std::string(term.substr(0, i));
    f.comparator = parse_comparator(term.substr(i, j - i));
    f.value = parse_q_value(term.substr(j));
    filters.push_back(std::move(f));
  }
  return filters;
}

bool matches(const ContextEntity& entity, const EntityQuery& query) {
  if (!query.type.empty() && entity.type() != query.type) return false;
  for (const auto& f : query.filters) {
    const Attribute* attr = f.name == "id" ? nullptr : entity.find(f.name);
    if (f.name == "id") {
      if (!ordered(entity.id().str(), f.comparator, as_text(f.value))) return false;
      continue;
    }
    if (attr == nullptr || !attribute_matches(*attr, f.comparator, f.value)) return false;
  }
  if (query.window) {
    const Attribute* attr = entity.find(query.window->attribute);
    const auto t = attr ? attr->as_timestamp() : std::nullopt;
    if (!t || *t < query.window->from || *t > query.window->to) return false;
  }
  return true;
}

// ---- retry / sender ---------------------------------------------------------

std::chrono::milliseconds RetryPolicy::backoff_before(int attempt) const {
  if (attempt <= 1) return std::chrono::milliseconds{0};
  const double factor = std::pow(multiplier, attempt - 2);
  return std::chrono::milliseconds{static_cast<std::int64_t>(static_cast<double>(initial_backoff.count()) * factor)};
}

NotificationSender http_notification_sender() {
  return [](const std::string& endpoint, const std::string& body) -> int {
    const auto response = http_post(endpoint, body, "application/json");
    return response ? response->status : 0;
  };
}

Json BrokerMetrics::to_json() const {
  Json doc = Json::object();
  doc["entities"] = entities;
  doc["subscriptions"] = subscriptions;
  doc["changeEvents"] = change_events;
  doc["notificationsQueued"] = notifications_queued;
  doc["notificationsDelivered"] = notifications_delivered;
  doc["failedAttempts"] = failed_attempts;
  doc["notificationsDropped"] = notifications_dropped;
  return doc;
}

// ---- ContextBroker ----------------------------------------------------------

ContextBroker::ContextBroker(BrokerOptions options, const Clock& clock, NotificationSender sender) : clock_(clock) {
  dispatcher_ = std::make_unique<NotificationDispatcher>(
      options.retry, options.delivery_threads, std::move(sender),
      [this](const std::string& id) {
        std::shared_lock lock(mutex_);
        return subscriptions_.count(id) > 0;
      },
      [this](const std::string& id) { on_delivered(id); });
}

ContextBroker::~ContextBroker() { dispatcher_.reset(); }

void ContextBroker::on_delivered(const std::string& subscription_id) {
  std::unique_lock lock(mutex_);
  if (auto it = subscriptions_.find(subscription_id); it != subscriptions_.end()) {
    ++it->second.subscription.delivered_count;
  }
}

UpsertResult ContextBroker::upsert(const ContextEntity& entity) {
  std::unique_lock lock(mutex_);
  UpsertResult result;
  const auto it = entities_.find(entity.id().str());
  ContextEntity next = entity;
  if (it == entities_.end()) {
    result.created = true;
    for (const auto& [name, attr] : entity.attributes()) result.changed.push_back(name);
  } else {
    next = merge_entity(it->second, entity);
    next.set_context(entity.context());
    for (const auto& [name, attr] : entity.attributes()) {
      const Attribute* stored = it->second.find(name);
      if (stored == nullptr || !(*stored == attr)) result.changed.push_back(name);
    }
  }

  auto report = validate_entity(next);
  if (!report.empty()) throw BadRequestError("entity " + entity.id().str() + " is invalid", to_json(report));

  if (!result.created && result.changed.empty()) {
    it->second = std::move(next);
    return result;
  }

  result.change_sequence = ++change_events_;
  const ContextEntity& stored = entities_.insert_or_assign(entity.id().str(), std::move(next)).first->second;

  const std::set<std::string> changed(result.changed.begin(), result.changed.end());
  std::string serialized;
  for (auto& [id, state] : subscriptions_) {
    const Subscription& sub = state.subscription;
    if (sub.entity_type != stored.type()) continue;
    if (sub.id_pattern && !std::regex_match(stored.id().str(), std::regex(*sub.id_pattern))) continue;
    if (!result.created && !sub.watched_attributes.empty() &&
        std::none_of(sub.watched_attributes.begin(), sub.watched_attributes.end(),
                     [&](const std::string& name) { return changed.count(name) > 0; })) {
      continue;
    }
    NotificationPayload payload{id, state.next_sequence++, clock_.now(), {stored}};
    dispatcher_->enqueue(id, sub.endpoint, payload.to_json().dump());
  }
  return result;
}

ContextEntity ContextBroker::get(const EntityId& id) const {
  std::shared_lock lock(mutex_);
  const auto it = entities_.find(id.str());
  if (it == entities_.end()) throw NotFoundError("entity " + id.str());
  return it->second;
}

std::vector<ContextEntity> ContextBroker::query(const EntityQuery& query) const {
  std::shared_lock lock(mutex_);
  std::vector<ContextEntity> out;
  for (const auto& [id, entity] : entities_) {
    if (matches(entity, query)) out.push_back(entity);
  }
  return out;
}

void ContextBroker::remove(const EntityId& id) {
  std::unique_lock lock(mutex_);
  if (entities_.erase(id.str()) == 0) throw NotFoundError("entity " + id.str());
}

std::string ContextBroker::subscribe(Subscription subscription) {
  if (subscription.entity_type.empty()) throw BadRequestError("subscription entity type must be non-empty");
  if (!parse_http_url(subscription.endpoint)) {
    throw BadRequestError("notification endpoint '" + subscription.endpoint + "' is not an absolute HTTP URL");
  }
  std::unique_lock lock(mutex_);
  if (subscription.id.empty()) {
    do {
      subscription.id = make_entity_id("Subscription", std::to_string(next_subscription_++)).str();
    } while (subscriptions_.count(subscription.id) > 0);
  } else if (subscriptions_.count(subscription.id) > 0) {
    throw BrokerError(409, "subscription " + subscription.id + " already exists");
  }
  subscription.created_at = clock_.now();
  subscription.delivered_count = 0;
  const std::string id = subscription.id;
  subscriptions_.emplace(id, SubscriptionState{std::move(subscription)});
  return id;
}

void ContextBroker::unsubscribe(const std::string& id) {
  std::unique_lock lock(mutex_);
  if (subscriptions_.erase(id) == 0) throw NotFoundError("subscription " + id);
}

std::vector<Subscription> ContextBroker::subscriptions() const {
  std::shared_lock lock(mutex_);
  std::vector<Subscription> out;
  for (const auto& [id, state] : subscriptions_) out.push_back(state.subscription);
  return out;
}

Subscription ContextBroker::subscription(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = subscriptions_.find(id);
  if (it == subscriptions_.end()) throw NotFoundError("subscription " + id);
  return it->second.subscription;
}

BrokerMetrics ContextBroker::metrics() const {
  BrokerMetrics m;
  {
    std::shared_lock lock(mutex_);
    m.entities = entities_.size();
    m.subscriptions = subscriptions_.size();
    m.change_events = change_events_;
  }
  m.notifications_queued = dispatcher_->queued();
  m.notifications_delivered = dispatcher_->delivered();
  m.failed_attempts = dispatcher_->failed_attempts();
  m.notifications_dropped = dispatcher_->dropped();
  return m;
}

bool ContextBroker::wait_idle(std::chrono::milliseconds timeout) const { return dispatcher_->wait_idle(timeout); }

// ---- NotificationInbox ------------------------------------------------------

NotificationInbox::NotificationInbox(std::chrono::milliseconds gap_timeout) : gap_timeout_(gap_timeout) {}

bool NotificationInbox::accept(NotificationPayload payload) {
  {
    std::lock_guard lock(mutex_);
    Stream& s = streams_[payload.subscription_id];
    if (payload.sequence < s.next || s.held.count(payload.sequence) > 0) {
      ++duplicates_;
      return false;
    }
    s.held.emplace(payload.sequence, std::move(payload));
  }
  cv_.notify_all();
  return true;
}

std::vector<NotificationPayload> NotificationInbox::collect_locked() {
  std::vector<NotificationPayload> ready;
  const auto now = std::chrono::steady_clock::now();
  for (auto& [id, s] : streams_) {
    while (!s.held.empty()) {
      auto first = s.held.begin();
      if (first->first == s.next) {
        ready.push_back(std::move(first->second));
        s.held.erase(first);
        ++s.next;
        s.gap_since.reset();
        continue;
      }
      if (!s.gap_since) s.gap_since = now;
      if (now - *s.gap_since < gap_timeout_) break;
      gaps_skipped_ += first->first - s.next;
      s.next = first->first;
    }
  }
  return ready;
}

std::vector<NotificationPayload> NotificationInbox::take_ready() {
  std::lock_guard lock(mutex_);
  return collect_locked();
}

std::vector<NotificationPayload> NotificationInbox::wait_ready(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto ready = collect_locked();
    if (!ready.empty()) return ready;
    // Wake at the deadline or when new payloads arrive; a held gap also needs a periodic re-check.
    const auto wake = std::min(deadline, std::chrono::steady_clock::now() + std::chrono::milliseconds(50));
    if (cv_.wait_until(lock, wake) == std::cv_status::timeout && std::chrono::steady_clock::now() >= deadline) {
      return collect_locked();
    }
  }
}

std::size_t NotificationInbox::buffered() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, s] : streams_) n += s.held.size();
  return n;
}

std::uint64_t NotificationInbox::duplicates() const {
  std::lock_guard lock(mutex_);
  return duplicates_;
}

std::uint64_t NotificationInbox::gaps_skipped() const {
  std::lock_guard lock(mutex_);
  return gaps_skipped_;
}

}  // namespace airtwin
