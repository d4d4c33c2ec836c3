#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <random>
#include <thread>

#include "airtwin/broker.hpp"
#include "airtwin/broker_api.hpp"
#include "airtwin/records.hpp"
#include "test_util.hpp"

using namespace airtwin;
using namespace std::chrono_literals;
using airtwin::test::load_json;
using airtwin::test::normalised_flight_entity;

namespace {

/// In-process notification receiver. `respond` decides the status per attempt (1-based, counted per endpoint).
struct StubReceiver {
  std::mutex mutex;
  std::vector<std::pair<std::string, Json>> received;
  std::map<std::string, int> attempts;
  std::function<int(const std::string&, int, const Json&)> respond = [](const std::string&, int, const Json&) {
    return 200;
  };

  NotificationSender sender() {
    return [this](const std::string& endpoint, const std::string& body) {
      std::lock_guard lock(mutex);
      const Json doc = Json::parse(body);
      const int status = respond(endpoint, ++attempts[endpoint], doc);
      if (status >= 200 && status < 300) received.emplace_back(endpoint, doc);
      return status;
    };
  }

  std::size_t count(const std::string& endpoint) {
    std::lock_guard lock(mutex);
    return static_cast<std::size_t>(
        std::count_if(received.begin(), received.end(), [&](const auto& r) { return r.first == endpoint; }));
  }

  std::vector<Json> bodies(const std::string& endpoint) {
    std::lock_guard lock(mutex);
    std::vector<Json> out;
    for (const auto& [ep, body] : received) {
      if (ep == endpoint) out.push_back(body);
    }
    return out;
  }
};

const Timestamp kT0 = parse_timestamp("2021-02-04T12:00:00Z");

BrokerOptions fast_retry() {
  BrokerOptions o;
  o.retry.initial_backoff = 20ms;
  return o;
}

Subscription subscription_for(const std::string& type, const std::string& endpoint,
                               std::set<std::string> watched = {}) {
  Subscription s;
  s.entity_type = type;
  s.endpoint = endpoint;
  s.watched_attributes = std::move(watched);
  return s;
}

ContextEntity sample_flight_entity() { return parse_entity(normalised_flight_entity()); }

ContextEntity flight_patch(const std::string& key, std::initializer_list<std::pair<std::string, Attribute>> attrs) {
  ContextEntity e(make_entity_id("Flight", key), "Flight");
  for (const auto& [name, attr] : attrs) e.set(name, attr);
  return e;
}

/// Merge oracle on raw documents: every member of the patch other than id/type replaces the stored member.
Json merge_documents(Json base, const Json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (key != "id" && key != "type") base[key] = value;
  }
  return base;
}

}  // namespace

TEST_CASE("upsert of the same document twice: created then updated with identical state") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  const ContextEntity flight = sample_flight_entity();

  const auto first = broker.upsert(flight);
  const auto second = broker.upsert(flight);
  CHECK(first.created);
  CHECK_FALSE(second.created);
  CHECK(second.changed.empty());
  CHECK(serialize_entity(broker.get(flight.id())).dump() == normalised_flight_entity().dump());
  CHECK(broker.metrics().change_events == 1);
}

TEST_CASE("merge-patch upsert matches a brute-force merge of the two documents") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  const Json base = normalised_flight_entity();
  broker.upsert(parse_entity(base));

  Json patch = Json::object();
  patch["id"] = base["id"];
  patch["type"] = "Flight";
  patch["dateAIBT"] = Json{{"type", "Property"}, {"value", Json{{"@type", "DateTime"}, {"@value", "2021-02-04T17:25:00.00Z"}}}};
  patch["@context"] = base["@context"];
  const auto result = broker.upsert(parse_entity(patch));

  CHECK(result.changed == std::vector<std::string>{"dateAIBT"});
  CHECK(broker.metrics().change_events == 2);
  CHECK(json_equal(serialize_entity(broker.get(parse_entity(base).id())), merge_documents(base, patch)));
}

TEST_CASE("aircraft listing round-trips through the broker") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  const Json listing = load_json("aircraft_entity.json");
  const ContextEntity aircraft = parse_entity(listing);
  broker.upsert(aircraft);
  CHECK(serialize_entity(broker.get(aircraft.id())).dump(2) == listing.dump(2));
}

TEST_CASE("get of the flight listing and of an unknown id") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  broker.upsert(sample_flight_entity());
  CHECK(serialize_entity(broker.get(EntityId::parse("urn:ngsi-ld:Flight:flight-1"))).dump() ==
        normalised_flight_entity().dump());
  CHECK_THROWS_AS(broker.get(EntityId::parse("urn:ngsi-ld:Flight:flight-404")), NotFoundError);
}

TEST_CASE("broker keeps only the latest aircraft position") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  ContextEntity a = parse_entity(load_json("aircraft_entity.json"));
  broker.upsert(a);
  ContextEntity moved(a.id(), "Aircraft");
  moved.set("location", Attribute::geo_point(GeoPoint{57.2, -2.2, 100.0}));
  broker.upsert(moved);
  const ContextEntity current = broker.get(a.id());
  const Attribute* stored = current.find("location");
  REQUIRE(stored != nullptr);
  CHECK(GeoPoint::from_geojson(stored->value) == GeoPoint{57.2, -2.2, 100.0});
}

TEST_CASE("invalid entity is rejected with a validation report") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  ContextEntity bad = flight_patch("9", {{"dateAIBT", Attribute::date_time(kT0)},
                                         {"dateALDT", Attribute::date_time(kT0 + std::chrono::hours(1))}});
  try {
    broker.upsert(bad);
    FAIL("expected BadRequestError");
  } catch (const BadRequestError& e) {
    CHECK(e.status() == 400);
    REQUIRE(e.details().is_array());
    CHECK(e.details().dump().find("time ordering") != std::string::npos);
  }
  CHECK_THROWS_AS(broker.get(bad.id()), NotFoundError);
}

TEST_CASE("property: last-value semantics equal a sequential merge replay") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 50; ++round) {
    ManualClock clock(kT0);
    StubReceiver stub;
    ContextBroker broker({}, clock, stub.sender());
    const EntityId id = make_entity_id("Aircraft", "LNXYZ");
    Json oracle = nullptr;
    const int steps = 1 + static_cast<int>(rng() % 12);
    for (int s = 0; s < steps; ++s) {
      ContextEntity patch(id, "Aircraft");
      if (rng() % 2) patch.set("heading", Attribute::property(static_cast<int>(rng() % 360)));
      if (rng() % 2) patch.set("speed", Attribute::property(static_cast<double>(rng() % 5000) / 10.0));
      if (rng() % 2) patch.set("flightNumber", Attribute::property(std::to_string(rng() % 9000)));
      if (rng() % 3 == 0) patch.set("isOnGround", Attribute::property(rng() % 2 == 0));
      broker.upsert(patch);
      const Json doc = serialize_entity(patch);
      oracle = oracle.is_null() ? doc : merge_documents(oracle, doc);
    }
    CHECK(json_equal(serialize_entity(broker.get(id)), oracle));
  }
}

TEST_CASE("property: concurrent upserts to one id equal some permutation's sequential merge") {
  for (int round = 0; round < 40; ++round) {
    ManualClock clock(kT0);
    StubReceiver stub;
    ContextBroker broker({}, clock, stub.sender());
    const EntityId id = make_entity_id("Aircraft", "LNABC");
    std::vector<ContextEntity> patches;
    for (int k = 0; k < 4; ++k) {
      ContextEntity p(id, "Aircraft");
      // Overlapping attribute sets so the outcome depends on the order.
      p.set("heading", Attribute::property(k * 10));
      if (k % 2 == 0) p.set("speed", Attribute::property(100 + k));
      p.set("flightNumber", Attribute::property("F" + std::to_string(k)));
      patches.push_back(p);
    }
    {
      std::vector<std::jthread> writers;
      for (const auto& p : patches) writers.emplace_back([&broker, p] { broker.upsert(p); });
    }
    const Json final_doc = serialize_entity(broker.get(id));
    std::vector<int> order{0, 1, 2, 3};
    bool found = false;
    do {
      Json merged = serialize_entity(patches[static_cast<std::size_t>(order[0])]);
      for (std::size_t i = 1; i < order.size(); ++i) {
        merged = merge_documents(merged, serialize_entity(patches[static_cast<std::size_t>(order[i])]));
      }
      found = found || json_equal(merged, final_doc);
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(found);
  }
}

TEST_CASE("query by flight number and with no match") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  broker.upsert(sample_flight_entity());
  broker.upsert(flight_patch("2", {{"flightNumber", Attribute::property("999")}}));

  EntityQuery q{"Flight", parse_q("flightNumber==1234")};
  const auto hits = broker.query(q);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].id().str() == "urn:ngsi-ld:Flight:flight-1");

  EntityQuery eq{"Flight", {{"flightNumber", parse_comparator("eq"), "1234"}}};
  CHECK(broker.query(eq).size() == 1);
  CHECK(broker.query(EntityQuery{"Flight", parse_q("flightNumber==0000")}).empty());
  CHECK(broker.query(EntityQuery{"Aircraft"}).empty());
}

TEST_CASE("unknown comparators are rejected") {
  CHECK_THROWS_AS(parse_comparator("ne"), BadRequestError);
  CHECK_THROWS_AS(parse_q("flightNumber!=1"), BadRequestError);
  CHECK_THROWS_AS(parse_q("flightNumber~=1"), BadRequestError);
  CHECK_THROWS_AS(parse_q("==1"), BadRequestError);
  const auto f = parse_q("passengerCount>=10;flightNumber==\"12\"");
  REQUIRE(f.size() == 2);
  CHECK(f[0].comparator == Comparator::Ge);
  CHECK(f[0].value == 10);
  CHECK(f[1].value == "12");
}

TEST_CASE("property: queries agree with a full-scan oracle") {
  std::mt19937_64 rng(2021);
  for (int round = 0; round < 20; ++round) {
    ManualClock clock(kT0);
    StubReceiver stub;
    ContextBroker broker({}, clock, stub.sender());
    const std::size_t n = 1 + rng() % 1000;
    std::vector<FlightRecord> flights;
    for (std::size_t i = 0; i < n; ++i) {
      FlightRecord f{make_entity_id("Flight", std::to_string(i))};
      f.flight_number = std::to_string(1000 + rng() % 50);
      f.passenger_count = static_cast<std::int64_t>(rng() % 300);
      f.date_scheduled = kT0 + std::chrono::minutes(static_cast<int>(rng() % 1440));
      flights.push_back(f);
      broker.upsert(f.to_entity());
    }
    const std::string number = std::to_string(1000 + rng() % 50);
    const std::int64_t pax = static_cast<std::int64_t>(rng() % 300);
    const Timestamp from = kT0 + std::chrono::minutes(static_cast<int>(rng() % 1440));
    const Timestamp to = from + std::chrono::minutes(static_cast<int>(rng() % 300));
    const char* ops[] = {"eq", "lt", "gt", "le", "ge"};
    const std::string op = ops[rng() % 5];

    EntityQuery q{"Flight", {{"passengerCount", parse_comparator(op), pax}}, TimeWindow{"dateScheduled", from, to}};
    if (rng() % 2) q.filters.push_back({"flightNumber", Comparator::Eq, number});

    std::vector<std::string> expected;
    for (const auto& f : flights) {
      const auto p = *f.passenger_count;
      const bool pax_ok = op == "eq" ? p == pax : op == "lt" ? p < pax : op == "gt" ? p > pax : op == "le" ? p <= pax : p >= pax;
      const bool number_ok = q.filters.size() == 1 || *f.flight_number == number;
      const bool time_ok = *f.date_scheduled >= from && *f.date_scheduled <= to;
      if (pax_ok && number_ok && time_ok) expected.push_back(f.id.str());
    }
    std::sort(expected.begin(), expected.end());
    std::vector<std::string> actual;
    for (const auto& e : broker.query(q)) actual.push_back(e.id().str());
    CHECK(actual == expected);
  }
}

TEST_CASE("delete then get is not found; delete unknown is not found") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  const auto flight = sample_flight_entity();
  broker.upsert(flight);
  broker.remove(flight.id());
  CHECK_THROWS_AS(broker.get(flight.id()), NotFoundError);
  CHECK_THROWS_AS(broker.remove(flight.id()), NotFoundError);
}

TEST_CASE("deleted flight produces no further notifications during a replay") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  broker.subscribe(subscription_for("Flight", "http://sink/flights"));
  broker.upsert(flight_patch("1", {{"gateCode", Attribute::property("01")}}));
  broker.upsert(flight_patch("2", {{"gateCode", Attribute::property("02")}}));
  REQUIRE(broker.wait_idle(5s));
  const std::size_t before = stub.count("http://sink/flights");
  broker.remove(make_entity_id("Flight", "1"));
  for (int i = 0; i < 5; ++i) broker.upsert(flight_patch("2", {{"gateCode", Attribute::property(std::to_string(10 + i))}}));
  REQUIRE(broker.wait_idle(5s));
  const auto bodies = stub.bodies("http://sink/flights");
  CHECK(bodies.size() == before + 5);
  for (std::size_t i = before; i < bodies.size(); ++i) {
    CHECK(bodies[i]["data"][0]["id"] == "urn:ngsi-ld:Flight:flight-2");
  }
}

TEST_CASE("watched attribute change notifies with the full flight; unwatched change does not") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  broker.upsert(sample_flight_entity());
  const std::string sub = broker.subscribe(subscription_for("Flight", "http://sink/aibt", {"dateAIBT"}));
  CHECK(sub == "urn:ngsi-ld:Subscription:subscription-1");

  broker.upsert(flight_patch("1", {{"dateAIBT", Attribute::date_time(parse_timestamp("2021-02-04T17:24:00Z"))}}));
  REQUIRE(broker.wait_idle(5s));
  auto bodies = stub.bodies("http://sink/aibt");
  REQUIRE(bodies.size() == 1);
  const auto payload = NotificationPayload::from_json(bodies[0]);
  CHECK(payload.subscription_id == sub);
  CHECK(payload.sequence == 1);
  REQUIRE(payload.data.size() == 1);
  Json expected = normalised_flight_entity();
  expected["dateAIBT"]["value"]["@value"] = "2021-02-04T17:24:00.00Z";
  CHECK(json_equal(serialize_entity(payload.data[0]), expected));
  CHECK(broker.subscription(sub).delivered_count == 1);

  broker.upsert(flight_patch("1", {{"gateCode", Attribute::property("07")}}));
  REQUIRE(broker.wait_idle(5s));
  CHECK(stub.count("http://sink/aibt") == 1);
}

TEST_CASE("empty watched set: N distinct updates give N notifications; no match gives none") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  broker.subscribe(subscription_for("Aircraft", "http://sink/all"));
  const int n = 25;
  for (int i = 0; i < n; ++i) {
    ContextEntity a(make_entity_id("Aircraft", "GABCD"), "Aircraft");
    a.set("heading", Attribute::property(i));
    broker.upsert(a);
  }
  broker.upsert(flight_patch("3", {{"gateCode", Attribute::property("01")}}));
  REQUIRE(broker.wait_idle(5s));
  CHECK(stub.count("http://sink/all") == n);
  CHECK(broker.metrics().notifications_queued == n);
}

TEST_CASE("deleted subscriptions stop firing") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  const auto a = broker.subscribe(subscription_for("Flight", "http://sink/a"));
  const auto b = broker.subscribe(subscription_for("Flight", "http://sink/b"));
  broker.unsubscribe(a);
  CHECK_THROWS_AS(broker.unsubscribe(a), NotFoundError);
  broker.upsert(flight_patch("1", {{"gateCode", Attribute::property("01")}}));
  REQUIRE(broker.wait_idle(5s));
  CHECK(stub.count("http://sink/a") == 0);
  CHECK(stub.count("http://sink/b") == 1);
  broker.unsubscribe(b);
  broker.upsert(flight_patch("1", {{"gateCode", Attribute::property("02")}}));
  REQUIRE(broker.wait_idle(5s));
  CHECK(stub.count("http://sink/b") == 1);
}

TEST_CASE("subscription validation") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  CHECK_THROWS_AS(broker.subscribe(subscription_for("Flight", "not a url")), BadRequestError);
  CHECK_THROWS_AS(broker.subscribe(subscription_for("Flight", "ftp://x/y")), BadRequestError);
  CHECK_THROWS_AS(broker.subscribe(subscription_for("", "http://x/y")), BadRequestError);
  Json doc = subscription_for("Flight", "http://x:1/y", {"dateAIBT"}).to_json();
  const Subscription parsed = Subscription::from_json(doc);
  CHECK(parsed.entity_type == "Flight");
  CHECK(parsed.watched_attributes == std::set<std::string>{"dateAIBT"});
  doc["notification"]["endpoint"]["uri"] = "http://:80";
  CHECK_THROWS_AS(Subscription::from_json(doc), BadRequestError);
}

TEST_CASE("subscription id pattern restricts matching") {
  ManualClock clock(kT0);
  StubReceiver stub;
  ContextBroker broker({}, clock, stub.sender());
  Subscription s = subscription_for("Flight", "http://sink/one");
  s.id_pattern = "urn:ngsi-ld:Flight:flight-1";
  broker.subscribe(s);
  broker.upsert(flight_patch("1", {{"gateCode", Attribute::property("01")}}));
  broker.upsert(flight_patch("11", {{"gateCode", Attribute::property("01")}}));
  REQUIRE(broker.wait_idle(5s));
  CHECK(stub.count("http://sink/one") == 1);
}

TEST_CASE("a failing first attempt is retried into exactly one delivery") {
  ManualClock clock(kT0);
  StubReceiver stub;
  stub.respond = [](const std::string&, int attempt, const Json&) { return attempt == 1 ? 500 : 200; };
  ContextBroker broker(fast_retry(), clock, stub.sender());
  const auto sub = broker.subscribe(subscription_for("Aircraft", "http://sink/flaky"));
  ContextEntity a(make_entity_id("Aircraft", "GABCD"), "Aircraft");
  a.set("heading", Attribute::property(90));
  broker.upsert(a);
  REQUIRE(broker.wait_idle(5s));
  CHECK(stub.count("http://sink/flaky") == 1);
  const auto m = broker.metrics();
  CHECK(m.notifications_delivered == 1);
  CHECK(m.failed_attempts == 1);
  CHECK(m.notifications_dropped == 0);
  CHECK(broker.subscription(sub).delivered_count == 1);
}

TEST_CASE("an unreachable endpoint is tried three times then dropped") {
  ManualClock clock(kT0);
  StubReceiver stub;
  stub.respond = [](const std::string&, int, const Json&) { return 0; };
  ContextBroker broker(fast_retry(), clock, stub.sender());
  broker.subscribe(subscription_for("Aircraft", "http://sink/down"));
  ContextEntity a(make_entity_id("Aircraft", "GABCD"), "Aircraft");
  a.set("heading", Attribute::property(90));
  broker.upsert(a);
  REQUIRE(broker.wait_idle(5s));
  std::lock_guard lock(stub.mutex);
  CHECK(stub.attempts["http://sink/down"] == 3);
  CHECK(broker.metrics().notifications_dropped == 1);
  CHECK(broker.metrics().failed_attempts == 3);
}

TEST_CASE("retry policy backoff doubles from the initial delay") {
  RetryPolicy p;
  CHECK(p.backoff_before(1) == 0ms);
  CHECK(p.backoff_before(2) == 500ms);
  CHECK(p.backoff_before(3) == 1000ms);
}

TEST_CASE("property: delivered notifications equal matching change events under interleaving") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 5; ++round) {
    ManualClock clock(kT0);
    StubReceiver stub;
    // Every seventh notification fails its first attempt.
    std::set<std::uint64_t> failed_once;
    stub.respond = [&](const std::string&, int, const Json& body) {
      const auto seq = body["sequence"].get<std::uint64_t>();
      return seq % 7 == 3 && failed_once.insert(seq).second ? 503 : 200;
    };
    ContextBroker broker(fast_retry(), clock, stub.sender());
    const auto sub = broker.subscribe(subscription_for("Flight", "http://sink/complete", {"gateCode"}));

    // 100 scripted updates spread over four writers and three flights; some repeat the stored value.
    std::vector<std::vector<ContextEntity>> scripts(4);
    for (int i = 0; i < 100; ++i) {
      const std::string key = std::to_string(rng() % 3);
      const bool watched = rng() % 3 != 0;
      const std::string value = std::to_string(rng() % 4);
      scripts[static_cast<std::size_t>(i % 4)].push_back(
          flight_patch(key, {{watched ? "gateCode" : "standCode", Attribute::property(value)}}));
    }
    std::atomic<std::uint64_t> matching{0};
    {
      std::vector<std::jthread> writers;
      for (const auto& script : scripts) {
        writers.emplace_back([&, script] {
          for (const auto& patch : script) {
            const auto r = broker.upsert(patch);
            if (r.created || std::count(r.changed.begin(), r.changed.end(), "gateCode") > 0) ++matching;
          }
        });
      }
    }
    REQUIRE(broker.wait_idle(10s));
    CHECK(stub.count("http://sink/complete") == matching.load());
    CHECK(broker.subscription(sub).delivered_count == matching.load());

    NotificationInbox inbox(1s);
    auto bodies = stub.bodies("http://sink/complete");
    std::shuffle(bodies.begin(), bodies.end(), rng);
    for (const auto& b : bodies) inbox.accept(NotificationPayload::from_json(b));
    const auto ready = inbox.take_ready();
    REQUIRE(ready.size() == bodies.size());
    for (std::size_t i = 0; i < ready.size(); ++i) CHECK(ready[i].sequence == i + 1);
  }
}

TEST_CASE("notification inbox reorders, drops duplicates and skips stale gaps") {
  NotificationInbox inbox(50ms);
  auto payload = [](std::uint64_t seq) {
    ContextEntity e(make_entity_id("Flight", "1"), "Flight");
    return NotificationPayload{"s", seq, kT0, {e}};
  };
  CHECK(inbox.accept(payload(2)));
  CHECK(inbox.take_ready().empty());
  CHECK(inbox.accept(payload(1)));
  auto ready = inbox.take_ready();
  REQUIRE(ready.size() == 2);
  CHECK(ready[0].sequence == 1);
  CHECK(ready[1].sequence == 2);
  CHECK_FALSE(inbox.accept(payload(2)));
  CHECK(inbox.duplicates() == 1);

  CHECK(inbox.accept(payload(5)));
  CHECK(inbox.take_ready().empty());
  ready = inbox.wait_ready(2s);
  REQUIRE(ready.size() == 1);
  CHECK(ready[0].sequence == 5);
  CHECK(inbox.gaps_skipped() == 2);
}

TEST_CASE("HTTP API: entities, queries, subscriptions and delivery to a live receiver") {
  // Receiver that fails its first request so the retry path runs over real HTTP.
  std::mutex m;
  std::vector<Json> received;
  std::atomic<int> hits{0};
  HttpServer receiver;
  receiver.post("/notify", [&](const HttpRequest& req) {
    if (hits.fetch_add(1) == 0) return HttpResponse{500, ""};
    std::lock_guard lock(m);
    received.push_back(Json::parse(req.body));
    return HttpResponse{204, ""};
  });
  const int receiver_port = receiver.start("127.0.0.1", 0);
  REQUIRE(receiver_port > 0);

  ManualClock clock(kT0);
  ContextBroker broker(fast_retry(), clock, http_notification_sender());
  BrokerServer server(broker);
  REQUIRE(server.start("127.0.0.1", 0) > 0);
  BrokerClient client(server.url());

  const std::string sub = client.subscribe(
      subscription_for("Flight", "http://127.0.0.1:" + std::to_string(receiver_port) + "/notify", {"dateAIBT"}));
  CHECK(client.subscriptions().size() == 1);

  const ContextEntity flight = sample_flight_entity();
  CHECK(client.upsert(flight) == UpsertStatus::Created);
  CHECK(client.upsert(flight) == UpsertStatus::Updated);
  const auto got = client.get(flight.id());
  REQUIRE(got);
  CHECK(serialize_entity(*got).dump() == normalised_flight_entity().dump());
  CHECK_FALSE(client.get(make_entity_id("Flight", "nope")));

  CHECK(client.query(EntityQuery{"Flight", parse_q("flightNumber==1234")}).size() == 1);
  CHECK(client.query(EntityQuery{"Flight", parse_q("flightNumber==1")}).empty());
  EntityQuery window{"Flight", {}, TimeWindow{"dateScheduled", parse_timestamp("2021-02-04T17:00:00Z"),
                                              parse_timestamp("2021-02-04T18:00:00Z")}};
  CHECK(client.query(window).size() == 1);
  window.window->to = parse_timestamp("2021-02-04T17:10:00Z");
  CHECK(client.query(window).empty());

  const auto bad_q = http_get(server.url() + "/entities?type=Flight&q=flightNumber!%3D1");
  REQUIRE(bad_q);
  CHECK(bad_q->status == 400);
  const auto bad_body = http_post(server.url() + "/entities", "{\"id\":\"x\"}", "application/json");
  REQUIRE(bad_body);
  CHECK(bad_body->status == 400);
  const auto bad_sub = http_post(server.url() + "/subscriptions",
                                 subscription_for("Flight", "mailto:ops@example.org").to_json().dump(), "application/json");
  REQUIRE(bad_sub);
  CHECK(bad_sub->status == 400);

  try {
    ContextEntity invalid = flight_patch("1", {{"dateALDT", Attribute::date_time(parse_timestamp("2021-02-04T18:00:00Z"))}});
    client.upsert(invalid);
    FAIL("expected 400");
  } catch (const BrokerError& e) {
    CHECK(e.status() == 400);
    CHECK(e.details().is_array());
  }

  client.upsert(flight_patch("1", {{"dateAIBT", Attribute::date_time(parse_timestamp("2021-02-04T17:21:00Z"))}}));
  REQUIRE(broker.wait_idle(10s));
  {
    std::lock_guard lock(m);
    // Creation carries dateAIBT too, so two notifications: the create and the change.
    REQUIRE(received.size() == 2);
    const Json& last = received[0]["sequence"] == 2 ? received[0] : received[1];
    CHECK(last["subscriptionId"] == sub);
    CHECK(last["data"][0]["dateAIBT"]["value"]["@value"] == "2021-02-04T17:21:00.00Z");
  }
  CHECK(hits.load() == 3);

  CHECK(client.remove(flight.id()));
  CHECK_FALSE(client.remove(flight.id()));
  CHECK(client.unsubscribe(sub));
  CHECK_FALSE(client.unsubscribe(sub));
  CHECK(client.metrics()["notificationsDelivered"] == 2);

  BrokerClient down("http://127.0.0.1:1");
  try {
    down.get(flight.id());
    FAIL("expected unreachable");
  } catch (const BrokerError& e) {
    CHECK(e.status() == 0);
  }
}
