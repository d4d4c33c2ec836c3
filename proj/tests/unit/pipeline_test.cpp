#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "airtwin/pipeline.hpp"
#include "test_util.hpp"

using namespace airtwin;
using airtwin::test::load_json;
using airtwin::test::normalised_flight_entity;

namespace {

std::string config_path(const std::string& name) { return std::string(AIRTWIN_CONFIG_DIR) + "/pipelines/" + name; }

FlowRecord record_of(Json payload, std::uint64_t seq = 1) { return FlowRecord{std::move(payload), {}, "test", {seq}}; }

const std::map<std::string, std::string> kVars{{"airportIATA", "ABZ"}};

/// The aircraft listing with the two values it derives inconsistently replaced by what the feed implies.
Json normalised_aircraft_entity() {
  Json doc = load_json("aircraft_entity.json");
  doc["id"] = "urn:ngsi-ld:Aircraft:aircraft-AAAAAA";
  doc["flightNumberIATA"]["value"] = "SK1234";
  return doc;
}

bool close_rel(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::fabs(b); }

struct Harness {
  std::shared_ptr<CollectSink> sink = std::make_shared<CollectSink>();
  std::shared_ptr<DeadLetterLog> dead = std::make_shared<DeadLetterLog>();
  Pipeline pipeline;

  explicit Harness(const std::string& config)
      : pipeline(Pipeline::from_config(PipelineConfig::load(config_path(config)), sink, dead)) {}

  void check_conservation() const {
    for (std::size_t i = 0; i < pipeline.stage_count(); ++i) {
      const auto& c = pipeline.counters(i);
      CHECK(c.in.load() == c.out.load() + c.dropped.load() + c.failed.load());
    }
    const auto& s = pipeline.sink_counters();
    CHECK(s.in.load() == s.out.load() + s.failed.load());
  }
};

}  // namespace

TEST_CASE("JsonPath resolves members, indices and quoted keys") {
  const Json doc = Json::parse(R"({"a": {"b": [10, {"c d": "x"}]}, "n": null})");
  CHECK(*JsonPath::parse("$").resolve(doc) == doc);
  CHECK(*JsonPath::parse("$.a.b[0]").resolve(doc) == 10);
  CHECK(*JsonPath::parse("$.a.b[1]['c d']").resolve(doc) == "x");
  CHECK(JsonPath::parse("$.n").resolve(doc)->is_null());
  CHECK(JsonPath::parse("$.a.b[5]").resolve(doc) == nullptr);
  CHECK(JsonPath::parse("$.zz").resolve(doc) == nullptr);
  CHECK_THROWS_AS(JsonPath::parse("a.b"), ConfigError);
  CHECK_THROWS_AS(JsonPath::parse("$..a"), ConfigError);
  CHECK_THROWS_AS(JsonPath::parse("$[x]"), ConfigError);
}

TEST_CASE("templates and expressions") {
  const std::map<std::string, std::string> attrs{{"dat", "A"}, {"orig", "SVG"}, {"gone", "null"}};
  const Scope scope{&attrs, &kVars};
  CHECK(Template::parse("${airportIATA}-${orig}").render(scope) == "ABZ-SVG");
  CHECK(Template::parse("$${x}").render(scope) == "${x}");
  CHECK(Template::parse("${missing}").render(scope) == "null");

  CHECK(Expression::parse("${dat} == 'A'").evaluate(scope));
  CHECK_FALSE(Expression::parse("${dat} == 'D'").evaluate(scope));
  CHECK(Expression::parse("isNull(${gone}) && notNull(${orig})").evaluate(scope));
  CHECK(Expression::parse("${gone} == null").evaluate(scope));
  CHECK(Expression::parse("!(${dat} != 'A') || false").evaluate(scope));
  CHECK(Expression::parse("startsWith(concat(${orig}, '-'), 'SVG-')").evaluate(scope));
  CHECK(Expression::parse("equalsIgnoreCase(${orig}, 'svg')").evaluate(scope));
  CHECK(Expression::parse("${dat} == 'A'").references() == std::set<std::string>{"dat"});

  for (const char* bad : {"${dat} ==", "(${dat} == 'A'", "foo(${x})", "'open", "isNull(${a}, ${b})", "${dat} = 'A'"}) {
    CHECK_THROWS_AS(Expression::parse(bad), ConfigError);
  }
}

TEST_CASE("split: the schedule array into flights, empty arrays, aircraft maps") {
  const Json schedule_feed = load_json("chroma_schedule.json");
  const auto r = SplitProcessor(JsonPath::parse("$"), SplitProcessor::Mode::Array).process(record_of(schedule_feed, 7));
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].payload == schedule_feed[0]);
  CHECK(r.records[1].payload == schedule_feed[1]);
  CHECK(r.records[1].sequence == std::vector<std::uint64_t>{7, 1});
  CHECK(r.records[1].source == "test");

  const auto empty = SplitProcessor(JsonPath::parse("$"), SplitProcessor::Mode::Array).process(record_of(Json::array()));
  CHECK(empty.outcome == Outcome::Out);
  CHECK(empty.records.empty());

  const Json position_feed = load_json("planefinder_positions.json");
  const auto aircraft = SplitProcessor(JsonPath::parse("$"), SplitProcessor::Mode::Object).process(record_of(position_feed));
  REQUIRE(aircraft.records.size() == 2);
  CHECK(aircraft.records[0].payload == position_feed["X"]);
  CHECK(aircraft.records[1].payload == position_feed["Y"]);

  CHECK(SplitProcessor(JsonPath::parse("$"), SplitProcessor::Mode::Array).process(record_of(position_feed)).outcome ==
        Outcome::Failed);
}

TEST_CASE("evaluate: extracted attributes, missing fields become \"null\"") {
  const Json flight = load_json("chroma_schedule.json")[1];
  EvaluateProcessor eval({{"dat", JsonPath::parse("$.DepartureArrivalType")},
                          {"orig", JsonPath::parse("$.OriginDestAirportIATA")},
                          {"nope", JsonPath::parse("$.NoSuchField")}});
  const auto r = eval.process(record_of(flight));
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].attributes.at("dat") == "A");
  CHECK(r.records[0].attributes.at("orig") == "SVG");
  CHECK(r.records[0].attributes.at("nope") == "null");
  CHECK(r.records[0].payload == flight);

  const Json x = load_json("planefinder_positions.json")["X"];
  const auto a = EvaluateProcessor({{"put", JsonPath::parse("$.pos_update_time")}, {"reg", JsonPath::parse("$.reg")}})
                     .process(record_of(x));
  CHECK(a.records[0].attributes.at("put") == "1612457454");
  CHECK(a.records[0].attributes.at("reg") == "AA-AAAA");
}

TEST_CASE("route: null schedules and foreign routes are dropped") {
  const Json schedule_feed = load_json("chroma_schedule.json");
  RouteProcessor scheduled(Expression::parse("notNull(${scheduled})"), kVars);
  EvaluateProcessor eval({{"scheduled", JsonPath::parse("$.ScheduledDateTime")}});
  CHECK(scheduled.process(eval.process(record_of(schedule_feed[0])).records[0]).outcome == Outcome::Dropped);
  CHECK(scheduled.process(eval.process(record_of(schedule_feed[1])).records[0]).outcome == Outcome::Out);

  const auto config = PipelineConfig::load(config_path("planefinder-aircraft.json"));
  const auto route = make_processor(config.stages[2], config.variables);
  const auto evaluate = make_processor(config.stages[1], config.variables);
  const Json position_feed = load_json("planefinder_positions.json");
  CHECK(route->process(evaluate->process(record_of(position_feed["Y"])).records[0]).outcome == Outcome::Dropped);
  CHECK(route->process(evaluate->process(record_of(position_feed["X"])).records[0]).outcome == Outcome::Out);
  Json no_number = position_feed["X"];
  no_number["flight_number"] = nullptr;
  CHECK(route->process(evaluate->process(record_of(no_number)).records[0]).outcome == Outcome::Dropped);
}

TEST_CASE("update: arrival and departure branches, strip, prefix split and epoch conversion") {
  const auto config = PipelineConfig::load(config_path("chroma-flights.json"));
  const auto update = make_processor(config.stages[3], config.variables);
  FlowRecord arrival = record_of(Json::object());
  arrival.attributes = {{"dat", "A"}, {"orig", "SVG"}};
  auto r = update->process(arrival);
  CHECK(r.records[0].attributes.at("arrivesToAirport") == "ABZ");
  CHECK(r.records[0].attributes.at("departsFromAirport") == "SVG");
  CHECK(r.records[0].payload == Json::object());

  FlowRecord departure = record_of(Json::object());
  departure.attributes = {{"dat", "D"}, {"orig", "SVG"}};
  r = update->process(departure);
  CHECK(r.records[0].attributes.at("arrivesToAirport") == "SVG");
  CHECK(r.records[0].attributes.at("departsFromAirport") == "ABZ");

  const auto pf = PipelineConfig::load(config_path("planefinder-aircraft.json"));
  const auto aircraft_update = make_processor(pf.stages[3], pf.variables);
  FlowRecord x = record_of(Json::object());
  x.attributes = {{"reg", "AA-AAAA"}, {"put", "1612457454"}, {"flightNumber", "SK1234"}};
  r = aircraft_update->process(x);
  REQUIRE(r.outcome == Outcome::Out);
  CHECK(r.records[0].attributes.at("reg") == "AAAAAA");
  CHECK(r.records[0].attributes.at("dateIssued") == "2021-02-04T16:50:54.00Z");
  CHECK(r.records[0].attributes.at("flightNumber") == "1234");
  CHECK(r.records[0].attributes.at("airlineIATA") == "SK");

  x.attributes["put"] = "yesterday";
  CHECK(aircraft_update->process(x).outcome == Outcome::Failed);
}

TEST_CASE("unit conversions reproduce the sample aircraft values") {
  CHECK(round_to(UnitConversion::parse("ft->m").apply(7675), 6) == doctest::Approx(2339.339925).epsilon(1e-12));
  CHECK(round_to(UnitConversion::parse("kn->km/h").apply(281), 6) == doctest::Approx(520.411811).epsilon(1e-12));
  CHECK(round_to(UnitConversion::parse("ft/min->m/s").apply(-1856), 6) == doctest::Approx(-9.428499).epsilon(1e-12));
  CHECK_THROWS_AS(UnitConversion::parse("mi->km"), ConfigError);
}

TEST_CASE("golden: schedule listing through the flight chain yields the flight listing") {
  Harness h("chroma-flights.json");
  h.pipeline.process(record_of(load_json("chroma_schedule.json")));
  const auto out = h.sink->records();
  REQUIRE(out.size() == 1);
  CHECK(out[0].payload.dump(2) == normalised_flight_entity().dump(2));
  CHECK(h.pipeline.counters(2).dropped.load() == 1);
  CHECK(h.dead->size() == 0);
  h.check_conservation();
}

TEST_CASE("golden: position listing through the aircraft chain yields the aircraft listing") {
  Harness h("planefinder-aircraft.json");
  h.pipeline.process(record_of(load_json("planefinder_positions.json")));
  const auto out = h.sink->records();
  REQUIRE(out.size() == 1);
  const Json& doc = out[0].payload;
  const Json expected = normalised_aircraft_entity();

  std::vector<std::string> keys, expected_keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  for (const auto& [k, v] : expected.items()) expected_keys.push_back(k);
  CHECK(keys == expected_keys);

  const auto& coords = doc["location"]["value"]["coordinates"];
  REQUIRE(coords.size() == 3);
  CHECK(close_rel(coords[0].get<double>(), 57.305525, 1e-6));
  CHECK(close_rel(coords[1].get<double>(), -1.622521, 1e-6));
  CHECK(close_rel(coords[2].get<double>(), 2339.339925, 1e-6));
  CHECK(close_rel(doc["speed"]["value"].get<double>(), 520.411811, 1e-6));
  CHECK(close_rel(doc["verticalSpeed"]["value"].get<double>(), -9.428499, 1e-6));
  CHECK(doc["dateIssued"]["value"]["@value"] == "2021-02-04T16:50:54.00Z");
  // Printed digits match exactly as well.
  CHECK(doc.dump(2) == expected.dump(2));
  h.check_conservation();
}

TEST_CASE("identity transform passes an NGSI document through unchanged") {
  TransformProcessor identity(TransformSpec::from_json(Json{{"identity", true}}), {});
  const Json doc = normalised_flight_entity();
  CHECK(identity.process(record_of(doc)).records[0].payload == doc);
}

TEST_CASE("transform: missing mandatory fields go to the failure route") {
  Harness h("chroma-flights.json");
  Json flight = load_json("chroma_schedule.json")[1];
  flight.erase("FlightNumber");
  h.pipeline.process(record_of(Json::array({flight})));
  CHECK(h.sink->records().empty());
  CHECK(h.pipeline.counters(4).failed.load() == 1);
  const auto letters = h.dead->entries();
  REQUIRE(letters.size() == 1);
  CHECK(letters[0].stage == "JoltTransformJson_To_NGSI");
  CHECK(letters[0].reason.find("flightNumber") != std::string::npos);
  h.check_conservation();
}

TEST_CASE("transform spec validation") {
  CHECK_THROWS_AS(TransformSpec::from_json(Json::parse(R"({"entityType": "Flight"})")), ConfigError);
  CHECK_THROWS_AS(TransformSpec::from_json(Json::parse(
                      R"({"entityType": "Flight", "id": {"from": "$.id"},
                          "attributes": [{"name": "a", "from": "$.a"}, {"name": "a", "from": "$.b"}]})")),
                  ConfigError);
  CHECK_THROWS_AS(TransformSpec::from_json(Json::parse(
                      R"({"entityType": "Flight", "id": {"from": "$.id"},
                          "attributes": [{"name": "a", "from": "$.a", "convert": "ft->parsec"}]})")),
                  ConfigError);
  CHECK_THROWS_AS(TransformSpec::from_json(Json::parse(
                      R"({"entityType": "Flight", "id": {"from": "$.id"},
                          "attributes": [{"name": "a", "kind": "Thing", "from": "$.a"}]})")),
                  ConfigError);
}

TEST_CASE("sanitize: forbidden characters are removed from values only") {
  SanitizeProcessor s;
  Json doc = normalised_flight_entity();
  CHECK(s.process(record_of(doc)).records[0].payload == doc);

  doc["standCode"]["value"] = "A(1)=B;";
  CHECK(s.process(record_of(doc)).records[0].payload["standCode"]["value"] == "A1B");

  Json bad = normalised_flight_entity();
  bad["gate(Code)"] = bad["gateCode"];
  CHECK(s.process(record_of(bad)).outcome == Outcome::Failed);
}

TEST_CASE("property: sanitize matches a character-filter oracle") {
  std::mt19937_64 rng(3);
  const std::string alphabet = "abcXYZ019 -_:/.<>\"'=;()";
  for (int i = 0; i < 500; ++i) {
    std::string text;
    const std::size_t len = rng() % 24;
    for (std::size_t k = 0; k < len; ++k) text += alphabet[rng() % alphabet.size()];
    std::string expected;
    for (const char c : text) {
      if (c != '<' && c != '>' && c != '"' && c != '\'' && c != '=' && c != ';' && c != '(' && c != ')') expected += c;
    }
    const Json doc = Json{{"v", text}, {"nested", Json::array({text, 1})}};
    const auto out = SanitizeProcessor().process(record_of(doc)).records[0].payload;
    CHECK(out["v"] == expected);
    CHECK(out["nested"][0] == expected);
    CHECK(out["nested"][1] == 1);
  }
}

TEST_CASE("1000 synthetic flights with 500 null schedules: 500 delivered, 500 dropped") {
  Harness h("chroma-flights.json");
  const Json template_flight = load_json("chroma_schedule.json")[1];
  Json feed = Json::array();
  std::mt19937_64 rng(1000);
  std::vector<bool> null_schedule(1000, false);
  for (std::size_t i = 0; i < 500; ++i) null_schedule[i] = true;
  std::shuffle(null_schedule.begin(), null_schedule.end(), rng);
  for (std::size_t i = 0; i < 1000; ++i) {
    Json f = template_flight;
    f["id"] = i + 1;
    f["FlightNumber"] = std::to_string(1000 + i);
    if (null_schedule[i]) f["ScheduledDateTime"] = nullptr;
    feed.push_back(f);
  }
  h.pipeline.process(record_of(feed));
  CHECK(h.sink->records().size() == 500);
  CHECK(h.pipeline.counters(2).dropped.load() == 500);
  CHECK(h.pipeline.counters(2).out.load() == 500);
  CHECK(h.pipeline.sink_counters().out.load() == 500);
  h.check_conservation();
}

TEST_CASE("empty source gives no sink calls and no failures") {
  Harness h("chroma-flights.json");
  PipelineRunner runner(std::make_unique<VectorSource>(std::vector<FlowRecord>{}), h.pipeline);
  runner.start();
  runner.wait();
  CHECK(h.sink->records().empty());
  CHECK(h.dead->size() == 0);
  CHECK(h.pipeline.status()["stages"][0]["in"] == 0);
}

TEST_CASE("property: concurrent runner preserves source order and equals the synchronous run") {
  std::mt19937_64 rng(99);
  const Json template_flight = load_json("chroma_schedule.json")[1];
  std::vector<FlowRecord> input;
  for (std::uint64_t poll = 1; poll <= 30; ++poll) {
    Json feed = Json::array();
    const std::size_t n = rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      Json f = template_flight;
      f["id"] = poll * 100 + i;
      f["FlightNumber"] = std::to_string(rng() % 9000 + 1000);
      if (rng() % 4 == 0) f["ScheduledDateTime"] = nullptr;
      if (rng() % 5 == 0) f.erase("FlightNumber");
      feed.push_back(f);
    }
    input.push_back(FlowRecord{feed, {}, "chroma", {poll}});
  }

  Harness sync("chroma-flights.json");
  for (const auto& r : input) sync.pipeline.process(r);

  Harness threaded("chroma-flights.json");
  PipelineRunner runner(std::make_unique<VectorSource>(input), threaded.pipeline, 2);
  runner.start();
  runner.wait();

  const auto a = sync.sink->records();
  const auto b = threaded.sink->records();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].payload.dump() == b[i].payload.dump());
    if (i > 0) CHECK(b[i - 1].sequence < b[i].sequence);
  }
  threaded.check_conservation();
  CHECK(threaded.pipeline.status() == sync.pipeline.status());
}

TEST_CASE("config validation enumerates every problem") {
  Json doc = Json::parse(R"cfg({
    "name": "broken",
    "source": {"kind": "carrier-pigeon"},
    "stages": [
      {"name": "a", "kind": "route", "predicate": "notNull(${never_set})"},
      {"name": "b", "kind": "route", "predicate": "${x} =="},
      {"name": "c", "kind": "frobnicate"}
    ],
    "sink": {"kind": "broker"}
  })cfg");
  try {
    PipelineConfig::from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("carrier-pigeon") != std::string::npos);
    CHECK(msg.find("never_set") != std::string::npos);
    CHECK(msg.find("${x} ==") != std::string::npos);
    CHECK(msg.find("frobnicate") != std::string::npos);
  }
  CHECK_NOTHROW(PipelineConfig::load(config_path("chroma-flights.json")));
  CHECK_NOTHROW(PipelineConfig::load(config_path("planefinder-aircraft.json")));
}

TEST_CASE("capture files round-trip and report malformed lines") {
  const auto dir = std::filesystem::temp_directory_path() / "airtwin_capture_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "in.ndjson";
  std::vector<FlowRecord> records{record_of(load_json("chroma_schedule.json"), 1),
                                  record_of(load_json("planefinder_positions.json"), 2)};
  write_capture(path, records);
  const auto back = read_capture(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].payload == records[0].payload);
  CHECK(back[1].sequence == records[1].sequence);

  {
    std::ofstream out(dir / "bad.ndjson");
    out << "[1,2]\n\n{\"payload\": 3}\n{not json\n";
  }
  try {
    read_capture(dir / "bad.ndjson");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }

  DeadLetterLog log(dir / "dead.ndjson");
  std::filesystem::remove(dir / "dead.ndjson");
  log.record(DeadLetter{"p", "s", "why", records[0]});
  const auto lines = airtwin::test::read_file((dir / "dead.ndjson").string());
  CHECK(Json::parse(lines)["reason"] == "why");
  std::filesystem::remove_all(dir);
}
