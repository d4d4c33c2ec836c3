#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "airtwin/simulator.hpp"
#include "test_util.hpp"

using namespace airtwin;
using namespace std::chrono_literals;
using airtwin::test::load_json;

namespace {

Json base_script() {
  return Json::parse(R"({
    "seed": 1,
    "airportIATA": "ABZ",
    "start": "2021-02-04T00:00:00Z",
    "end": "2021-02-05T00:00:00Z",
    "airports": [
      {"iata": "ABZ", "icao": "EGPD", "name": "Aberdeen", "lat": 57.2019, "lon": -2.1978},
      {"iata": "SVG", "icao": "ENZV", "name": "Stavanger", "lat": 58.8767, "lon": 5.6378}
    ],
    "airlines": [{"iata": "SK", "icao": "SAS", "name": "Scandinavian Airlines"}],
    "flights": []
  })");
}

Json sk1234() {
  return Json::parse(R"({
    "flightNumber": "1234", "airlineIATA": "SK", "direction": "A", "otherAirportIATA": "SVG",
    "registration": "AAAAA", "standCode": "01", "gateCode": "01",
    "scheduled": "2021-02-04T17:20:00Z", "delays": {"AIBT": 0}
  })");
}

// Independent midpoint oracle: the spherical midpoint formula.
LatLon midpoint_oracle(LatLon a, LatLon b) {
  const double r = std::numbers::pi / 180.0;
  const double la1 = a.lat * r, la2 = b.lat * r, lo1 = a.lon * r;
  const double dlo = (b.lon - a.lon) * r;
  const double bx = std::cos(la2) * std::cos(dlo);
  const double by = std::cos(la2) * std::sin(dlo);
  const double lat = std::atan2(std::sin(la1) + std::sin(la2), std::sqrt((std::cos(la1) + bx) * (std::cos(la1) + bx) + by * by));
  const double lon = lo1 + std::atan2(by, std::cos(la1) + bx);
  return {lat / r, lon / r};
}

// Haversine distance, independent of the library's vector form.
double haversine_nm(LatLon a, LatLon b) {
  const double r = std::numbers::pi / 180.0;
  const double dla = (b.lat - a.lat) * r;
  const double dlo = (b.lon - a.lon) * r;
  const double h = std::pow(std::sin(dla / 2), 2) + std::cos(a.lat * r) * std::cos(b.lat * r) * std::pow(std::sin(dlo / 2), 2);
  return 2 * kEarthRadiusNm * std::asin(std::sqrt(h));
}

}  // namespace

TEST_CASE("schedule: one scripted arrival after in-block matches the schedule listing") {
  Json doc = base_script();
  doc["flights"].push_back(sk1234());
  const auto script = ScenarioScript::from_json(doc);
  Json got = serve_schedule(script, parse_timestamp("2021-02-04T17:30:00Z"));
  // The feed also reports ATOT, which the listing omits.
  CHECK(got[1]["ATOT"].is_null());
  got[1].erase("ATOT");
  CHECK(got.dump() == load_json("chroma_schedule.json").dump());
}

TEST_CASE("schedule: empty script gives an empty array; before any milestone only the schedule is set") {
  const auto empty = ScenarioScript::from_json(base_script());
  CHECK(serve_schedule(empty, parse_timestamp("2021-02-04T12:00:00Z")) == Json::array());

  Json doc = base_script();
  doc["flights"].push_back(sk1234());
  const auto script = ScenarioScript::from_json(doc);
  const Json early = serve_schedule(script, parse_timestamp("2021-02-04T06:00:00Z"));
  for (const char* m : {"ALDT", "AIBT", "AOBT", "ATOT", "TOBT"}) CHECK(early[1][m].is_null());
  CHECK(early[1]["ScheduledDateTime"] == "2021-02-04T17:20:00+00:00");
}

TEST_CASE("property: schedule milestones follow the script clock and never revert") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto script = generate_scenario({seed, 12, "2021-02-04", "ABZ"});
    // Oracle works from the serialized script: scheduled + delay seconds.
    const Json doc = script.to_json();
    std::map<std::pair<std::int64_t, std::string>, std::string> last;
    for (std::int64_t minute = 0; minute <= 24 * 60; minute += 7) {
      const Timestamp at = script.start + Seconds{minute * 60};
      const Json feed = serve_schedule(script, at);
      REQUIRE(feed.size() == doc["flights"].size() + 1);
      CHECK(feed[0]["id"] == 0);
      for (std::size_t i = 0; i < doc["flights"].size(); ++i) {
        const Json& f = doc["flights"][i];
        const Json& row = feed[i + 1];
        const Timestamp scheduled = parse_timestamp(f["scheduled"].get<std::string>());
        for (const char* m : {"ALDT", "AIBT", "AOBT", "ATOT", "TOBT"}) {
          Json expected = nullptr;
          if (f["delays"].contains(m)) {
            const Timestamp t = scheduled + Seconds{f["delays"][m].get<std::int64_t>()};
            if (t <= at) expected = format_offset_timestamp(t);
          }
          CHECK(row[m] == expected);
          const auto key = std::make_pair(row["id"].get<std::int64_t>(), std::string(m));
          if (const auto it = last.find(key); it != last.end()) CHECK(row[m] == it->second);
          if (row[m].is_string()) last[key] = row[m].get<std::string>();
        }
      }
    }
  }
}

TEST_CASE("positions: an inbound aircraft report has the position listing's shape") {
  Json doc = base_script();
  Json f = sk1234();
  f["registration"] = "AA-AAAA";
  f["adshex"] = "X";
  f["delays"] = Json{{"ALDT", -300}, {"AIBT", 0}};
  doc["flights"].push_back(f);
  const auto script = ScenarioScript::from_json(doc);
  const Track& track = *script.flights[0].track;
  CHECK(track.end() == parse_timestamp("2021-02-04T17:15:00Z"));

  const Json frame = position_frame(script, track.end() - Seconds{600});
  REQUIRE(frame.contains("X"));
  const Json& x = frame["X"];
  const Json expected = load_json("planefinder_positions.json")["X"];
  std::vector<std::string> keys, expected_keys;
  for (const auto& [k, v] : x.items()) keys.push_back(k);
  for (const auto& [k, v] : expected.items()) expected_keys.push_back(k);
  CHECK(keys == expected_keys);
  for (const auto& [k, v] : expected.items()) {
    CHECK_MESSAGE(x[k].type_name() == std::string(v.type_name()), k);
  }
  CHECK(x["reg"] == "AA-AAAA");
  CHECK(x["flight_number"] == "SK1234");
  CHECK(x["route"] == "SVG-ABZ");
  CHECK(x["is_on_ground"] == false);
  CHECK(x["vert_rate"].get<int>() < 0);
  CHECK(x["pos_update_time"] == to_epoch(track.end() - Seconds{600}));

  CHECK(position_frame(script, parse_timestamp("2021-02-04T03:00:00Z")) == Json::object());
  CHECK(position_frame(script, track.end() + Seconds{1}) == Json::object());
}

TEST_CASE("positions: midpoint of a two-waypoint constant-speed leg at half the leg time") {
  const LatLon a{57.2019, -2.1978};
  const LatLon b{58.8767, 5.6378};
  const double speed = haversine_nm(a, b) / 2.0;  // a two-hour leg
  Json doc = base_script();
  Json f = sk1234();
  f["track"] = Json{{"start", "2021-02-04T10:00:00Z"},
                    {"speed", speed},
                    {"waypoints", Json::array({Json{{"lat", a.lat}, {"lon", a.lon}, {"altitude", 10000}},
                                               Json{{"lat", b.lat}, {"lon", b.lon}, {"altitude", 20000}}})}};
  doc["flights"].push_back(f);
  const auto script = ScenarioScript::from_json(doc);
  const auto report = position_report(script.flights[0], "ABZ", parse_timestamp("2021-02-04T11:00:00Z"));
  REQUIRE(report);
  const LatLon mid = midpoint_oracle(a, b);
  CHECK(std::fabs((*report)["lat"].get<double>() - mid.lat) < 1e-6);
  CHECK(std::fabs((*report)["lon"].get<double>() - mid.lon) < 1e-6);
  CHECK((*report)["altitude"] == 15000);
  CHECK((*report)["vert_rate"] == std::lround(10000.0 / 120.0));
}

TEST_CASE("property: emitted positions respect scripted speeds; on-ground iff altitude zero") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto script = generate_scenario({seed, 10, "2021-02-04", "ABZ"});
    std::map<std::string, std::pair<Timestamp, Json>> previous;
    for (Timestamp at = script.start; at < script.end; at += Seconds{30}) {
      const Json frame = position_frame(script, at);
      for (const auto& [hex, r] : frame.items()) {
        CHECK(r["is_on_ground"].get<bool>() == (r["altitude"].get<std::int64_t>() == 0));
        CHECK(r["heading"].get<int>() >= 0);
        CHECK(r["heading"].get<int>() < 360);
        if (const auto it = previous.find(hex); it != previous.end() && it->second.first == at - Seconds{30}) {
          const Json& p = it->second.second;
          const double moved = haversine_nm({p["lat"].get<double>(), p["lon"].get<double>()},
                                            {r["lat"].get<double>(), r["lon"].get<double>()});
          const double max_speed = std::max(p["speed"].get<double>(), r["speed"].get<double>()) + 0.5;
          CHECK(moved <= max_speed * 30.0 / 3600.0 + 1e-4);
        }
        previous[hex] = {at, r};
      }
    }
  }
}

TEST_CASE("determinism: same seed, same script and frames; different seed, different script") {
  const auto a = generate_scenario({42, 10, "2021-02-04", "ABZ"});
  const auto b = generate_scenario({42, 10, "2021-02-04", "ABZ"});
  const auto c = generate_scenario({43, 10, "2021-02-04", "ABZ"});
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.to_json().dump() != c.to_json().dump());
  CHECK(a.flights.size() == 10);
  for (Timestamp at = a.start; at < a.end; at += Seconds{600}) {
    CHECK(serve_schedule(a, at).dump() == serve_schedule(b, at).dump());
    CHECK(encode_frame(position_frame(a, at).dump()) == encode_frame(position_frame(b, at).dump()));
  }
  // The serialized form loads back to the same script.
  CHECK(ScenarioScript::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("generated days hold valid rotations") {
  const auto s = generate_scenario({7, 11, "2021-02-04", "ABZ"});
  REQUIRE(s.flights.size() == 11);
  for (std::size_t i = 0; i + 1 < s.flights.size(); i += 2) {
    const auto& arr = s.flights[i];
    const auto& dep = s.flights[i + 1];
    CHECK(arr.arrival());
    CHECK_FALSE(dep.arrival());
    CHECK(arr.registration == dep.registration);
    CHECK(arr.milestones.at(Milestone::AIBT) <= dep.milestones.at(Milestone::AOBT));
    CHECK(dep.milestones.at(Milestone::AOBT) <= dep.milestones.at(Milestone::ATOT));
  }
}

TEST_CASE("scenario validation reports every problem") {
  Json doc = base_script();
  Json f1 = sk1234();
  f1["delays"] = Json{{"ALDT", 600}, {"AIBT", 0}};
  Json f2 = sk1234();
  f2["direction"] = "X";
  f2["delays"] = Json{{"SOBT", 0}};
  doc["flights"] = Json::array({f1, f2});
  try {
    ScenarioScript::from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("AOBT <= ATOT <= ALDT <= AIBT") != std::string::npos);
    CHECK(msg.find("not unique") != std::string::npos);
    CHECK(msg.find("direction") != std::string::npos);
    CHECK(msg.find("SOBT") != std::string::npos);
  }
}

TEST_CASE("simulator serves the schedule over HTTP and positions over TCP") {
  const auto script = generate_scenario({3, 6, "2021-02-04", "ABZ"});
  ManualClock clock(script.flights[0].track->start + Seconds{60});
  SimulatorOptions options;
  options.rest_port = 0;
  options.tcp_port = 0;
  options.live_ticker = false;
  Simulator sim(script, clock, options);
  sim.start();

  const std::string url = "http://127.0.0.1:" + std::to_string(sim.rest_port()) + "/chroma/flights";
  HttpClientOptions auth;
  auth.headers.emplace("Authorization", "Bearer demo-token");
  const auto ok = http_get(url, auth);
  REQUIRE(ok);
  CHECK(ok->status == 200);
  CHECK(Json::parse(ok->body) == serve_schedule(script, clock.now()));
  const auto denied = http_get(url);
  REQUIRE(denied);
  CHECK(denied->status == 401);

  TcpSourceOptions t;
  t.port = sim.tcp_port();
  TcpSource source(t);
  std::optional<FlowRecord> got;
  std::jthread reader([&](std::stop_token stop) { got = source.next(stop); });
  const auto deadline = std::chrono::steady_clock::now() + 3s;
  while (sim.frame_clients() == 0 && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(2ms);
  const Json frame = sim.tick();
  reader.join();
  REQUIRE(got);
  CHECK(got->payload == frame);
  CHECK(frame.contains(script.flights[0].adshex));
  sim.stop();
}
