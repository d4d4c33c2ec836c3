#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "airtwin/feeds.hpp"
#include "airtwin/geo.hpp"
#include "airtwin/http.hpp"
#include "airtwin/records.hpp"
#include "airtwin/time.hpp"

namespace airtwin {

struct ScenarioAirport {
  std::string iata;
  std::string icao;
  std::string name;
  std::optional<LatLon> location;
};

struct ScenarioAirline {
  std::string iata;
  std::string icao;
  std::string name;
};

struct Waypoint {
  LatLon position;
  double altitude_ft = 0;
  /// Ground speed on the leg ending here; the track speed when absent.
  std::optional<double> speed_kn;
};

/// A timed path: legs are flown at constant ground speed with altitude varying linearly.
struct Track {
  Timestamp start{};
  std::vector<Waypoint> waypoints;
  double speed_kn = 0;

  double leg_speed(std::size_t leg) const { return waypoints[leg + 1].speed_kn.value_or(speed_kn); }
  /// Seconds needed for leg i (between waypoints i and i+1).
  double leg_seconds(std::size_t leg) const;
  double duration_seconds() const;
  Timestamp end() const;
};

struct ScenarioFlight {
  /// Numeric id of the schedule feed, 1-based in script order.
  std::int64_t feed_id = 0;
  std::string flight_number;
  std::string airline_iata;
  char direction = 'A';
  std::string other_airport_iata;
  std::string registration;
  std::string adshex;
  std::string stand_code;
  std::string gate_code;
  Timestamp scheduled{};
  /// Absolute milestone times (ALDT, AIBT, AOBT, ATOT, TOBT).
  std::map<Milestone, Timestamp> milestones;
  std::optional<Track> track;

  bool arrival() const { return direction == 'A'; }
  std::string route(const std::string& home_iata) const;
  /// Registration without hyphens, the form used for Aircraft ids.
  std::string registration_key() const;
};

/// Scripted airport day. File format (JSON) documented in docs/scenario-format.md.
struct ScenarioScript {
  std::uint64_t seed = 0;
  std::string airport_iata = "ABZ";
  Timestamp start{};
  Timestamp end{};
  std::int64_t tick_seconds = 5;
  bool null_record = true;
  std::map<std::string, ScenarioAirport> airports;
  std::map<std::string, ScenarioAirline> airlines;
  std::vector<ScenarioFlight> flights;

  /// Throws ConfigError listing every problem.
  static ScenarioScript from_json(const Json& doc);
  static ScenarioScript load(const std::filesystem::path& path);
  Json to_json() const;

  const ScenarioAirport* airport(const std::string& iata) const;
};

/// A synthetic day of arrival/departure rotations around the home airport.
struct GeneratorOptions {
  std::uint64_t seed = 1;
  std::size_t flights = 10;
  std::string day = "2021-02-04";
  std::string airport_iata = "ABZ";
  /// Scenario window: `hours` from `start_hour` on `day`. Shorter windows pack arrivals near the start.
  int start_hour = 0;
  int hours = 24;
};
ScenarioScript generate_scenario(const GeneratorOptions& options);

/// The schedule feed as seen at `at`: milestones that have happened are filled, the rest null.
Json serve_schedule(const ScenarioScript& script, Timestamp at);

/// Position report of one aircraft, or nullopt when its track is not active at `at`.
std::optional<Json> position_report(const ScenarioFlight& flight, const std::string& home_iata, Timestamp at);

/// Object keyed by adshex of every aircraft on an active track at `at`.
Json position_frame(const ScenarioScript& script, Timestamp at);

struct SimulatorOptions {
  std::string host = "127.0.0.1";
  int rest_port = 8090;
  int tcp_port = 8091;
  /// Expected "Authorization" header value on the REST feed; empty disables the check.
  std::string token = "Bearer demo-token";
  /// Broadcast frames from a background thread each tick of the clock. Off in lockstep runs.
  bool live_ticker = true;
};

/// Serves the schedule over HTTP and the position stream over TCP from one script and one clock.
class Simulator {
 public:
  Simulator(ScenarioScript script, const Clock& clock, SimulatorOptions options = {});
  ~Simulator();

  void start();
  void stop();
  /// Broadcasts the frame for the current simulated time; returns its payload.
  Json tick();

  int rest_port() const { return http_.port(); }
  int tcp_port() const { return frames_.port(); }
  const ScenarioScript& script() const { return script_; }
  std::size_t frame_clients() const { return frames_.client_count(); }
  std::uint64_t ticks() const noexcept { return ticks_; }

 private:
  ScenarioScript script_;
  const Clock& clock_;
  SimulatorOptions options_;
  HttpServer http_;
  FrameServer frames_;
  std::mutex tick_mutex_;
  std::atomic<std::uint64_t> ticks_{0};
  std::jthread ticker_;
};

}  // namespace airtwin
