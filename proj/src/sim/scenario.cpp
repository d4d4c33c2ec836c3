#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "airtwin/simulator.hpp"

namespace airtwin {

// ---- tracks -----------------------------------------------------------------

double Track::leg_seconds(std::size_t leg) const {
  const double nm = distance_nm(waypoints[leg].position, waypoints[leg + 1].position);
  return nm / leg_speed(leg) * 3600.0;
}

double Track::duration_seconds() const {
  double total = 0;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) total += leg_seconds(i);
  return total;
}

Timestamp Track::end() const { return start + Seconds{static_cast<std::int64_t>(std::floor(duration_seconds()))}; }

std::string ScenarioFlight::route(const std::string& home_iata) const {
  return arrival() ? other_airport_iata + "-" + home_iata : home_iata + "-" + other_airport_iata;
}

std::string ScenarioFlight::registration_key() const {
  std::string key = registration;
  std::erase(key, '-');
  return key;
}

const ScenarioAirport* ScenarioScript::airport(const std::string& iata) const {
  const auto it = airports.find(iata);
  return it == airports.end() ? nullptr : &it->second;
}

// ---- parsing ----------------------------------------------------------------

namespace {

constexpr double kCruiseAltitudeFt = 24000;
constexpr double kCruiseSpeedKn = 360;

const std::vector<Milestone>& scripted_milestones() {
  static const std::vector<Milestone> list{Milestone::TOBT, Milestone::AOBT, Milestone::ATOT, Milestone::ALDT,
                                           Milestone::AIBT};
  return list;
}

std::string default_adshex(const std::string& key) {
  std::uint32_t h = 2166136261u;
  for (const char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%06X", h & 0xffffffu);
  return buf;
}

Track auto_track(const ScenarioFlight& f, const ScenarioAirport& home, const ScenarioAirport& other) {
  const LatLon from = f.arrival() ? *other.location : *home.location;
  const LatLon to = f.arrival() ? *home.location : *other.location;
  Track t;
  t.speed_kn = kCruiseSpeedKn;
  t.waypoints = {Waypoint{from, 0, {}}, Waypoint{interpolate(from, to, 0.5), kCruiseAltitudeFt, {}},
                 Waypoint{to, 0, {}}};
  const auto duration = Seconds{static_cast<std::int64_t>(std::floor(t.duration_seconds()))};
  if (f.arrival()) {
    const auto ldt = f.milestones.find(Milestone::ALDT);
    const Timestamp end = ldt != f.milestones.end() ? ldt->second : f.scheduled - Seconds{300};
    t.start = end - duration;
  } else {
    const auto tot = f.milestones.find(Milestone::ATOT);
    t.start = tot != f.milestones.end() ? tot->second : f.scheduled + Seconds{600};
  }
  return t;
}

class Checker {
 public:
  std::vector<std::string> problems;

  std::string text(const Json& obj, const char* key, const std::string& where, bool required = true) {
    if (obj.contains(key) && obj[key].is_string()) return obj[key].get<std::string>();
    if (required || obj.contains(key)) problems.push_back(where + ": '" + key + "' must be a string");
    return {};
  }

  std::optional<double> number(const Json& obj, const char* key, const std::string& where, bool required = true) {
    if (obj.contains(key) && obj[key].is_number()) return obj[key].get<double>();
    if (required || obj.contains(key)) problems.push_back(where + ": '" + key + "' must be a number");
    return std::nullopt;
  }

  std::optional<Timestamp> time(const Json& obj, const char* key, const std::string& where, bool required = true) {
    const std::string t = text(obj, key, where, required);
    if (t.empty()) return std::nullopt;
    const auto parsed = try_parse_timestamp(t);
    if (!parsed) problems.push_back(where + ": '" + key + "' is not an ISO 8601 date-time");
    return parsed;
  }
};

Track parse_track(const Json& doc, const ScenarioFlight& f, const std::string& where, Checker& check) {
  Track t;
  t.speed_kn = check.number(doc, "speed", where).value_or(0);
  if (t.speed_kn <= 0) check.problems.push_back(where + ": speed must be positive");
  if (!doc.contains("waypoints") || !doc["waypoints"].is_array() || doc["waypoints"].size() < 2) {
    check.problems.push_back(where + ": 'waypoints' needs at least two points");
    return t;
  }
  for (std::size_t i = 0; i < doc["waypoints"].size(); ++i) {
    const Json& w = doc["waypoints"][i];
    const std::string at = where + " waypoint " + std::to_string(i);
    Waypoint p;
    p.position.lat = check.number(w, "lat", at).value_or(0);
    p.position.lon = check.number(w, "lon", at).value_or(0);
    p.altitude_ft = check.number(w, "altitude", at, false).value_or(0);
    p.speed_kn = check.number(w, "speed", at, false);
    if (std::fabs(p.position.lat) > 90 || std::fabs(p.position.lon) > 180) check.problems.push_back(at + ": out of range");
    if (p.altitude_ft < 0) check.problems.push_back(at + ": negative altitude");
    if (p.speed_kn && *p.speed_kn <= 0) check.problems.push_back(at + ": speed must be positive");
    t.waypoints.push_back(p);
  }
  if (const auto start = check.time(doc, "start", where, false)) {
    t.start = *start;
  } else if (doc.contains("startOffset") && doc["startOffset"].is_number_integer()) {
    t.start = f.scheduled + Seconds{doc["startOffset"].get<std::int64_t>()};
  } else {
    check.problems.push_back(where + ": needs 'start' or 'startOffset'");
  }
  return t;
}

}  // namespace

ScenarioScript ScenarioScript::from_json(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  Checker check;
  ScenarioScript s;
  if (doc.contains("seed")) {
    if (doc["seed"].is_number_unsigned()) {
      s.seed = doc["seed"].get<std::uint64_t>();
    } else {
      check.problems.push_back("'seed' must be a non-negative integer");
    }
  }
  s.airport_iata = doc.value("airportIATA", std::string("ABZ"));
  if (const auto t = check.time(doc, "start", "scenario")) s.start = *t;
  if (const auto t = check.time(doc, "end", "scenario")) s.end = *t;
  if (s.end < s.start) check.problems.push_back("scenario: 'end' is before 'start'");
  if (doc.contains("tickSeconds")) {
    if (doc["tickSeconds"].is_number_integer() && doc["tickSeconds"].get<std::int64_t>() >= 1) {
      s.tick_seconds = doc["tickSeconds"].get<std::int64_t>();
    } else {
      check.problems.push_back("'tickSeconds' must be a positive integer");
    }
  }
  s.null_record = doc.value("nullRecord", true);

  for (const auto& a : doc.value("airports", Json::array())) {
    ScenarioAirport ap;
    ap.iata = check.text(a, "iata", "airport");
    ap.icao = check.text(a, "icao", "airport " + ap.iata, false);
    ap.name = check.text(a, "name", "airport " + ap.iata, false);
    const auto lat = check.number(a, "lat", "airport " + ap.iata, false);
    const auto lon = check.number(a, "lon", "airport " + ap.iata, false);
    if (lat && lon) ap.location = LatLon{*lat, *lon};
    if (!s.airports.emplace(ap.iata, ap).second) check.problems.push_back("airport " + ap.iata + " is listed twice");
  }
  for (const auto& a : doc.value("airlines", Json::array())) {
    ScenarioAirline al;
    al.iata = check.text(a, "iata", "airline");
    al.icao = check.text(a, "icao", "airline " + al.iata, false);
    al.name = check.text(a, "name", "airline " + al.iata, false);
    if (!s.airlines.emplace(al.iata, al).second) check.problems.push_back("airline " + al.iata + " is listed twice");
  }

  std::set<std::string> numbers;
  const Json flights = doc.value("flights", Json::array());
  for (std::size_t i = 0; i < flights.size(); ++i) {
    const Json& fj = flights[i];
    std::string where = "flight " + std::to_string(i + 1);
    ScenarioFlight f;
    f.feed_id = static_cast<std::int64_t>(i + 1);
    f.flight_number = check.text(fj, "flightNumber", where);
    if (!f.flight_number.empty()) where += " (" + f.flight_number + ")";
    f.airline_iata = check.text(fj, "airlineIATA", where);
    const std::string dir = check.text(fj, "direction", where);
    if (dir != "A" && dir != "D") {
      check.problems.push_back(where + ": direction must be \"A\" or \"D\"");
    } else {
      f.direction = dir[0];
    }
    f.other_airport_iata = check.text(fj, "otherAirportIATA", where);
    f.registration = check.text(fj, "registration", where);
    f.stand_code = check.text(fj, "standCode", where, false);
    f.gate_code = check.text(fj, "gateCode", where, false);
    f.adshex = fj.contains("adshex") ? check.text(fj, "adshex", where) : default_adshex(f.registration_key());
    if (const auto t = check.time(fj, "scheduled", where)) f.scheduled = *t;
    if (!numbers.insert(f.airline_iata + f.flight_number).second) {
      check.problems.push_back(where + ": flight number is not unique in the day");
    }

    if (fj.contains("delays")) {
      if (!fj["delays"].is_object()) check.problems.push_back(where + ": 'delays' must be an object");
      for (const auto& [name, value] : fj["delays"].items()) {
        const auto m = parse_milestone(name);
        if (!m || std::find(scripted_milestones().begin(), scripted_milestones().end(), *m) == scripted_milestones().end()) {
          check.problems.push_back(where + ": '" + name + "' is not a scripted milestone (TOBT, AOBT, ATOT, ALDT, AIBT)");
          continue;
        }
        if (value.is_number_integer()) {
          f.milestones[*m] = f.scheduled + Seconds{value.get<std::int64_t>()};
        } else if (value.is_string() && try_parse_timestamp(value.get<std::string>())) {
          f.milestones[*m] = parse_timestamp(value.get<std::string>());
        } else {
          check.problems.push_back(where + ": delay of " + name + " must be seconds or a date-time");
        }
      }
    }
    std::optional<Timestamp> previous;
    for (const Milestone m : kActualChain) {
      const auto it = f.milestones.find(m);
      if (it == f.milestones.end()) continue;
      if (previous && it->second < *previous) {
        check.problems.push_back(where + ": milestones must satisfy AOBT <= ATOT <= ALDT <= AIBT");
        break;
      }
      previous = it->second;
    }

    if (fj.contains("track") && !fj["track"].is_null()) {
      if (fj["track"].is_object()) {
        f.track = parse_track(fj["track"], f, where + " track", check);
      } else {
        check.problems.push_back(where + ": 'track' must be an object or null");
      }
    }
    s.flights.push_back(std::move(f));
  }

  if (!check.problems.empty()) {
    std::string message = "invalid scenario:";
    for (const auto& p : check.problems) message += "\n  - " + p;
    throw ConfigError(message);
  }

  // Auto tracks need both airports with coordinates; explicit "track": null opts out.
  const ScenarioAirport* home = s.airport(s.airport_iata);
  for (std::size_t i = 0; i < s.flights.size(); ++i) {
    auto& f = s.flights[i];
    if (f.track || flights[i].contains("track")) continue;
    const ScenarioAirport* other = s.airport(f.other_airport_iata);
    if (home && other && home->location && other->location) f.track = auto_track(f, *home, *other);
  }
  return s;
}

ScenarioScript ScenarioScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  const Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return from_json(doc);
}

Json ScenarioScript::to_json() const {
  Json doc = Json::object();
  doc["seed"] = seed;
  doc["airportIATA"] = airport_iata;
  doc["start"] = format_timestamp(start);
  doc["end"] = format_timestamp(end);
  doc["tickSeconds"] = tick_seconds;
  doc["nullRecord"] = null_record;
  Json aps = Json::array();
  for (const auto& [iata, a] : airports) {
    Json j = Json::object();
    j["iata"] = a.iata;
    j["icao"] = a.icao;
    j["name"] = a.name;
    if (a.location) {
      j["lat"] = a.location->lat;
      j["lon"] = a.location->lon;
    }
    aps.push_back(j);
  }
  doc["airports"] = aps;
  Json als = Json::array();
  for (const auto& [iata, a] : airlines) als.push_back(Json{{"iata", a.iata}, {"icao", a.icao}, {"name", a.name}});
  doc["airlines"] = als;
  Json fl = Json::array();
  for (const auto& f : flights) {
    Json j = Json::object();
    j["flightNumber"] = f.flight_number;
    j["airlineIATA"] = f.airline_iata;
    j["direction"] = std::string(1, f.direction);
    j["otherAirportIATA"] = f.other_airport_iata;
    j["registration"] = f.registration;
    j["adshex"] = f.adshex;
    j["standCode"] = f.stand_code;
    j["gateCode"] = f.gate_code;
    j["scheduled"] = format_timestamp(f.scheduled);
    Json delays = Json::object();
    for (const auto& [m, t] : f.milestones) delays[std::string(to_string(m))] = (t - f.scheduled).count();
    j["delays"] = delays;
    if (f.track) {
      Json t = Json::object();
      t["start"] = format_timestamp(f.track->start);
      t["speed"] = f.track->speed_kn;
      Json wps = Json::array();
      for (const auto& w : f.track->waypoints) {
        Json wj{{"lat", w.position.lat}, {"lon", w.position.lon}, {"altitude", w.altitude_ft}};
        if (w.speed_kn) wj["speed"] = *w.speed_kn;
        wps.push_back(wj);
      }
      t["waypoints"] = wps;
      j["track"] = t;
    } else {
      j["track"] = nullptr;
    }
    fl.push_back(j);
  }
  doc["flights"] = fl;
  return doc;
}

// ---- generator --------------------------------------------------------------

namespace {

struct KnownAirport {
  const char* iata;
  const char* icao;
  const char* name;
  double lat;
  double lon;
};

constexpr KnownAirport kAirports[] = {
    {"ABZ", "EGPD", "Aberdeen", 57.2019, -2.1978},     {"SVG", "ENZV", "Stavanger", 58.8767, 5.6378},
    {"BGO", "ENBR", "Bergen", 60.2934, 5.2181},        {"LHR", "EGLL", "London Heathrow", 51.4700, -0.4543},
    {"AMS", "EHAM", "Amsterdam", 52.3105, 4.7683},     {"CPH", "EKCH", "Copenhagen", 55.6180, 12.6560},
    {"OSL", "ENGM", "Oslo", 60.1976, 11.1004},         {"KOI", "EGPA", "Kirkwall", 58.9578, -2.9050},
    {"LSI", "EGPB", "Sumburgh", 59.8789, -1.2956},     {"MAN", "EGCC", "Manchester", 53.3537, -2.2750},
};

struct KnownAirline {
  const char* iata;
  const char* icao;
  const char* name;
  const char* reg_prefix;
};

constexpr KnownAirline kAirlines[] = {
    {"SK", "SAS", "Scandinavian Airlines", "LN-"}, {"BA", "BAW", "British Airways", "G-"},
    {"KL", "KLM", "KLM", "PH-"},                   {"LM", "LOG", "Loganair", "G-"},
    {"WF", "WIF", "Wideroe", "LN-"},
};

}  // namespace

ScenarioScript generate_scenario(const GeneratorOptions& options) {
  std::mt19937_64 rng(options.seed);
  auto pick = [&](std::uint64_t n) { return rng() % n; };
  auto minutes = [](std::int64_t m) { return Seconds{m * 60}; };

  Json doc = Json::object();
  doc["seed"] = options.seed;
  doc["airportIATA"] = options.airport_iata;
  if (options.hours < 1 || options.start_hour < 0 || options.start_hour > 23) {
    throw ConfigError("generator window must start at hour 0-23 and last at least one hour");
  }
  const Timestamp day = parse_timestamp(options.day + "T00:00:00Z");
  const Timestamp start = day + Seconds{options.start_hour * 3600};
  doc["start"] = format_timestamp(start);
  doc["end"] = format_timestamp(start + Seconds{options.hours * 3600});
  // A full day schedules in-blocks between 06:00 and 20:55; a short window from 30 minutes in.
  const bool full_day = options.hours >= 24 && options.start_hour == 0;
  const Timestamp first_sibt = full_day ? day + Seconds{6 * 3600} : start + Seconds{30 * 60};
  const std::uint64_t slots =
      full_day ? 180 : static_cast<std::uint64_t>(std::max<std::int64_t>(6, (options.hours * 60 - 180) / 5));
  doc["tickSeconds"] = 5;

  Json airports = Json::array();
  std::vector<std::string> destinations;
  bool home_known = false;
  for (const auto& a : kAirports) {
    airports.push_back(Json{{"iata", a.iata}, {"icao", a.icao}, {"name", a.name}, {"lat", a.lat}, {"lon", a.lon}});
    if (a.iata == options.airport_iata) {
      home_known = true;
    } else {
      destinations.emplace_back(a.iata);
    }
  }
  if (!home_known) airports.push_back(Json{{"iata", options.airport_iata}, {"icao", ""}, {"name", options.airport_iata}});
  doc["airports"] = airports;
  Json airlines = Json::array();
  for (const auto& a : kAirlines) airlines.push_back(Json{{"iata", a.iata}, {"icao", a.icao}, {"name", a.name}});
  doc["airlines"] = airlines;

  std::set<std::string> used_numbers;
  std::set<std::string> used_regs;
  Json flights = Json::array();
  const std::size_t rotations = (options.flights + 1) / 2;
  for (std::size_t r = 0; r < rotations; ++r) {
    const KnownAirline& airline = kAirlines[pick(std::size(kAirlines))];
    std::string reg;
    do {
      reg = airline.reg_prefix;
      for (int k = 0; k < 4; ++k) reg += static_cast<char>('A' + pick(26));
    } while (!used_regs.insert(reg).second);
    auto number = [&] {
      std::string n;
      do {
        n = std::to_string(100 + pick(9800));
      } while (!used_numbers.insert(std::string(airline.iata) + n).second);
      return n;
    };
    const std::string origin = destinations[pick(destinations.size())];
    const std::string dest = destinations[pick(destinations.size())];
    char stand[8];
    std::snprintf(stand, sizeof(stand), "%02d", static_cast<int>(1 + pick(20)));
    char gate[8];
    std::snprintf(gate, sizeof(gate), "%02d", static_cast<int>(1 + pick(12)));

    const Timestamp sibt = first_sibt + minutes(static_cast<std::int64_t>(pick(slots)) * 5);
    const std::int64_t arr_delay = static_cast<std::int64_t>(pick(36)) - 10;
    const std::int64_t taxi_in = 3 + static_cast<std::int64_t>(pick(8));
    const Timestamp aibt = sibt + minutes(arr_delay);
    const Timestamp aldt = aibt - minutes(taxi_in);
    Json arrival = Json::object();
    arrival["flightNumber"] = number();
    arrival["airlineIATA"] = airline.iata;
    arrival["direction"] = "A";
    arrival["otherAirportIATA"] = origin;
    arrival["registration"] = reg;
    arrival["standCode"] = stand;
    arrival["gateCode"] = gate;
    arrival["scheduled"] = format_timestamp(sibt);
    arrival["delays"] = Json{{"ALDT", (aldt - sibt).count()}, {"AIBT", (aibt - sibt).count()}};
    flights.push_back(arrival);
    if (flights.size() == options.flights) break;

    // Departure of the same aircraft after a 45-90 minute scheduled turnaround.
    const Timestamp sobt = sibt + minutes(45 + static_cast<std::int64_t>(pick(10)) * 5);
    const Timestamp tobt = std::max(sobt, aibt + minutes(35)) + minutes(static_cast<std::int64_t>(pick(6)));
    const Timestamp aobt = tobt + minutes(static_cast<std::int64_t>(pick(5)));
    const Timestamp atot = aobt + minutes(5 + static_cast<std::int64_t>(pick(11)));
    Json departure = Json::object();
    departure["flightNumber"] = number();
    departure["airlineIATA"] = airline.iata;
    departure["direction"] = "D";
    departure["otherAirportIATA"] = dest;
    departure["registration"] = reg;
    departure["standCode"] = stand;
    departure["gateCode"] = gate;
    departure["scheduled"] = format_timestamp(sobt);
    departure["delays"] = Json{{"TOBT", (tobt - sobt).count()}, {"AOBT", (aobt - sobt).count()},
                               {"ATOT", (atot - sobt).count()}};
    flights.push_back(departure);
  }
  doc["flights"] = flights;
  return ScenarioScript::from_json(doc);
}

// ---- feeds ------------------------------------------------------------------

Json serve_schedule(const ScenarioScript& script, Timestamp at) {
  Json out = Json::array();
  if (script.null_record && !script.flights.empty()) out.push_back(Json{{"id", 0}, {"ScheduledDateTime", nullptr}});
  for (const auto& f : script.flights) {
    const ScenarioAirport* other = script.airport(f.other_airport_iata);
    Json j = Json::object();
    j["id"] = f.feed_id;
    j["FlightNumber"] = f.flight_number;
    j["AirlineIATA"] = f.airline_iata;
    j["DepartureArrivalType"] = std::string(1, f.direction);
    j["OriginDestAirportIATA"] = f.other_airport_iata;
    j["OriginDestAirportICAO"] = other && !other->icao.empty() ? Json(other->icao) : Json(nullptr);
    j["Registration"] = f.registration_key();
    j["StandCode"] = f.stand_code.empty() ? Json(nullptr) : Json(f.stand_code);
    j["GateCode"] = f.gate_code.empty() ? Json(nullptr) : Json(f.gate_code);
    for (const Milestone m : {Milestone::ALDT, Milestone::AIBT, Milestone::AOBT, Milestone::ATOT, Milestone::TOBT}) {
      const auto it = f.milestones.find(m);
      const bool happened = it != f.milestones.end() && it->second <= at;
      j[std::string(to_string(m))] = happened ? Json(format_offset_timestamp(it->second)) : Json(nullptr);
    }
    j["ScheduledDateTime"] = format_offset_timestamp(f.scheduled);
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

std::optional<Json> position_report(const ScenarioFlight& flight, const std::string& home_iata, Timestamp at) {
  if (!flight.track) return std::nullopt;
  const Track& t = *flight.track;
  const double elapsed = static_cast<double>((at - t.start).count());
  if (elapsed < 0 || at > t.end()) return std::nullopt;

  std::size_t leg = 0;
  double into = elapsed;
  while (leg + 2 < t.waypoints.size() && into > t.leg_seconds(leg)) {
    into -= t.leg_seconds(leg);
    ++leg;
  }
  const Waypoint& a = t.waypoints[leg];
  const Waypoint& b = t.waypoints[leg + 1];
  const double leg_s = t.leg_seconds(leg);
  const double f = leg_s > 0 ? std::min(into / leg_s, 1.0) : 1.0;
  const LatLon here = interpolate(a.position, b.position, f);
  const double altitude = std::round(a.altitude_ft + (b.altitude_ft - a.altitude_ft) * f);
  double heading = f < 1.0 ? bearing_deg(here, b.position) : std::fmod(bearing_deg(b.position, a.position) + 180.0, 360.0);
  heading = std::fmod(std::round(heading), 360.0);
  const double vert_rate = leg_s > 0 ? std::round((b.altitude_ft - a.altitude_ft) / (leg_s / 60.0)) : 0.0;

  Json j = Json::object();
  j["reg"] = flight.registration;
  j["flight_number"] = flight.airline_iata + flight.flight_number;
  j["adshex"] = flight.adshex;
  j["lat"] = round6(here.lat);
  j["lon"] = round6(here.lon);
  j["altitude"] = static_cast<std::int64_t>(altitude);
  j["heading"] = static_cast<std::int64_t>(heading);
  j["speed"] = static_cast<std::int64_t>(std::round(t.leg_speed(leg)));
  j["vert_rate"] = static_cast<std::int64_t>(vert_rate);
  j["is_on_ground"] = altitude == 0;
  j["pos_update_time"] = to_epoch(at);
  j["route"] = flight.route(home_iata);
  return j;
}

Json position_frame(const ScenarioScript& script, Timestamp at) {
  Json frame = Json::object();
  for (const auto& f : script.flights) {
    if (auto report = position_report(f, script.airport_iata, at)) frame[f.adshex] = std::move(*report);
  }
  return frame;
}

}  // namespace airtwin
