#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "airtwin/runtime.hpp"

using namespace airtwin;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kRuntimeFailure = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

/// Failure with a chosen exit code; the message goes to stderr.
struct Exit {
  int code;
  std::string message;
};

void setup_logging(const std::string& level) {
  auto logger = spdlog::stderr_logger_mt("airtwin");
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%e level=%l %v");
  logger->set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(logger);
}

std::string text(const ContextEntity& e, const char* name) {
  const Attribute* a = e.find(name);
  if (!a || a->value.is_null()) return "-";
  return a->value.is_string() ? a->value.get<std::string>() : a->value.dump();
}

/// Local part of a relationship target, "-" when absent.
std::string target(const ContextEntity& e, const char* name) {
  const std::string t = text(e, name);
  const auto id = EntityId::try_parse(t);
  return id ? std::string(id->local_key()) : t;
}

/// Maps client failures to exit codes: unreachable services are runtime failures, rejections user errors.
[[noreturn]] void broker_failure(const BrokerError& e, const std::string& url) {
  if (e.status() == 0) throw Exit{kRuntimeFailure, "cannot reach " + url + ": " + e.what()};
  throw Exit{e.status() >= 500 ? kRuntimeFailure : kUserError, e.what()};
}

HttpResponse require_response(const std::optional<HttpResponse>& r, const std::string& url) {
  if (!r) throw Exit{kRuntimeFailure, "cannot reach " + url};
  return *r;
}

std::string error_detail(const HttpResponse& r) {
  const Json doc = Json::parse(r.body, nullptr, false);
  if (doc.is_object() && doc.contains("detail")) return doc["detail"].get<std::string>();
  return r.body;
}

int expect_ok(const HttpResponse& r) {
  if (r.status >= 200 && r.status < 300) {
    std::cout << r.body << "\n";
    return kOk;
  }
  std::cerr << "error " << r.status << ": " << error_detail(r) << "\n";
  return r.status >= 500 ? kRuntimeFailure : kUserError;
}

// ---- run --------------------------------------------------------------------

struct RunArgs {
  std::string config = "config/runtime.json";
  bool lockstep = false;
  bool exit_at_end = false;
  bool broker_only = false;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string history_dir;
  std::optional<double> clock_scale;
  std::string dump;
  std::string log_level;
};

int cmd_run(const RunArgs& a) {
  RuntimeConfig config = RuntimeConfig::load(a.config);
  config.apply_env();
  if (!a.scenario.empty()) config.scenario_path = a.scenario;
  if (a.seed) {
    config.scenario_path.reset();
    config.generate.seed = *a.seed;
  }
  if (!a.history_dir.empty()) config.history_dir = a.history_dir;
  if (a.clock_scale) config.clock_scale = *a.clock_scale;
  if (a.lockstep) config.lockstep = true;
  if (a.exit_at_end) config.exit_at_end = true;
  if (!a.log_level.empty()) config.log_level = a.log_level;
  if (a.broker_only) {
    config.simulator.enabled = config.engine.enabled = config.history.enabled = false;
    config.pipelines_enabled = false;
  }
  config.validate();
  spdlog::set_level(spdlog::level::from_str(config.log_level));

  Runtime runtime(config);
  if (config.lockstep) {
    const LockstepResult result = runtime.run_lockstep();
    runtime.stop();
    if (!a.dump.empty()) {
      std::ofstream out(a.dump);
      if (!out) throw Exit{kUserError, "cannot write " + a.dump};
      out << Json(runtime.broker_state()).dump(2) << "\n";
    }
    std::cout << result.to_json().dump(2) << "\n";
    return kOk;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  runtime.start();
  spdlog::info("component=runtime mode=live scale={} broker={}", config.clock_scale, runtime.broker_url());
  while (!g_stop && !(config.exit_at_end && runtime.scenario_finished())) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  spdlog::info("component=runtime event=shutdown");
  runtime.stop();
  if (!a.dump.empty()) {
    std::ofstream out(a.dump);
    out << Json(runtime.broker_state()).dump(2) << "\n";
  }
  return kOk;
}

// ---- query ------------------------------------------------------------------

int query_entity(const std::string& broker, const std::string& id_text, bool json) {
  const auto id = EntityId::try_parse(id_text);
  if (!id) throw Exit{kUserError, "'" + id_text + "' is not an entity id"};
  std::optional<ContextEntity> e;
  try {
    e = BrokerClient(broker).get(*id);
  } catch (const BrokerError& err) {
    broker_failure(err, broker);
  }
  if (!e) throw Exit{kUserError, "not found: " + id_text};
  if (json) {
    std::cout << serialize_entity(*e).dump(2) << "\n";
    return kOk;
  }
  std::cout << fmt::format("{} ({})\n", e->id().str(), e->type());
  for (const auto& [name, attr] : e->attributes()) {
    std::cout << fmt::format("  {:<22} {}\n", name, attr.value.is_string() ? attr.value.get<std::string>() : attr.value.dump());
  }
  return kOk;
}

int query_flights(const std::string& broker, const std::string& number, const std::string& date, bool json) {
  EntityQuery q{"Flight", {}, std::nullopt};
  if (!number.empty()) q.filters.push_back(AttributeFilter{"flightNumber", Comparator::Eq, number});
  if (!date.empty()) {
    const auto day = try_parse_timestamp(date + "T00:00:00Z");
    if (!day) throw Exit{kUserError, "--date must be YYYY-MM-DD"};
    q.window = TimeWindow{"dateScheduled", *day, *day + Seconds{86399}};
  }
  std::vector<ContextEntity> flights;
  try {
    flights = BrokerClient(broker).query(q);
  } catch (const BrokerError& err) {
    broker_failure(err, broker);
  }
  std::sort(flights.begin(), flights.end(), [](const auto& x, const auto& y) {
    return std::pair(text(x, "dateScheduled"), x.id().str()) < std::pair(text(y, "dateScheduled"), y.id().str());
  });
  if (json) {
    Json out = Json::array();
    for (const auto& f : flights) out.push_back(serialize_entity(f));
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  std::cout << fmt::format("{:<34} {:<8} {:<5} {:<13} {:<13} {:<24} {:<5} {}\n", "id", "number", "air", "from", "to",
                           "scheduled", "stand", "state");
  for (const auto& f : flights) {
    std::cout << fmt::format("{:<34} {:<8} {:<5} {:<13} {:<13} {:<24} {:<5} {}\n", f.id().str(), text(f, "flightNumber"),
                             target(f, "belongsToAirline"), target(f, "departsFromAirport"),
                             target(f, "arrivesToAirport"), text(f, "dateScheduled"), text(f, "standCode"),
                             text(f, "state"));
  }
  std::cerr << flights.size() << " flight(s)\n";
  return kOk;
}

int query_history(const std::string& history, const std::string& id, const std::string& from, const std::string& to,
                  bool json) {
  std::string url = history + "/history/" + url_encode(id);
  std::string sep = "?";
  for (const auto& [k, v] : {std::pair{"from", from}, std::pair{"to", to}}) {
    if (v.empty()) continue;
    url += sep + k + "=" + url_encode(v);
    sep = "&";
  }
  const HttpResponse r = require_response(http_get(url), history);
  if (r.status != 200) {
    std::cerr << "error " << r.status << ": " << error_detail(r) << "\n";
    return r.status >= 500 ? kRuntimeFailure : kUserError;
  }
  const Json events = Json::parse(r.body);
  if (json) {
    std::cout << events.dump(2) << "\n";
    return kOk;
  }
  std::cout << fmt::format("{:>8} {:<24} {}\n", "sequence", "recordedAt", "changed");
  for (const auto& e : events) {
    std::string changed;
    for (const auto& n : e["changedAttributes"]) changed += (changed.empty() ? "" : ",") + n.get<std::string>();
    std::cout << fmt::format("{:>8} {:<24} {}\n", e["sequence"].get<std::uint64_t>(),
                             e["recordedAt"].get<std::string>(), changed);
  }
  std::cerr << events.size() << " event(s)\n";
  return kOk;
}

// ---- replay -----------------------------------------------------------------

int cmd_replay(const std::string& capture, const std::string& pipeline, const std::string& out,
               const std::vector<std::string>& vars) {
  PipelineConfig config;
  std::vector<FlowRecord> records;
  try {
    config = PipelineConfig::load(pipeline);
    records = read_capture(capture, config.name);
  } catch (const ConfigError& e) {
    throw Exit{kUserError, e.what()};
  }
  for (const auto& v : vars) {
    const auto eq = v.find('=');
    if (eq == std::string::npos) throw Exit{kUserError, "--var expects name=value, got '" + v + "'"};
    config.variables[v.substr(0, eq)] = v.substr(eq + 1);
  }
  auto sink = std::make_shared<FileSink>(out);
  auto dead = std::make_shared<DeadLetterLog>();
  Pipeline p = Pipeline::from_config(config, sink, dead);
  for (auto& r : records) p.process(std::move(r));
  std::cout << p.status().dump(2) << "\n";
  std::cerr << sink->written() << " file(s) written to " << out << ", " << dead->size() << " failed\n";
  return kOk;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  GeneratorOptions generate;
  std::string write;
  int rest_port = 8090;
  int tcp_port = 8091;
  double clock_scale = 60;
  std::string token = "Bearer demo-token";
};

int cmd_simulate(const SimulateArgs& a) {
  ScenarioScript script;
  try {
    script = a.scenario.empty() ? generate_scenario(a.generate) : ScenarioScript::load(a.scenario);
  } catch (const ConfigError& e) {
    throw Exit{kUserError, e.what()};
  }
  if (!a.write.empty()) {
    std::ofstream out(a.write);
    if (!out) throw Exit{kUserError, "cannot write " + a.write};
    out << script.to_json().dump(2) << "\n";
    std::cerr << script.flights.size() << " flight(s) written to " << a.write << "\n";
    return kOk;
  }
  ScaledClock clock(script.start, a.clock_scale);
  SimulatorOptions options;
  options.rest_port = a.rest_port;
  options.tcp_port = a.tcp_port;
  options.token = a.token;
  Simulator sim(script, clock, options);
  try {
    sim.start();
  } catch (const std::exception& e) {
    throw Exit{kRuntimeFailure, std::string("simulator: ") + e.what()};
  }
  spdlog::info("component=simulator rest={} stream={} flights={}", sim.rest_port(), sim.tcp_port(), script.flights.size());
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop && clock.now() <= script.end) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  sim.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Airport turnaround digital twin"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Start the configured components");
  run_cmd->add_option("-c,--config", run.config, "Runtime config file")->capture_default_str();
  run_cmd->add_flag("--lockstep", run.lockstep, "Step a manual clock through the whole scenario and exit");
  run_cmd->add_flag("--exit-at-end", run.exit_at_end, "Stop when the simulated clock passes the scenario end");
  run_cmd->add_flag("--broker-only", run.broker_only, "Run the broker alone");
  run_cmd->add_option("--scenario", run.scenario, "Scenario script");
  run_cmd->add_option("--seed", run.seed, "Generate the scenario from this seed instead of a script");
  run_cmd->add_option("--history-dir", run.history_dir, "History segment directory");
  run_cmd->add_option("--clock-scale", run.clock_scale, "Simulated seconds per wall second");
  run_cmd->add_option("--dump", run.dump, "Write the broker end state to this file");

  auto* query_cmd = app.add_subcommand("query", "Read state from a running system");
  query_cmd->require_subcommand(1);
  std::string broker = "http://127.0.0.1:1026";
  std::string history = "http://127.0.0.1:8092";
  bool json = false;
  std::string id, number, date, from, to;
  auto* q_entity = query_cmd->add_subcommand("entity", "One entity by id");
  q_entity->add_option("--id", id, "Entity URN")->required();
  auto* q_flights = query_cmd->add_subcommand("flights", "Flights, optionally by number or day");
  q_flights->add_option("--number", number, "Flight number");
  q_flights->add_option("--date", date, "Scheduled day, YYYY-MM-DD");
  auto* q_history = query_cmd->add_subcommand("history", "Stored changes of one entity");
  q_history->add_option("--id", id, "Entity URN")->required();
  q_history->add_option("--from", from, "Inclusive start, ISO 8601");
  q_history->add_option("--to", to, "Exclusive end, ISO 8601");
  for (auto* c : {q_entity, q_flights}) c->add_option("--broker", broker, "Broker base URL")->capture_default_str();
  q_history->add_option("--history", history, "History service base URL")->capture_default_str();
  for (auto* c : {q_entity, q_flights, q_history}) c->add_flag("--json", json, "Raw JSON output");

  std::string capture, pipeline, out;
  std::vector<std::string> vars;
  auto* replay_cmd = app.add_subcommand("replay", "Run a capture file through a pipeline offline");
  replay_cmd->add_option("--capture", capture, "Capture file, one record per line")->required();
  replay_cmd->add_option("--pipeline", pipeline, "Pipeline config")->required();
  replay_cmd->add_option("--out", out, "Directory for sink bodies")->required();
  replay_cmd->add_option("--var", vars, "Pipeline variable override, name=value");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Serve a scenario's feeds, or write a generated scenario");
  sim_cmd->add_option("--scenario", sim.scenario, "Scenario script");
  sim_cmd->add_option("--seed", sim.generate.seed, "Generator seed")->capture_default_str();
  sim_cmd->add_option("--flights", sim.generate.flights, "Generated flight count")->capture_default_str();
  sim_cmd->add_option("--day", sim.generate.day, "Generated day")->capture_default_str();
  sim_cmd->add_option("--airport", sim.generate.airport_iata, "Home airport IATA code")->capture_default_str();
  sim_cmd->add_option("--start-hour", sim.generate.start_hour, "Generated window start hour")->capture_default_str();
  sim_cmd->add_option("--hours", sim.generate.hours, "Generated window length")->capture_default_str();
  sim_cmd->add_option("--write", sim.write, "Write the scenario script here and exit");
  sim_cmd->add_option("--rest-port", sim.rest_port, "Schedule feed port")->capture_default_str();
  sim_cmd->add_option("--tcp-port", sim.tcp_port, "Position stream port")->capture_default_str();
  sim_cmd->add_option("--clock-scale", sim.clock_scale, "Simulated seconds per wall second")->capture_default_str();

  std::string engine = "http://127.0.0.1:8093";
  std::string flight, milestone, at, status, issuer;
  auto* ms_cmd = app.add_subcommand("milestone", "Record an A-CDM milestone of a flight");
  ms_cmd->add_option("--flight", flight, "Flight URN")->required();
  ms_cmd->add_option("--milestone", milestone, "AOBT, ATOT, ALDT, AIBT, TOBT, ...")->required();
  ms_cmd->add_option("--at", at, "ISO 8601 instant")->required();
  auto* task_cmd = app.add_subcommand("task", "Change the status of a turnaround task");
  task_cmd->add_option("--id", id, "FlightNotification URN")->required();
  task_cmd->add_option("--status", status, "active, inactive, completed")->required();
  task_cmd->add_option("--issuer", issuer, "Who reports the change");
  for (auto* c : {ms_cmd, task_cmd}) c->add_option("--engine", engine, "Engine service base URL")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  try {
    setup_logging(log_level);
  } catch (const std::exception& e) {
    std::cerr << "bad --log-level: " << e.what() << "\n";
    return kUserError;
  }

  try {
    if (*run_cmd) {
      if (run.log_level.empty() && log_level != "info") run.log_level = log_level;
      return cmd_run(run);
    }
    if (*q_entity) return query_entity(broker, id, json);
    if (*q_flights) return query_flights(broker, number, date, json);
    if (*q_history) return query_history(history, id, from, to, json);
    if (*replay_cmd) return cmd_replay(capture, pipeline, out, vars);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*ms_cmd) {
      const std::string url = engine + "/turnaround/flights/" + url_encode(flight) + "/milestones";
      const Json body{{"milestone", milestone}, {"at", at}};
      return expect_ok(require_response(http_post(url, body.dump(), "application/json"), engine));
    }
    if (*task_cmd) {
      const std::string url = engine + "/turnaround/tasks/" + url_encode(id);
      Json body{{"status", status}};
      if (!issuer.empty()) body["issuer"] = issuer;
      return expect_ok(require_response(http_post(url, body.dump(), "application/json"), engine));
    }
  } catch (const Exit& e) {
    std::cerr << e.message << "\n";
    return e.code;
  } catch (const RuntimeError& e) {
    spdlog::error("component={} startup failed: {}", e.component(), e.what());
    return e.component() == "config" || e.component() == "scenario" ? kUserError : kRuntimeFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeFailure;
  }
  return kOk;
}
