#include "airtwin/runtime.hpp"

#include <spdlog/spdlog.h>
#include <zlib.h>

#include <cstdlib>
#include <fstream>
#include <set>

namespace airtwin {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kEntityTypes{"Airport", "Airline", "Aircraft", "Flight", "FlightNotification"};

/// Collects every problem of a config document before one RuntimeError is thrown.
struct Problems {
  std::vector<std::string> items;
  void add(std::string p) { items.push_back(std::move(p)); }
  void raise(const std::string& component) const {
    if (items.empty()) return;
    std::string msg;
    for (const auto& p : items) msg += (msg.empty() ? "" : "; ") + p;
    throw RuntimeError(component, msg);
  }
};

class Reader {
 public:
  Reader(const Json& doc, std::string prefix, Problems& problems)
      : doc_(doc), prefix_(std::move(prefix)), problems_(problems) {}

  bool has(const char* key) const { return doc_.is_object() && doc_.contains(key) && !doc_[key].is_null(); }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    const Json& v = doc_[key];
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return problems_.add(name(key) + " must be true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return problems_.add(name(key) + " must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return problems_.add(name(key) + " must be a number");
    } else {
      if (!v.is_number_integer()) return problems_.add(name(key) + " must be an integer");
    }
    out = v.get<T>();
  }

  Reader section(const char* key) const {
    static const Json empty = Json::object();
    if (!has(key)) return Reader(empty, name(key), problems_);
    if (!doc_[key].is_object()) problems_.add(name(key) + " must be an object");
    return Reader(doc_[key].is_object() ? doc_[key] : empty, name(key), problems_);
  }

  void endpoint(RuntimeConfig::Endpoint& e, const char* port_key = "port") const {
    read("enabled", e.enabled);
    read("host", e.host);
    read(port_key, e.port);
  }

  const Json& doc() const { return doc_; }
  std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const Json& doc_;
  std::string prefix_;
  Problems& problems_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string hex8(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

/// Path part of an http URL, "/" when it has none.
std::string url_path(const std::string& url) {
  const auto scheme = url.find("://");
  const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  return slash == std::string::npos ? "/" : url.substr(slash);
}

}  // namespace

// ---- config -----------------------------------------------------------------

RuntimeConfig RuntimeConfig::from_json(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw RuntimeError("config", "runtime config must be a JSON object");
  Problems problems;
  const Reader root(doc, "", problems);
  RuntimeConfig c;
  root.read("logLevel", c.log_level);
  root.read("clockScale", c.clock_scale);
  root.read("lockstep", c.lockstep);
  root.read("exitAtEnd", c.exit_at_end);

  const Reader scenario = root.section("scenario");
  if (scenario.has("path")) {
    std::string p;
    scenario.read("path", p);
    c.scenario_path = resolve(base_dir, p);
  }
  scenario.read("seed", c.generate.seed);
  scenario.read("flights", c.generate.flights);
  scenario.read("day", c.generate.day);
  scenario.read("airport", c.generate.airport_iata);
  scenario.read("startHour", c.generate.start_hour);
  scenario.read("hours", c.generate.hours);

  const Reader broker = root.section("broker");
  broker.endpoint(c.broker);
  const Reader retry = broker.section("retry");
  retry.read("maxAttempts", c.retry.max_attempts);
  std::int64_t backoff = c.retry.initial_backoff.count();
  retry.read("initialBackoffMs", backoff);
  c.retry.initial_backoff = std::chrono::milliseconds(backoff);
  retry.read("multiplier", c.retry.multiplier);

  const Reader sim = root.section("simulator");
  sim.endpoint(c.simulator, "restPort");
  sim.read("tcpPort", c.simulator_tcp_port);
  sim.read("token", c.simulator_token);

  const Reader pipes = root.section("pipelines");
  pipes.read("enabled", c.pipelines_enabled);
  if (pipes.has("configs")) {
    const Json& list = pipes.doc()["configs"];
    if (!list.is_array()) problems.add("pipelines.configs must be a list of paths");
    for (const auto& p : list.is_array() ? list : Json::array()) {
      if (!p.is_string()) {
        problems.add("pipelines.configs must be a list of paths");
        break;
      }
      c.pipelines.push_back(resolve(base_dir, p.get<std::string>()));
    }
  }

  const Reader engine = root.section("engine");
  engine.endpoint(c.engine);
  engine.read("delayThresholdSeconds", c.delay_threshold);
  engine.read("strands", c.engine_strands);
  if (engine.has("taskTemplate")) {
    std::string p;
    engine.read("taskTemplate", p);
    c.task_template = resolve(base_dir, p);
  }

  const Reader history = root.section("history");
  history.endpoint(c.history);
  if (history.has("directory")) {
    std::string p;
    history.read("directory", p);
    c.history_dir = resolve(base_dir, p);
  }

  root.section("status").endpoint(c.status);
  problems.raise("config");
  c.validate();
  return c;
}

RuntimeConfig RuntimeConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("config", "cannot open " + path.string());
  const Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw RuntimeError("config", path.string() + " is not valid JSON");
  return from_json(doc, path.parent_path());
}

const std::vector<std::string>& runtime_env_names() {
  static const std::vector<std::string> names{
      "AIRTWIN_LOG_LEVEL",   "AIRTWIN_CLOCK_SCALE",   "AIRTWIN_SCENARIO",     "AIRTWIN_SEED",
      "AIRTWIN_BROKER_PORT", "AIRTWIN_SIM_REST_PORT", "AIRTWIN_SIM_TCP_PORT", "AIRTWIN_ENGINE_PORT",
      "AIRTWIN_HISTORY_PORT", "AIRTWIN_STATUS_PORT",  "AIRTWIN_HISTORY_DIR",  "AIRTWIN_DELAY_THRESHOLD"};
  return names;
}

void RuntimeConfig::apply_env(const std::function<std::optional<std::string>(const std::string&)>& lookup) {
  Problems problems;
  auto integer = [&](const std::string& name, auto& out) {
    const auto v = lookup(name);
    if (!v) return;
    try {
      std::size_t used = 0;
      const long long n = std::stoll(*v, &used);
      if (used != v->size()) throw std::invalid_argument(*v);
      out = static_cast<std::remove_reference_t<decltype(out)>>(n);
    } catch (const std::exception&) {
      problems.add(name + "='" + *v + "' is not an integer");
    }
  };
  if (const auto v = lookup("AIRTWIN_LOG_LEVEL")) log_level = *v;
  if (const auto v = lookup("AIRTWIN_CLOCK_SCALE")) {
    try {
      clock_scale = std::stod(*v);
    } catch (const std::exception&) {
      problems.add("AIRTWIN_CLOCK_SCALE='" + *v + "' is not a number");
    }
  }
  if (const auto v = lookup("AIRTWIN_SCENARIO")) scenario_path = fs::path(*v);
  integer("AIRTWIN_SEED", generate.seed);
  integer("AIRTWIN_BROKER_PORT", broker.port);
  integer("AIRTWIN_SIM_REST_PORT", simulator.port);
  integer("AIRTWIN_SIM_TCP_PORT", simulator_tcp_port);
  integer("AIRTWIN_ENGINE_PORT", engine.port);
  integer("AIRTWIN_HISTORY_PORT", history.port);
  integer("AIRTWIN_STATUS_PORT", status.port);
  if (const auto v = lookup("AIRTWIN_HISTORY_DIR")) history_dir = fs::path(*v);
  integer("AIRTWIN_DELAY_THRESHOLD", delay_threshold);
  problems.raise("config");
}

void RuntimeConfig::apply_env() {
  apply_env([](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    return v ? std::optional<std::string>(v) : std::nullopt;
  });
}

void RuntimeConfig::validate() const {
  Problems problems;
  static const std::set<std::string> levels{"trace", "debug", "info", "warn", "error", "critical", "off"};
  if (!levels.count(log_level)) problems.add("logLevel '" + log_level + "' is not one of trace..off");
  if (!(clock_scale > 0)) problems.add("clockScale must be positive");
  if (!scenario_path && generate.flights == 0) problems.add("scenario needs a path or a flight count");

  std::map<int, std::string> ports;
  auto port = [&](bool enabled, int p, const std::string& name) {
    if (!enabled) return;
    if (p < 0 || p > 65535) return problems.add(name + " port " + std::to_string(p) + " is out of range");
    if (p == 0) return;
    const auto [it, fresh] = ports.emplace(p, name);
    if (!fresh) problems.add(name + " and " + it->second + " both use port " + std::to_string(p));
  };
  port(broker.enabled, broker.port, "broker");
  port(simulator.enabled, simulator.port, "simulator");
  port(simulator.enabled, simulator_tcp_port, "simulator stream");
  port(engine.enabled, engine.port, "engine");
  port(history.enabled, history.port, "history");
  port(status.enabled, status.port, "status");

  if (broker.enabled && retry.max_attempts < 1) problems.add("broker.retry.maxAttempts must be at least 1");
  if (pipelines_enabled && pipelines.empty()) problems.add("pipelines are enabled but pipelines.configs is empty");
  if (engine.enabled && !broker.enabled) problems.add("engine needs the broker component");
  if (engine.enabled && engine_strands < 1) problems.add("engine.strands must be at least 1");
  if (engine.enabled && delay_threshold < 0) problems.add("engine.delayThresholdSeconds must not be negative");
  if (history.enabled && !broker.enabled) problems.add("history needs the broker component");
  if (history.enabled && history_dir.empty()) problems.add("history.directory is required");
  if (lockstep && !broker.enabled) problems.add("lockstep runs need the broker component");
  problems.raise("config");
}

Json LockstepResult::to_json() const {
  Json doc = Json::object();
  doc["ticks"] = ticks;
  doc["broker"] = broker.to_json();
  doc["entities"] = Json(entity_counts);
  doc["brokerDigest"] = broker_digest;
  doc["historyChecksum"] = history_checksum;
  doc["historyEvents"] = history_events;
  return doc;
}

// ---- runtime ----------------------------------------------------------------

Runtime::Runtime(RuntimeConfig config) : config_(std::move(config)) {
  config_.validate();
  try {
    script_ = config_.scenario_path ? ScenarioScript::load(*config_.scenario_path) : generate_scenario(config_.generate);
  } catch (const std::exception& e) {
    throw RuntimeError("scenario", e.what());
  }
  if (config_.pipelines_enabled) {
    for (const auto& p : config_.pipelines) {
      try {
        pipeline_configs_.push_back(PipelineConfig::load(p));
      } catch (const std::exception& e) {
        throw RuntimeError("pipelines", e.what());
      }
    }
  }
}

Runtime::~Runtime() { stop(); }

const Clock& Runtime::clock() const {
  if (manual_clock_) return *manual_clock_;
  if (scaled_clock_) return *scaled_clock_;
  throw RuntimeError("runtime", "not started");
}

std::string Runtime::broker_url() const {
  return broker_server_ ? broker_server_->url() : "http://" + config_.broker.host + ":" + std::to_string(config_.broker.port);
}

bool Runtime::scenario_finished() const { return (manual_clock_ || scaled_clock_) && clock().now() > script_.end; }

PipelineConfig Runtime::adapt(PipelineConfig config) const {
  config.variables["airportIATA"] = script_.airport_iata;
  if (simulator_) {
    const std::string kind = config.source.value("kind", "");
    if (kind == "http-poll") {
      config.source["url"] = "http://127.0.0.1:" + std::to_string(simulator_->rest_port()) +
                             url_path(config.source.value("url", "/chroma/flights"));
    } else if (kind == "tcp") {
      config.source["host"] = "127.0.0.1";
      config.source["port"] = simulator_->tcp_port();
    }
  }
  if (broker_server_ && config.sink.value("kind", "") == "broker") config.sink["url"] = broker_server_->url();
  return config;
}

std::unique_ptr<Source> Runtime::make_source(const PipelineConfig& config) {
  const Json& s = config.source;
  const std::string kind = s.value("kind", "none");
  if (kind == "http-poll") {
    RestPollerOptions o;
    o.url = s.value("url", "");
    o.interval_seconds = s.value("intervalSeconds", std::int64_t{60});
    o.source_name = s.value("sourceName", config.name);
    const Json headers = s.value("headers", Json::object());
    for (const auto& [k, v] : headers.items()) o.http.headers.emplace(k, v.get<std::string>());
    return std::make_unique<RestPoller>(o, clock());
  }
  if (kind == "tcp") {
    TcpSourceOptions o;
    o.host = s.value("host", o.host);
    o.port = s.value("port", o.port);
    o.source_name = s.value("sourceName", config.name);
    return std::make_unique<TcpSource>(o);
  }
  if (kind == "capture") return std::make_unique<VectorSource>(read_capture(s.value("path", ""), config.name));
  return std::make_unique<VectorSource>(std::vector<FlowRecord>{});
}

std::shared_ptr<Sink> Runtime::make_sink(const PipelineConfig& config) {
  const Json& s = config.sink;
  const std::string kind = s.value("kind", "collect");
  if (kind == "broker") {
    if (broker_) {
      ContextBroker* broker = broker_.get();
      return std::make_shared<FunctionSink>("broker", [broker](const Json& doc) { broker->upsert(parse_entity(doc)); });
    }
    auto client = std::make_shared<BrokerClient>(s.value("url", ""));
    return std::make_shared<FunctionSink>("broker", [client](const Json& doc) { client->upsert(parse_entity(doc)); });
  }
  if (kind == "files") return std::make_shared<FileSink>(s.value("directory", config.name));
  return std::make_shared<CollectSink>();
}

void Runtime::publish_reference_data() {
  for (const auto& [iata, a] : script_.airports) {
    ContextEntity e(make_entity_id("Airport", iata), "Airport");
    e.set("iataCode", Attribute::property(a.iata));
    if (!a.icao.empty()) e.set("icaoCode", Attribute::property(a.icao));
    if (!a.name.empty()) e.set("name", Attribute::property(a.name));
    if (a.location) e.set("location", Attribute::geo_point(GeoPoint{a.location->lat, a.location->lon, std::nullopt}));
    broker_->upsert(e);
  }
  for (const auto& [iata, a] : script_.airlines) {
    ContextEntity e(make_entity_id("Airline", iata), "Airline");
    e.set("iataCode", Attribute::property(a.iata));
    if (!a.icao.empty()) e.set("icaoCode", Attribute::property(a.icao));
    if (!a.name.empty()) e.set("name", Attribute::property(a.name));
    broker_->upsert(e);
  }
}

void Runtime::build(bool lockstep) {
  if (started_) throw RuntimeError("runtime", "already started");
  started_ = true;
  auto port = [&](int configured) { return lockstep ? 0 : configured; };
  const Clock* clk = nullptr;
  if (lockstep) {
    manual_clock_ = std::make_unique<ManualClock>(script_.start);
    clk = manual_clock_.get();
  } else {
    scaled_clock_ = std::make_unique<ScaledClock>(script_.start, config_.clock_scale);
    clk = scaled_clock_.get();
  }

  if (config_.broker.enabled) {
    BrokerOptions options;
    options.retry = config_.retry;
    broker_ = std::make_unique<ContextBroker>(options, *clk, http_notification_sender());
    broker_server_ = std::make_unique<BrokerServer>(*broker_);
    if (broker_server_->start(config_.broker.host, port(config_.broker.port)) < 0) {
      throw RuntimeError("broker", "cannot listen on " + config_.broker.host + ":" + std::to_string(config_.broker.port));
    }
    spdlog::info("component=broker url={}", broker_server_->url());
  }

  if (config_.simulator.enabled) {
    SimulatorOptions options;
    options.host = config_.simulator.host;
    options.rest_port = port(config_.simulator.port);
    options.tcp_port = port(config_.simulator_tcp_port);
    options.token = config_.simulator_token;
    options.live_ticker = !lockstep;
    simulator_ = std::make_unique<Simulator>(script_, *clk, options);
    try {
      simulator_->start();
    } catch (const std::exception& e) {
      throw RuntimeError("simulator", e.what());
    }
    spdlog::info("component=simulator rest={} stream={} flights={}", simulator_->rest_port(), simulator_->tcp_port(),
                 script_.flights.size());
  }

  if (config_.history.enabled) {
    try {
      store_ = std::make_unique<HistoryStore>(config_.history_dir);
    } catch (const std::exception& e) {
      throw RuntimeError("history", e.what());
    }
    HistoryServiceOptions options;
    options.host = config_.history.host;
    options.port = port(config_.history.port);
    history_service_ = std::make_unique<HistoryService>(*store_, options);
    if (history_service_->start() < 0) {
      throw RuntimeError("history", "cannot listen on port " + std::to_string(config_.history.port));
    }
    for (const auto& s : history_service_->subscriptions()) broker_->subscribe(s);
    if (!lockstep) history_service_->start_consumer();
    spdlog::info("component=history port={} dir={} events={}", history_service_->port(), config_.history_dir.string(),
                 store_->size());
  }

  if (config_.engine.enabled) {
    EngineOptions options;
    options.airport_iata = script_.airport_iata;
    options.delay_threshold = config_.delay_threshold;
    if (config_.task_template) {
      try {
        std::ifstream in(*config_.task_template);
        if (!in) throw std::runtime_error("cannot open " + config_.task_template->string());
        options.task_template = parse_task_template(Json::parse(in));
      } catch (const std::exception& e) {
        throw RuntimeError("engine", e.what());
      }
    }
    engine_ = std::make_unique<TurnaroundEngine>(options);
    EngineServiceOptions service_options;
    service_options.host = config_.engine.host;
    service_options.port = port(config_.engine.port);
    service_options.strands = config_.engine_strands;
    engine_service_ = std::make_unique<EngineService>(*engine_, BrokerClient(broker_server_->url()), *clk, service_options);
    if (engine_service_->start() < 0) {
      throw RuntimeError("engine", "cannot listen on port " + std::to_string(config_.engine.port));
    }
    engine_service_->restore();
    broker_->subscribe(engine_service_->subscription());
    if (!lockstep) engine_service_->start_consumer();
    spdlog::info("component=engine port={} airport={}", engine_service_->port(), script_.airport_iata);
  }

  if (broker_) publish_reference_data();

  for (const auto& raw : pipeline_configs_) {
    const PipelineConfig config = adapt(raw);
    try {
      pipelines_.push_back(std::make_unique<Pipeline>(Pipeline::from_config(
          config, make_sink(config), std::make_shared<DeadLetterLog>())));
    } catch (const std::exception& e) {
      throw RuntimeError("pipelines", config.name + ": " + e.what());
    }
    if (!lockstep) {
      runners_.push_back(std::make_unique<PipelineRunner>(make_source(config), *pipelines_.back()));
      runners_.back()->start();
    }
    spdlog::info("component=pipeline name={} source={}", config.name, config.source.value("kind", "none"));
  }

  if (config_.status.enabled && !lockstep) {
    status_server_ = std::make_unique<HttpServer>();
    status_server_->get("/status", [this](const HttpRequest&) { return json_response(200, status().dump()); });
    if (status_server_->start(config_.status.host, config_.status.port) < 0) {
      throw RuntimeError("status", "cannot listen on port " + std::to_string(config_.status.port));
    }
    spdlog::info("component=status port={}", status_server_->port());
  }
}

void Runtime::start() {
  try {
    build(false);
  } catch (...) {
    stop();
    throw;
  }
}

void Runtime::stop() {
  if (status_server_) status_server_->stop();
  for (auto& r : runners_) r->stop();
  runners_.clear();
  if (engine_service_) engine_service_->stop();
  if (history_service_) history_service_->stop();
  if (simulator_) simulator_->stop();
  if (broker_server_) broker_server_->stop();
}

void Runtime::settle() {
  for (int round = 0;; ++round) {
    if (!broker_->wait_idle(std::chrono::seconds(60))) throw RuntimeError("broker", "notifications did not drain");
    if (!engine_service_ || engine_service_->pump() == 0) break;
    if (round > 1000) throw RuntimeError("engine", "derived attributes did not converge");
  }
  if (history_service_) history_service_->pump();
}

LockstepResult Runtime::run_lockstep() {
  std::error_code ec;
  if (config_.history.enabled && fs::is_directory(config_.history_dir, ec)) {
    for (const auto& entry : fs::directory_iterator(config_.history_dir, ec)) {
      if (entry.path().filename().string().rfind("history-", 0) == 0) {
        throw RuntimeError("config", "lockstep runs need an empty history directory, " +
                                         config_.history_dir.string() + " holds " + entry.path().filename().string());
      }
    }
  }
  try {
    build(true);
  } catch (...) {
    stop();
    throw;
  }
  struct Feed {
    Pipeline* pipeline;
    std::unique_ptr<RestPoller> poller;
    std::int64_t interval = 0;
    bool frames = false;
  };
  std::vector<Feed> feeds;
  for (std::size_t i = 0; i < pipelines_.size(); ++i) {
    const PipelineConfig config = adapt(pipeline_configs_[i]);
    const std::string kind = config.source.value("kind", "none");
    Feed f{pipelines_[i].get(), nullptr};
    if (kind == "http-poll") {
      f.poller.reset(static_cast<RestPoller*>(make_source(config).release()));
      f.interval = config.source.value("intervalSeconds", std::int64_t{60});
    } else if (kind == "tcp") {
      f.frames = true;
    } else {
      auto source = make_source(config);
      std::stop_source never;
      while (auto r = source->next(never.get_token())) f.pipeline->process(std::move(*r));
    }
    feeds.push_back(std::move(f));
  }
  settle();

  LockstepResult result;
  for (Timestamp t = script_.start; t <= script_.end; t += Seconds{script_.tick_seconds}) {
    manual_clock_->set(t);
    const std::int64_t elapsed = (t - script_.start).count();
    std::optional<Json> frame;
    for (auto& f : feeds) {
      if (f.poller && elapsed % f.interval == 0) {
        if (auto r = f.poller->poll_once()) f.pipeline->process(std::move(*r));
      }
      if (f.frames && simulator_) {
        if (!frame) frame = simulator_->tick();
        FlowRecord r;
        r.payload = *frame;
        r.source = f.pipeline->name();
        r.sequence = {result.ticks + 1};
        f.pipeline->process(std::move(r));
      }
    }
    settle();
    ++result.ticks;
  }

  result.broker = broker_->metrics();
  std::uint32_t crc = 0;
  for (const auto& [id, doc] : broker_state()) {
    const std::string line = doc.dump() + "\n";
    crc = static_cast<std::uint32_t>(::crc32(crc, reinterpret_cast<const Bytef*>(line.data()), static_cast<uInt>(line.size())));
    ++result.entity_counts[doc.value("type", std::string())];
  }
  result.broker_digest = hex8(crc);
  if (store_) {
    result.history_checksum = store_->checksum();
    result.history_events = store_->size();
  }
  spdlog::info("component=runtime mode=lockstep ticks={} changes={} digest={} history={}", result.ticks,
               result.broker.change_events, result.broker_digest, result.history_checksum);
  return result;
}

std::map<std::string, Json> Runtime::broker_state() const {
  std::map<std::string, Json> out;
  if (!broker_) return out;
  for (const auto& type : kEntityTypes) {
    for (const auto& e : broker_->query(EntityQuery{type, {}, std::nullopt})) out[e.id().str()] = serialize_entity(e);
  }
  return out;
}

Json Runtime::status() const {
  Json doc = Json::object();
  doc["clock"] = (manual_clock_ || scaled_clock_) ? Json(format_timestamp(clock().now())) : Json(nullptr);
  doc["scenario"] = Json{{"airport", script_.airport_iata},
                         {"start", format_timestamp(script_.start)},
                         {"end", format_timestamp(script_.end)},
                         {"flights", script_.flights.size()},
                         {"finished", scenario_finished()}};
  doc["broker"] = broker_ ? broker_->metrics().to_json() : Json(nullptr);
  Json pipes = Json::array();
  for (std::size_t i = 0; i < pipelines_.size(); ++i) {
    Json p = pipelines_[i]->status();
    if (i < runners_.size()) p["runner"] = runners_[i]->status();
    pipes.push_back(std::move(p));
  }
  doc["pipelines"] = std::move(pipes);
  doc["engine"] = engine_service_ ? Json{{"processed", engine_service_->processed()},
                                         {"writeFailures", engine_service_->write_failures()}}
                                  : Json(nullptr);
  doc["history"] = store_ ? Json{{"events", store_->size()},
                                 {"lastSequence", store_->last_sequence()},
                                 {"corruptLines", store_->corrupt_lines()}}
                          : Json(nullptr);
  return doc;
}

}  // namespace airtwin
