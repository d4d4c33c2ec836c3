#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "airtwin/broker_api.hpp"
#include "airtwin/engine_service.hpp"
#include "airtwin/feeds.hpp"
#include "airtwin/history.hpp"
#include "airtwin/simulator.hpp"

namespace airtwin {

/// Startup failure attributed to one component ("config", "broker", "simulator", ...).
class RuntimeError : public std::runtime_error {
 public:
  RuntimeError(std::string component, const std::string& message)
      : std::runtime_error(component + ": " + message), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

struct RuntimeConfig {
  struct Endpoint {
    bool enabled = true;
    std::string host = "127.0.0.1";
    int port = 0;
  };

  std::string log_level = "info";
  /// Simulated seconds per wall second in live runs.
  double clock_scale = 60;
  /// Advance a manual clock tick by tick and settle every component before the next tick.
  bool lockstep = false;
  /// Stop a live run once the simulated clock passes the scenario end.
  bool exit_at_end = false;

  std::optional<std::filesystem::path> scenario_path;
  /// Used when no scenario path is given.
  GeneratorOptions generate;

  Endpoint broker{true, "127.0.0.1", 1026};
  RetryPolicy retry;

  Endpoint simulator{true, "127.0.0.1", 8090};
  int simulator_tcp_port = 8091;
  std::string simulator_token = "Bearer demo-token";

  bool pipelines_enabled = true;
  std::vector<std::filesystem::path> pipelines;

  Endpoint engine{true, "127.0.0.1", 8093};
  std::int64_t delay_threshold = kDefaultDelayThreshold;
  std::optional<std::filesystem::path> task_template;
  int engine_strands = 4;

  Endpoint history{true, "127.0.0.1", 8092};
  std::filesystem::path history_dir = "var/history";

  Endpoint status{true, "127.0.0.1", 8094};

  /// Relative paths in the document are resolved against `base_dir`. Throws RuntimeError("config").
  static RuntimeConfig from_json(const Json& doc, const std::filesystem::path& base_dir = ".");
  static RuntimeConfig load(const std::filesystem::path& path);

  /// Overrides from AIRTWIN_* variables; `lookup` returns nullopt for unset names.
  void apply_env(const std::function<std::optional<std::string>(const std::string&)>& lookup);
  void apply_env();

  /// Every problem in one RuntimeError("config"): missing parameters of enabled components, clashing ports.
  void validate() const;
};

/// Names of the environment variables apply_env reads.
const std::vector<std::string>& runtime_env_names();

struct LockstepResult {
  std::uint64_t ticks = 0;
  BrokerMetrics broker;
  std::map<std::string, std::size_t> entity_counts;
  /// CRC-32 over the broker's entities in id order.
  std::string broker_digest;
  std::string history_checksum;
  std::size_t history_events = 0;

  Json to_json() const;
};

/// All enabled components in one process: simulator → adapters → pipelines → broker, with the
/// turnaround engine and history store subscribed to the broker.
class Runtime {
 public:
  explicit Runtime(RuntimeConfig config);
  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  /// Live run: starts every enabled component on its configured port. Throws RuntimeError naming
  /// the component that failed.
  void start();
  /// Stops components in reverse start order. Safe to call twice.
  void stop();
  /// True once the simulated clock has passed the scenario end.
  bool scenario_finished() const;

  /// Runs the whole scenario on a manual clock. Servers bind ephemeral ports.
  LockstepResult run_lockstep();

  const ScenarioScript& script() const noexcept { return script_; }
  const Clock& clock() const;
  ContextBroker* broker() noexcept { return broker_.get(); }
  HistoryStore* history() noexcept { return store_.get(); }
  TurnaroundEngine* engine() noexcept { return engine_.get(); }
  const std::vector<std::unique_ptr<Pipeline>>& pipelines() const noexcept { return pipelines_; }
  std::string broker_url() const;

  /// Every broker entity keyed by id.
  std::map<std::string, Json> broker_state() const;
  /// {"clock","scenario","broker","pipelines","engine","history"}
  Json status() const;

 private:
  void build(bool lockstep);
  void publish_reference_data();
  std::shared_ptr<Sink> make_sink(const PipelineConfig& config);
  std::unique_ptr<Source> make_source(const PipelineConfig& config);
  PipelineConfig adapt(PipelineConfig config) const;
  void settle();

  RuntimeConfig config_;
  ScenarioScript script_;
  std::unique_ptr<ManualClock> manual_clock_;
  std::unique_ptr<ScaledClock> scaled_clock_;
  std::unique_ptr<ContextBroker> broker_;
  std::unique_ptr<BrokerServer> broker_server_;
  std::unique_ptr<Simulator> simulator_;
  std::vector<PipelineConfig> pipeline_configs_;
  std::vector<std::unique_ptr<Pipeline>> pipelines_;
  std::vector<std::unique_ptr<PipelineRunner>> runners_;
  std::unique_ptr<TurnaroundEngine> engine_;
  std::unique_ptr<EngineService> engine_service_;
  std::unique_ptr<HistoryStore> store_;
  std::unique_ptr<HistoryService> history_service_;
  std::unique_ptr<HttpServer> status_server_;
  bool started_ = false;
};

}  // namespace airtwin
