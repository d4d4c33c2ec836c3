#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "airtwin/flow.hpp"
#include "airtwin/transform.hpp"

namespace airtwin {

// ---- processors -------------------------------------------------------------

enum class Outcome { Out, Dropped, Failed };

struct StageResult {
  Outcome outcome = Outcome::Out;
  std::vector<FlowRecord> records;
  std::string reason;

  static StageResult pass(FlowRecord r);
  static StageResult drop(std::string reason);
  static StageResult fail(std::string reason);
};

/// A pure function of (record, configuration).
class Processor {
 public:
  virtual ~Processor() = default;
  virtual StageResult process(FlowRecord record) const = 0;
  virtual std::string kind() const = 0;
  /// Attribute names this stage adds to records.
  virtual std::set<std::string> produces() const { return {}; }
  /// Attribute names this stage reads.
  virtual std::set<std::string> consumes() const { return {}; }
};

/// Splits an array (one record per element) or, in object mode, an object (one record per member value).
class SplitProcessor final : public Processor {
 public:
  enum class Mode { Array, Object };
  SplitProcessor(JsonPath path, Mode mode) : path_(std::move(path)), mode_(mode) {}
  StageResult process(FlowRecord record) const override;
  std::string kind() const override { return "split"; }

 private:
  JsonPath path_;
  Mode mode_;
};

/// Copies string renditions of payload values into record attributes.
class EvaluateProcessor final : public Processor {
 public:
  explicit EvaluateProcessor(std::vector<std::pair<std::string, JsonPath>> extractions)
      : extractions_(std::move(extractions)) {}
  StageResult process(FlowRecord record) const override;
  std::string kind() const override { return "evaluate"; }
  std::set<std::string> produces() const override;

 private:
  std::vector<std::pair<std::string, JsonPath>> extractions_;
};

class RouteProcessor final : public Processor {
 public:
  RouteProcessor(Expression predicate, std::map<std::string, std::string> variables)
      : predicate_(std::move(predicate)), variables_(std::move(variables)) {}
  StageResult process(FlowRecord record) const override;
  std::string kind() const override { return "route"; }
  std::set<std::string> consumes() const override { return predicate_.references(); }

 private:
  Expression predicate_;
  std::map<std::string, std::string> variables_;
};

/// Attribute rewrite rules applied in order:
///   {"set": name, "value": template, "when": expression}
///   {"strip": name, "chars": "-", "into": name}
///   {"splitPrefix": name, "length": 2, "prefixInto": name}
///   {"epochToIso": name, "into": name}
struct UpdateRule {
  enum class Kind { Set, Strip, SplitPrefix, EpochToIso } kind;
  std::string target;
  std::string into;
  std::optional<Template> value;
  std::optional<Expression> when;
  std::string chars;
  std::size_t length = 0;
};

class UpdateProcessor final : public Processor {
 public:
  UpdateProcessor(std::vector<UpdateRule> rules, std::map<std::string, std::string> variables)
      : rules_(std::move(rules)), variables_(std::move(variables)) {}
  StageResult process(FlowRecord record) const override;
  std::string kind() const override { return "update"; }
  std::set<std::string> produces() const override;
  std::set<std::string> consumes() const override;

 private:
  std::vector<UpdateRule> rules_;
  std::map<std::string, std::string> variables_;
};

class TransformProcessor final : public Processor {
 public:
  TransformProcessor(TransformSpec spec, std::map<std::string, std::string> variables)
      : spec_(std::move(spec)), variables_(std::move(variables)) {}
  StageResult process(FlowRecord record) const override;
  std::string kind() const override { return "transform"; }
  std::set<std::string> consumes() const override { return spec_.references(); }

 private:
  TransformSpec spec_;
  std::map<std::string, std::string> variables_;
};

/// Characters removed from every string value of an outgoing document.
inline constexpr std::string_view kForbiddenChars = "<>\"'=;()";

/// Removes forbidden characters from string values; a forbidden character in a member name fails the record.
class SanitizeProcessor final : public Processor {
 public:
  StageResult process(FlowRecord record) const override;
  std::string kind() const override { return "sanitize"; }
};

std::string strip_forbidden(std::string_view text);

// ---- sources and sinks ------------------------------------------------------

/// Pull-based record source. next() blocks until a record is available, the source is exhausted
/// (nullopt) or stop is requested (nullopt).
class Source {
 public:
  virtual ~Source() = default;
  virtual std::optional<FlowRecord> next(std::stop_token stop) = 0;
  virtual Json status() const { return Json::object(); }
};

/// Replays a fixed list of records.
class VectorSource final : public Source {
 public:
  explicit VectorSource(std::vector<FlowRecord> records) : records_(std::move(records)) {}
  std::optional<FlowRecord> next(std::stop_token stop) override;

 private:
  std::vector<FlowRecord> records_;
  std::size_t index_ = 0;
};

/// Capture files hold one FlowRecord per line:
///   {"source": "chroma", "sequence": [1], "attributes": {}, "payload": {...}}
/// A bare JSON document on a line is taken as the payload.
Json capture_line(const FlowRecord& record);
/// Throws ConfigError("line N: ...") on the first malformed line.
std::vector<FlowRecord> read_capture(const std::filesystem::path& path, const std::string& default_source = "capture");
void write_capture(const std::filesystem::path& path, const std::vector<FlowRecord>& records);

class Sink {
 public:
  virtual ~Sink() = default;
  /// Throws RecordError (or any std::exception) when delivery fails.
  virtual void deliver(const FlowRecord& record) = 0;
  virtual std::string kind() const = 0;
};

/// Keeps delivered records in memory.
class CollectSink final : public Sink {
 public:
  void deliver(const FlowRecord& record) override;
  std::string kind() const override { return "collect"; }
  std::vector<FlowRecord> records() const;

 private:
  mutable std::mutex mutex_;
  std::vector<FlowRecord> records_;
};

/// Writes each payload as pretty-printed JSON to <dir>/<n>.json, n counting from 1.
class FileSink final : public Sink {
 public:
  explicit FileSink(std::filesystem::path dir);
  void deliver(const FlowRecord& record) override;
  std::string kind() const override { return "files"; }
  std::size_t written() const noexcept { return count_; }

 private:
  std::filesystem::path dir_;
  std::size_t count_ = 0;
};

/// Forwards each payload to an upsert function (typically a BrokerClient).
class FunctionSink final : public Sink {
 public:
  FunctionSink(std::string kind, std::function<void(const Json&)> fn) : kind_(std::move(kind)), fn_(std::move(fn)) {}
  void deliver(const FlowRecord& record) override { fn_(record.payload); }
  std::string kind() const override { return kind_; }

 private:
  std::string kind_;
  std::function<void(const Json&)> fn_;
};

// ---- pipeline ---------------------------------------------------------------

struct StageCounters {
  std::atomic<std::uint64_t> in{0};
  std::atomic<std::uint64_t> out{0};
  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::uint64_t> failed{0};
  /// Records handed downstream; differs from `out` only for splits.
  std::atomic<std::uint64_t> emitted{0};
};

struct DeadLetter {
  std::string pipeline;
  std::string stage;
  std::string reason;
  FlowRecord record;
};

/// Failure route. Appends NDJSON lines when given a path, and keeps the entries in memory.
class DeadLetterLog {
 public:
  DeadLetterLog() = default;
  explicit DeadLetterLog(std::filesystem::path path) : path_(std::move(path)) {}
  void record(DeadLetter letter);
  std::vector<DeadLetter> entries() const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::vector<DeadLetter> entries_;
};

struct StageSpec {
  std::string name;
  std::string kind;
  Json params;
};

struct PipelineConfig {
  std::string name;
  std::map<std::string, std::string> variables;
  Json source;
  std::vector<StageSpec> stages;
  Json sink;

  /// Collects every problem before throwing one ConfigError listing them all.
  static PipelineConfig from_json(const Json& doc);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Builds a processor from its spec. Throws ConfigError.
std::unique_ptr<Processor> make_processor(const StageSpec& spec, const std::map<std::string, std::string>& variables);

/// Source and sink kinds known to the config validator.
const std::set<std::string>& known_source_kinds();
const std::set<std::string>& known_sink_kinds();

/// Synchronous chain of processors ending in a sink; records are pushed depth-first so sink order
/// follows source order.
class Pipeline {
 public:
  Pipeline(std::string name, std::vector<std::pair<std::string, std::unique_ptr<Processor>>> stages,
           std::shared_ptr<Sink> sink, std::shared_ptr<DeadLetterLog> dead_letters = nullptr);

  /// Builds the processor chain of `config`; the sink is supplied separately.
  static Pipeline from_config(const PipelineConfig& config, std::shared_ptr<Sink> sink,
                              std::shared_ptr<DeadLetterLog> dead_letters = nullptr);

  void process(FlowRecord record);
  /// Runs a single stage on `record` and counts it; returns the records for the next stage.
  std::vector<FlowRecord> run_stage(std::size_t index, FlowRecord record);
  void deliver(const FlowRecord& record);

  const std::string& name() const noexcept { return name_; }
  std::size_t stage_count() const noexcept { return stages_.size(); }
  const std::string& stage_name(std::size_t i) const { return stages_[i].first; }
  const StageCounters& counters(std::size_t i) const { return *counters_[i]; }
  const StageCounters& sink_counters() const { return *counters_.back(); }
  Sink& sink() { return *sink_; }

  /// {"pipeline": name, "stages": [{"name","kind","in","out","dropped","failed","emitted"}...]}
  Json status() const;

 private:
  void push(std::size_t index, FlowRecord record);
  void fail(const std::string& stage, const std::string& reason, FlowRecord record);

  std::string name_;
  std::vector<std::pair<std::string, std::unique_ptr<Processor>>> stages_;
  std::shared_ptr<Sink> sink_;
  std::shared_ptr<DeadLetterLog> dead_letters_;
  std::vector<std::unique_ptr<StageCounters>> counters_;
};

/// Bounded blocking queue with close(); push blocks while full.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item, std::stop_token stop) {
    std::unique_lock lock(mutex_);
    if (!not_full_.wait(lock, stop, [&] { return closed_ || items_.size() < capacity_; })) return false;
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop(std::stop_token stop) {
    std::unique_lock lock(mutex_);
    if (!not_empty_.wait(lock, stop, [&] { return closed_ || !items_.empty(); })) return std::nullopt;
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable_any not_empty_;
  std::condition_variable_any not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

/// Runs a source and every stage of a Pipeline on its own thread, connected by bounded queues.
class PipelineRunner {
 public:
  PipelineRunner(std::unique_ptr<Source> source, Pipeline& pipeline, std::size_t queue_capacity = 64);
  ~PipelineRunner();

  void start();
  /// Requests stop and joins every thread.
  void stop();
  /// Blocks until the source is exhausted and every record has reached the sink.
  void wait();
  Json status() const;

 private:
  std::unique_ptr<Source> source_;
  Pipeline& pipeline_;
  std::vector<std::unique_ptr<BoundedQueue<FlowRecord>>> queues_;
  std::vector<std::jthread> threads_;
};

}  // namespace airtwin
