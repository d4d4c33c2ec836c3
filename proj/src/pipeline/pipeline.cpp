#include "airtwin/pipeline.hpp"

#include <fstream>

namespace airtwin {

// ---- sources / sinks --------------------------------------------------------

std::optional<FlowRecord> VectorSource::next(std::stop_token stop) {
  if (stop.stop_requested() || index_ >= records_.size()) return std::nullopt;
  return records_[index_++];
}

Json capture_line(const FlowRecord& record) {
  Json line = Json::object();
  line["source"] = record.source;
  line["sequence"] = record.sequence;
  line["attributes"] = record.attributes;
  line["payload"] = record.payload;
  return line;
}

std::vector<FlowRecord> read_capture(const std::filesystem::path& path, const std::string& default_source) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open capture file " + path.string());
  std::vector<FlowRecord> records;
  std::string line;
  std::size_t number = 0;
  std::uint64_t next_sequence = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Json doc = Json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("line " + std::to_string(number) + ": not valid JSON");
    FlowRecord r;
    if (doc.is_object() && doc.contains("payload")) {
      r.payload = doc["payload"];
      r.source = doc.value("source", default_source);
      if (doc.contains("sequence")) {
        if (!doc["sequence"].is_array()) throw ConfigError("line " + std::to_string(number) + ": sequence must be an array");
        for (const auto& n : doc["sequence"]) {
          if (!n.is_number_unsigned()) {
            throw ConfigError("line " + std::to_string(number) + ": sequence must hold non-negative integers");
          }
          r.sequence.push_back(n.get<std::uint64_t>());
        }
      }
      if (doc.contains("attributes")) {
        if (!doc["attributes"].is_object()) throw ConfigError("line " + std::to_string(number) + ": attributes must be an object");
        for (const auto& [k, v] : doc["attributes"].items()) r.attributes[k] = attribute_text(v);
      }
    } else {
      r.payload = doc;
      r.source = default_source;
    }
    if (r.sequence.empty()) r.sequence.push_back(next_sequence);
    next_sequence = r.sequence.front() + 1;
    records.push_back(std::move(r));
  }
  return records;
}

void write_capture(const std::filesystem::path& path, const std::vector<FlowRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write capture file " + path.string());
  for (const auto& r : records) out << capture_line(r).dump() << '\n';
}

void CollectSink::deliver(const FlowRecord& record) {
  std::lock_guard lock(mutex_);
  records_.push_back(record);
}

std::vector<FlowRecord> CollectSink::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

FileSink::FileSink(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

void FileSink::deliver(const FlowRecord& record) {
  const auto path = dir_ / (std::to_string(count_ + 1) + ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RecordError("cannot write " + path.string());
  out << record.payload.dump(2) << '\n';
  ++count_;
}

void DeadLetterLog::record(DeadLetter letter) {
  std::lock_guard lock(mutex_);
  if (path_) {
    Json line = Json::object();
    line["pipeline"] = letter.pipeline;
    line["stage"] = letter.stage;
    line["reason"] = letter.reason;
    line["record"] = capture_line(letter.record);
    std::ofstream out(*path_, std::ios::app);
    out << line.dump() << '\n';
  }
  entries_.push_back(std::move(letter));
}

std::vector<DeadLetter> DeadLetterLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t DeadLetterLog::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---- config -----------------------------------------------------------------

const std::set<std::string>& known_source_kinds() {
  static const std::set<std::string> kinds{"http-poll", "tcp", "capture", "none"};
  return kinds;
}

const std::set<std::string>& known_sink_kinds() {
  static const std::set<std::string> kinds{"broker", "files", "collect"};
  return kinds;
}

PipelineConfig PipelineConfig::from_json(const Json& doc) {
  std::vector<std::string> problems;
  PipelineConfig c;
  if (!doc.is_object()) throw ConfigError("pipeline config must be a JSON object");
  if (doc.contains("name") && doc["name"].is_string()) {
    c.name = doc["name"].get<std::string>();
  } else {
    problems.push_back("'name' must be a string");
  }
  if (doc.contains("variables")) {
    if (!doc["variables"].is_object()) {
      problems.push_back("'variables' must be an object");
    } else {
      for (const auto& [k, v] : doc["variables"].items()) c.variables[k] = attribute_text(v);
    }
  }
  auto check_endpoint = [&](const char* key, const std::set<std::string>& kinds) {
    if (!doc.contains(key) || !doc[key].is_object() || !doc[key].contains("kind") || !doc[key]["kind"].is_string()) {
      problems.push_back(std::string("'") + key + "' must be an object with a 'kind'");
      return Json();
    }
    const std::string kind = doc[key]["kind"].get<std::string>();
    if (!kinds.count(kind)) problems.push_back(std::string(key) + " kind '" + kind + "' is unknown");
    return doc[key];
  };
  c.source = check_endpoint("source", known_source_kinds());
  c.sink = check_endpoint("sink", known_sink_kinds());

  if (!doc.contains("stages") || !doc["stages"].is_array()) {
    problems.push_back("'stages' must be an array");
  } else {
    std::set<std::string> available;
    for (const auto& [k, v] : c.variables) available.insert(k);
    std::set<std::string> names;
    for (std::size_t i = 0; i < doc["stages"].size(); ++i) {
      const Json& s = doc["stages"][i];
      StageSpec spec;
      spec.name = s.value("name", "stage" + std::to_string(i + 1));
      spec.kind = s.value("kind", std::string());
      spec.params = s;
      if (!names.insert(spec.name).second) problems.push_back("stage name '" + spec.name + "' is used twice");
      try {
        const auto processor = make_processor(spec, c.variables);
        for (const auto& ref : processor->consumes()) {
          if (!available.count(ref) && ref != "split.key") {
            problems.push_back("stage '" + spec.name + "' references undeclared attribute '" + ref + "'");
          }
        }
        const auto produced = processor->produces();
        available.insert(produced.begin(), produced.end());
        if (spec.kind == "split" && spec.params.value("mode", std::string("array")) == "object") available.insert("split.key");
      } catch (const ConfigError& e) {
        problems.push_back(e.what());
      } catch (const nlohmann::json::exception& e) {
        problems.push_back("stage '" + spec.name + "': " + e.what());
      }
      c.stages.push_back(std::move(spec));
    }
  }
  if (!problems.empty()) {
    std::string message = "invalid pipeline config";
    if (!c.name.empty()) message += " '" + c.name + "'";
    message += ":";
    for (const auto& p : problems) message += "\n  - " + p;
    throw ConfigError(message);
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open pipeline config " + path.string());
  const Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return from_json(doc);
}

// ---- pipeline ---------------------------------------------------------------

Pipeline::Pipeline(std::string name, std::vector<std::pair<std::string, std::unique_ptr<Processor>>> stages,
                   std::shared_ptr<Sink> sink, std::shared_ptr<DeadLetterLog> dead_letters)
    : name_(std::move(name)),
      stages_(std::move(stages)),
      sink_(std::move(sink)),
      dead_letters_(dead_letters ? std::move(dead_letters) : std::make_shared<DeadLetterLog>()) {
  for (std::size_t i = 0; i <= stages_.size(); ++i) counters_.push_back(std::make_unique<StageCounters>());
}

Pipeline Pipeline::from_config(const PipelineConfig& config, std::shared_ptr<Sink> sink,
                               std::shared_ptr<DeadLetterLog> dead_letters) {
  std::vector<std::pair<std::string, std::unique_ptr<Processor>>> stages;
  for (const auto& s : config.stages) stages.emplace_back(s.name, make_processor(s, config.variables));
  return Pipeline(config.name, std::move(stages), std::move(sink), std::move(dead_letters));
}

void Pipeline::fail(const std::string& stage, const std::string& reason, FlowRecord record) {
  dead_letters_->record(DeadLetter{name_, stage, reason, std::move(record)});
}

std::vector<FlowRecord> Pipeline::run_stage(std::size_t index, FlowRecord record) {
  StageCounters& c = *counters_[index];
  ++c.in;
  StageResult result;
  FlowRecord original = record;
  try {
    result = stages_[index].second->process(std::move(record));
  } catch (const std::exception& e) {
    result = StageResult::fail(e.what());
  }
  switch (result.outcome) {
    case Outcome::Out:
      ++c.out;
      c.emitted += result.records.size();
      return std::move(result.records);
    case Outcome::Dropped:
      ++c.dropped;
      return {};
    case Outcome::Failed:
      ++c.failed;
      fail(stages_[index].first, result.reason, std::move(original));
      return {};
  }
  return {};
}

void Pipeline::deliver(const FlowRecord& record) {
  StageCounters& c = *counters_.back();
  ++c.in;
  try {
    sink_->deliver(record);
    ++c.out;
    ++c.emitted;
  } catch (const std::exception& e) {
    ++c.failed;
    fail("sink", e.what(), record);
  }
}

void Pipeline::push(std::size_t index, FlowRecord record) {
  if (index == stages_.size()) {
    deliver(record);
    return;
  }
  for (auto& next : run_stage(index, std::move(record))) push(index + 1, std::move(next));
}

void Pipeline::process(FlowRecord record) { push(0, std::move(record)); }

Json Pipeline::status() const {
  Json stages = Json::array();
  auto entry = [](const std::string& name, const std::string& kind, const StageCounters& c) {
    Json s = Json::object();
    s["name"] = name;
    s["kind"] = kind;
    s["in"] = c.in.load();
    s["out"] = c.out.load();
    s["dropped"] = c.dropped.load();
    s["failed"] = c.failed.load();
    s["emitted"] = c.emitted.load();
    return s;
  };
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages.push_back(entry(stages_[i].first, stages_[i].second->kind(), *counters_[i]));
  }
  stages.push_back(entry("sink", sink_->kind(), *counters_.back()));
  Json doc = Json::object();
  doc["pipeline"] = name_;
  doc["stages"] = std::move(stages);
  doc["deadLetters"] = dead_letters_->size();
  return doc;
}

// ---- runner -----------------------------------------------------------------

PipelineRunner::PipelineRunner(std::unique_ptr<Source> source, Pipeline& pipeline, std::size_t queue_capacity)
    : source_(std::move(source)), pipeline_(pipeline) {
  for (std::size_t i = 0; i <= pipeline_.stage_count(); ++i) {
    queues_.push_back(std::make_unique<BoundedQueue<FlowRecord>>(queue_capacity));
  }
}

PipelineRunner::~PipelineRunner() { stop(); }

void PipelineRunner::start() {
  threads_.emplace_back([this](std::stop_token stop) {
    while (auto record = source_->next(stop)) {
      if (!queues_[0]->push(std::move(*record), stop)) break;
    }
    queues_[0]->close();
  });
  for (std::size_t i = 0; i < pipeline_.stage_count(); ++i) {
    threads_.emplace_back([this, i](std::stop_token stop) {
      while (auto record = queues_[i]->pop(stop)) {
        for (auto& next : pipeline_.run_stage(i, std::move(*record))) {
          if (!queues_[i + 1]->push(std::move(next), stop)) break;
        }
      }
      queues_[i + 1]->close();
    });
  }
  threads_.emplace_back([this](std::stop_token stop) {
    while (auto record = queues_.back()->pop(stop)) pipeline_.deliver(*record);
  });
}

void PipelineRunner::stop() {
  for (auto& t : threads_) t.request_stop();
  for (auto& q : queues_) q->close();
  threads_.clear();
}

void PipelineRunner::wait() {
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

Json PipelineRunner::status() const {
  Json doc = pipeline_.status();
  doc["source"] = source_->status();
  Json depths = Json::array();
  for (const auto& q : queues_) depths.push_back(q->size());
  doc["queueDepths"] = std::move(depths);
  return doc;
}

}  // namespace airtwin
