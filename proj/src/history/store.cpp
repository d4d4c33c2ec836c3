#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <mutex>

#include "airtwin/history.hpp"

namespace airtwin {

namespace fs = std::filesystem;

namespace {

std::uint32_t crc_of(std::string_view bytes, std::uint32_t crc = 0) {
  return static_cast<std::uint32_t>(
      ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string hex8(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::vector<std::string> changed_between(const ContextEntity* before, const ContextEntity& after) {
  std::vector<std::string> changed;
  for (const auto& [name, attr] : after.attributes()) {
    const Attribute* old = before ? before->find(name) : nullptr;
    if (!old || !(*old == attr)) changed.push_back(name);
  }
  return changed;
}

}  // namespace

Json HistoryEvent::to_json() const {
  Json doc = Json::object();
  doc["sequence"] = sequence;
  doc["recordedAt"] = format_timestamp(recorded_at);
  doc["entityId"] = entity_id.str();
  doc["entityType"] = entity_type;
  doc["changedAttributes"] = changed_attributes;
  doc["snapshot"] = snapshot;
  return doc;
}

HistoryEvent HistoryEvent::from_json(const Json& doc) {
  if (!doc.is_object()) throw ParseError("$", "history event must be an object");
  auto str = [&](const char* key) -> const std::string& {
    if (!doc.contains(key) || !doc[key].is_string()) throw ParseError(key, "missing or not a string");
    return doc[key].get_ref<const std::string&>();
  };
  if (!doc.contains("sequence") || !doc["sequence"].is_number_unsigned()) {
    throw ParseError("sequence", "missing or not a positive integer");
  }
  const auto at = try_parse_timestamp(str("recordedAt"));
  if (!at) throw ParseError("recordedAt", "not an ISO 8601 timestamp");
  const auto id = EntityId::try_parse(str("entityId"));
  if (!id) throw ParseError("entityId", "malformed URN");
  HistoryEvent e{doc["sequence"].get<std::uint64_t>(), *at, *id, str("entityType"), {}, nullptr};
  if (!doc.contains("changedAttributes") || !doc["changedAttributes"].is_array()) {
    throw ParseError("changedAttributes", "missing or not an array");
  }
  for (const auto& n : doc["changedAttributes"]) {
    if (!n.is_string()) throw ParseError("changedAttributes", "names must be strings");
    e.changed_attributes.push_back(n.get<std::string>());
  }
  if (!doc.contains("snapshot") || !doc["snapshot"].is_object()) throw ParseError("snapshot", "missing");
  e.snapshot = doc["snapshot"];
  return e;
}

std::string encode_history_line(const HistoryEvent& event) {
  Json doc = event.to_json();
  doc["crc32"] = hex8(crc_of(event.to_json().dump()));
  return doc.dump();
}

std::optional<HistoryEvent> decode_history_line(const std::string& line) {
  try {
    Json doc = Json::parse(line);
    if (!doc.is_object() || !doc.contains("crc32") || !doc["crc32"].is_string()) return std::nullopt;
    const std::string crc = doc["crc32"].get<std::string>();
    doc.erase("crc32");
    if (hex8(crc_of(doc.dump())) != crc) return std::nullopt;
    return HistoryEvent::from_json(doc);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

HistoryStore::HistoryStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw HistoryError("cannot create history directory " + dir_.string() + ": " + ec.message());
  for (const auto& p : segments()) load_segment(p);
}

std::vector<fs::path> HistoryStore::segments() const {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir_, ec)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("history-", 0) == 0 && entry.path().extension() == ".ndjson") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void HistoryStore::load_segment(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HistoryError("cannot read " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  // A write cut short leaves a line without its newline; drop it so later appends start clean.
  const std::size_t end = content.rfind('\n');
  const std::size_t keep = end == std::string::npos ? 0 : end + 1;
  if (keep != content.size()) {
    ++corrupt_;
    fs::resize_file(path, keep);
    content.resize(keep);
  }

  std::size_t pos = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    auto event = decode_history_line(line);
    if (!event || (!events_.empty() && (event->sequence <= events_.back().sequence ||
                                        event->recorded_at < events_.back().recorded_at))) {
      ++corrupt_;
      continue;
    }
    by_entity_[event->entity_id].push_back(events_.size());
    events_.push_back(std::move(*event));
  }
}

fs::path HistoryStore::segment_for(Timestamp t) const {
  // format_timestamp starts with the calendar date.
  return dir_ / ("history-" + format_timestamp(t).substr(0, 10) + ".ndjson");
}

std::uint64_t HistoryStore::append(const ContextEntity& snapshot, Timestamp recorded_at) {
  std::unique_lock lock(mutex_);
  HistoryEvent event{events_.empty() ? 1 : events_.back().sequence + 1,
                     events_.empty() ? recorded_at : std::max(recorded_at, events_.back().recorded_at),
                     snapshot.id(),
                     snapshot.type(),
                     {},
                     nullptr};
  std::optional<ContextEntity> previous;
  if (const auto it = by_entity_.find(snapshot.id()); it != by_entity_.end()) {
    previous = parse_entity(events_[it->second.back()].snapshot);
  }
  event.changed_attributes = changed_between(previous ? &*previous : nullptr, snapshot);
  event.snapshot = serialize_entity(snapshot);

  const fs::path path = segment_for(event.recorded_at);
  std::error_code ec;
  const auto size_before = fs::exists(path, ec) ? fs::file_size(path, ec) : 0;
  if (!out_.is_open() || open_path_ != path) {
    out_.close();
    out_.clear();
    out_.open(path, std::ios::binary | std::ios::app);
    open_path_ = path;
  }
  out_ << encode_history_line(event) << '\n';
  out_.flush();
  if (!out_) {
    out_.close();
    out_.clear();
    open_path_.clear();
    // Cut any partial line so the next append starts on a line boundary.
    if (fs::exists(path, ec) && fs::file_size(path, ec) > size_before) fs::resize_file(path, size_before, ec);
    throw HistoryError("cannot append to " + path.string());
  }
  by_entity_[event.entity_id].push_back(events_.size());
  events_.push_back(std::move(event));
  return events_.back().sequence;
}

std::vector<HistoryEvent> HistoryStore::query(const EntityId& id, Timestamp from, Timestamp to) const {
  std::shared_lock lock(mutex_);
  std::vector<HistoryEvent> out;
  if (from >= to) return out;
  const auto it = by_entity_.find(id);
  if (it == by_entity_.end()) return out;
  const auto& idx = it->second;
  auto first = std::partition_point(idx.begin(), idx.end(), [&](std::size_t i) { return events_[i].recorded_at < from; });
  for (; first != idx.end() && events_[*first].recorded_at < to; ++first) out.push_back(events_[*first]);
  return out;
}

std::vector<HistoryEvent> HistoryStore::events() const {
  std::shared_lock lock(mutex_);
  return events_;
}

std::map<EntityId, ContextEntity> HistoryStore::replay() const {
  std::shared_lock lock(mutex_);
  std::map<EntityId, ContextEntity> state;
  for (const auto& e : events_) {
    const ContextEntity snap = parse_entity(e.snapshot);
    const auto it = state.find(e.entity_id);
    if (it == state.end()) {
      state.emplace(e.entity_id, snap);
    } else {
      it->second = merge_entity(it->second, snap);
    }
  }
  return state;
}

std::size_t HistoryStore::size() const {
  std::shared_lock lock(mutex_);
  return events_.size();
}

std::uint64_t HistoryStore::last_sequence() const {
  std::shared_lock lock(mutex_);
  return events_.empty() ? 0 : events_.back().sequence;
}

std::size_t HistoryStore::corrupt_lines() const {
  std::shared_lock lock(mutex_);
  return corrupt_;
}

std::string HistoryStore::checksum() const {
  std::shared_lock lock(mutex_);
  std::uint32_t crc = 0;
  for (const auto& p : segments()) {
    std::ifstream in(p, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    crc = crc_of(content, crc);
  }
  return hex8(crc);
}

}  // namespace airtwin
