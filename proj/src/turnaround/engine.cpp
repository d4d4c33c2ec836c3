#include <algorithm>

#include "airtwin/turnaround.hpp"

namespace airtwin {

namespace {

/// Attributes of `after` that are new or different from `before`; nullopt when nothing changed.
std::optional<ContextEntity> record_patch(const FlightRecord& before, const FlightRecord& after) {
  const ContextEntity old_entity = before.to_entity();
  const ContextEntity new_entity = after.to_entity();
  ContextEntity patch(after.id, "Flight");
  for (const auto& [name, attr] : new_entity.attributes()) {
    const Attribute* old = old_entity.find(name);
    if (!old || !(*old == attr)) patch.set(name, attr);
  }
  if (patch.size() == 0) return std::nullopt;
  return patch;
}

}  // namespace

TurnaroundEngine::TurnaroundEngine(EngineOptions options)
    : options_(std::move(options)), home_(make_entity_id("Airport", options_.airport_iata)) {}

void TurnaroundEngine::recompute(FlightRecord& f) const {
  const Leg leg = leg_of(f, home_);
  try {
    const TaxiTimes taxi = compute_taxi_times(f);
    f.interval(Interval::AXOT) = taxi.axot;
    f.interval(Interval::AXIT) = taxi.axit;
  } catch (const TurnaroundError&) {
    // Reversed actuals; derive_state reports them as unknown.
  }
  if (leg != Leg::Other) f.state = derive_state(f, leg);
  if (leg == Leg::Departure) {
    if (const auto link = link_for(f)) {
      if (link->attt) f.interval(Interval::ATTT) = link->attt;
      if (link->sttt) f.interval(Interval::STTT) = link->sttt;
      if (link->ettt) f.interval(Interval::ETTT) = link->ettt;
    }
  }
}

std::optional<TurnaroundLink> TurnaroundEngine::link_for(const FlightRecord& out) const {
  if (!out.has_aircraft) return std::nullopt;
  const auto out_ref = scheduled_reference(out, Leg::Departure);
  if (!out_ref) return std::nullopt;
  const FlightRecord* best = nullptr;
  Timestamp best_ref{};
  for (const auto& [id, f] : flights_) {
    if (f.has_aircraft != out.has_aircraft || leg_of(f, home_) != Leg::Arrival) continue;
    const auto ref = scheduled_reference(f, Leg::Arrival);
    if (!ref || *ref > *out_ref) continue;
    if (!best || *ref > best_ref) {
      best = &f;
      best_ref = *ref;
    }
  }
  if (!best) return std::nullopt;
  try {
    return link_turnaround(*best, out, home_);
  } catch (const TurnaroundError&) {
    return std::nullopt;
  }
}

void TurnaroundEngine::refresh_departures(const FlightRecord& arrival, EntityUpdates& out) {
  if (!arrival.has_aircraft) return;
  for (auto& [id, f] : flights_) {
    if (f.has_aircraft != arrival.has_aircraft || leg_of(f, home_) != Leg::Departure) continue;
    const FlightRecord before = f;
    recompute(f);
    if (auto patch = record_patch(before, f)) out.push_back(std::move(*patch));
  }
}

void TurnaroundEngine::ensure_plan(const FlightRecord& f, Timestamp now, EntityUpdates& out) {
  if (leg_of(f, home_) != Leg::Departure || plans_.count(f.id)) return;
  TaskPlan plan(f.id, options_.task_template, now, options_.issuer);
  for (const auto& t : plan.tasks()) {
    task_owner_.insert_or_assign(t.id, f.id);
    out.push_back(t.to_entity());
  }
  plans_.emplace(f.id, std::move(plan));
}

EntityUpdates TurnaroundEngine::on_flight(const ContextEntity& entity, Timestamp now) {
  const FlightRecord incoming = FlightRecord::from_entity(entity);
  std::lock_guard lock(mutex_);
  EntityUpdates out;
  FlightRecord after = incoming;
  recompute(after);
  flights_.insert_or_assign(after.id, after);
  if (auto patch = record_patch(incoming, after)) out.push_back(std::move(*patch));
  if (leg_of(after, home_) == Leg::Arrival) refresh_departures(after, out);
  ensure_plan(after, now, out);
  return out;
}

EntityUpdates TurnaroundEngine::apply(const EntityId& id, Milestone m, Timestamp at, Timestamp now) {
  std::lock_guard lock(mutex_);
  const auto it = flights_.find(id);
  if (it == flights_.end()) throw TurnaroundError("unknown-flight", "no flight " + id.str());
  const FlightRecord before = it->second;
  FlightRecord after = before;
  const MilestoneResult result = apply_milestone(after, m, at, leg_of(after, home_));
  EntityUpdates out;
  if (!result.changed) return out;
  recompute(after);
  it->second = after;
  if (auto patch = record_patch(before, after)) out.push_back(std::move(*patch));
  if (leg_of(after, home_) == Leg::Arrival) refresh_departures(after, out);
  ensure_plan(after, now, out);
  return out;
}

ContextEntity TurnaroundEngine::update_task(const EntityId& task, NotificationStatus status, Timestamp at,
                                            const std::string& issuer) {
  std::lock_guard lock(mutex_);
  const auto owner = task_owner_.find(task);
  if (owner == task_owner_.end()) throw TurnaroundError("unknown-task", "no task " + task.str());
  return plans_.at(owner->second).update(task, status, at, issuer).to_entity();
}

void TurnaroundEngine::restore_tasks(const std::vector<ContextEntity>& notifications) {
  std::map<EntityId, std::vector<FlightNotificationRecord>> by_flight;
  for (const auto& e : notifications) {
    auto r = FlightNotificationRecord::from_entity(e);
    if (r.ref_flight) by_flight[*r.ref_flight].push_back(std::move(r));
  }
  std::lock_guard lock(mutex_);
  for (auto& [flight, records] : by_flight) {
    TaskPlan plan = TaskPlan::from_records(flight, std::move(records));
    for (const auto& t : plan.tasks()) task_owner_.insert_or_assign(t.id, flight);
    plans_.insert_or_assign(flight, std::move(plan));
  }
}

std::optional<FlightRecord> TurnaroundEngine::flight(const EntityId& id) const {
  std::lock_guard lock(mutex_);
  const auto it = flights_.find(id);
  if (it == flights_.end()) return std::nullopt;
  return it->second;
}

std::optional<TaskPlan> TurnaroundEngine::plan(const EntityId& flight) const {
  std::lock_guard lock(mutex_);
  const auto it = plans_.find(flight);
  if (it == plans_.end()) return std::nullopt;
  return it->second;
}

std::vector<TurnaroundLink> TurnaroundEngine::links() const {
  std::lock_guard lock(mutex_);
  std::vector<TurnaroundLink> result;
  for (const auto& [id, f] : flights_) {
    if (leg_of(f, home_) != Leg::Departure) continue;
    if (auto link = link_for(f)) result.push_back(std::move(*link));
  }
  return result;
}

Json TurnaroundEngine::status(Timestamp now) const {
  std::lock_guard lock(mutex_);
  struct Row {
    Timestamp ref;
    const FlightRecord* flight;
    Leg leg;
  };
  std::vector<Row> rows;
  for (const auto& [id, f] : flights_) {
    const Leg leg = leg_of(f, home_);
    if (leg == Leg::Other) continue;
    rows.push_back({scheduled_reference(f, leg).value_or(Timestamp::max()), &f, leg});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.ref, a.flight->id) < std::tie(b.ref, b.flight->id);
  });

  Json flights = Json::array();
  for (const auto& row : rows) {
    const FlightRecord& f = *row.flight;
    Json j = Json::object();
    j["id"] = f.id.str();
    j["flightNumberIATA"] = f.flight_number_iata ? Json(*f.flight_number_iata) : Json(nullptr);
    j["leg"] = std::string(to_string(row.leg));
    j["state"] = f.state ? Json(std::string(to_string(*f.state))) : Json(nullptr);
    j["scheduled"] = row.ref == Timestamp::max() ? Json(nullptr) : Json(format_timestamp(row.ref));
    j["standCode"] = f.stand_code ? Json(*f.stand_code) : Json(nullptr);
    j["aircraft"] = f.has_aircraft ? Json(f.has_aircraft->str()) : Json(nullptr);
    Json times = Json::object();
    for (std::size_t i = 0; i < kMilestoneCount; ++i) {
      if (f.times[i]) times[std::string(to_string(static_cast<Milestone>(i)))] = format_timestamp(*f.times[i]);
    }
    j["milestones"] = times;
    Json intervals = Json::object();
    for (std::size_t i = 0; i < kIntervalCount; ++i) {
      if (f.intervals[i]) intervals[std::string(to_string(static_cast<Interval>(i)))] = *f.intervals[i];
    }
    j["intervals"] = intervals;
    j["delay"] = classify_delay(f, row.leg, now, options_.delay_threshold).to_json();
    if (const auto p = plans_.find(f.id); p != plans_.end()) {
      const auto& tasks = p->second.tasks();
      j["tasksCompleted"] = std::count_if(tasks.begin(), tasks.end(), [](const auto& t) {
        return t.status == NotificationStatus::Completed;
      });
      j["tasksTotal"] = tasks.size();
    }
    flights.push_back(j);
  }
  Json doc = Json::object();
  doc["airport"] = home_.str();
  doc["at"] = format_timestamp(now);
  doc["thresholdSeconds"] = options_.delay_threshold;
  doc["flights"] = flights;
  return doc;
}

}  // namespace airtwin
