#include <algorithm>
#include <set>

#include "airtwin/turnaround.hpp"

namespace airtwin {

const std::vector<TaskTemplate>& default_task_template() {
  static const std::vector<TaskTemplate> tasks{
      {"deboarding", "Deboarding", {}},
      {"cleaning", "Cleaning", {"deboarding"}},
      {"fueling", "Fueling", {}},
      {"catering", "Catering", {}},
      {"boarding", "Boarding", {"cleaning"}},
      {"pushback", "Pushback", {"boarding", "fueling", "catering"}},
  };
  return tasks;
}

std::vector<TaskTemplate> parse_task_template(const Json& doc) {
  if (!doc.is_array() || doc.empty()) throw TurnaroundError("template", "task template must be a non-empty array");
  std::vector<TaskTemplate> tasks;
  std::set<std::string> keys;
  for (const auto& t : doc) {
    if (!t.is_object() || !t.contains("key") || !t["key"].is_string()) {
      throw TurnaroundError("template", "every task needs a string 'key'");
    }
    TaskTemplate task{t["key"].get<std::string>(), t.value("description", t["key"].get<std::string>()), {}};
    if (!keys.insert(task.key).second) throw TurnaroundError("template", "task '" + task.key + "' is listed twice");
    for (const auto& d : t.value("dependsOn", Json::array())) {
      if (!d.is_string()) throw TurnaroundError("template", "dependsOn of '" + task.key + "' must hold task keys");
      task.depends_on.push_back(d.get<std::string>());
    }
    tasks.push_back(std::move(task));
  }
  for (const auto& t : tasks) {
    for (const auto& d : t.depends_on) {
      if (!keys.count(d)) throw TurnaroundError("template", "task '" + t.key + "' depends on unknown task '" + d + "'");
    }
  }
  // Kahn's algorithm; anything left over sits on a cycle.
  std::map<std::string, std::size_t> pending;
  for (const auto& t : tasks) pending[t.key] = t.depends_on.size();
  std::vector<std::string> ready;
  for (const auto& [k, n] : pending) {
    if (n == 0) ready.push_back(k);
  }
  std::size_t done = 0;
  while (!ready.empty()) {
    const std::string k = ready.back();
    ready.pop_back();
    ++done;
    for (const auto& t : tasks) {
      if (std::find(t.depends_on.begin(), t.depends_on.end(), k) != t.depends_on.end() && --pending[t.key] == 0) {
        ready.push_back(t.key);
      }
    }
  }
  if (done != tasks.size()) throw TurnaroundError("template", "task dependencies form a cycle");
  return tasks;
}

EntityId task_id(const EntityId& flight, const std::string& key) {
  return make_entity_id("FlightNotification", std::string(flight.local_key()) + "-" + key);
}

TaskPlan::TaskPlan(EntityId flight, const std::vector<TaskTemplate>& tasks, Timestamp issued, const std::string& issuer)
    : flight_(std::move(flight)) {
  for (const auto& t : tasks) {
    FlightNotificationRecord r{task_id(flight_, t.key)};
    r.description = t.description;
    r.date_issued = issued;
    r.date_modified = issued;
    r.issuer = issuer;
    r.status = NotificationStatus::Unknown;
    r.ref_flight = flight_;
    for (const auto& d : t.depends_on) r.depends_on.push_back(task_id(flight_, d));
    tasks_.push_back(std::move(r));
  }
}

TaskPlan TaskPlan::from_records(EntityId flight, std::vector<FlightNotificationRecord> records) {
  TaskPlan plan(std::move(flight), {}, Timestamp{}, "");
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.date_issued, a.id) < std::tie(b.date_issued, b.id);
  });
  // Keep dependencies ahead of their dependents so plans read in template order.
  std::vector<FlightNotificationRecord> ordered;
  std::set<EntityId> placed;
  while (!records.empty()) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) {
      return std::all_of(r.depends_on.begin(), r.depends_on.end(), [&](const EntityId& d) {
        return placed.count(d) || std::none_of(records.begin(), records.end(), [&](const auto& o) { return o.id == d; });
      });
    });
    const auto pick = it == records.end() ? records.begin() : it;
    placed.insert(pick->id);
    ordered.push_back(std::move(*pick));
    records.erase(pick);
  }
  plan.tasks_ = std::move(ordered);
  return plan;
}

const FlightNotificationRecord* TaskPlan::find(const EntityId& task) const {
  const auto it = std::find_if(tasks_.begin(), tasks_.end(), [&](const auto& t) { return t.id == task; });
  return it == tasks_.end() ? nullptr : &*it;
}

FlightNotificationRecord* TaskPlan::find_mut(const EntityId& task) {
  return const_cast<FlightNotificationRecord*>(std::as_const(*this).find(task));
}

bool TaskPlan::can_complete(const EntityId& task, std::string* blocking) const {
  const auto* t = find(task);
  if (!t) return false;
  for (const auto& d : t->depends_on) {
    const auto* dep = find(d);
    if (!dep || dep->status != NotificationStatus::Completed) {
      if (blocking) *blocking = dep ? dep->description + " (" + d.str() + ")" : d.str();
      return false;
    }
  }
  return true;
}

const FlightNotificationRecord& TaskPlan::update(const EntityId& task, NotificationStatus status, Timestamp at,
                                                 const std::string& issuer) {
  FlightNotificationRecord* t = find_mut(task);
  if (!t) throw TurnaroundError("unknown-task", "no task " + task.str() + " for flight " + flight_.str());
  if (t->status == status) return *t;
  if (!status_transition_allowed(t->status, status)) {
    throw TurnaroundError("transition", "task " + t->description + " cannot go from " + std::string(to_string(t->status)) +
                                            " to " + std::string(to_string(status)));
  }
  std::string blocking;
  if (status == NotificationStatus::Completed && !can_complete(task, &blocking)) {
    throw TurnaroundError("dependency", "task " + t->description + " is blocked by " + blocking + ", not completed yet");
  }
  t->status = status;
  t->date_modified = std::max(at, t->date_issued);
  if (!issuer.empty()) t->issuer = issuer;
  return *t;
}

Json TaskPlan::to_json() const {
  Json tasks = Json::array();
  for (const auto& t : tasks_) {
    Json j = Json::object();
    j["id"] = t.id.str();
    j["description"] = t.description;
    j["status"] = std::string(to_string(t.status));
    Json deps = Json::array();
    for (const auto& d : t.depends_on) deps.push_back(d.str());
    j["dependsOn"] = deps;
    j["issuer"] = t.issuer;
    j["dateIssued"] = format_timestamp(t.date_issued);
    j["dateModified"] = format_timestamp(t.date_modified);
    j["canComplete"] = can_complete(t.id);
    tasks.push_back(j);
  }
  Json doc = Json::object();
  doc["flight"] = flight_.str();
  doc["tasks"] = tasks;
  return doc;
}

}  // namespace airtwin
