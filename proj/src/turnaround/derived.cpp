#include <algorithm>

#include "airtwin/turnaround.hpp"

namespace airtwin {

namespace {

std::optional<std::int64_t> diff(const std::optional<Timestamp>& later, const std::optional<Timestamp>& earlier) {
  if (!later || !earlier) return std::nullopt;
  return (*later - *earlier).count();
}

std::size_t chain_index(Milestone m) {
  return static_cast<std::size_t>(std::find(kActualChain.begin(), kActualChain.end(), m) - kActualChain.begin());
}

/// The actual a non-actual milestone estimates; nullopt for the scheduled references.
std::optional<Milestone> actual_for(Milestone m) {
  switch (m) {
    case Milestone::EOBT:
    case Milestone::TOBT: return Milestone::AOBT;
    case Milestone::ETOT:
    case Milestone::CTOT:
    case Milestone::TTOT: return Milestone::ATOT;
    case Milestone::ELDT:
    case Milestone::TLDT: return Milestone::ALDT;
    case Milestone::EIBT: return Milestone::AIBT;
    default: return std::nullopt;
  }
}

}  // namespace

TaxiTimes compute_taxi_times(const FlightRecord& f) {
  TaxiTimes t{diff(f.time(Milestone::ATOT), f.time(Milestone::AOBT)), diff(f.time(Milestone::AIBT), f.time(Milestone::ALDT))};
  if (t.axot && *t.axot < 0) throw TurnaroundError("validation", "ATOT precedes AOBT");
  if (t.axit && *t.axit < 0) throw TurnaroundError("validation", "AIBT precedes ALDT");
  return t;
}

BlockTimes compute_block_times(const FlightRecord& f) {
  return {diff(f.time(Milestone::ALDT), f.time(Milestone::ATOT)), diff(f.time(Milestone::AIBT), f.time(Milestone::AOBT))};
}

Leg leg_of(const FlightRecord& f, const EntityId& home) {
  if (f.arrives_to_airport && *f.arrives_to_airport == home) return Leg::Arrival;
  if (f.departs_from_airport && *f.departs_from_airport == home) return Leg::Departure;
  return Leg::Other;
}

std::string_view to_string(Leg leg) {
  switch (leg) {
    case Leg::Arrival: return "arrival";
    case Leg::Departure: return "departure";
    case Leg::Other: return "other";
  }
  return "other";
}

std::optional<Timestamp> scheduled_reference(const FlightRecord& f, Leg leg) {
  if (leg == Leg::Arrival && f.time(Milestone::SIBT)) return f.time(Milestone::SIBT);
  if (leg == Leg::Departure && f.time(Milestone::SOBT)) return f.time(Milestone::SOBT);
  return f.date_scheduled;
}

Json TurnaroundLink::to_json() const {
  Json j = Json::object();
  j["inbound"] = inbound.str();
  j["outbound"] = outbound.str();
  j["standCode"] = stand_code;
  j["attt"] = attt ? Json(*attt) : Json(nullptr);
  j["sttt"] = sttt ? Json(*sttt) : Json(nullptr);
  j["ettt"] = ettt ? Json(*ettt) : Json(nullptr);
  return j;
}

TurnaroundLink link_turnaround(const FlightRecord& in, const FlightRecord& out, const EntityId& home) {
  if (leg_of(in, home) != Leg::Arrival) throw TurnaroundError("link", in.id.str() + " does not arrive at " + home.str());
  if (leg_of(out, home) != Leg::Departure) {
    throw TurnaroundError("link", out.id.str() + " does not depart from " + home.str());
  }
  if (!in.has_aircraft || !out.has_aircraft || *in.has_aircraft != *out.has_aircraft) {
    throw TurnaroundError("link", "flights " + in.id.str() + " and " + out.id.str() + " are not flown by the same aircraft");
  }
  const auto aibt = in.time(Milestone::AIBT);
  const auto aobt = out.time(Milestone::AOBT);
  if (aibt && aobt && *aobt < *aibt) throw TurnaroundError("link", "outbound AOBT precedes inbound AIBT");

  TurnaroundLink link{in.id, out.id, out.stand_code.value_or(in.stand_code.value_or("")), diff(aobt, aibt), {}, {}};
  link.sttt = diff(scheduled_reference(out, Leg::Departure), scheduled_reference(in, Leg::Arrival));
  const auto out_est = out.time(Milestone::TOBT) ? out.time(Milestone::TOBT) : out.time(Milestone::EOBT);
  const auto in_est = aibt ? aibt : in.time(Milestone::EIBT);
  link.ettt = diff(out_est, in_est);
  return link;
}

std::string_view to_string(DelayClass c) {
  switch (c) {
    case DelayClass::Future: return "future";
    case DelayClass::OnTime: return "onTime";
    case DelayClass::Late: return "late";
    case DelayClass::Unknown: return "unknown";
  }
  return "unknown";
}

Json DelayStatus::to_json() const {
  Json j = Json::object();
  j["classification"] = std::string(to_string(classification));
  j["delaySeconds"] = delay_seconds ? Json(*delay_seconds) : Json(nullptr);
  j["referenceMilestone"] = reference_milestone;
  return j;
}

DelayStatus classify_delay(const FlightRecord& f, Leg leg, Timestamp now, std::int64_t threshold) {
  const auto ref = scheduled_reference(f, leg);
  if (!ref || leg == Leg::Other) return DelayStatus{DelayClass::Unknown, std::nullopt, ""};

  bool begun = now >= *ref;
  for (const Milestone m : kActualChain) {
    if (f.time(m) && *f.time(m) <= now) begun = true;
  }
  if (!begun) return DelayStatus{DelayClass::Future, std::nullopt, ""};

  const Milestone actual = leg == Leg::Arrival ? Milestone::AIBT : Milestone::AOBT;
  const std::vector<Milestone> estimates =
      leg == Leg::Arrival ? std::vector<Milestone>{Milestone::EIBT} : std::vector<Milestone>{Milestone::TOBT, Milestone::EOBT};

  Timestamp best = *ref;
  std::string basis = leg == Leg::Arrival ? "SIBT" : "SOBT";
  if (f.time(actual)) {
    best = *f.time(actual);
    basis = std::string(to_string(actual));
  } else {
    for (const Milestone m : estimates) {
      if (f.time(m)) {
        best = *f.time(m);
        basis = std::string(to_string(m));
        break;
      }
    }
    // Without the actual, the event cannot have happened before now.
    if (now > best) {
      best = now;
      basis = "now";
    }
  }
  const std::int64_t delay = (best - *ref).count();
  return DelayStatus{delay > threshold ? DelayClass::Late : DelayClass::OnTime, delay, basis};
}

std::optional<FlightState> derive_state(const FlightRecord& f, Leg leg) {
  if (f.state == FlightState::Cancelled || f.state == FlightState::Diverted || f.state == FlightState::Redirected) {
    return f.state;
  }
  std::optional<Timestamp> previous;
  bool any = false;
  for (const Milestone m : kActualChain) {
    const auto& t = f.time(m);
    if (!t) continue;
    if (previous && *t < *previous) return FlightState::Unknown;
    previous = t;
    any = true;
  }
  if (leg == Leg::Arrival && f.time(Milestone::ALDT)) return FlightState::Landed;
  if (any) return FlightState::Active;
  return FlightState::Scheduled;
}

MilestoneResult apply_milestone(FlightRecord& f, Milestone m, Timestamp at, Leg leg) {
  MilestoneResult result;
  result.previous_state = f.state;
  auto& slot = f.time(m);
  if (slot && *slot == at) {
    result.state = f.state;
    return result;
  }
  if (is_actual(m)) {
    if (slot) {
      throw TurnaroundError("immutable", attribute_name(m) + " is already " + format_timestamp(*slot));
    }
    const std::size_t index = chain_index(m);
    for (std::size_t i = 0; i < kActualChain.size(); ++i) {
      const auto& other = f.time(kActualChain[i]);
      if (i == index || !other) continue;
      if ((i < index && *other > at) || (i > index && *other < at)) {
        throw TurnaroundError("ordering", attribute_name(m) + " " + format_timestamp(at) + " conflicts with " +
                                              attribute_name(kActualChain[i]) + " " + format_timestamp(*other) +
                                              " (AOBT <= ATOT <= ALDT <= AIBT)");
      }
    }
  } else if (const auto a = actual_for(m); a && f.time(*a)) {
    throw TurnaroundError("estimate-after-actual",
                          attribute_name(m) + " cannot change once " + attribute_name(*a) + " is known");
  }
  slot = at;
  const TaxiTimes taxi = compute_taxi_times(f);
  f.interval(Interval::AXOT) = taxi.axot;
  f.interval(Interval::AXIT) = taxi.axit;
  f.state = derive_state(f, leg);
  result.changed = true;
  result.state = f.state;
  return result;
}

}  // namespace airtwin
