#include "mrtsim/records.hpp"

namespace mrt {

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kTreat: return "TREAT";
    case Outcome::kNoTreat: return "NO_TREAT";
    case Outcome::kNotRandomized: return "NOT_RANDOMIZED";
  }
  return "NOT_RANDOMIZED";
}

std::string to_string(Agent a) { return a == Agent::kPhone ? "PHONE" : "SERVER"; }

std::string to_string(EngagementKind k) {
  switch (k) {
    case EngagementKind::kThumbsUp: return "THUMBS_UP";
    case EngagementKind::kThumbsDown: return "THUMBS_DOWN";
    case EngagementKind::kSnoozeSet: return "SNOOZE_SET";
    case EngagementKind::kNoResponse: return "NO_RESPONSE";
  }
  return "NO_RESPONSE";
}

Outcome outcome_from_string(const std::string& s) {
  if (s == "TREAT") return Outcome::kTreat;
  if (s == "NO_TREAT") return Outcome::kNoTreat;
  if (s == "NOT_RANDOMIZED") return Outcome::kNotRandomized;
  throw ConfigError("unknown outcome '" + s + "'");
}

Agent agent_from_string(const std::string& s) {
  if (s == "PHONE") return Agent::kPhone;
  if (s == "SERVER") return Agent::kServer;
  throw ConfigError("unknown agent '" + s + "'");
}

EngagementKind engagement_from_string(const std::string& s) {
  if (s == "THUMBS_UP") return EngagementKind::kThumbsUp;
  if (s == "THUMBS_DOWN") return EngagementKind::kThumbsDown;
  if (s == "SNOOZE_SET") return EngagementKind::kSnoozeSet;
  if (s == "NO_RESPONSE") return EngagementKind::kNoResponse;
  throw ConfigError("unknown engagement kind '" + s + "'");
}

RandomizationRecord randomize(const DecisionPoint& dp, const AvailabilityResult& avail,
                              const Probability& p, std::uint64_t seed, UtcSeconds now, Agent agent) {
  RandomizationRecord rec;
  rec.participant_id = dp.participant_id;
  rec.component_id = dp.component_id;
  rec.global_index = dp.global_index;
  rec.day_index = dp.day_index;
  rec.slot_index = dp.slot_index;
  rec.probability = p;
  rec.availability = avail;
  rec.agent = agent;
  rec.randomized_at = now;
  if (!avail.available) {
    rec.outcome = Outcome::kNotRandomized;
    return rec;
  }
  const double draw =
      rng::uniform01(seed, rng::Stream::kRandomizationDraw, static_cast<std::uint64_t>(dp.participant_id),
                     static_cast<std::uint64_t>(dp.component_index), static_cast<std::uint64_t>(dp.global_index));
  rec.outcome = draw < p.value() ? Outcome::kTreat : Outcome::kNoTreat;
  return rec;
}

EngagementEvent engage(const RandomizationRecord& record, std::span<const UserAction> actions) {
  EngagementEvent ev;
  ev.participant_id = record.participant_id;
  ev.component_id = record.component_id;
  ev.global_index = record.global_index;
  const UtcSeconds delivered = record.delivered_at.value_or(0);
  const UtcSeconds deadline = delivered + kEngagementTimeoutSeconds;
  const UserAction* first = nullptr;
  for (const auto& a : actions) {
    if (a.at >= delivered && a.at <= deadline && (!first || a.at < first->at)) first = &a;
  }
  if (first) {
    ev.kind = first->kind;
    ev.at = first->at;
  } else {
    ev.kind = EngagementKind::kNoResponse;
    ev.at = deadline;
  }
  return ev;
}

EffectiveContext effective_context(Connection transport, const std::optional<PrefetchedContent>& cache,
                                   UtcSeconds now, const AvailabilityPolicy& policy) {
  if (transport == Connection::kOnline) return EffectiveContext{Connection::kOnline, 0, false};
  if (cache && now - cache->fetched_at <= policy.freshness_bound_seconds && now >= cache->fetched_at) {
    return EffectiveContext{Connection::kOnline, now - cache->fetched_at, true};
  }
  return EffectiveContext{transport, 0, false};
}

DeliveryDecision phone_delivery(Connection transport, const std::optional<PrefetchedContent>& cache,
                                UtcSeconds now, const AvailabilityPolicy& policy,
                                const std::string& fresh_content_id) {
  if (transport == Connection::kOnline) return DeliveryDecision{true, false, fresh_content_id};
  const EffectiveContext ec = effective_context(transport, cache, now, policy);
  if (ec.via_cache) return DeliveryDecision{true, true, cache->content_id};
  return DeliveryDecision{false, false, ""};
}

}  // namespace mrt
