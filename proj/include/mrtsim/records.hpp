#pragma once

#include <optional>
#include <span>
#include <string>

#include "mrtsim/availability.hpp"
#include "mrtsim/model.hpp"
#include "mrtsim/rng.hpp"

namespace mrt {

enum class Outcome { kTreat, kNoTreat, kNotRandomized };
enum class Agent { kPhone, kServer };
enum class EngagementKind { kThumbsUp, kThumbsDown, kSnoozeSet, kNoResponse };

std::string to_string(Outcome o);
std::string to_string(Agent a);
std::string to_string(EngagementKind k);
Outcome outcome_from_string(const std::string& s);
Agent agent_from_string(const std::string& s);
EngagementKind engagement_from_string(const std::string& s);

// One row of treatment-delivery bookkeeping per decision point. Probability
// is stored whether or not the participant was randomized; an undeliverable
// TREAT stays TREAT with delivered_at empty (intent-to-treat record).
struct RandomizationRecord {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  int day_index = 0;
  int slot_index = 0;
  Probability probability;
  Outcome outcome = Outcome::kNotRandomized;
  AvailabilityResult availability;
  ContextSnapshot context;              // evaluation context, staleness included
  std::int64_t context_staleness_seconds = 0;
  std::optional<UtcSeconds> randomized_at;
  int tz_offset_minutes = 0;
  std::optional<UtcSeconds> delivered_at;
  Agent agent = Agent::kPhone;
  std::optional<std::string> content_id;
};

struct PrefetchedContent {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  std::string content_id;
  UtcSeconds fetched_at = 0;
  ContextSnapshot context_used;
};

struct EngagementEvent {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  EngagementKind kind = EngagementKind::kNoResponse;
  UtcSeconds at = 0;
};

// Single uniform draw at the decision point; unavailable participants are
// not randomized but the probability is recorded anyway.
RandomizationRecord randomize(const DecisionPoint& dp, const AvailabilityResult& avail,
                              const Probability& p, std::uint64_t seed, UtcSeconds now, Agent agent);

struct UserAction {
  EngagementKind kind = EngagementKind::kThumbsUp;
  UtcSeconds at = 0;
};

constexpr std::int64_t kEngagementTimeoutSeconds = 30 * 60;

// First user action within the timeout wins; no action means an explicit
// NO_RESPONSE at the timeout instant, never a blank.
EngagementEvent engage(const RandomizationRecord& record, std::span<const UserAction> actions);

// Context-channel state the phone agent evaluates availability against:
// live transport when online, otherwise a prefetched bundle younger than the
// freshness bound keeps the channel usable (its age becomes the recorded
// staleness); with neither, the raw transport state stands.
struct EffectiveContext {
  Connection connection = Connection::kOffline;
  std::int64_t staleness_seconds = 0;
  bool via_cache = false;
};

EffectiveContext effective_context(Connection transport, const std::optional<PrefetchedContent>& cache,
                                   UtcSeconds now, const AvailabilityPolicy& policy);

// Delivery path for a drawn TREAT on the phone: fresh content when online,
// the prefetched bundle when offline with a fresh cache, otherwise the
// treatment is recorded as undeliverable.
struct DeliveryDecision {
  bool deliverable = false;
  bool from_cache = false;
  std::string content_id;
};

DeliveryDecision phone_delivery(Connection transport, const std::optional<PrefetchedContent>& cache,
                                UtcSeconds now, const AvailabilityPolicy& policy,
                                const std::string& fresh_content_id);

}  // namespace mrt
