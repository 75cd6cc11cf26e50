#include "mrtsim/availability.hpp"

#include <algorithm>

namespace mrt {

std::string to_string(UnavailableReason r) {
  switch (r) {
    case UnavailableReason::kDriving: return "DRIVING";
    case UnavailableReason::kNoConnection: return "NO_CONNECTION";
    case UnavailableReason::kInterventionOff: return "INTERVENTION_OFF";
    case UnavailableReason::kRecentlyWalking: return "RECENTLY_WALKING";
  }
  return "UNKNOWN";
}

UnavailableReason unavailable_reason_from_string(const std::string& s) {
  if (s == "DRIVING") return UnavailableReason::kDriving;
  if (s == "NO_CONNECTION") return UnavailableReason::kNoConnection;
  if (s == "INTERVENTION_OFF") return UnavailableReason::kInterventionOff;
  if (s == "RECENTLY_WALKING") return UnavailableReason::kRecentlyWalking;
  throw ConfigError("unknown availability reason '" + s + "'");
}

int ReasonSet::size() const {
  int n = 0;
  for (std::uint8_t b = bits_; b; b >>= 1) n += b & 1;
  return n;
}

std::vector<UnavailableReason> ReasonSet::values() const {
  std::vector<UnavailableReason> out;
  for (const auto r : {UnavailableReason::kDriving, UnavailableReason::kNoConnection,
                       UnavailableReason::kInterventionOff, UnavailableReason::kRecentlyWalking}) {
    if (contains(r)) out.push_back(r);
  }
  return out;
}

std::string ReasonSet::joined() const {
  if (empty()) return "NONE";
  std::string out;
  for (const auto r : values()) {
    if (!out.empty()) out += '|';
    out += to_string(r);
  }
  return out;
}

ReasonSet ReasonSet::from_joined(const std::string& text) {
  ReasonSet s;
  if (text == "NONE" || text.empty()) return s;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t bar = text.find('|', start);
    const std::string part = text.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    s.add(unavailable_reason_from_string(part));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return s;
}

SnoozeState SnoozeState::set(UtcSeconds now, std::int64_t duration_seconds) {
  const std::int64_t d = std::clamp<std::int64_t>(duration_seconds, 0, kMaxDurationSeconds);
  return SnoozeState{true, now + d};
}

AvailabilityResult evaluate_availability(const ContextSnapshot& snapshot, const SnoozeState& snooze,
                                         UtcSeconds now, const AvailabilityPolicy& policy) {
  AvailabilityResult result;
  result.evaluated_at = now;

  const bool capture_failed = snapshot.staleness_seconds(now) > policy.freshness_bound_seconds;
  if (capture_failed || snapshot.connection != Connection::kOnline) {
    result.reasons.add(UnavailableReason::kNoConnection);
  }
  if (snapshot.driving) result.reasons.add(UnavailableReason::kDriving);
  if (snapshot.recent_activity) result.reasons.add(UnavailableReason::kRecentlyWalking);
  if (snooze.in_effect(now)) result.reasons.add(UnavailableReason::kInterventionOff);

  result.available = result.reasons.empty();
  return result;
}

}  // namespace mrt
