#include <doctest.h>

#include "mrtsim/availability.hpp"

using namespace mrt;

namespace {

ContextSnapshot fresh_online(UtcSeconds now) {
  ContextSnapshot s;
  s.captured_at = now;
  s.location = LocationCategory::kHome;
  s.weather = WeatherTag::kClear;
  s.connection = Connection::kOnline;
  s.recent_activity = false;
  s.driving = false;
  return s;
}

}  // namespace

TEST_CASE("all criteria met means available with an empty reason set") {
  const UtcSeconds now = 1000000;
  const auto r = evaluate_availability(fresh_online(now), SnoozeState{}, now);
  CHECK(r.available);
  CHECK(r.reasons.empty());
  CHECK(r.evaluated_at == now);
}

TEST_CASE("walking near the decision point blocks randomization") {
  const UtcSeconds now = 1000000;
  auto s = fresh_online(now);
  s.recent_activity = true;  // walked 60 s ago, inside the 90 s lookback
  const auto r = evaluate_availability(s, SnoozeState{}, now);
  CHECK_FALSE(r.available);
  CHECK(r.reasons.size() == 1);
  CHECK(r.reasons.contains(UnavailableReason::kRecentlyWalking));
}

TEST_CASE("an active snooze reports INTERVENTION_OFF until it expires") {
  const UtcSeconds set_at = 1000000;
  const SnoozeState snooze = SnoozeState::set(set_at, 12 * 3600);
  const UtcSeconds three_hours_later = set_at + 3 * 3600;
  const auto r = evaluate_availability(fresh_online(three_hours_later), snooze, three_hours_later);
  CHECK_FALSE(r.available);
  CHECK(r.reasons.size() == 1);
  CHECK(r.reasons.contains(UnavailableReason::kInterventionOff));

  const UtcSeconds after_expiry = set_at + 12 * 3600;
  CHECK(evaluate_availability(fresh_online(after_expiry), snooze, after_expiry).available);
}

TEST_CASE("snooze duration is capped at 12 hours") {
  const SnoozeState snooze = SnoozeState::set(0, 48 * 3600);
  CHECK(snooze.expires_at == SnoozeState::kMaxDurationSeconds);
}

TEST_CASE("offline and driving records both reasons") {
  const UtcSeconds now = 1000000;
  auto s = fresh_online(now);
  s.connection = Connection::kOffline;
  s.driving = true;
  const auto r = evaluate_availability(s, SnoozeState{}, now);
  CHECK_FALSE(r.available);
  CHECK(r.reasons.size() == 2);
  CHECK(r.reasons.contains(UnavailableReason::kNoConnection));
  CHECK(r.reasons.contains(UnavailableReason::kDriving));
}

TEST_CASE("captive portal counts as no usable connection") {
  const UtcSeconds now = 1000000;
  auto s = fresh_online(now);
  s.connection = Connection::kCaptivePortal;
  const auto r = evaluate_availability(s, SnoozeState{}, now);
  CHECK(r.reasons.contains(UnavailableReason::kNoConnection));
}

TEST_CASE("a stale snapshot maps to NO_CONNECTION under the conservative policy") {
  const UtcSeconds now = 1000000;
  AvailabilityPolicy policy;
  auto s = fresh_online(now - policy.freshness_bound_seconds - 1);
  const auto r = evaluate_availability(s, SnoozeState{}, now, policy);
  CHECK_FALSE(r.available);
  CHECK(r.reasons.contains(UnavailableReason::kNoConnection));
  // exactly at the bound is still fresh
  auto s2 = fresh_online(now - policy.freshness_bound_seconds);
  CHECK(evaluate_availability(s2, SnoozeState{}, now, policy).available);
}

TEST_CASE("completeness over all sixteen criterion combinations") {
  const UtcSeconds now = 1000000;
  for (int mask = 0; mask < 16; ++mask) {
    const bool driving = mask & 1;
    const bool offline = mask & 2;
    const bool snoozed = mask & 4;
    const bool walking = mask & 8;

    auto s = fresh_online(now);
    s.driving = driving;
    s.connection = offline ? Connection::kOffline : Connection::kOnline;
    s.recent_activity = walking;
    const SnoozeState snooze = snoozed ? SnoozeState::set(now - 60, 3600) : SnoozeState{};

    const auto r = evaluate_availability(s, snooze, now);
    CHECK(r.reasons.contains(UnavailableReason::kDriving) == driving);
    CHECK(r.reasons.contains(UnavailableReason::kNoConnection) == offline);
    CHECK(r.reasons.contains(UnavailableReason::kInterventionOff) == snoozed);
    CHECK(r.reasons.contains(UnavailableReason::kRecentlyWalking) == walking);
    CHECK(r.available == (mask == 0));
    CHECK(r.available == r.reasons.empty());
  }
}

TEST_CASE("monotonicity: adding a violated criterion never restores availability") {
  const UtcSeconds now = 1000000;
  for (int mask = 0; mask < 16; ++mask) {
    for (int extra = 0; extra < 4; ++extra) {
      const int bigger = mask | (1 << extra);
      auto make = [&](int m) {
        auto s = fresh_online(now);
        s.driving = m & 1;
        s.connection = (m & 2) ? Connection::kOffline : Connection::kOnline;
        s.recent_activity = m & 8;
        const SnoozeState snooze = (m & 4) ? SnoozeState::set(now - 60, 3600) : SnoozeState{};
        return evaluate_availability(s, snooze, now);
      };
      if (!make(mask).available) CHECK_FALSE(make(bigger).available);
    }
  }
}

TEST_CASE("reason sets serialize to stable names") {
  ReasonSet r;
  CHECK(r.joined() == "NONE");
  r.add(UnavailableReason::kNoConnection);
  r.add(UnavailableReason::kDriving);
  CHECK(r.joined() == "DRIVING|NO_CONNECTION");
  CHECK(ReasonSet::from_joined("DRIVING|NO_CONNECTION") == r);
  CHECK(ReasonSet::from_joined("NONE").empty());
}
