#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrtsim/availability.hpp"
#include "mrtsim/model.hpp"
#include "mrtsim/records.hpp"
#include "mrtsim/sync.hpp"

namespace mrt {

enum class FaultKind {
  kConnectivityLoss,
  kCaptivePortal,
  kAppSwipeKill,
  kPhonePowerOff,
  kTrackerBatteryDead,
  kBluetoothOff,
  kGpsOff,
  kAckLoss,
  kPushDrop,
  kTimezoneTravel,
  kDropout,
};

std::string to_string(FaultKind k);
FaultKind fault_kind_from_string(const std::string& s);

// Faults perturb observation and transport only; windows are given either as
// UTC instants or as study-local day/time pairs (resolved at load against the
// participant's initial zone).
struct FaultSpec {
  FaultKind kind = FaultKind::kConnectivityLoss;
  std::vector<int> participants;  // empty = all
  std::optional<UtcSeconds> start_utc;
  std::optional<UtcSeconds> end_utc;
  // TIMEZONE_TRAVEL only:
  int new_offset_minutes = 0;
  std::string new_tz_name;
  bool reboot = true;  // false reproduces the stale-clock mistimed-delivery skew

  bool applies_to(int participant_id) const;
};

struct BehaviorModel {
  int sleep_start_minute = 23 * 60;
  int sleep_end_minute = 7 * 60;
  double bout_start_prob = 0.035;
  double bout_stop_prob = 0.30;
  int steps_per_active_minute_min = 60;
  int steps_per_active_minute_max = 110;
  double rate_heterogeneity = 0.30;  // +/- fraction on bout_start_prob per participant
  int phone_carried_start_minute = 8 * 60;
  int phone_carried_end_minute = 21 * 60;
  double phone_fit_undercount = 0.85;
  double thumbs_prob = 0.50;
  double thumbs_up_fraction = 0.80;
  double snooze_prob = 0.02;
  std::int64_t snooze_duration_seconds = 12 * 3600;
  double daily_drive_prob = 0.5;  // chance of a commute-style drive window per day
  int drive_window_minutes = 25;
  int daily_obs_minute = 21 * 60 + 30;  // evening questionnaire time
};

struct EffectSpec {
  std::string component_id;
  int delta_steps = 0;  // added to the proximal window (or next day) per delivery
  double walk_multiplier = 1.0;
  double sedentary_multiplier = 1.0;
  double weekend_multiplier = 1.0;
  std::optional<int> decay_to_zero_day;  // linear decay hits zero at this day index
};

struct PushModel {
  double median_delay_seconds = 15.0;
  double sigma = 1.0;
  double drop_probability = 0.01;
  bool enabled = true;  // disabled = zero delay, no drops
};

struct ScenarioConfig {
  int schema_version = 1;
  std::uint64_t seed = 1;
  Agent agent = Agent::kPhone;
  TrialConfig trial;
  BehaviorModel behavior;
  std::vector<EffectSpec> effects;
  PushModel push;
  SyncPolicy sync;
  AvailabilityPolicy availability;
  std::vector<FaultSpec> faults;

  void validate() const;
  Json to_json() const;
  static ScenarioConfig from_json(const Json& j);
  static ScenarioConfig from_json_text(const std::string& text);
  static ScenarioConfig from_file(const std::string& path);

  const EffectSpec* effect_for(const std::string& component_id) const;
};

// The built-in trial mirroring the published design: 37 participants,
// 42 days, suggestions 5/day at p=0.6 with a 30-minute window, evening
// planning 1/day at p=0.5 scored by next-day total.
ScenarioConfig default_scenario();
std::string default_scenario_text();

UtcSeconds scenario_start_utc(const ScenarioConfig& scenario);

// True travel itinerary for one participant under the scenario's faults.
TravelItinerary itinerary_for(const ScenarioConfig& scenario, int participant_id);
// The itinerary the phone's scheduler uses (stale when reboot=false).
TravelItinerary phone_itinerary_for(const ScenarioConfig& scenario, int participant_id);

}  // namespace mrt
