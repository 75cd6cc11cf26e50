#include "mrtsim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace mrt {

std::string to_string(FaultKind k) {
  switch (k) {
    case FaultKind::kConnectivityLoss: return "CONNECTIVITY_LOSS";
    case FaultKind::kCaptivePortal: return "CAPTIVE_PORTAL";
    case FaultKind::kAppSwipeKill: return "APP_SWIPE_KILL";
    case FaultKind::kPhonePowerOff: return "PHONE_POWER_OFF";
    case FaultKind::kTrackerBatteryDead: return "TRACKER_BATTERY_DEAD";
    case FaultKind::kBluetoothOff: return "BLUETOOTH_OFF";
    case FaultKind::kGpsOff: return "GPS_OFF";
    case FaultKind::kAckLoss: return "ACK_LOSS";
    case FaultKind::kPushDrop: return "PUSH_DROP";
    case FaultKind::kTimezoneTravel: return "TIMEZONE_TRAVEL";
    case FaultKind::kDropout: return "DROPOUT";
  }
  return "CONNECTIVITY_LOSS";
}

FaultKind fault_kind_from_string(const std::string& s) {
  if (s == "CONNECTIVITY_LOSS") return FaultKind::kConnectivityLoss;
  if (s == "CAPTIVE_PORTAL") return FaultKind::kCaptivePortal;
  if (s == "APP_SWIPE_KILL") return FaultKind::kAppSwipeKill;
  if (s == "PHONE_POWER_OFF") return FaultKind::kPhonePowerOff;
  if (s == "TRACKER_BATTERY_DEAD") return FaultKind::kTrackerBatteryDead;
  if (s == "BLUETOOTH_OFF") return FaultKind::kBluetoothOff;
  if (s == "GPS_OFF") return FaultKind::kGpsOff;
  if (s == "ACK_LOSS") return FaultKind::kAckLoss;
  if (s == "PUSH_DROP") return FaultKind::kPushDrop;
  if (s == "TIMEZONE_TRAVEL") return FaultKind::kTimezoneTravel;
  if (s == "DROPOUT") return FaultKind::kDropout;
  throw ConfigError("unknown fault kind '" + s + "'");
}

bool FaultSpec::applies_to(int participant_id) const {
  if (participants.empty()) return true;
  for (const int p : participants) {
    if (p == participant_id) return true;
  }
  return false;
}

void ScenarioConfig::validate() const {
  trial.validate();
  if (behavior.bout_start_prob < 0 || behavior.bout_start_prob > 1 || behavior.bout_stop_prob <= 0 ||
      behavior.bout_stop_prob > 1) {
    throw ConfigError("behavior bout probabilities must lie in [0,1]");
  }
  if (behavior.steps_per_active_minute_min < 1 ||
      behavior.steps_per_active_minute_max < behavior.steps_per_active_minute_min) {
    throw ConfigError("behavior step range invalid");
  }
  if (behavior.phone_fit_undercount < 0 || behavior.phone_fit_undercount > 1) {
    throw ConfigError("phone_fit_undercount must lie in [0,1]");
  }
  if (behavior.snooze_duration_seconds > SnoozeState::kMaxDurationSeconds) {
    throw ConfigError("snooze duration exceeds the 12-hour cap");
  }
  for (const auto& e : effects) {
    trial.component(e.component_id);
    if (e.delta_steps < 0) throw ConfigError("effect delta_steps must be >= 0");
    if (e.decay_to_zero_day) {
      if (*e.decay_to_zero_day < 1) throw ConfigError("decay_to_zero_day must be >= 1");
      if (e.delta_steps % *e.decay_to_zero_day != 0) {
        throw ConfigError("effect '" + e.component_id +
                          "': delta_steps must be divisible by decay_to_zero_day so each day's "
                          "injected step count stays an integer");
      }
    }
    for (const double m : {e.walk_multiplier, e.sedentary_multiplier, e.weekend_multiplier}) {
      const double scaled = e.delta_steps * m;
      if (scaled != static_cast<double>(static_cast<std::int64_t>(scaled))) {
        throw ConfigError("effect '" + e.component_id + "': multipliers must yield integer step deltas");
      }
    }
  }
  if (push.drop_probability < 0 || push.drop_probability > 1) {
    throw ConfigError("push drop_probability must lie in [0,1]");
  }
  for (const auto& f : faults) {
    for (const int p : f.participants) {
      if (p < 1 || p > trial.participant_count) {
        throw ConfigError("fault " + to_string(f.kind) + ": participant " + std::to_string(p) + " out of range");
      }
    }
    if (f.kind == FaultKind::kTimezoneTravel || f.kind == FaultKind::kDropout) {
      if (!f.start_utc) throw ConfigError("fault " + to_string(f.kind) + " needs a start instant");
    } else {
      if (!f.start_utc || !f.end_utc || *f.end_utc <= *f.start_utc) {
        throw ConfigError("fault " + to_string(f.kind) + " needs a well-formed window");
      }
    }
    if (f.kind == FaultKind::kTimezoneTravel &&
        (f.new_offset_minutes < -kMaxOffsetMinutes || f.new_offset_minutes > kMaxOffsetMinutes)) {
      throw ConfigError("timezone travel offset outside +/-14h");
    }
  }
}

namespace {

UtcSeconds study_start_utc(const TrialConfig& trial) {
  return days_from_civil(trial.start_date) * kSecondsPerDay - std::int64_t{trial.initial_offset_minutes} * 60;
}

UtcSeconds resolve_instant(const Json& j, const char* day_key, const char* time_key, const char* utc_key,
                           const TrialConfig& trial, const std::string& where) {
  if (j.contains(utc_key)) {
    const auto t = parse_utc(j.at(utc_key).get<std::string>());
    if (!t) throw ConfigError(where + ": bad UTC instant");
    return *t;
  }
  if (!j.contains(day_key)) throw ConfigError(where + ": needs either " + utc_key + " or " + day_key);
  const int day = j.at(day_key).get<int>();
  int minute = 0;
  if (j.contains(time_key)) {
    const auto m = parse_minute_of_day(j.at(time_key).get<std::string>());
    if (!m) throw ConfigError(where + ": time must be HH:MM");
    minute = *m;
  }
  return study_start_utc(trial) + std::int64_t{day} * kSecondsPerDay + std::int64_t{minute} * 60;
}

}  // namespace

Json ScenarioConfig::to_json() const {
  Json faults_json = Json::array();
  for (const auto& f : faults) {
    Json fj{{"kind", to_string(f.kind)}};
    if (!f.participants.empty()) fj["participants"] = f.participants;
    if (f.kind == FaultKind::kTimezoneTravel || f.kind == FaultKind::kDropout) {
      if (f.start_utc) fj["at_utc"] = format_utc(*f.start_utc);
    } else {
      if (f.start_utc) fj["start_utc"] = format_utc(*f.start_utc);
      if (f.end_utc) fj["end_utc"] = format_utc(*f.end_utc);
    }
    if (f.kind == FaultKind::kTimezoneTravel) {
      fj["offset_minutes"] = f.new_offset_minutes;
      fj["tz_name"] = f.new_tz_name;
      fj["reboot"] = f.reboot;
    }
    faults_json.push_back(std::move(fj));
  }
  Json effects_json = Json::array();
  for (const auto& e : effects) {
    Json ej{{"component", e.component_id},
            {"delta_steps", e.delta_steps},
            {"walk_multiplier", e.walk_multiplier},
            {"sedentary_multiplier", e.sedentary_multiplier},
            {"weekend_multiplier", e.weekend_multiplier}};
    if (e.decay_to_zero_day) ej["decay_to_zero_day"] = *e.decay_to_zero_day;
    effects_json.push_back(std::move(ej));
  }
  return Json{
      {"schema_version", schema_version},
      {"seed", seed},
      {"agent", to_string(agent)},
      {"trial", trial.to_json()},
      {"behavior",
       Json{{"sleep_start", format_minute_of_day(behavior.sleep_start_minute)},
            {"sleep_end", format_minute_of_day(behavior.sleep_end_minute)},
            {"bout_start_prob", behavior.bout_start_prob},
            {"bout_stop_prob", behavior.bout_stop_prob},
            {"steps_per_active_minute_min", behavior.steps_per_active_minute_min},
            {"steps_per_active_minute_max", behavior.steps_per_active_minute_max},
            {"rate_heterogeneity", behavior.rate_heterogeneity},
            {"phone_carried_start", format_minute_of_day(behavior.phone_carried_start_minute)},
            {"phone_carried_end", format_minute_of_day(behavior.phone_carried_end_minute)},
            {"phone_fit_undercount", behavior.phone_fit_undercount},
            {"thumbs_prob", behavior.thumbs_prob},
            {"thumbs_up_fraction", behavior.thumbs_up_fraction},
            {"snooze_prob", behavior.snooze_prob},
            {"snooze_duration_seconds", behavior.snooze_duration_seconds},
            {"daily_drive_prob", behavior.daily_drive_prob},
            {"drive_window_minutes", behavior.drive_window_minutes},
            {"daily_obs_time", format_minute_of_day(behavior.daily_obs_minute)}}},
      {"effects", std::move(effects_json)},
      {"push",
       Json{{"enabled", push.enabled},
            {"median_delay_seconds", push.median_delay_seconds},
            {"sigma", push.sigma},
            {"drop_probability", push.drop_probability}}},
      {"sync",
       Json{{"backoff_initial_seconds", sync.backoff_initial_seconds},
            {"backoff_cap_seconds", sync.backoff_cap_seconds}}},
      {"availability",
       Json{{"freshness_bound_minutes", availability.freshness_bound_seconds / 60},
            {"walking_lookback_seconds", availability.walking_lookback_seconds}}},
      {"faults", std::move(faults_json)}};
}

ScenarioConfig ScenarioConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  ScenarioConfig sc;
  sc.schema_version = j.value("schema_version", 1);
  sc.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("agent")) sc.agent = agent_from_string(j.at("agent").get<std::string>());
  if (!j.contains("trial")) throw ConfigError("scenario: trial section required");
  sc.trial = TrialConfig::from_json(j.at("trial"));

  if (j.contains("behavior")) {
    const auto& b = j.at("behavior");
    auto minute = [&](const char* key, int fallback) {
      if (!b.contains(key)) return fallback;
      const auto m = parse_minute_of_day(b.at(key).get<std::string>());
      if (!m) throw ConfigError(std::string("behavior.") + key + ": time must be HH:MM");
      return *m;
    };
    sc.behavior.sleep_start_minute = minute("sleep_start", sc.behavior.sleep_start_minute);
    sc.behavior.sleep_end_minute = minute("sleep_end", sc.behavior.sleep_end_minute);
    sc.behavior.bout_start_prob = b.value("bout_start_prob", sc.behavior.bout_start_prob);
    sc.behavior.bout_stop_prob = b.value("bout_stop_prob", sc.behavior.bout_stop_prob);
    sc.behavior.steps_per_active_minute_min =
        b.value("steps_per_active_minute_min", sc.behavior.steps_per_active_minute_min);
    sc.behavior.steps_per_active_minute_max =
        b.value("steps_per_active_minute_max", sc.behavior.steps_per_active_minute_max);
    sc.behavior.rate_heterogeneity = b.value("rate_heterogeneity", sc.behavior.rate_heterogeneity);
    sc.behavior.phone_carried_start_minute = minute("phone_carried_start", sc.behavior.phone_carried_start_minute);
    sc.behavior.phone_carried_end_minute = minute("phone_carried_end", sc.behavior.phone_carried_end_minute);
    sc.behavior.phone_fit_undercount = b.value("phone_fit_undercount", sc.behavior.phone_fit_undercount);
    sc.behavior.thumbs_prob = b.value("thumbs_prob", sc.behavior.thumbs_prob);
    sc.behavior.thumbs_up_fraction = b.value("thumbs_up_fraction", sc.behavior.thumbs_up_fraction);
    sc.behavior.snooze_prob = b.value("snooze_prob", sc.behavior.snooze_prob);
    sc.behavior.snooze_duration_seconds = b.value("snooze_duration_seconds", sc.behavior.snooze_duration_seconds);
    sc.behavior.daily_drive_prob = b.value("daily_drive_prob", sc.behavior.daily_drive_prob);
    sc.behavior.drive_window_minutes = b.value("drive_window_minutes", sc.behavior.drive_window_minutes);
    sc.behavior.daily_obs_minute = minute("daily_obs_time", sc.behavior.daily_obs_minute);
  }

  if (j.contains("effects")) {
    for (const auto& ej : j.at("effects")) {
      EffectSpec e;
      e.component_id = ej.at("component").get<std::string>();
      e.delta_steps = ej.value("delta_steps", 0);
      e.walk_multiplier = ej.value("walk_multiplier", 1.0);
      e.sedentary_multiplier = ej.value("sedentary_multiplier", 1.0);
      e.weekend_multiplier = ej.value("weekend_multiplier", 1.0);
      if (ej.contains("decay_to_zero_day")) e.decay_to_zero_day = ej.at("decay_to_zero_day").get<int>();
      sc.effects.push_back(std::move(e));
    }
  }

  if (j.contains("push")) {
    const auto& p = j.at("push");
    sc.push.enabled = p.value("enabled", true);
    sc.push.median_delay_seconds = p.value("median_delay_seconds", sc.push.median_delay_seconds);
    sc.push.sigma = p.value("sigma", sc.push.sigma);
    sc.push.drop_probability = p.value("drop_probability", sc.push.drop_probability);
  }
  if (j.contains("sync")) {
    const auto& s = j.at("sync");
    sc.sync.backoff_initial_seconds = s.value("backoff_initial_seconds", sc.sync.backoff_initial_seconds);
    sc.sync.backoff_cap_seconds = s.value("backoff_cap_seconds", sc.sync.backoff_cap_seconds);
  }
  if (j.contains("availability")) {
    const auto& a = j.at("availability");
    sc.availability.freshness_bound_seconds =
        std::int64_t{a.value("freshness_bound_minutes", 45)} * 60;
    sc.availability.walking_lookback_seconds =
        a.value("walking_lookback_seconds", sc.availability.walking_lookback_seconds);
  }

  if (j.contains("faults")) {
    int idx = 0;
    for (const auto& fj : j.at("faults")) {
      const std::string where = "faults[" + std::to_string(idx++) + "]";
      FaultSpec f;
      f.kind = fault_kind_from_string(fj.at("kind").get<std::string>());
      if (fj.contains("participants")) f.participants = fj.at("participants").get<std::vector<int>>();
      if (f.kind == FaultKind::kTimezoneTravel || f.kind == FaultKind::kDropout) {
        f.start_utc = resolve_instant(fj, "at_day", "at_time", "at_utc", sc.trial, where);
      } else {
        f.start_utc = resolve_instant(fj, "start_day", "start_time", "start_utc", sc.trial, where);
        f.end_utc = resolve_instant(fj, "end_day", "end_time", "end_utc", sc.trial, where);
      }
      if (f.kind == FaultKind::kTimezoneTravel) {
        f.new_offset_minutes = fj.at("offset_minutes").get<int>();
        f.new_tz_name = fj.value("tz_name", "TRAVEL");
        f.reboot = fj.value("reboot", true);
      }
      sc.faults.push_back(std::move(f));
    }
  }

  sc.validate();
  return sc;
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text) {
  Json j = Json::parse(text, nullptr, false, true);
  if (j.is_discarded()) {
    // Re-parse with exceptions to surface the byte offset diagnostic.
    try {
      Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ConfigError(std::string("scenario parse error: ") + e.what());
    }
    throw ConfigError("scenario parse error");
  }
  return from_json(j);
}

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read scenario file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

const EffectSpec* ScenarioConfig::effect_for(const std::string& component_id) const {
  for (const auto& e : effects) {
    if (e.component_id == component_id) return &e;
  }
  return nullptr;
}

ScenarioConfig default_scenario() { return ScenarioConfig::from_json_text(default_scenario_text()); }

UtcSeconds scenario_start_utc(const ScenarioConfig& scenario) {
  return days_from_civil(scenario.trial.start_date) * kSecondsPerDay -
         std::int64_t{scenario.trial.initial_offset_minutes} * 60;
}

namespace {

TravelItinerary build_itinerary(const ScenarioConfig& scenario, int participant_id, bool phone_view) {
  std::vector<TzSegment> segs{TzSegment{std::numeric_limits<std::int64_t>::min() / 4,
                                        scenario.trial.initial_offset_minutes, scenario.trial.initial_tz_name}};
  std::vector<const FaultSpec*> travels;
  for (const auto& f : scenario.faults) {
    if (f.kind == FaultKind::kTimezoneTravel && f.applies_to(participant_id)) travels.push_back(&f);
  }
  std::sort(travels.begin(), travels.end(),
            [](const FaultSpec* a, const FaultSpec* b) { return *a->start_utc < *b->start_utc; });
  for (const auto* f : travels) {
    if (phone_view && !f->reboot) continue;  // un-rebooted phone keeps the stale offset
    segs.push_back(TzSegment{*f->start_utc, f->new_offset_minutes, f->new_tz_name});
  }
  return TravelItinerary(std::move(segs));
}

}  // namespace

TravelItinerary itinerary_for(const ScenarioConfig& scenario, int participant_id) {
  return build_itinerary(scenario, participant_id, false);
}

TravelItinerary phone_itinerary_for(const ScenarioConfig& scenario, int participant_id) {
  return build_itinerary(scenario, participant_id, true);
}

std::string default_scenario_text() {
  return R"JSON({
  "schema_version": 1,
  "seed": 20250106,
  "agent": "PHONE",
  "trial": {
    "participant_count": 37,
    "study_days": 42,
    "timezone_policy": "LOCAL_INDEXED",
    "waking_window": {"start": "08:00", "end": "20:00"},
    "start_date": "2025-01-06",
    "initial_tz": {"offset_minutes": -300, "name": "EST"},
    "components": [
      {
        "id": "suggestions",
        "decision_points_per_day": 5,
        "randomization_probability": "0.6",
        "proximal_window": {"kind": "POST_WINDOW_MINUTES", "minutes": 30}
      },
      {
        "id": "planning",
        "decision_points_per_day": 1,
        "randomization_probability": "0.5",
        "proximal_window": {"kind": "NEXT_DAY_TOTAL"},
        "window": {"start": "19:00", "end": "21:00"}
      }
    ]
  },
  "effects": [
    {"component": "suggestions", "delta_steps": 30, "walk_multiplier": 1.0, "sedentary_multiplier": 0.5},
    {"component": "planning", "delta_steps": 200}
  ],
  "faults": []
})JSON";
}

}  // namespace mrt
