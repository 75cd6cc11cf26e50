#include "mrtsim/model.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace mrt {

Probability Probability::parse(const std::string& text) {
  if (text.empty()) throw ConfigError("probability must be a non-empty decimal string");
  size_t i = 0;
  bool digits = false, dot = false;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.') {
      if (dot) throw ConfigError("malformed probability '" + text + "'");
      dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits = true;
    } else {
      throw ConfigError("malformed probability '" + text + "'");
    }
  }
  if (!digits) throw ConfigError("malformed probability '" + text + "'");
  const double v = std::stod(text);
  if (v < 0.0 || v > 1.0) throw ConfigError("probability " + text + " outside [0,1]");
  return Probability(text, v);
}

std::string to_string(TimezonePolicy p) {
  return p == TimezonePolicy::kLocalIndexed ? "LOCAL_INDEXED" : "EXCLUDE_TRAVEL";
}

TimezonePolicy timezone_policy_from_string(const std::string& s) {
  if (s == "LOCAL_INDEXED") return TimezonePolicy::kLocalIndexed;
  if (s == "EXCLUDE_TRAVEL") return TimezonePolicy::kExcludeTravel;
  throw ConfigError("unknown timezone_policy '" + s + "'");
}

void TrialConfig::validate() const {
  if (participant_count < 1) throw ConfigError("participant_count must be >= 1");
  if (study_days < 1) throw ConfigError("study_days must be >= 1");
  std::set<std::string> ids;
  for (const auto& c : components) {
    if (c.id.empty()) throw ConfigError("component id must be non-empty");
    if (!ids.insert(c.id).second) throw ConfigError("duplicate component id '" + c.id + "'");
    if (c.decision_points_per_day < 1) {
      throw ConfigError("component '" + c.id + "': decision_points_per_day must be >= 1");
    }
    if (c.proximal_window.kind == ProximalWindow::Kind::kPostWindowMinutes && c.proximal_window.minutes < 1) {
      throw ConfigError("component '" + c.id + "': proximal window minutes must be >= 1");
    }
    const DailyWindow w = c.window.value_or(waking_window);
    if (w.start_minute < 0 || w.end_minute > kMinutesPerDay || w.start_minute >= w.end_minute) {
      throw ConfigError("component '" + c.id + "': invalid daily window");
    }
  }
  if (waking_window.start_minute < 0 || waking_window.end_minute > kMinutesPerDay ||
      waking_window.start_minute >= waking_window.end_minute) {
    throw ConfigError("invalid waking window");
  }
  if (initial_offset_minutes < -kMaxOffsetMinutes || initial_offset_minutes > kMaxOffsetMinutes) {
    throw ConfigError("initial offset outside +/-14h");
  }
}

const ComponentSpec& TrialConfig::component(const std::string& id) const {
  for (const auto& c : components) {
    if (c.id == id) return c;
  }
  throw ConfigError("unknown component id '" + id + "'");
}

int TrialConfig::component_index(const std::string& id) const {
  for (size_t i = 0; i < components.size(); ++i) {
    if (components[i].id == id) return static_cast<int>(i);
  }
  throw ConfigError("unknown component id '" + id + "'");
}

namespace {

Json window_to_json(const DailyWindow& w) {
  return Json{{"start", format_minute_of_day(w.start_minute)}, {"end", format_minute_of_day(w.end_minute)}};
}

DailyWindow window_from_json(const Json& j, const char* where) {
  const auto start = parse_minute_of_day(j.value("start", ""));
  const auto end = parse_minute_of_day(j.value("end", ""));
  if (!start || !end) throw ConfigError(std::string(where) + ": window times must be HH:MM");
  return DailyWindow{*start, *end};
}

}  // namespace

Json TrialConfig::to_json() const {
  Json components_json = Json::array();
  for (const auto& c : components) {
    Json cj{{"id", c.id},
            {"decision_points_per_day", c.decision_points_per_day},
            {"randomization_probability", c.randomization_probability.text()}};
    if (c.proximal_window.kind == ProximalWindow::Kind::kPostWindowMinutes) {
      cj["proximal_window"] = Json{{"kind", "POST_WINDOW_MINUTES"}, {"minutes", c.proximal_window.minutes}};
    } else {
      cj["proximal_window"] = Json{{"kind", "NEXT_DAY_TOTAL"}};
    }
    if (c.window) cj["window"] = window_to_json(*c.window);
    components_json.push_back(std::move(cj));
  }
  return Json{{"participant_count", participant_count},
              {"study_days", study_days},
              {"timezone_policy", to_string(timezone_policy)},
              {"waking_window", window_to_json(waking_window)},
              {"start_date", format_date(start_date)},
              {"initial_tz", Json{{"offset_minutes", initial_offset_minutes}, {"name", initial_tz_name}}},
              {"components", std::move(components_json)}};
}

TrialConfig TrialConfig::from_json(const Json& j) {
  TrialConfig cfg;
  if (!j.is_object()) throw ConfigError("trial config must be a JSON object");
  cfg.participant_count = j.value("participant_count", 0);
  cfg.study_days = j.value("study_days", 0);
  if (j.contains("timezone_policy")) cfg.timezone_policy = timezone_policy_from_string(j.at("timezone_policy"));
  if (j.contains("waking_window")) cfg.waking_window = window_from_json(j.at("waking_window"), "waking_window");
  if (j.contains("start_date")) {
    const auto d = parse_date(j.at("start_date").get<std::string>());
    if (!d) throw ConfigError("start_date must be YYYY-MM-DD");
    cfg.start_date = *d;
  }
  if (j.contains("initial_tz")) {
    const auto& tz = j.at("initial_tz");
    cfg.initial_offset_minutes = tz.value("offset_minutes", 0);
    cfg.initial_tz_name = tz.value("name", "UTC");
  }
  if (!j.contains("components") || !j.at("components").is_array()) {
    throw ConfigError("trial config: components must be an array");
  }
  for (const auto& cj : j.at("components")) {
    ComponentSpec c;
    c.id = cj.value("id", "");
    c.decision_points_per_day = cj.value("decision_points_per_day", 0);
    if (!cj.contains("randomization_probability")) {
      throw ConfigError("component '" + c.id + "': randomization_probability required");
    }
    c.randomization_probability = Probability::parse(cj.at("randomization_probability").get<std::string>());
    if (cj.contains("proximal_window")) {
      const auto& pw = cj.at("proximal_window");
      const std::string kind = pw.value("kind", "");
      if (kind == "POST_WINDOW_MINUTES") {
        c.proximal_window = ProximalWindow::post_window(pw.value("minutes", 0));
      } else if (kind == "NEXT_DAY_TOTAL") {
        c.proximal_window = ProximalWindow::next_day_total();
      } else {
        throw ConfigError("component '" + c.id + "': unknown proximal_window kind '" + kind + "'");
      }
    }
    if (cj.contains("window")) c.window = window_from_json(cj.at("window"), c.id.c_str());
    cfg.components.push_back(std::move(c));
  }
  cfg.validate();
  return cfg;
}

int slot_minute(const DailyWindow& window, int per_day, int slot) {
  const int span = window.end_minute - window.start_minute;
  return window.start_minute + static_cast<int>((std::int64_t{2 * slot + 1} * span) / (2 * per_day));
}

std::vector<DecisionPoint> build_schedule(const TrialConfig& config) {
  config.validate();
  std::vector<DecisionPoint> out;
  std::int64_t total = 0;
  for (const auto& c : config.components) {
    total += std::int64_t{config.participant_count} * config.study_days * c.decision_points_per_day;
  }
  out.reserve(static_cast<size_t>(total));
  for (int p = 1; p <= config.participant_count; ++p) {
    for (size_t ci = 0; ci < config.components.size(); ++ci) {
      const auto& c = config.components[ci];
      const DailyWindow w = c.window.value_or(config.waking_window);
      for (int day = 0; day < config.study_days; ++day) {
        for (int slot = 0; slot < c.decision_points_per_day; ++slot) {
          DecisionPoint dp;
          dp.participant_id = p;
          dp.component_index = static_cast<int>(ci);
          dp.component_id = c.id;
          dp.day_index = day;
          dp.slot_index = slot;
          dp.scheduled_local_minute = slot_minute(w, c.decision_points_per_day, slot);
          dp.global_index = day * c.decision_points_per_day + slot;
          out.push_back(std::move(dp));
        }
      }
    }
  }
  return out;
}

std::int64_t per_participant_decision_points(const TrialConfig& config, const std::string& component_id) {
  const auto& c = config.component(component_id);
  return std::int64_t{config.study_days} * c.decision_points_per_day;
}

std::int64_t count_decision_points(const TrialConfig& config, const std::string& component_id) {
  return per_participant_decision_points(config, component_id) * config.participant_count;
}

std::int64_t count_decision_points(const TrialConfig& config, const std::string& component_id,
                                   std::span<const int> participants) {
  return per_participant_decision_points(config, component_id) *
         static_cast<std::int64_t>(participants.size());
}

std::string to_string(LocationCategory c) {
  switch (c) {
    case LocationCategory::kHome: return "HOME";
    case LocationCategory::kWork: return "WORK";
    case LocationCategory::kOther: return "OTHER";
    case LocationCategory::kUnknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::string to_string(WeatherTag w) {
  switch (w) {
    case WeatherTag::kClear: return "CLEAR";
    case WeatherTag::kCloudy: return "CLOUDY";
    case WeatherTag::kRain: return "RAIN";
    case WeatherTag::kSnow: return "SNOW";
    case WeatherTag::kUnknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::string to_string(Connection c) {
  switch (c) {
    case Connection::kOnline: return "ONLINE";
    case Connection::kOffline: return "OFFLINE";
    case Connection::kCaptivePortal: return "CAPTIVE_PORTAL";
  }
  return "OFFLINE";
}

LocationCategory location_from_string(const std::string& s) {
  if (s == "HOME") return LocationCategory::kHome;
  if (s == "WORK") return LocationCategory::kWork;
  if (s == "OTHER") return LocationCategory::kOther;
  if (s == "UNKNOWN") return LocationCategory::kUnknown;
  throw ConfigError("unknown location category '" + s + "'");
}

WeatherTag weather_from_string(const std::string& s) {
  if (s == "CLEAR") return WeatherTag::kClear;
  if (s == "CLOUDY") return WeatherTag::kCloudy;
  if (s == "RAIN") return WeatherTag::kRain;
  if (s == "SNOW") return WeatherTag::kSnow;
  if (s == "UNKNOWN") return WeatherTag::kUnknown;
  throw ConfigError("unknown weather tag '" + s + "'");
}

Connection connection_from_string(const std::string& s) {
  if (s == "ONLINE") return Connection::kOnline;
  if (s == "OFFLINE") return Connection::kOffline;
  if (s == "CAPTIVE_PORTAL") return Connection::kCaptivePortal;
  throw ConfigError("unknown connection state '" + s + "'");
}

}  // namespace mrt
