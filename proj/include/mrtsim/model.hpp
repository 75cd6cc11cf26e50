#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrtsim/time.hpp"

namespace mrt {

using Json = nlohmann::ordered_json;

// Thrown for any invalid configuration or scenario input; maps to CLI exit 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A randomization probability kept as the exact decimal text it was
// configured with; the numeric value is derived for draws, the text is what
// gets serialized so exports never accumulate float drift.
class Probability {
 public:
  Probability() : text_("0"), value_(0.0) {}
  static Probability parse(const std::string& text);

  const std::string& text() const { return text_; }
  double value() const { return value_; }
  bool operator==(const Probability& o) const { return text_ == o.text_; }

 private:
  Probability(std::string text, double value) : text_(std::move(text)), value_(value) {}
  std::string text_;
  double value_;
};

enum class TimezonePolicy { kLocalIndexed, kExcludeTravel };

std::string to_string(TimezonePolicy p);
TimezonePolicy timezone_policy_from_string(const std::string& s);

struct ProximalWindow {
  enum class Kind { kPostWindowMinutes, kNextDayTotal };
  Kind kind = Kind::kPostWindowMinutes;
  int minutes = 30;  // only for kPostWindowMinutes

  static ProximalWindow post_window(int minutes) { return {Kind::kPostWindowMinutes, minutes}; }
  static ProximalWindow next_day_total() { return {Kind::kNextDayTotal, 0}; }
};

struct DailyWindow {
  int start_minute = 8 * 60;
  int end_minute = 20 * 60;
};

struct ComponentSpec {
  std::string id;
  int decision_points_per_day = 1;
  Probability randomization_probability;
  ProximalWindow proximal_window;
  std::optional<DailyWindow> window;  // overrides the trial waking window
};

struct TrialConfig {
  int participant_count = 37;
  int study_days = 42;
  std::vector<ComponentSpec> components;
  TimezonePolicy timezone_policy = TimezonePolicy::kLocalIndexed;
  DailyWindow waking_window;
  CivilDate start_date{2025, 1, 5};
  int initial_offset_minutes = -300;
  std::string initial_tz_name = "EST";

  void validate() const;
  const ComponentSpec& component(const std::string& id) const;
  int component_index(const std::string& id) const;

  Json to_json() const;
  static TrialConfig from_json(const Json& j);
};

// One scheduled randomization opportunity.
struct DecisionPoint {
  int participant_id = 0;  // 1-based
  int component_index = 0;
  std::string component_id;
  int day_index = 0;
  int slot_index = 0;
  int scheduled_local_minute = 0;  // minutes since local midnight
  int global_index = 0;            // day_index * per_day + slot_index
};

// Evenly spaced slots: slot k of n sits at the midpoint of the k-th of n
// equal subdivisions of the window.
int slot_minute(const DailyWindow& window, int per_day, int slot);

std::vector<DecisionPoint> build_schedule(const TrialConfig& config);

// Total over all participants; throws ConfigError for unknown ids.
std::int64_t count_decision_points(const TrialConfig& config, const std::string& component_id);
std::int64_t per_participant_decision_points(const TrialConfig& config, const std::string& component_id);
// Count over an explicit participant subset (a filtered view).
std::int64_t count_decision_points(const TrialConfig& config, const std::string& component_id,
                                   std::span<const int> participants);

enum class LocationCategory { kHome, kWork, kOther, kUnknown };
enum class WeatherTag { kClear, kCloudy, kRain, kSnow, kUnknown };
enum class Connection { kOnline, kOffline, kCaptivePortal };

std::string to_string(LocationCategory c);
std::string to_string(WeatherTag w);
std::string to_string(Connection c);
LocationCategory location_from_string(const std::string& s);
WeatherTag weather_from_string(const std::string& s);
Connection connection_from_string(const std::string& s);

struct ContextSnapshot {
  UtcSeconds captured_at = 0;
  LocationCategory location = LocationCategory::kUnknown;
  WeatherTag weather = WeatherTag::kUnknown;
  bool recent_activity = false;  // walking within the configured lookback
  bool driving = false;
  Connection connection = Connection::kOffline;

  std::int64_t staleness_seconds(UtcSeconds now) const { return now - captured_at; }
};

struct DailyObservation {
  int participant_id = 0;
  int day_index = 0;
  std::string measure_id;
  double value = 0.0;
  UtcSeconds recorded_at = 0;
};

}  // namespace mrt
