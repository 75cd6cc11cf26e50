#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mrt {

// Seconds since the Unix epoch, always UTC.
using UtcSeconds = std::int64_t;

constexpr std::int64_t kSecondsPerMinute = 60;
constexpr std::int64_t kSecondsPerDay = 86400;
constexpr int kMinutesPerDay = 1440;
constexpr int kMaxOffsetMinutes = 14 * 60;

struct CivilDate {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  bool operator==(const CivilDate&) const = default;
};

// Days since 1970-01-01 for a proleptic Gregorian date (negative before).
std::int64_t days_from_civil(const CivilDate& d);
CivilDate civil_from_days(std::int64_t days);

// 0 = Monday ... 6 = Sunday.
int weekday_from_days(std::int64_t days);

// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_utc(UtcSeconds t);
// Accepts the format above (also "+00:00" suffix). Returns nullopt on any
// deviation, including bare local times without a zone designator.
std::optional<UtcSeconds> parse_utc(const std::string& text);

// "YYYY-MM-DD"
std::optional<CivilDate> parse_date(const std::string& text);
std::string format_date(const CivilDate& d);

// "HH:MM" -> minutes since midnight.
std::optional<int> parse_minute_of_day(const std::string& text);
std::string format_minute_of_day(int minute);

// A timestamp as stored everywhere in this system: true UTC plus the offset
// the participant's clock claimed at that instant.
struct Stamp {
  UtcSeconds utc = 0;
  int tz_offset_minutes = 0;
  std::string tz_name;

  std::int64_t local_seconds() const { return utc + std::int64_t{tz_offset_minutes} * 60; }
  bool operator==(const Stamp&) const = default;
};

struct TzSegment {
  UtcSeconds effective_from = 0;
  int offset_minutes = 0;
  std::string name;
};

// Piecewise-constant UTC offset over the study. Segments are half-open:
// segment i applies to [effective_from_i, effective_from_{i+1}).
class TravelItinerary {
 public:
  TravelItinerary() = default;
  explicit TravelItinerary(std::vector<TzSegment> segments);

  static TravelItinerary fixed(int offset_minutes, std::string name);

  const TzSegment& segment_at(UtcSeconds t) const;
  void append(TzSegment seg);  // effective_from must be past the last segment

  const std::vector<TzSegment>& segments() const { return segments_; }
  bool single_zone() const { return segments_.size() == 1; }

 private:
  std::vector<TzSegment> segments_;
};

Stamp stamp(UtcSeconds now, const TravelItinerary& itinerary);

// Local wall-clock seconds for an instant under an itinerary. The "local
// seconds" scale is the local civil datetime mapped onto the epoch scale.
std::int64_t local_seconds_at(UtcSeconds t, const TravelItinerary& itinerary);

// Earliest UTC instant at which the local clock reads at least
// `local_target` seconds. This is the firing rule for scheduled events:
// slots in a spring-forward gap roll forward to the next valid minute,
// ambiguous fall-back slots fire at the first occurrence, and slots made
// overdue by an eastward jump fire immediately at the transition.
UtcSeconds first_utc_at_or_after_local(std::int64_t local_target,
                                       const TravelItinerary& itinerary);

// Local civil day index relative to a study start date (day 0 starts at
// local midnight of start_date).
std::int64_t local_day_index(UtcSeconds t, const TravelItinerary& itinerary,
                             const CivilDate& start_date);

// Day indices whose local calendar day contains an offset transition.
std::vector<std::int64_t> travel_day_indices(const TravelItinerary& itinerary,
                                             const CivilDate& start_date,
                                             int study_days);

}  // namespace mrt
