#include "mrtsim/time.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace mrt {

std::int64_t days_from_civil(const CivilDate& d) {
  // Howard Hinnant's algorithm, valid over the proleptic Gregorian calendar.
  std::int64_t y = d.year;
  unsigned m = static_cast<unsigned>(d.month);
  unsigned day = static_cast<unsigned>(d.day);
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned day = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(day)};
}

int weekday_from_days(std::int64_t days) {
  // 1970-01-01 was a Thursday; map so 0 = Monday.
  std::int64_t w = (days + 3) % 7;
  if (w < 0) w += 7;
  return static_cast<int>(w);
}

std::string format_utc(UtcSeconds t) {
  std::int64_t days = t / kSecondsPerDay;
  std::int64_t rem = t % kSecondsPerDay;
  if (rem < 0) {
    rem += kSecondsPerDay;
    --days;
  }
  const CivilDate d = civil_from_days(days);
  const int hh = static_cast<int>(rem / 3600);
  const int mm = static_cast<int>((rem / 60) % 60);
  const int ss = static_cast<int>(rem % 60);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year, d.month, d.day, hh, mm, ss);
  return buf;
}

namespace {

bool all_digits(const std::string& s, size_t from, size_t count) {
  if (from + count > s.size()) return false;
  for (size_t i = from; i < from + count; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

int num(const std::string& s, size_t from, size_t count) {
  int v = 0;
  for (size_t i = from; i < from + count; ++i) v = v * 10 + (s[i] - '0');
  return v;
}

}  // namespace

std::optional<UtcSeconds> parse_utc(const std::string& text) {
  // YYYY-MM-DDTHH:MM:SS followed by "Z" or "+00:00".
  if (text.size() != 20 && text.size() != 25) return std::nullopt;
  if (!all_digits(text, 0, 4) || text[4] != '-' || !all_digits(text, 5, 2) || text[7] != '-' ||
      !all_digits(text, 8, 2) || text[10] != 'T' || !all_digits(text, 11, 2) || text[13] != ':' ||
      !all_digits(text, 14, 2) || text[16] != ':' || !all_digits(text, 17, 2)) {
    return std::nullopt;
  }
  if (text.size() == 20) {
    if (text[19] != 'Z') return std::nullopt;
  } else {
    if (text.substr(19) != "+00:00") return std::nullopt;
  }
  const CivilDate d{num(text, 0, 4), num(text, 5, 2), num(text, 8, 2)};
  const int hh = num(text, 11, 2), mm = num(text, 14, 2), ss = num(text, 17, 2);
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  if (civil_from_days(days_from_civil(d)) != d) return std::nullopt;
  return days_from_civil(d) * kSecondsPerDay + hh * 3600 + mm * 60 + ss;
}

std::optional<CivilDate> parse_date(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (!all_digits(text, 0, 4) || !all_digits(text, 5, 2) || !all_digits(text, 8, 2)) return std::nullopt;
  CivilDate d{num(text, 0, 4), num(text, 5, 2), num(text, 8, 2)};
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) return std::nullopt;
  if (civil_from_days(days_from_civil(d)) != d) return std::nullopt;
  return d;
}

std::string format_date(const CivilDate& d) {
  char buf[12];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

std::optional<int> parse_minute_of_day(const std::string& text) {
  if (text.size() != 5 || text[2] != ':') return std::nullopt;
  if (!all_digits(text, 0, 2) || !all_digits(text, 3, 2)) return std::nullopt;
  const int hh = num(text, 0, 2), mm = num(text, 3, 2);
  if (hh > 23 || mm > 59) return std::nullopt;
  return hh * 60 + mm;
}

std::string format_minute_of_day(int minute) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", minute / 60, minute % 60);
  return buf;
}

TravelItinerary::TravelItinerary(std::vector<TzSegment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw std::invalid_argument("itinerary needs at least one segment");
  for (size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].offset_minutes < -kMaxOffsetMinutes || segments_[i].offset_minutes > kMaxOffsetMinutes) {
      throw std::invalid_argument("itinerary offset outside +/-14h");
    }
    if (i > 0 && segments_[i].effective_from <= segments_[i - 1].effective_from) {
      throw std::invalid_argument("itinerary segments must be sorted and non-overlapping");
    }
  }
}

TravelItinerary TravelItinerary::fixed(int offset_minutes, std::string name) {
  return TravelItinerary({TzSegment{std::numeric_limits<std::int64_t>::min() / 4, offset_minutes, std::move(name)}});
}

const TzSegment& TravelItinerary::segment_at(UtcSeconds t) const {
  // Last segment whose effective_from <= t; the first segment covers
  // everything before its successor.
  const TzSegment* best = &segments_.front();
  for (const auto& seg : segments_) {
    if (seg.effective_from <= t) best = &seg;
  }
  return *best;
}

void TravelItinerary::append(TzSegment seg) {
  if (!segments_.empty() && seg.effective_from <= segments_.back().effective_from) {
    throw std::invalid_argument("itinerary segments must be appended in order");
  }
  segments_.push_back(std::move(seg));
}

Stamp stamp(UtcSeconds now, const TravelItinerary& itinerary) {
  const TzSegment& seg = itinerary.segment_at(now);
  return Stamp{now, seg.offset_minutes, seg.name};
}

std::int64_t local_seconds_at(UtcSeconds t, const TravelItinerary& itinerary) {
  return t + std::int64_t{itinerary.segment_at(t).offset_minutes} * 60;
}

UtcSeconds first_utc_at_or_after_local(std::int64_t local_target, const TravelItinerary& itinerary) {
  const auto& segs = itinerary.segments();
  UtcSeconds best = std::numeric_limits<std::int64_t>::max();
  for (size_t i = 0; i < segs.size(); ++i) {
    const std::int64_t off = std::int64_t{segs[i].offset_minutes} * 60;
    const UtcSeconds seg_start = segs[i].effective_from;
    const UtcSeconds seg_end =
        (i + 1 < segs.size()) ? segs[i + 1].effective_from : std::numeric_limits<std::int64_t>::max() / 2;
    // In-segment solution: the local clock reads local_target at u.
    const UtcSeconds u = local_target - off;
    if (u >= seg_start && u < seg_end) best = std::min(best, u);
    // Boundary catch-up: the segment opens with the local clock already past
    // the target (eastward jump swallowed the wall time).
    if (i > 0 && seg_start + off >= local_target) {
      best = std::min(best, seg_start);
    }
  }
  return best;
}

std::int64_t local_day_index(UtcSeconds t, const TravelItinerary& itinerary, const CivilDate& start_date) {
  const std::int64_t local = local_seconds_at(t, itinerary);
  std::int64_t days = local / kSecondsPerDay;
  if (local % kSecondsPerDay < 0) --days;
  return days - days_from_civil(start_date);
}

std::vector<std::int64_t> travel_day_indices(const TravelItinerary& itinerary, const CivilDate& start_date,
                                             int study_days) {
  std::vector<std::int64_t> out;
  const auto& segs = itinerary.segments();
  for (size_t i = 1; i < segs.size(); ++i) {
    const UtcSeconds b = segs[i].effective_from;
    const std::int64_t before = local_day_index(b - 1, itinerary, start_date);
    const std::int64_t after = local_day_index(b, itinerary, start_date);
    for (std::int64_t d = std::min(before, after); d <= std::max(before, after); ++d) {
      if (d >= 0 && d < study_days) out.push_back(d);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace mrt
