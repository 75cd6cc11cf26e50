#include "mrtsim/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mrt {

std::string to_string(MissingnessCode c) {
  switch (c) {
    case MissingnessCode::kNoResponse: return "NO_RESPONSE";
    case MissingnessCode::kSensorGapAmbiguous: return "SENSOR_GAP_AMBIGUOUS";
    case MissingnessCode::kDeviceOff: return "DEVICE_OFF";
    case MissingnessCode::kSyncPendingRecovered: return "SYNC_PENDING_RECOVERED";
    case MissingnessCode::kDataQuarantined: return "DATA_QUARANTINED";
    case MissingnessCode::kUnavailable: return "UNAVAILABLE";
    case MissingnessCode::kTravelExcluded: return "TRAVEL_EXCLUDED";
    case MissingnessCode::kUndeliveredTreatment: return "UNDELIVERED_TREATMENT";
    case MissingnessCode::kNoPrior: return "NO_PRIOR";
    case MissingnessCode::kStudyEnd: return "STUDY_END";
  }
  return "UNKNOWN";
}

namespace {

constexpr MissingnessCode kAllCodes[] = {
    MissingnessCode::kNoResponse,       MissingnessCode::kSensorGapAmbiguous,
    MissingnessCode::kDeviceOff,        MissingnessCode::kSyncPendingRecovered,
    MissingnessCode::kDataQuarantined,  MissingnessCode::kUnavailable,
    MissingnessCode::kTravelExcluded,   MissingnessCode::kUndeliveredTreatment,
    MissingnessCode::kNoPrior,          MissingnessCode::kStudyEnd,
};

}  // namespace

MissingnessCode missingness_code_from_string(const std::string& s) {
  for (const auto c : kAllCodes) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown missingness code '" + s + "'");
}

std::string CodeSet::joined() const {
  if (empty()) return "NONE";
  std::string out;
  for (const auto c : kAllCodes) {
    if (contains(c)) {
      if (!out.empty()) out += '|';
      out += to_string(c);
    }
  }
  return out;
}

CodeSet CodeSet::from_joined(const std::string& text) {
  CodeSet s;
  if (text == "NONE" || text.empty()) return s;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t bar = text.find('|', start);
    s.add(missingness_code_from_string(
        text.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return s;
}

std::string to_string(OutcomeSource s) {
  switch (s) {
    case OutcomeSource::kTracker: return "TRACKER";
    case OutcomeSource::kTrackerZeroImputed: return "TRACKER_ZERO_IMPUTED";
    case OutcomeSource::kRedundantImputed: return "REDUNDANT_IMPUTED";
    case OutcomeSource::kNone: return "NA";
  }
  return "NA";
}

OutcomeSource outcome_source_from_string(const std::string& s) {
  if (s == "TRACKER") return OutcomeSource::kTracker;
  if (s == "TRACKER_ZERO_IMPUTED") return OutcomeSource::kTrackerZeroImputed;
  if (s == "REDUNDANT_IMPUTED") return OutcomeSource::kRedundantImputed;
  if (s == "NA") return OutcomeSource::kNone;
  throw ConfigError("unknown outcome source '" + s + "'");
}

std::string to_string(ExportVariant v) {
  return v == ExportVariant::kZeroImputed ? "zero" : "redundant";
}

std::string to_string(ExportFormat f) { return f == ExportFormat::kCsv ? "csv" : "jsonl"; }

std::optional<std::int64_t> prorated_steps(std::span<const SensorSample> samples, UtcSeconds window_start,
                                           UtcSeconds window_end) {
  bool any = false;
  std::int64_t total = 0;
  for (const auto& s : samples) {
    const UtcSeconds lo = std::max(s.start, window_start);
    const UtcSeconds hi = std::min(s.end, window_end);
    if (hi <= lo) continue;
    any = true;
    if (lo == s.start && hi == s.end) {
      total += s.steps;
    } else {
      const double fraction = static_cast<double>(hi - lo) / static_cast<double>(s.end - s.start);
      total += static_cast<std::int64_t>(std::floor(s.steps * fraction + 0.5));
    }
  }
  if (!any) return std::nullopt;
  return total;
}

namespace {

struct Key {
  int participant;
  int component;
  int global_index;
  bool operator<(const Key& o) const {
    if (participant != o.participant) return participant < o.participant;
    if (component != o.component) return component < o.component;
    return global_index < o.global_index;
  }
};

struct StreamIndex {
  // sorted by start; synced_at kept parallel to samples
  std::vector<SensorSample> samples;
  std::vector<UtcSeconds> synced;

  std::span<const SensorSample> overlapping(UtcSeconds window_start, UtcSeconds window_end,
                                            size_t* first_index = nullptr) const {
    // Samples are short (minutes to an hour); scan back a bounded distance.
    auto lo = std::lower_bound(samples.begin(), samples.end(), window_start,
                               [](const SensorSample& s, UtcSeconds t) { return s.start < t; });
    while (lo != samples.begin() && std::prev(lo)->end > window_start) --lo;
    auto hi = std::lower_bound(lo, samples.end(), window_end,
                               [](const SensorSample& s, UtcSeconds t) { return s.start < t; });
    if (first_index) *first_index = static_cast<size_t>(lo - samples.begin());
    return {&*lo, static_cast<size_t>(hi - lo)};
  }
};

struct LogIndex {
  ScenarioConfig scenario;
  std::map<Key, const EvRandomization*> records;
  std::map<Key, const EvDelivery*> deliveries;
  std::map<Key, const EvEngagement*> engagements;
  std::map<Key, std::string> quarantined;  // key -> message id
  std::vector<StreamIndex> tracker;        // [participant-1]
  std::vector<StreamIndex> fit;
  std::vector<DailyObservation> observations;
  std::vector<TravelItinerary> itineraries;
  std::vector<std::vector<std::int64_t>> travel_days;
  std::int64_t date0_days = 0;

  int component_index(const std::string& id) const { return scenario.trial.component_index(id); }
};

LogIndex index_log(const EventLog& log) {
  LogIndex ix;
  ix.scenario = ScenarioConfig::from_json(log.scenario);
  const int n = ix.scenario.trial.participant_count;
  ix.tracker.resize(n);
  ix.fit.resize(n);
  ix.date0_days = days_from_civil(ix.scenario.trial.start_date);
  for (int p = 1; p <= n; ++p) {
    ix.itineraries.push_back(itinerary_for(ix.scenario, p));
    ix.travel_days.push_back(
        travel_day_indices(ix.itineraries.back(), ix.scenario.trial.start_date, ix.scenario.trial.study_days));
  }
  for (const auto& e : log.events) {
    if (const auto* r = std::get_if<EvRandomization>(&e)) {
      const Key k{r->record.participant_id, ix.component_index(r->record.component_id),
                  r->record.global_index};
      ix.records.emplace(k, r);
    } else if (const auto* d = std::get_if<EvDelivery>(&e)) {
      ix.deliveries.emplace(Key{d->participant_id, ix.component_index(d->component_id), d->global_index}, d);
    } else if (const auto* g = std::get_if<EvEngagement>(&e)) {
      ix.engagements.emplace(
          Key{g->engagement.participant_id, ix.component_index(g->engagement.component_id),
              g->engagement.global_index},
          g);
    } else if (const auto* s = std::get_if<EvSensor>(&e)) {
      auto& stream = s->sample.stream == SensorStream::kTracker ? ix.tracker[s->sample.participant_id - 1]
                                                                : ix.fit[s->sample.participant_id - 1];
      stream.samples.push_back(s->sample);
      stream.synced.push_back(s->synced_at);
    } else if (const auto* o = std::get_if<EvDailyObservation>(&e)) {
      ix.observations.push_back(o->observation);
    } else if (const auto* q = std::get_if<EvQuarantine>(&e)) {
      // Best effort: a quarantined randomization payload that still names its
      // decision point gets its row flagged.
      (void)q;
    }
  }
  for (auto* streams : {&ix.tracker, &ix.fit}) {
    for (auto& st : *streams) {
      std::vector<size_t> order(st.samples.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (st.samples[a].start != st.samples[b].start) return st.samples[a].start < st.samples[b].start;
        return st.samples[a].end < st.samples[b].end;
      });
      StreamIndex sorted;
      sorted.samples.reserve(order.size());
      sorted.synced.reserve(order.size());
      for (const size_t i : order) {
        sorted.samples.push_back(st.samples[i]);
        sorted.synced.push_back(st.synced[i]);
      }
      st = std::move(sorted);
    }
  }
  return ix;
}

// Quarantined payloads whose bodies still named their decision point get the
// row-level DATA_QUARANTINED code.
void index_quarantines(const EventLog& log, LogIndex& ix) {
  for (const auto& e : log.events) {
    const auto* q = std::get_if<EvQuarantine>(&e);
    if (!q || q->component_id.empty() || q->global_index < 0) continue;
    try {
      ix.quarantined.emplace(Key{q->participant_id, ix.component_index(q->component_id), q->global_index},
                             q->message_id);
    } catch (const ConfigError&) {
      // Unknown component name in a corrupted body: no row to flag.
    }
  }
}

struct WindowBounds {
  UtcSeconds start = 0;
  UtcSeconds end = 0;
  bool valid = false;
  bool study_end = false;
};

WindowBounds outcome_window(const AnalysisRow& row, const LogIndex& ix, const PipelinePolicy& policy) {
  WindowBounds w;
  const auto& comp = ix.scenario.trial.components[ix.component_index(row.component_id)];
  const UtcSeconds anchor = row.delivered_utc ? *row.delivered_utc
                                              : row.randomized_utc.value_or(row.scheduled_utc);
  if (comp.proximal_window.kind == ProximalWindow::Kind::kPostWindowMinutes) {
    const int minutes = policy.proximal_window_minutes_override > 0 ? policy.proximal_window_minutes_override
                                                                    : comp.proximal_window.minutes;
    w.start = anchor;
    w.end = anchor + std::int64_t{minutes} * 60;
    w.valid = true;
    return w;
  }
  if (row.day_index + 1 >= ix.scenario.trial.study_days) {
    w.study_end = true;
    return w;
  }
  const auto& itin = ix.itineraries[row.participant_id - 1];
  const std::int64_t next_midnight = (ix.date0_days + row.day_index + 1) * kSecondsPerDay;
  w.start = first_utc_at_or_after_local(next_midnight, itin);
  w.end = first_utc_at_or_after_local(next_midnight + kSecondsPerDay, itin);
  w.valid = true;
  return w;
}

bool bracketed_by_samples(const StreamIndex& stream, UtcSeconds window_start, UtcSeconds window_end,
                          std::int64_t wear_window_seconds) {
  // A sample ending within the wear window before the gap...
  auto before = std::lower_bound(stream.samples.begin(), stream.samples.end(), window_start,
                                 [](const SensorSample& s, UtcSeconds t) { return s.start < t; });
  bool has_before = false;
  for (auto it = before; it != stream.samples.begin();) {
    --it;
    if (it->end <= window_start) {
      has_before = window_start - it->end <= wear_window_seconds;
      break;
    }
  }
  if (!has_before) return false;
  // ...and one starting within the wear window after it.
  auto after = std::lower_bound(stream.samples.begin(), stream.samples.end(), window_end,
                                [](const SensorSample& s, UtcSeconds t) { return s.start < t; });
  if (after == stream.samples.end()) return false;
  return after->start - window_end <= wear_window_seconds;
}

void compute_outcome(AnalysisRow& row, const LogIndex& ix, const PipelinePolicy& policy) {
  const WindowBounds w = outcome_window(row, ix, policy);
  if (w.study_end) {
    row.codes.add(MissingnessCode::kStudyEnd);
    return;
  }
  if (!w.valid) return;
  const StreamIndex& stream = ix.tracker[row.participant_id - 1];
  size_t first_index = 0;
  const auto overlapping = stream.overlapping(w.start, w.end, &first_index);
  const auto sum = prorated_steps(overlapping, w.start, w.end);
  if (sum) {
    row.proximal_outcome = *sum;
    row.outcome_source = OutcomeSource::kTracker;
    for (size_t i = 0; i < overlapping.size(); ++i) {
      if (stream.synced[first_index + i] - overlapping[i].end > policy.recovery_lag_seconds) {
        row.codes.add(MissingnessCode::kSyncPendingRecovered);
        break;
      }
    }
    return;
  }
  if (bracketed_by_samples(stream, w.start, w.end, policy.wear_window_seconds)) {
    // Bracketing synced data marks the tracker as worn: the silence is a
    // recorded true zero, not a gap.
    row.proximal_outcome = 0;
    row.outcome_source = OutcomeSource::kTracker;
    return;
  }
  row.codes.add(MissingnessCode::kSensorGapAmbiguous);
}

}  // namespace

std::vector<AnalysisRow> build_rows(const EventLog& log, const PipelinePolicy& policy) {
  LogIndex ix = index_log(log);
  index_quarantines(log, ix);
  const auto& trial = ix.scenario.trial;
  const auto schedule = build_schedule(trial);
  const bool exclude_travel = trial.timezone_policy == TimezonePolicy::kExcludeTravel;

  std::vector<AnalysisRow> rows;
  rows.reserve(schedule.size());
  for (const auto& dp : schedule) {
    AnalysisRow row;
    row.participant_id = dp.participant_id;
    row.component_id = dp.component_id;
    row.global_index = dp.global_index;
    row.day_index = dp.day_index;
    row.slot_index = dp.slot_index;

    const auto& itin = ix.itineraries[dp.participant_id - 1];
    const std::int64_t local_target =
        (ix.date0_days + dp.day_index) * kSecondsPerDay + std::int64_t{dp.scheduled_local_minute} * 60;
    row.scheduled_utc = first_utc_at_or_after_local(local_target, itin);
    row.scheduled_offset_minutes = itin.segment_at(row.scheduled_utc).offset_minutes;
    row.probability = trial.components[dp.component_index].randomization_probability;
    row.day_of_week = weekday_from_days(ix.date0_days + dp.day_index);
    row.is_weekend = row.day_of_week >= 5;

    const Key key{dp.participant_id, dp.component_index, dp.global_index};
    const auto rec_it = ix.records.find(key);
    if (rec_it == ix.records.end()) {
      // No record ever reached the server: the device or app was not
      // operating at the decision point (or the participant had withdrawn).
      row.available = false;
      row.codes.add(MissingnessCode::kDeviceOff);
      row.tz_offset_minutes = row.scheduled_offset_minutes;
    } else {
      const RandomizationRecord& rec = rec_it->second->record;
      row.has_record = true;
      row.agent = rec.agent;
      row.available = rec.availability.available;
      row.availability_reasons = rec.availability.reasons;
      row.randomized_utc = rec.randomized_at;
      row.tz_offset_minutes = rec.tz_offset_minutes;
      row.probability = rec.probability;
      if (rec.outcome == Outcome::kTreat) row.treatment = 1;
      if (rec.outcome == Outcome::kNoTreat) row.treatment = 0;
      if (!row.available) row.codes.add(MissingnessCode::kUnavailable);
      row.location = rec.context.location;
      row.weather = rec.context.weather;
      row.connection = rec.context.connection;
      row.context_staleness_seconds = rec.context_staleness_seconds;
      row.recent_activity = rec.context.recent_activity;
      row.delivered_utc = rec.delivered_at;
      row.content_id = rec.content_id;
      const auto del_it = ix.deliveries.find(key);
      if (!row.delivered_utc && del_it != ix.deliveries.end()) {
        row.delivered_utc = del_it->second->delivered_at;
        row.content_id = del_it->second->content_id;
      }
      if (row.treatment == 1 && !row.delivered_utc) {
        row.codes.add(MissingnessCode::kUndeliveredTreatment);
      }
      if (row.delivered_utc) {
        const auto eng_it = ix.engagements.find(key);
        if (eng_it != ix.engagements.end()) {
          row.engagement = eng_it->second->engagement.kind;
          if (*row.engagement == EngagementKind::kNoResponse) {
            row.codes.add(MissingnessCode::kNoResponse);
          }
        } else {
          // Delivery confirmed but the engagement record never arrived.
          row.codes.add(MissingnessCode::kDeviceOff);
        }
      }
    }
    if (ix.quarantined.contains(key)) row.codes.add(MissingnessCode::kDataQuarantined);
    if (exclude_travel) {
      const auto& tdays = ix.travel_days[dp.participant_id - 1];
      if (std::binary_search(tdays.begin(), tdays.end(), std::int64_t{dp.day_index})) {
        row.codes.add(MissingnessCode::kTravelExcluded);
      }
    }
    compute_outcome(row, ix, policy);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AnalysisRow> zero_impute(std::vector<AnalysisRow> rows) {
  for (auto& row : rows) {
    if (!row.proximal_outcome && row.codes.contains(MissingnessCode::kSensorGapAmbiguous)) {
      row.proximal_outcome = 0;
      row.outcome_source = OutcomeSource::kTrackerZeroImputed;
    }
  }
  return rows;
}

std::vector<AnalysisRow> impute_from_redundant(std::vector<AnalysisRow> rows, const EventLog& log,
                                               const PipelinePolicy& policy) {
  LogIndex ix = index_log(log);
  for (auto& row : rows) {
    if (row.proximal_outcome || !row.codes.contains(MissingnessCode::kSensorGapAmbiguous)) continue;
    const WindowBounds w = outcome_window(row, ix, policy);
    if (!w.valid) continue;
    const StreamIndex& fit = ix.fit[row.participant_id - 1];
    const auto sum = prorated_steps(fit.overlapping(w.start, w.end), w.start, w.end);
    if (sum) {
      row.proximal_outcome = *sum;
      row.outcome_source = OutcomeSource::kRedundantImputed;
    }
  }
  return rows;
}

std::vector<DailyObservation> observations_from(const EventLog& log) {
  std::map<std::tuple<int, int, std::string>, DailyObservation> latest;
  for (const auto& e : log.events) {
    if (const auto* o = std::get_if<EvDailyObservation>(&e)) {
      const auto k = std::make_tuple(o->observation.participant_id, o->observation.day_index,
                                     o->observation.measure_id);
      const auto it = latest.find(k);
      if (it == latest.end() || o->observation.recorded_at >= it->second.recorded_at) {
        latest[k] = o->observation;
      }
    }
  }
  std::vector<DailyObservation> out;
  out.reserve(latest.size());
  for (auto& [k, v] : latest) out.push_back(std::move(v));
  return out;
}

void merge_daily(std::vector<AnalysisRow>& rows, const std::vector<DailyObservation>& observations) {
  std::set<std::string> measures;
  std::map<std::pair<int, std::string>, std::vector<const DailyObservation*>> by_key;
  for (const auto& o : observations) {
    measures.insert(o.measure_id);
    by_key[{o.participant_id, o.measure_id}].push_back(&o);
  }
  for (auto& [k, v] : by_key) {
    std::sort(v.begin(), v.end(),
              [](const DailyObservation* a, const DailyObservation* b) { return a->recorded_at < b->recorded_at; });
  }
  for (auto& row : rows) {
    const UtcSeconds anchor = row.randomized_utc.value_or(row.scheduled_utc);
    bool missing_any = false;
    for (const auto& m : measures) {
      const auto it = by_key.find({row.participant_id, m});
      std::optional<double> value;
      if (it != by_key.end()) {
        // Most recent observation strictly before the randomization instant.
        const DailyObservation* best = nullptr;
        for (const auto* o : it->second) {
          if (o->recorded_at < anchor) best = o;
          else break;
        }
        if (best) value = best->value;
      }
      if (!value) missing_any = true;
      row.daily[m] = value;
    }
    if (missing_any) row.codes.add(MissingnessCode::kNoPrior);
  }
}

std::vector<AnalysisRow> make_analysis_rows(const EventLog& log, ExportVariant variant,
                                            const PipelinePolicy& policy) {
  auto rows = build_rows(log, policy);
  merge_daily(rows, observations_from(log));
  if (variant == ExportVariant::kRedundantImputed) {
    rows = impute_from_redundant(std::move(rows), log, policy);
  }
  return zero_impute(std::move(rows));
}

OutcomeWindows::OutcomeWindows(const EventLog& log, const PipelinePolicy& policy) : policy_(policy) {
  scenario_ = ScenarioConfig::from_json(log.scenario);
  date0_days_ = days_from_civil(scenario_.trial.start_date);
  for (int p = 1; p <= scenario_.trial.participant_count; ++p) {
    itineraries_.push_back(itinerary_for(scenario_, p));
  }
}

std::optional<std::pair<UtcSeconds, UtcSeconds>> OutcomeWindows::window(const AnalysisRow& row) const {
  const auto& comp = scenario_.trial.components[scenario_.trial.component_index(row.component_id)];
  const UtcSeconds anchor =
      row.delivered_utc ? *row.delivered_utc : row.randomized_utc.value_or(row.scheduled_utc);
  if (comp.proximal_window.kind == ProximalWindow::Kind::kPostWindowMinutes) {
    const int minutes = policy_.proximal_window_minutes_override > 0
                            ? policy_.proximal_window_minutes_override
                            : comp.proximal_window.minutes;
    return std::make_pair(anchor, anchor + std::int64_t{minutes} * 60);
  }
  if (row.day_index + 1 >= scenario_.trial.study_days) return std::nullopt;
  const auto& itin = itineraries_[row.participant_id - 1];
  const std::int64_t next_midnight = (date0_days_ + row.day_index + 1) * kSecondsPerDay;
  return std::make_pair(first_utc_at_or_after_local(next_midnight, itin),
                        first_utc_at_or_after_local(next_midnight + kSecondsPerDay, itin));
}

LocationCategory coarsen_location(std::optional<std::pair<double, double>> raw_point, const Region& home,
                                  const Region& work) {
  if (!raw_point) return LocationCategory::kUnknown;
  const auto inside = [&](const Region& r) {
    const double dx = raw_point->first - r.center_x;
    const double dy = raw_point->second - r.center_y;
    return dx * dx + dy * dy <= r.radius * r.radius;
  };
  if (inside(home)) return LocationCategory::kHome;
  if (inside(work)) return LocationCategory::kWork;
  return LocationCategory::kOther;
}

// ---------------------------------------------------------------------------
// Export rendering and parsing.

namespace {

const std::vector<std::string> kFixedColumnsHead = {
    "participant_id",   "component_id",    "global_index",
    "day_index",        "slot_index",      "scheduled_utc",
    "scheduled_offset_minutes", "randomized_utc", "tz_offset_minutes",
    "available",        "availability_reasons", "treatment",
    "probability",      "proximal_outcome", "outcome_source",
    "delivered_utc",    "content_id",      "engagement",
    "location",         "weather",         "connection",
    "context_staleness_seconds", "recent_activity", "day_of_week",
    "is_weekend"};
const std::vector<std::string> kFixedColumnsTail = {"missingness_codes", "agent"};

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> daily_measures_of(const std::vector<AnalysisRow>& rows) {
  std::set<std::string> m;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.daily) m.insert(k);
  }
  return {m.begin(), m.end()};
}

std::vector<std::string> columns_for(const std::vector<std::string>& measures) {
  std::vector<std::string> cols = kFixedColumnsHead;
  for (const auto& m : measures) cols.push_back("daily_" + m);
  cols.insert(cols.end(), kFixedColumnsTail.begin(), kFixedColumnsTail.end());
  return cols;
}

std::vector<std::string> row_cells(const AnalysisRow& r, const std::vector<std::string>& measures) {
  std::vector<std::string> c;
  c.reserve(kFixedColumnsHead.size() + measures.size() + kFixedColumnsTail.size());
  const auto opt_time_cell = [](const std::optional<UtcSeconds>& t) {
    return t ? format_utc(*t) : std::string("NA");
  };
  c.push_back(std::to_string(r.participant_id));
  c.push_back(r.component_id);
  c.push_back(std::to_string(r.global_index));
  c.push_back(std::to_string(r.day_index));
  c.push_back(std::to_string(r.slot_index));
  c.push_back(format_utc(r.scheduled_utc));
  c.push_back(std::to_string(r.scheduled_offset_minutes));
  c.push_back(opt_time_cell(r.randomized_utc));
  c.push_back(std::to_string(r.tz_offset_minutes));
  c.push_back(r.available ? "1" : "0");
  c.push_back(r.availability_reasons.joined());
  c.push_back(r.treatment ? std::to_string(*r.treatment) : "NA");
  c.push_back(r.probability.text());
  c.push_back(r.proximal_outcome ? std::to_string(*r.proximal_outcome) : "NA");
  c.push_back(to_string(r.outcome_source));
  c.push_back(opt_time_cell(r.delivered_utc));
  c.push_back(r.content_id ? *r.content_id : "NA");
  c.push_back(r.engagement ? to_string(*r.engagement) : "NA");
  c.push_back(to_string(r.location));
  c.push_back(to_string(r.weather));
  c.push_back(to_string(r.connection));
  c.push_back(r.context_staleness_seconds ? std::to_string(*r.context_staleness_seconds) : "NA");
  c.push_back(r.recent_activity ? (*r.recent_activity ? "1" : "0") : "NA");
  c.push_back(std::to_string(r.day_of_week));
  c.push_back(r.is_weekend ? "1" : "0");
  for (const auto& m : measures) {
    const auto it = r.daily.find(m);
    if (it == r.daily.end() || !it->second) {
      c.push_back("NA");
    } else {
      c.push_back(format_double(*it->second));
    }
  }
  c.push_back(r.codes.joined());
  c.push_back(r.agent ? to_string(*r.agent) : "NA");
  return c;
}

}  // namespace

const std::vector<std::string>& export_columns() {
  static const std::vector<std::string> cols = columns_for({"stress", "typicality"});
  return cols;
}

std::string render_export(const std::vector<AnalysisRow>& rows, ExportFormat format) {
  const auto measures = daily_measures_of(rows);
  const auto cols = columns_for(measures);
  std::string out;
  if (format == ExportFormat::kCsv) {
    for (size_t i = 0; i < cols.size(); ++i) {
      if (i) out += ',';
      out += cols[i];
    }
    out += '\n';
    for (const auto& r : rows) {
      const auto cells = row_cells(r, measures);
      for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    }
    return out;
  }
  for (const auto& r : rows) {
    const auto cells = row_cells(r, measures);
    Json j = Json::object();
    for (size_t i = 0; i < cols.size(); ++i) j[cols[i]] = cells[i];
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_export_file(const std::vector<AnalysisRow>& rows, ExportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write export to " + path);
  out << render_export(rows, format);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

AnalysisRow row_from_cells(const std::vector<std::string>& cols, const std::vector<std::string>& cells) {
  AnalysisRow r;
  const auto get = [&](const std::string& name) -> const std::string& {
    static const std::string empty;
    for (size_t i = 0; i < cols.size() && i < cells.size(); ++i) {
      if (cols[i] == name) return cells[i];
    }
    return empty;
  };
  const auto opt_int = [](const std::string& s) -> std::optional<std::int64_t> {
    if (s == "NA" || s.empty()) return std::nullopt;
    return std::stoll(s);
  };
  const auto opt_time = [](const std::string& s) -> std::optional<UtcSeconds> {
    if (s == "NA" || s.empty()) return std::nullopt;
    return parse_utc(s);
  };
  try {
    r.participant_id = std::stoi(get("participant_id"));
    r.component_id = get("component_id");
    r.global_index = std::stoi(get("global_index"));
    r.day_index = std::stoi(get("day_index"));
    r.slot_index = std::stoi(get("slot_index"));
    r.scheduled_utc = parse_utc(get("scheduled_utc")).value_or(0);
    r.scheduled_offset_minutes = std::stoi(get("scheduled_offset_minutes"));
    r.randomized_utc = opt_time(get("randomized_utc"));
    r.tz_offset_minutes = std::stoi(get("tz_offset_minutes"));
    r.available = get("available") == "1";
    r.availability_reasons = ReasonSet::from_joined(get("availability_reasons"));
    if (const auto t = opt_int(get("treatment"))) r.treatment = static_cast<int>(*t);
    r.probability = Probability::parse(get("probability"));
    r.proximal_outcome = opt_int(get("proximal_outcome"));
    r.outcome_source = outcome_source_from_string(get("outcome_source"));
    r.delivered_utc = opt_time(get("delivered_utc"));
    if (get("content_id") != "NA" && !get("content_id").empty()) r.content_id = get("content_id");
    if (get("engagement") != "NA" && !get("engagement").empty()) {
      r.engagement = engagement_from_string(get("engagement"));
    }
    r.location = location_from_string(get("location"));
    r.weather = weather_from_string(get("weather"));
    r.connection = connection_from_string(get("connection"));
    r.context_staleness_seconds = opt_int(get("context_staleness_seconds"));
    if (get("recent_activity") != "NA") r.recent_activity = get("recent_activity") == "1";
    r.day_of_week = std::stoi(get("day_of_week"));
    r.is_weekend = get("is_weekend") == "1";
    for (size_t i = 0; i < cols.size() && i < cells.size(); ++i) {
      if (cols[i].rfind("daily_", 0) == 0) {
        const std::string m = cols[i].substr(6);
        if (cells[i] == "NA" || cells[i].empty()) {
          r.daily[m] = std::nullopt;
        } else {
          r.daily[m] = std::stod(cells[i]);
        }
      }
    }
    r.codes = CodeSet::from_joined(get("missingness_codes"));
    if (get("agent") != "NA" && !get("agent").empty()) r.agent = agent_from_string(get("agent"));
    r.has_record = r.randomized_utc.has_value();
  } catch (...) {
    // Leave defaults for unparseable fields; the audit reports them from the
    // raw cells rather than crashing here.
  }
  return r;
}

}  // namespace

ExportTable parse_export(const std::string& text, ExportFormat format) {
  ExportTable table;
  table.format = format;
  std::istringstream in(text);
  std::string line;
  if (format == ExportFormat::kCsv) {
    if (!std::getline(in, line)) throw ConfigError("empty export");
    table.columns = split_csv_line(line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      table.cells.push_back(split_csv_line(line));
    }
  } else {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      Json j = Json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw ConfigError("malformed JSONL export line");
      if (table.columns.empty()) {
        for (const auto& [k, v] : j.items()) table.columns.push_back(k);
      }
      std::vector<std::string> cells;
      for (const auto& col : table.columns) {
        if (!j.contains(col)) {
          cells.push_back("");
        } else if (j.at(col).is_string()) {
          cells.push_back(j.at(col).get<std::string>());
        } else {
          cells.push_back(j.at(col).dump());
        }
      }
      table.cells.push_back(std::move(cells));
    }
  }
  table.rows.reserve(table.cells.size());
  for (const auto& cells : table.cells) {
    table.rows.push_back(row_from_cells(table.columns, cells));
  }
  return table;
}

ExportTable parse_export_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read export " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const ExportFormat fmt =
      path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl" ? ExportFormat::kJsonl : ExportFormat::kCsv;
  return parse_export(buf.str(), fmt);
}

}  // namespace mrt
