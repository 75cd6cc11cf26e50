#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrtsim/events.hpp"
#include "mrtsim/scenario.hpp"

namespace mrt {

enum class MissingnessCode : std::uint16_t {
  kNoResponse = 1 << 0,
  kSensorGapAmbiguous = 1 << 1,
  kDeviceOff = 1 << 2,
  kSyncPendingRecovered = 1 << 3,
  kDataQuarantined = 1 << 4,
  kUnavailable = 1 << 5,
  kTravelExcluded = 1 << 6,
  kUndeliveredTreatment = 1 << 7,
  kNoPrior = 1 << 8,
  kStudyEnd = 1 << 9,
};

std::string to_string(MissingnessCode c);
MissingnessCode missingness_code_from_string(const std::string& s);

class CodeSet {
 public:
  void add(MissingnessCode c) { bits_ |= static_cast<std::uint16_t>(c); }
  void remove(MissingnessCode c) { bits_ &= static_cast<std::uint16_t>(~static_cast<std::uint16_t>(c)); }
  bool contains(MissingnessCode c) const { return bits_ & static_cast<std::uint16_t>(c); }
  bool empty() const { return bits_ == 0; }
  std::string joined() const;  // "|"-separated, "NONE" when empty
  static CodeSet from_joined(const std::string& text);
  bool operator==(const CodeSet&) const = default;

 private:
  std::uint16_t bits_ = 0;
};

enum class OutcomeSource { kTracker, kTrackerZeroImputed, kRedundantImputed, kNone };
std::string to_string(OutcomeSource s);
OutcomeSource outcome_source_from_string(const std::string& s);

// One analysis-ready row per scheduled decision point, always — unavailable,
// travel-excluded and device-off points included, flagged by codes.
struct AnalysisRow {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  int day_index = 0;
  int slot_index = 0;
  UtcSeconds scheduled_utc = 0;       // nominal instant under the true itinerary
  int scheduled_offset_minutes = 0;   // offset in force at that instant
  std::optional<UtcSeconds> randomized_utc;
  int tz_offset_minutes = 0;          // offset the device's clock claimed
  bool available = false;
  ReasonSet availability_reasons;
  std::optional<int> treatment;       // 1 = TREAT, 0 = NO_TREAT; absent iff not randomized
  Probability probability;            // always populated
  std::optional<std::int64_t> proximal_outcome;
  OutcomeSource outcome_source = OutcomeSource::kNone;
  std::optional<UtcSeconds> delivered_utc;
  std::optional<std::string> content_id;
  std::optional<EngagementKind> engagement;
  LocationCategory location = LocationCategory::kUnknown;
  WeatherTag weather = WeatherTag::kUnknown;
  Connection connection = Connection::kOffline;
  std::optional<std::int64_t> context_staleness_seconds;
  std::optional<bool> recent_activity;
  int day_of_week = 0;  // 0 = Monday
  bool is_weekend = false;
  std::map<std::string, std::optional<double>> daily;  // merged daily measures
  CodeSet codes;
  std::optional<Agent> agent;
  bool has_record = false;
};

struct PipelinePolicy {
  int proximal_window_minutes_override = 0;  // 0 = use the component spec
  std::int64_t wear_window_seconds = 4 * 3600;
  std::int64_t recovery_lag_seconds = 3600;  // sync later than this marks recovered data
};

// Prorated step sum over [window_start, window_end): samples overlapping the
// boundary contribute steps * overlap fraction, rounded half-up per sample.
// No overlapping sample at all yields nullopt.
std::optional<std::int64_t> prorated_steps(std::span<const SensorSample> samples, UtcSeconds window_start,
                                           UtcSeconds window_end);

// Assembles raw rows from the event log: tracker-based outcomes with gap
// codes, context, engagement, no imputation, no daily merging.
std::vector<AnalysisRow> build_rows(const EventLog& log, const PipelinePolicy& policy = {});

// Ambiguous gaps become zeros (the primary-analysis convention).
std::vector<AnalysisRow> zero_impute(std::vector<AnalysisRow> rows);

// Gaps with redundant-stream coverage take the PHONE_FIT value; the rest are
// left for zero-imputation downstream.
std::vector<AnalysisRow> impute_from_redundant(std::vector<AnalysisRow> rows, const EventLog& log,
                                               const PipelinePolicy& policy = {});

// Most recent observation strictly before each row's randomization instant;
// same-or-later observations never merge (post-treatment adjustment hazard).
void merge_daily(std::vector<AnalysisRow>& rows, const std::vector<DailyObservation>& observations);

std::vector<DailyObservation> observations_from(const EventLog& log);

enum class ExportVariant { kZeroImputed, kRedundantImputed };
std::string to_string(ExportVariant v);

// Full pipeline: build, merge daily measures, apply the variant's imputation.
std::vector<AnalysisRow> make_analysis_rows(const EventLog& log, ExportVariant variant,
                                            const PipelinePolicy& policy = {});

// Region-membership location coarsening; raw coordinates never leave this
// function's inputs.
struct Region {
  double center_x = 0, center_y = 0, radius = 0;
};
LocationCategory coarsen_location(std::optional<std::pair<double, double>> raw_point, const Region& home,
                                  const Region& work);

// Per-row outcome window bounds, shared between the pipeline and the audit's
// recovery-accounting check. Rows past the study boundary have no window.
class OutcomeWindows {
 public:
  explicit OutcomeWindows(const EventLog& log, const PipelinePolicy& policy = {});
  std::optional<std::pair<UtcSeconds, UtcSeconds>> window(const AnalysisRow& row) const;
  const ScenarioConfig& scenario() const { return scenario_; }

 private:
  ScenarioConfig scenario_;
  PipelinePolicy policy_;
  std::vector<TravelItinerary> itineraries_;
  std::int64_t date0_days_ = 0;
};

enum class ExportFormat { kCsv, kJsonl };
std::string to_string(ExportFormat f);

std::string render_export(const std::vector<AnalysisRow>& rows, ExportFormat format);
void write_export_file(const std::vector<AnalysisRow>& rows, ExportFormat format, const std::string& path);

struct ExportTable {
  ExportFormat format = ExportFormat::kCsv;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;  // raw values, "NA" kept verbatim
  std::vector<AnalysisRow> rows;
};

ExportTable parse_export(const std::string& text, ExportFormat format);
ExportTable parse_export_file(const std::string& path);

const std::vector<std::string>& export_columns();

}  // namespace mrt
