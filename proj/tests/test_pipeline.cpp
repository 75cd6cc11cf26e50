#include <doctest.h>

#include <map>
#include <set>

#include "mrtsim/pipeline.hpp"
#include "support/helpers.hpp"

using namespace mrt;
using namespace mrt::test;

namespace {

SensorSample tracker_sample(UtcSeconds start, UtcSeconds end, std::int64_t steps, int participant = 1) {
  return SensorSample{SensorStream::kTracker, participant, start, end, steps};
}

// Brute-force oracle: spread each sample's steps uniformly over its seconds
// and accumulate the window second by second.
double per_second_oracle(std::span<const SensorSample> samples, UtcSeconds w0, UtcSeconds w1) {
  double total = 0;
  for (const auto& s : samples) {
    const double rate = static_cast<double>(s.steps) / static_cast<double>(s.end - s.start);
    for (UtcSeconds t = std::max(s.start, w0); t < std::min(s.end, w1); ++t) total += rate;
  }
  return total;
}

}  // namespace

TEST_CASE("proximal window: a sample fully inside contributes exactly") {
  const UtcSeconds t = 1000000;
  const SensorSample samples[] = {tracker_sample(t + 600, t + 660, 100)};
  CHECK(prorated_steps(samples, t, t + 1800) == 100);
}

TEST_CASE("proximal window: boundary overlap prorated by fraction, rounded half-up") {
  const UtcSeconds t = 1000000;
  // Bout-level aggregate [t-10min, t+20min) of 300 steps: two thirds overlap.
  const SensorSample samples[] = {
      SensorSample{SensorStream::kPhoneFit, 1, t - 600, t + 1200, 300}};
  const auto sum = prorated_steps(samples, t, t + 1800);
  REQUIRE(sum.has_value());
  CHECK(*sum == 200);
  // agrees with the per-second oracle up to rounding
  CHECK(std::abs(*sum - per_second_oracle(samples, t, t + 1800)) <= 0.5);

  // half-up rounding: 25 steps over 2 minutes, half a minute overlaps
  const SensorSample quarter[] = {tracker_sample(t - 90, t + 30, 25)};
  // overlap 30 of 120 seconds -> 6.25 -> rounds to 6
  CHECK(prorated_steps(quarter, t, t + 1800) == 6);
  const SensorSample half[] = {tracker_sample(t - 60, t + 60, 25)};
  // overlap 60 of 120 seconds -> 12.5 -> half-up to 13
  CHECK(prorated_steps(half, t, t + 1800) == 13);
}

TEST_CASE("proximal window: no overlapping samples yields no value") {
  const UtcSeconds t = 1000000;
  const SensorSample samples[] = {tracker_sample(t - 7200, t - 7140, 50)};
  CHECK_FALSE(prorated_steps(samples, t, t + 1800).has_value());
  CHECK_FALSE(prorated_steps({}, t, t + 1800).has_value());
}

TEST_CASE("fault-free small run: rows, availability flags, and ledger fidelity") {
  ScenarioConfig sc = small_scenario(2, 3, 101);
  sc.effects.push_back(EffectSpec{"suggestions", 20, 1.0, 1.0, 1.0, std::nullopt});
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  CHECK(rows.size() == 2 * 3 * 4);

  std::set<std::tuple<int, std::string, int>> keys;
  for (const auto& row : rows) {
    keys.insert({row.participant_id, row.component_id, row.global_index});
    CHECK(!row.probability.text().empty());
    CHECK(row.has_record);
    CHECK((row.treatment.has_value() == row.available));
    if (!row.available) CHECK(row.codes.contains(MissingnessCode::kUnavailable));
    // fault-free zero-imputed outcomes match the ledger exactly
    if (row.component_id == "suggestions") {
      REQUIRE(row.proximal_outcome.has_value());
      const UtcSeconds anchor = row.delivered_utc.value_or(*row.randomized_utc);
      CHECK(*row.proximal_outcome == r.ledger.true_steps(row.participant_id, anchor, anchor + 1800));
    } else if (row.day_index + 1 < sc.trial.study_days) {
      REQUIRE(row.proximal_outcome.has_value());
      const UtcSeconds d0 = at_local(sc, row.day_index + 1, 0);
      const UtcSeconds d1 = at_local(sc, row.day_index + 2, 0);
      CHECK(*row.proximal_outcome == r.ledger.true_steps(row.participant_id, d0, d1));
    } else {
      CHECK_FALSE(row.proximal_outcome.has_value());
      CHECK(row.codes.contains(MissingnessCode::kStudyEnd));
    }
  }
  CHECK(keys.size() == rows.size());
}

TEST_CASE("row-count invariant holds under faults, with codes populated") {
  ScenarioConfig sc = small_scenario(2, 3, 103);
  sc.faults.push_back(window_fault(FaultKind::kPhonePowerOff, {1}, sc, 1, 0, 2, 0));
  sc.faults.push_back(window_fault(FaultKind::kTrackerBatteryDead, {2}, sc, 0, 0, 3, 0));
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  CHECK(rows.size() == 2 * 3 * 4);
  int device_off = 0;
  for (const auto& row : rows) {
    if (row.participant_id == 1 && row.day_index == 1) {
      CHECK_FALSE(row.has_record);
      CHECK(row.codes.contains(MissingnessCode::kDeviceOff));
      CHECK_FALSE(row.available);
      CHECK_FALSE(row.treatment.has_value());
      CHECK(!row.probability.text().empty());  // probability from config, always present
      ++device_off;
    } else {
      CHECK(row.has_record);
    }
  }
  CHECK(device_off == 4);
}

TEST_CASE("zero imputation: gaps become zeros, observed rows untouched, idempotent") {
  ScenarioConfig sc = small_scenario(1, 3, 107);
  sc.faults.push_back(window_fault(FaultKind::kTrackerBatteryDead, {1}, sc, 0, 0, 3, 0));
  const RunResult r = run(sc);
  auto raw = build_rows(r.log);
  merge_daily(raw, observations_from(r.log));
  int gaps = 0;
  for (const auto& row : raw) {
    if (row.codes.contains(MissingnessCode::kSensorGapAmbiguous)) {
      CHECK_FALSE(row.proximal_outcome.has_value());
      ++gaps;
    }
  }
  CHECK(gaps > 0);  // the dead tracker leaves no samples at all

  const auto imputed = zero_impute(raw);
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].codes.contains(MissingnessCode::kSensorGapAmbiguous)) {
      CHECK(imputed[i].proximal_outcome == 0);
      CHECK(imputed[i].outcome_source == OutcomeSource::kTrackerZeroImputed);
      CHECK(imputed[i].codes.contains(MissingnessCode::kSensorGapAmbiguous));  // gap stays documented
    } else {
      CHECK(imputed[i].proximal_outcome == raw[i].proximal_outcome);
      CHECK(imputed[i].outcome_source == raw[i].outcome_source);
    }
  }
  const auto twice = zero_impute(imputed);
  for (size_t i = 0; i < twice.size(); ++i) {
    CHECK(twice[i].proximal_outcome == imputed[i].proximal_outcome);
    CHECK(twice[i].outcome_source == imputed[i].outcome_source);
  }
}

TEST_CASE("redundant imputation fills gaps covered by the phone stream and only those") {
  ScenarioConfig sc = small_scenario(1, 3, 109);
  // Tracker dead across day 1 while the phone keeps being carried: the
  // redundant stream has coverage there.
  sc.faults.push_back(window_fault(FaultKind::kTrackerBatteryDead, {1}, sc, 1, 0, 2, 0));
  const RunResult r = run(sc);
  auto raw = build_rows(r.log);
  merge_daily(raw, observations_from(r.log));

  const auto redundant = impute_from_redundant(raw, r.log);
  const auto zero_variant = zero_impute(raw);
  const auto redundant_variant = zero_impute(impute_from_redundant(raw, r.log));

  REQUIRE(raw.size() == redundant.size());
  int redundant_filled = 0, differing = 0;
  for (size_t i = 0; i < raw.size(); ++i) {
    const bool gap = raw[i].codes.contains(MissingnessCode::kSensorGapAmbiguous);
    if (!gap) {
      // observed rows identical across variants
      CHECK(zero_variant[i].proximal_outcome == redundant_variant[i].proximal_outcome);
      CHECK(zero_variant[i].outcome_source == redundant_variant[i].outcome_source);
    } else if (redundant[i].proximal_outcome.has_value()) {
      CHECK(redundant[i].outcome_source == OutcomeSource::kRedundantImputed);
      ++redundant_filled;
    } else {
      // no coverage: falls back to the zero-imputed value downstream
      CHECK(redundant_variant[i].proximal_outcome == 0);
      CHECK(redundant_variant[i].outcome_source == OutcomeSource::kTrackerZeroImputed);
    }
    if (zero_variant[i].proximal_outcome != redundant_variant[i].proximal_outcome ||
        zero_variant[i].outcome_source != redundant_variant[i].outcome_source) {
      ++differing;
      CHECK(gap);
    }
  }
  CHECK(redundant_filled > 0);
  CHECK(differing == redundant_filled);
}

TEST_CASE("daily merge: strictly-prior observations only") {
  std::vector<AnalysisRow> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[i].participant_id = 1;
    rows[i].component_id = "suggestions";
    rows[i].global_index = i;
    rows[i].day_index = i;
    rows[i].scheduled_utc = 10000 + i * kSecondsPerDay;
    rows[i].randomized_utc = rows[i].scheduled_utc;
  }
  std::vector<DailyObservation> obs;
  // evening of day 0, well before the day-1 row
  obs.push_back(DailyObservation{1, 0, "stress", 7.0, 10000 + kSecondsPerDay - 3600});
  // adversarial: recorded one second AFTER the day-1 decision point
  obs.push_back(DailyObservation{1, 1, "stress", 9.0, 10000 + kSecondsPerDay + 1});

  merge_daily(rows, obs);
  CHECK_FALSE(rows[0].daily.at("stress").has_value());  // first day: nothing prior
  CHECK(rows[0].codes.contains(MissingnessCode::kNoPrior));
  CHECK(rows[1].daily.at("stress") == 7.0);   // day-0 evening value
  CHECK(rows[2].daily.at("stress") == 9.0);   // post-dp value only for later rows
}

TEST_CASE("daily merge on a simulated run: evening values attach to the next day") {
  const ScenarioConfig sc = small_scenario(1, 3, 113);
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  for (const auto& row : rows) {
    if (row.day_index == 0) {
      CHECK_FALSE(row.daily.at("stress").has_value());
      CHECK(row.codes.contains(MissingnessCode::kNoPrior));
    } else {
      CHECK(row.daily.at("stress").has_value());
      CHECK(row.daily.at("typicality").has_value());
    }
  }
}

TEST_CASE("undelivered treatment is retained as TREAT and coded") {
  ScenarioConfig sc = small_scenario(1, 1, 127);
  EventLog log;
  log.scenario = sc.to_json();
  RandomizationRecord rec;
  rec.participant_id = 1;
  rec.component_id = "suggestions";
  rec.global_index = 1;
  rec.day_index = 0;
  rec.slot_index = 1;
  rec.probability = Probability::parse("0.5");
  rec.outcome = Outcome::kTreat;
  rec.availability.available = true;
  rec.randomized_at = at_local(sc, 0, 12 * 60);
  rec.agent = Agent::kPhone;
  log.events.push_back(EvRandomization{rec, "p001-00000000", *rec.randomized_at});
  log.finalize();

  const auto rows = build_rows(log);
  for (const auto& row : rows) {
    if (row.global_index == 1 && row.component_id == "suggestions") {
      CHECK(row.treatment == 1);
      CHECK_FALSE(row.delivered_utc.has_value());
      CHECK(row.codes.contains(MissingnessCode::kUndeliveredTreatment));
    }
  }
}

TEST_CASE("quarantined payloads flag their rows when the body still names the decision point") {
  ScenarioConfig sc = small_scenario(1, 1, 131);
  EventLog log;
  log.scenario = sc.to_json();
  log.events.push_back(EvQuarantine{"p001-00000009", 1, "malformed payload body",
                                    at_local(sc, 0, 13 * 60), "suggestions", 2});
  log.finalize();
  const auto rows = build_rows(log);
  bool flagged = false;
  for (const auto& row : rows) {
    if (row.component_id == "suggestions" && row.global_index == 2) {
      CHECK(row.codes.contains(MissingnessCode::kDataQuarantined));
      flagged = true;
    }
  }
  CHECK(flagged);
}

TEST_CASE("travel-day rows are tagged for exclusion under EXCLUDE_TRAVEL") {
  ScenarioConfig sc = small_scenario(1, 4, 137);
  sc.trial.timezone_policy = TimezonePolicy::kExcludeTravel;
  FaultSpec travel;
  travel.kind = FaultKind::kTimezoneTravel;
  travel.participants = {1};
  travel.start_utc = at_local(sc, 1, 13 * 60);
  travel.new_offset_minutes = sc.trial.initial_offset_minutes - 360;
  travel.new_tz_name = "HST";
  sc.faults.push_back(travel);
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  int tagged = 0;
  for (const auto& row : rows) {
    if (row.codes.contains(MissingnessCode::kTravelExcluded)) {
      CHECK(row.day_index == 1);
      ++tagged;
    }
  }
  CHECK(tagged == 4);  // 3 suggestion slots + 1 planning slot on the travel day
}

TEST_CASE("location coarsening by region membership") {
  const Region home{0, 0, 10};
  const Region work{100, 0, 10};
  CHECK(coarsen_location(std::make_pair(1.0, 2.0), home, work) == LocationCategory::kHome);
  CHECK(coarsen_location(std::make_pair(105.0, 0.0), home, work) == LocationCategory::kWork);
  CHECK(coarsen_location(std::make_pair(50.0, 50.0), home, work) == LocationCategory::kOther);
  CHECK(coarsen_location(std::nullopt, home, work) == LocationCategory::kUnknown);
}

TEST_CASE("exports round-trip byte-identically in both formats") {
  ScenarioConfig sc = small_scenario(2, 2, 139);
  sc.faults.push_back(window_fault(FaultKind::kConnectivityLoss, {1}, sc, 0, 9 * 60, 0, 16 * 60));
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  for (const auto format : {ExportFormat::kCsv, ExportFormat::kJsonl}) {
    const std::string text = render_export(rows, format);
    const ExportTable table = parse_export(text, format);
    REQUIRE(table.rows.size() == rows.size());
    const std::string again = render_export(table.rows, format);
    CHECK(text == again);
  }
}

TEST_CASE("export row order and blank-free guarantee") {
  const ScenarioConfig sc = small_scenario(2, 2, 149);
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  // sorted by (participant, component order, global_index)
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto key = [&](const AnalysisRow& x) {
      return std::make_tuple(x.participant_id, x.component_id == "suggestions" ? 0 : 1, x.global_index);
    };
    CHECK(key(rows[i - 1]) < key(rows[i]));
  }
  const std::string csv = render_export(rows, ExportFormat::kCsv);
  CHECK(csv.find(",,") == std::string::npos);       // no empty cells
  CHECK(csv.find(",\n") == std::string::npos);      // no trailing blanks
  // no raw local-only stamps: every timestamp cell ends in Z (checked by the
  // parser round trip above) and offset columns ride alongside
  const ExportTable table = parse_export(csv, ExportFormat::kCsv);
  bool has_offset_col = false;
  for (const auto& c : table.columns) {
    if (c == "tz_offset_minutes") has_offset_col = true;
  }
  CHECK(has_offset_col);
}
