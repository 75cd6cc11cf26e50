#include "mrtsim/audit.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_set>

namespace mrt {

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::kPass: return "PASS";
    case CheckStatus::kFail: return "FAIL";
    case CheckStatus::kNotApplicable: return "NOT_APPLICABLE";
  }
  return "FAIL";
}

bool AuditReport::passed() const {
  if (structural_failure) return false;
  return std::all_of(checks.begin(), checks.end(),
                     [](const AuditCheckResult& c) { return c.status != CheckStatus::kFail; });
}

Json AuditReport::to_json() const {
  Json checks_json = Json::array();
  for (const auto& c : checks) {
    checks_json.push_back(Json{{"number", c.number},
                               {"title", c.title},
                               {"status", to_string(c.status)},
                               {"violations", c.violation_count}});
  }
  Json viol = Json::array();
  for (const auto& v : violations) {
    viol.push_back(Json{{"check", v.check}, {"locator", v.locator}, {"message", v.message}});
  }
  Json out{{"passed", passed()}, {"checks", std::move(checks_json)}, {"violations", std::move(viol)}};
  if (structural_failure) out["structural_failure"] = structural_message;
  return out;
}

std::string AuditReport::to_text() const {
  std::ostringstream out;
  if (structural_failure) {
    out << "STRUCTURAL FAILURE: " << structural_message << "\n";
    return out.str();
  }
  for (const auto& c : checks) {
    out << "check " << c.number << " [" << to_string(c.status) << "] " << c.title;
    if (c.violation_count > 0) out << " (" << c.violation_count << " violations)";
    out << "\n";
  }
  for (const auto& v : violations) {
    out << "  #" << v.check << " " << v.locator << ": " << v.message << "\n";
  }
  out << (passed() ? "AUDIT PASS" : "AUDIT FAIL") << "\n";
  return out.str();
}

namespace {

struct Auditor {
  const ExportTable& table;
  const EventLog& log;
  AuditReport report;
  ScenarioConfig scenario;

  int col(const std::string& name) const {
    for (size_t i = 0; i < table.columns.size(); ++i) {
      if (table.columns[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  std::string cell(size_t row, const std::string& name) const {
    const int c = col(name);
    if (c < 0 || row >= table.cells.size() || c >= static_cast<int>(table.cells[row].size())) return "";
    return table.cells[row][static_cast<size_t>(c)];
  }

  std::string locator(size_t row) const {
    return "row " + std::to_string(row + 1) + " (participant=" + cell(row, "participant_id") +
           " component=" + cell(row, "component_id") + " global_index=" + cell(row, "global_index") + ")";
  }

  void add(std::vector<AuditViolation>& out, int check, std::string loc, std::string msg) const {
    out.push_back(AuditViolation{check, std::move(loc), std::move(msg)});
  }

  void finish_check(int number, const std::string& title, std::vector<AuditViolation> violations,
                    bool applicable = true) {
    AuditCheckResult res;
    res.number = number;
    res.title = title;
    res.violation_count = static_cast<int>(violations.size());
    if (!applicable) {
      res.status = CheckStatus::kNotApplicable;
    } else {
      res.status = violations.empty() ? CheckStatus::kPass : CheckStatus::kFail;
    }
    report.checks.push_back(res);
    for (auto& v : violations) report.violations.push_back(std::move(v));
  }

  void run();
  void check1_proximal_outcome();
  void check2_agent();
  void check3_treatment_delivery();
  void check4_context();
  void check5_timestamps();
  void check6_missingness();
  void check7_recovery();
};

void Auditor::check1_proximal_outcome() {
  std::vector<AuditViolation> v;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const AnalysisRow& r = table.rows[i];
    const std::string raw = cell(i, "proximal_outcome");
    if (raw.empty()) {
      add(v, 1, locator(i), "proximal_outcome is blank");
      continue;
    }
    if (raw == "NA") {
      if (!r.codes.contains(MissingnessCode::kSensorGapAmbiguous) &&
          !r.codes.contains(MissingnessCode::kStudyEnd)) {
        add(v, 1, locator(i), "missing outcome carries no explanatory code");
      }
      if (cell(i, "outcome_source") != "NA") {
        add(v, 1, locator(i), "outcome_source set for a missing outcome");
      }
    } else {
      if (cell(i, "outcome_source") == "NA" || cell(i, "outcome_source").empty()) {
        add(v, 1, locator(i), "outcome present without a source");
      }
    }
  }
  finish_check(1, "proximal outcome present or coded", std::move(v));
}

void Auditor::check2_agent() {
  std::vector<AuditViolation> v;
  const std::string expected = to_string(scenario.agent);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    if (!table.rows[i].has_record) continue;
    const std::string a = cell(i, "agent");
    if (a != expected) {
      add(v, 2, locator(i), "agent '" + a + "' does not match the scenario agent " + expected);
    }
  }
  for (size_t i = 0; i < log.events.size(); ++i) {
    if (const auto* r = std::get_if<EvRandomization>(&log.events[i])) {
      if (to_string(r->record.agent) != expected) {
        add(v, 2, "log event " + std::to_string(i + 1), "randomization by unexpected agent");
      }
    }
  }
  finish_check(2, "randomization agent recorded and consistent", std::move(v));
}

void Auditor::check3_treatment_delivery() {
  std::vector<AuditViolation> v;
  std::map<std::tuple<std::string, std::string, std::string>, int> seen;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    ++seen[{cell(i, "participant_id"), cell(i, "component_id"), cell(i, "global_index")}];
  }
  for (const auto& [key, count] : seen) {
    if (count > 1) {
      add(v, 3,
          "participant=" + std::get<0>(key) + " component=" + std::get<1>(key) +
              " global_index=" + std::get<2>(key),
          "decision point appears " + std::to_string(count) + " times");
    }
  }
  const auto schedule = build_schedule(scenario.trial);
  for (const auto& dp : schedule) {
    const auto key = std::make_tuple(std::to_string(dp.participant_id), dp.component_id,
                                     std::to_string(dp.global_index));
    if (!seen.contains(key)) {
      add(v, 3,
          "participant=" + std::get<0>(key) + " component=" + std::get<1>(key) +
              " global_index=" + std::get<2>(key),
          "scheduled decision point has no row");
    }
  }
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const AnalysisRow& r = table.rows[i];
    const std::string prob = cell(i, "probability");
    bool prob_ok = true;
    try {
      Probability::parse(prob);
    } catch (const ConfigError&) {
      prob_ok = false;
    }
    if (!prob_ok) add(v, 3, locator(i), "probability '" + prob + "' is not a decimal in [0,1]");

    const std::string treatment = cell(i, "treatment");
    const bool available = cell(i, "available") == "1";
    if (r.has_record) {
      if (available && treatment != "0" && treatment != "1") {
        add(v, 3, locator(i), "available row lacks a randomization result");
      }
      if (!available && treatment != "NA") {
        add(v, 3, locator(i), "unavailable row carries a treatment assignment");
      }
      if (cell(i, "randomized_utc") == "NA") {
        add(v, 3, locator(i), "record row lacks a randomization timestamp");
      }
    } else if (!r.codes.contains(MissingnessCode::kDeviceOff)) {
      add(v, 3, locator(i), "missing record without DEVICE_OFF code");
    }
    if (r.delivered_utc) {
      if (treatment != "1") {
        add(v, 3, locator(i), "delivery recorded without a TREAT outcome");
      }
      if (r.randomized_utc && *r.delivered_utc < *r.randomized_utc) {
        add(v, 3, locator(i), "delivered before randomization");
      }
    }
  }
  finish_check(3, "probability and result recorded at every decision point", std::move(v));
}

void Auditor::check4_context() {
  std::vector<AuditViolation> v;
  static const char* kForbidden[] = {"lat", "lon", "gps_x", "gps_y", "coordinate", "latitude", "longitude"};
  for (const auto& c : table.columns) {
    std::string lower = c;
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    for (const char* f : kForbidden) {
      if (lower.find(f) != std::string::npos) {
        add(v, 4, "column " + c, "raw-location column in export");
      }
    }
  }
  const std::int64_t bound = scenario.availability.freshness_bound_seconds;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const AnalysisRow& r = table.rows[i];
    if (!r.has_record) continue;
    for (const char* field : {"location", "weather", "connection", "recent_activity"}) {
      if (cell(i, field).empty()) add(v, 4, locator(i), std::string(field) + " is blank");
    }
    const std::string stale = cell(i, "context_staleness_seconds");
    if (stale.empty()) {
      add(v, 4, locator(i), "context staleness not recorded");
    } else if (stale != "NA") {
      const std::int64_t s = std::strtoll(stale.c_str(), nullptr, 10);
      if ((s > bound || s < 0) && !r.availability_reasons.contains(UnavailableReason::kNoConnection)) {
        add(v, 4, locator(i), "stale context without the conservative NO_CONNECTION reason");
      }
    }
  }
  finish_check(4, "contextual variables recorded regardless of treatment, no raw coordinates",
               std::move(v));
}

void Auditor::check5_timestamps() {
  std::vector<AuditViolation> v;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    for (const auto& c : table.columns) {
      if (c.size() < 4 || c.substr(c.size() - 4) != "_utc") continue;
      const std::string raw = cell(i, c);
      if (raw == "NA") continue;
      if (!parse_utc(raw)) {
        add(v, 5, locator(i), "column " + c + " value '" + raw + "' is not a UTC ISO-8601 stamp");
      }
    }
    for (const char* c : {"scheduled_offset_minutes", "tz_offset_minutes"}) {
      const std::string raw = cell(i, c);
      char* end = nullptr;
      const long off = std::strtol(raw.c_str(), &end, 10);
      if (raw.empty() || end == raw.c_str() || *end != '\0' || off < -kMaxOffsetMinutes ||
          off > kMaxOffsetMinutes) {
        add(v, 5, locator(i), std::string(c) + " '" + raw + "' is not a valid offset");
      }
    }
  }
  // Travel subcheck: per-participant log stamps stay UTC-monotone.
  bool any_travel = false;
  for (const auto& f : scenario.faults) {
    if (f.kind == FaultKind::kTimezoneTravel) any_travel = true;
  }
  if (any_travel) {
    std::map<int, UtcSeconds> last;
    for (size_t i = 0; i < log.events.size(); ++i) {
      const UtcSeconds t = event_time(log.events[i]);
      if (t == std::numeric_limits<std::int64_t>::max()) continue;
      int pid = 0;
      if (const auto* r = std::get_if<EvRandomization>(&log.events[i])) pid = r->record.participant_id;
      else if (const auto* s = std::get_if<EvSensor>(&log.events[i])) pid = s->sample.participant_id;
      else continue;
      const auto it = last.find(pid);
      if (it != last.end() && t < it->second) {
        add(v, 5, "log event " + std::to_string(i + 1), "participant stamps move backwards in UTC");
      }
      last[pid] = t;
    }
  }
  finish_check(5, "all stamps UTC with explicit offsets", std::move(v));
}

void Auditor::check6_missingness() {
  std::vector<AuditViolation> v;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const AnalysisRow& r = table.rows[i];
    for (size_t c = 0; c < table.columns.size(); ++c) {
      if (c < table.cells[i].size() && table.cells[i][c].empty()) {
        add(v, 6, locator(i), "blank field '" + table.columns[c] + "'");
      }
    }
    const bool available = cell(i, "available") == "1";
    if (!available) {
      const bool reasons_present = !r.availability_reasons.empty();
      const bool device_level = r.codes.contains(MissingnessCode::kDeviceOff) ||
                                r.codes.contains(MissingnessCode::kTravelExcluded);
      if (!reasons_present && !device_level) {
        add(v, 6, locator(i), "unavailable row with no recorded reason");
      }
    }
    if (r.delivered_utc && !r.engagement && !r.codes.contains(MissingnessCode::kDeviceOff)) {
      add(v, 6, locator(i), "delivered treatment with a blank response");
    }
  }
  // Handshake ledger balance.
  const EvSyncSummary* summary = nullptr;
  for (const auto& e : log.events) {
    if (const auto* s = std::get_if<EvSyncSummary>(&e)) summary = s;
  }
  if (!summary) {
    add(v, 6, "log", "sync summary missing from event log");
  } else {
    std::unordered_set<std::string> ids;
    std::int64_t payload_events = 0;
    std::int64_t quarantines = 0;
    for (size_t i = 0; i < log.events.size(); ++i) {
      const auto& e = log.events[i];
      std::string id;
      std::visit(
          [&](const auto& ev) {
            using T = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<T, EvQuarantine>) id = ev.message_id;
            else if constexpr (!std::is_same_v<T, EvPushSent> && !std::is_same_v<T, EvWithdrawal> &&
                               !std::is_same_v<T, EvSyncSummary>) id = ev.message_id;
          },
          e);
      if (std::holds_alternative<EvQuarantine>(e)) ++quarantines;
      else if (!id.empty() && id[0] == 'p') ++payload_events;
      if (!id.empty() && !ids.insert(id).second) {
        add(v, 6, "log event " + std::to_string(i + 1), "message_id " + id + " stored more than once");
      }
    }
    if (payload_events != summary->stored) {
      add(v, 6, "log",
          "handshake ledger unbalanced: " + std::to_string(payload_events) + " synced events vs " +
              std::to_string(summary->stored) + " acknowledged stores");
    }
    if (quarantines != summary->quarantined) {
      add(v, 6, "log", "quarantine events do not match the sync summary");
    }
  }
  finish_check(6, "reasons, typed missingness, handshake ledger balanced", std::move(v));
}

void Auditor::check7_recovery() {
  std::vector<AuditViolation> v;
  PipelinePolicy policy;
  std::vector<std::vector<std::pair<SensorSample, UtcSeconds>>> tracker(scenario.trial.participant_count);
  bool any_tracker = false;
  for (size_t i = 0; i < log.events.size(); ++i) {
    const auto* s = std::get_if<EvSensor>(&log.events[i]);
    if (!s || s->sample.stream != SensorStream::kTracker) continue;
    any_tracker = true;
    if (s->synced_at < s->sample.end) {
      add(v, 7, "log event " + std::to_string(i + 1), "sample synced before its interval closed");
    }
    tracker[s->sample.participant_id - 1].push_back({s->sample, s->synced_at});
  }
  if (!any_tracker) {
    finish_check(7, "buffered sensor data recovery accounted for", std::move(v), false);
    return;
  }
  OutcomeWindows windows(log, policy);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const AnalysisRow& r = table.rows[i];
    const auto w = windows.window(r);
    if (!w) continue;
    bool late = false;
    bool any = false;
    for (const auto& [sample, synced] : tracker[r.participant_id - 1]) {
      if (sample.start < w->second && sample.end > w->first) {
        any = true;
        if (synced - sample.end > policy.recovery_lag_seconds) late = true;
      }
    }
    const bool coded = r.codes.contains(MissingnessCode::kSyncPendingRecovered);
    if (any && late && !coded) {
      add(v, 7, locator(i), "late-recovered sensor data without SYNC_PENDING_RECOVERED");
    }
    if (coded && !(any && late)) {
      add(v, 7, locator(i), "SYNC_PENDING_RECOVERED without late-recovered data");
    }
  }
  finish_check(7, "buffered sensor data recovery accounted for", std::move(v));
}

void Auditor::run() {
  scenario = ScenarioConfig::from_json(log.scenario);
  check1_proximal_outcome();
  check2_agent();
  check3_treatment_delivery();
  check4_context();
  check5_timestamps();
  check6_missingness();
  check7_recovery();
}

}  // namespace

AuditReport run_audit(const ExportTable& export_table, const EventLog& log) {
  Auditor a{export_table, log};
  a.run();
  return std::move(a.report);
}

AuditReport run_audit_files(const std::string& export_path, const std::string& log_path) {
  try {
    const ExportTable table = parse_export_file(export_path);
    const EventLog log = read_event_log_file(log_path);
    return run_audit(table, log);
  } catch (const std::exception& e) {
    AuditReport report;
    report.structural_failure = true;
    report.structural_message = e.what();
    return report;
  }
}

}  // namespace mrt
