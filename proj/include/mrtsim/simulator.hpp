#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrtsim/events.hpp"
#include "mrtsim/scenario.hpp"
#include "mrtsim/sync.hpp"

namespace mrt {

// Simulator-private truth, compared against pipeline output only in tests.
struct LedgerEffect {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  UtcSeconds window_start = 0;
  UtcSeconds window_end = 0;
  std::int64_t delta_steps = 0;
};

struct LedgerCause {
  FaultKind kind = FaultKind::kConnectivityLoss;
  int participant_id = 0;
  UtcSeconds start = 0;
  UtcSeconds end = 0;
};

struct PayloadFingerprint {
  std::string message_id;
  PayloadKind kind = PayloadKind::kSensorSample;
  std::uint64_t body_hash = 0;

  auto operator<=>(const PayloadFingerprint&) const = default;
};

class GroundTruthLedger {
 public:
  GroundTruthLedger() = default;
  GroundTruthLedger(UtcSeconds t0, int participant_count, std::int64_t total_minutes);

  void add_baseline(int participant_id, std::int64_t minute_index, int steps);
  void add_injected(int participant_id, std::int64_t minute_index, int steps);

  // True (baseline + injected) steps over [start, end), whole minutes.
  std::int64_t true_steps(int participant_id, UtcSeconds start, UtcSeconds end) const;
  std::int64_t baseline_steps(int participant_id, UtcSeconds start, UtcSeconds end) const;
  std::int64_t minute_steps(int participant_id, std::int64_t minute_index) const;

  UtcSeconds t0() const { return t0_; }
  std::int64_t total_minutes() const { return total_minutes_; }

  std::vector<LedgerEffect> effects;
  std::vector<LedgerCause> causes;
  std::vector<PayloadFingerprint> payloads;
  std::vector<PayloadFingerprint> missed_decision_points_fingerprint;  // unused placeholder kept empty

  void write_file(const std::string& path, const Json& scenario) const;

 private:
  UtcSeconds t0_ = 0;
  std::int64_t total_minutes_ = 0;
  std::vector<std::vector<std::uint16_t>> baseline_;  // [participant-1][minute]
  std::vector<std::vector<std::uint16_t>> injected_;
};

// Pre-built server-side record table: one placeholder row per decision point
// before day 1; rows are filled in place, never inserted, so duplicates are
// structurally impossible.
class ServerTable {
 public:
  static ServerTable prepare(const TrialConfig& config);

  void fill(int participant_id, int component_index, int global_index);
  bool filled(int participant_id, int component_index, int global_index) const;
  std::int64_t prepared_count() const { return static_cast<std::int64_t>(rows_.size()); }
  std::int64_t filled_count() const { return filled_count_; }
  std::int64_t unfilled_count() const { return prepared_count() - filled_count_; }

 private:
  std::map<std::tuple<int, int, int>, bool> rows_;
  std::int64_t filled_count_ = 0;
};

struct RunSummary {
  std::int64_t decision_points_scheduled = 0;
  std::int64_t records = 0;
  std::int64_t treatments = 0;
  std::int64_t deliveries = 0;
  std::int64_t not_randomized = 0;
  std::int64_t missed_decision_points = 0;  // device/app off, dropout
  std::int64_t faults_fired = 0;
  std::int64_t payloads_generated = 0;
  std::int64_t payloads_stored = 0;
  std::int64_t duplicates = 0;
  std::int64_t quarantined = 0;
  std::int64_t server_prepared_rows = 0;
  std::int64_t server_unfilled_rows = 0;
};

struct RunOptions {
  // lean=true replaces payload bodies with a constant to cut serialization
  // cost in Monte Carlo batches; envelope counts and control flow unchanged.
  bool lean = false;
  bool keep_transcript = false;
};

struct RunResult {
  EventLog log;
  GroundTruthLedger ledger;
  RunSummary summary;
  std::vector<TranscriptEntry> transcript;
  std::optional<ServerTable> server_table;  // SERVER agent only
};

RunResult run(const ScenarioConfig& scenario, const RunOptions& options = {});

std::uint64_t hash_body(const std::string& body);

}  // namespace mrt
