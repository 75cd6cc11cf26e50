#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mrtsim/pipeline.hpp"
#include "mrtsim/scenario.hpp"
#include "mrtsim/simulator.hpp"

namespace mrt::test {

// Compact trial for fast runs: suggestions 3/day at p=0.5 with a 30-minute
// window, planning 1/day at p=0.5 scored by next-day total.
inline ScenarioConfig small_scenario(int participants = 2, int days = 3, std::uint64_t seed = 11) {
  ScenarioConfig sc = default_scenario();
  sc.seed = seed;
  sc.trial.participant_count = participants;
  sc.trial.study_days = days;
  sc.trial.components[0].decision_points_per_day = 3;
  sc.trial.components[0].randomization_probability = Probability::parse("0.5");
  sc.effects.clear();
  return sc;
}

inline UtcSeconds at_local(const ScenarioConfig& sc, int day, int minute) {
  return scenario_start_utc(sc) + std::int64_t{day} * kSecondsPerDay + std::int64_t{minute} * 60;
}

inline FaultSpec window_fault(FaultKind kind, std::vector<int> participants, const ScenarioConfig& sc,
                              int start_day, int start_minute, int end_day, int end_minute) {
  FaultSpec f;
  f.kind = kind;
  f.participants = std::move(participants);
  f.start_utc = at_local(sc, start_day, start_minute);
  f.end_utc = at_local(sc, end_day, end_minute);
  return f;
}

template <typename T>
inline std::vector<const T*> events_of(const EventLog& log) {
  std::vector<const T*> out;
  for (const auto& e : log.events) {
    if (const auto* ev = std::get_if<T>(&e)) out.push_back(ev);
  }
  return out;
}

inline std::string serialize_log(const EventLog& log) {
  std::ostringstream out;
  write_event_log(log, out);
  return out.str();
}

// Multiset comparison of generated payload fingerprints vs server-stored
// payloads (the exactly-once effect).
inline bool exactly_once(const RunResult& result) {
  std::vector<PayloadFingerprint> generated = result.ledger.payloads;
  std::vector<PayloadFingerprint> stored;
  std::map<std::string, int> stored_ids;
  for (const auto& e : result.log.events) {
    std::visit(
        [&](const auto& ev) {
          using T = std::decay_t<decltype(ev)>;
          if constexpr (std::is_same_v<T, EvQuarantine>) {
            stored.push_back(PayloadFingerprint{ev.message_id, PayloadKind::kSensorSample, 0});
          } else if constexpr (!std::is_same_v<T, EvPushSent> && !std::is_same_v<T, EvWithdrawal> &&
                               !std::is_same_v<T, EvSyncSummary>) {
            if (!ev.message_id.empty() && ev.message_id[0] == 'p') {
              stored.push_back(PayloadFingerprint{ev.message_id, PayloadKind::kSensorSample, 0});
            }
          }
        },
        e);
  }
  if (generated.size() != stored.size()) return false;
  std::set<std::string> gen_ids, stored_set;
  for (const auto& f : generated) gen_ids.insert(f.message_id);
  for (const auto& f : stored) {
    if (!stored_set.insert(f.message_id).second) return false;  // stored twice
  }
  return gen_ids == stored_set;
}

}  // namespace mrt::test
