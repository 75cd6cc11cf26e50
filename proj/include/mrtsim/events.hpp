#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mrtsim/model.hpp"
#include "mrtsim/records.hpp"

namespace mrt {

constexpr int kEventSchemaVersion = 1;

enum class SensorStream { kTracker, kPhoneFit };
std::string to_string(SensorStream s);
SensorStream sensor_stream_from_string(const std::string& s);

// One step-count observation as stored server-side after sync.
struct SensorSample {
  SensorStream stream = SensorStream::kTracker;
  int participant_id = 0;
  UtcSeconds start = 0;  // interval [start, end)
  UtcSeconds end = 0;
  std::int64_t steps = 0;
};

struct EvRandomization {
  RandomizationRecord record;
  std::string message_id;
  UtcSeconds synced_at = 0;
};

// Delivery receipt (server-agent pushes confirm asynchronously).
struct EvDelivery {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  UtcSeconds delivered_at = 0;
  int tz_offset_minutes = 0;
  std::int64_t context_staleness_seconds = 0;
  std::string content_id;
  std::string message_id;
  UtcSeconds synced_at = 0;
};

struct EvEngagement {
  EngagementEvent engagement;
  std::string message_id;
  UtcSeconds synced_at = 0;
};

struct EvSensor {
  SensorSample sample;
  std::string message_id;
  UtcSeconds synced_at = 0;
};

struct EvSnapshot {
  int participant_id = 0;
  ContextSnapshot snapshot;  // raw capture: connection is true transport state
  std::string message_id;
  UtcSeconds synced_at = 0;
};

struct EvDailyObservation {
  DailyObservation observation;
  std::string message_id;
  UtcSeconds synced_at = 0;
};

struct EvPushSent {
  int participant_id = 0;
  std::string component_id;
  int global_index = 0;
  UtcSeconds sent_at = 0;
};

struct EvQuarantine {
  std::string message_id;
  int participant_id = 0;
  std::string reason;
  UtcSeconds at = 0;
  std::string component_id;  // empty when the body gave no locator
  int global_index = -1;
};

struct EvWithdrawal {
  int participant_id = 0;
  UtcSeconds at = 0;
};

struct EvSyncSummary {
  std::int64_t enqueued = 0;
  std::int64_t stored = 0;
  std::int64_t duplicates = 0;
  std::int64_t quarantined = 0;
  std::int64_t acks_lost = 0;
  std::int64_t prepared_rows = 0;  // server agent: pre-built table size
  std::int64_t filled_rows = 0;
};

using Event = std::variant<EvRandomization, EvDelivery, EvEngagement, EvSensor, EvSnapshot,
                           EvDailyObservation, EvPushSent, EvQuarantine, EvWithdrawal, EvSyncSummary>;

UtcSeconds event_time(const Event& e);

struct EventLog {
  int schema_version = kEventSchemaVersion;
  Json scenario;  // full scenario config, embedded for replay self-sufficiency
  std::vector<Event> events;

  // Stable (time, kind, participant) ordering for serialization.
  void finalize();
};

std::string event_to_jsonl(const Event& e);
void write_event_log(const EventLog& log, std::ostream& out);
void write_event_log_file(const EventLog& log, const std::string& path);
EventLog read_event_log(std::istream& in);
EventLog read_event_log_file(const std::string& path);

}  // namespace mrt
