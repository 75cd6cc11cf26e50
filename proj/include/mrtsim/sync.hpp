#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mrtsim/model.hpp"
#include "mrtsim/time.hpp"

namespace mrt {

enum class PayloadKind {
  kRandomizationRecord,
  kSensorSample,
  kSnapshot,
  kEngagement,
  kDailyObservation,
  kDeliveryReceipt,
};

std::string to_string(PayloadKind k);
PayloadKind payload_kind_from_string(const std::string& s);

struct SyncEnvelope {
  std::string message_id;  // stable across retries
  int participant_id = 0;
  PayloadKind kind = PayloadKind::kSensorSample;
  std::string body;  // serialized JSON payload
  UtcSeconds client_sent_at = 0;
  int attempt = 0;  // increments per resend
};

struct SyncPolicy {
  std::int64_t backoff_initial_seconds = 30;
  std::int64_t backoff_cap_seconds = 3600;

  std::int64_t backoff(int consecutive_failures) const;
};

// FIFO queue of unacknowledged envelopes. Entries are persisted on enqueue
// and removed only when the server acknowledges their message_id, so a
// swipe-kill or reboot between send and ack loses nothing.
class Outbox {
 public:
  explicit Outbox(int participant_id) : participant_id_(participant_id) {}

  SyncEnvelope& enqueue(PayloadKind kind, std::string body, UtcSeconds now);

  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  std::deque<SyncEnvelope>& entries() { return entries_; }
  const std::deque<SyncEnvelope>& entries() const { return entries_; }

  // Removes the front entry iff the ack names it.
  bool acknowledge(const std::string& message_id);

  bool ready(UtcSeconds now) const { return now >= next_attempt_at_; }
  void record_failure(UtcSeconds now, const SyncPolicy& policy);
  void record_success();
  std::int64_t total_enqueued() const { return total_enqueued_; }

 private:
  int participant_id_;
  std::deque<SyncEnvelope> entries_;
  std::int64_t seq_ = 0;
  std::int64_t total_enqueued_ = 0;
  int consecutive_failures_ = 0;
  UtcSeconds next_attempt_at_ = std::numeric_limits<std::int64_t>::min();
};

enum class IngestStatus { kStored, kDuplicate, kQuarantined };

struct IngestResult {
  IngestStatus status = IngestStatus::kStored;
  std::string message_id;
  std::string quarantine_reason;  // set iff quarantined
};

struct StoredPayload {
  std::string message_id;
  int participant_id = 0;
  PayloadKind kind = PayloadKind::kSensorSample;
  std::string body;
  UtcSeconds received_at = 0;
  int attempt = 0;
};

struct QuarantinedPayload {
  std::string message_id;
  int participant_id = 0;
  std::string body;
  std::string reason;
  UtcSeconds received_at = 0;
  // Locator fields salvaged from the malformed body, when recoverable.
  std::string component_id;
  int global_index = -1;
};

// Server-side ingestion with message_id deduplication. First sighting stores
// and acks; repeats ack without storing; malformed bodies are quarantined
// with a negative ack, never dropped silently.
class SyncServer {
 public:
  IngestResult ingest(const SyncEnvelope& envelope, UtcSeconds now);

  const std::vector<StoredPayload>& stored() const { return stored_; }
  const std::vector<QuarantinedPayload>& quarantine() const { return quarantine_; }
  std::int64_t duplicate_count() const { return duplicates_; }

 private:
  std::vector<StoredPayload> stored_;
  std::vector<QuarantinedPayload> quarantine_;
  std::unordered_set<std::string> seen_;
  std::int64_t duplicates_ = 0;
};

struct TranscriptEntry {
  UtcSeconds at = 0;
  std::string direction;  // "send" | "ack" | "nack"
  SyncEnvelope envelope;
  std::string note;  // e.g. "ack_lost", "captive_portal"
};

struct SendOptions {
  Connection transport = Connection::kOnline;
  bool acks_lost = false;  // server stores, acknowledgment never arrives
};

struct SendStats {
  int sent = 0;
  int acked = 0;
  int stored = 0;
  int duplicates = 0;
  int quarantined = 0;
  int acks_lost = 0;
};

// One send pass: ONLINE sends in order and removes entries as their acks
// arrive; OFFLINE and CAPTIVE_PORTAL move nothing (a portal yields no usable
// ack); lost acks leave entries queued for a backed-off retry.
SendStats attempt_send(Outbox& outbox, SyncServer& server, const SendOptions& options, UtcSeconds now,
                       const SyncPolicy& policy, std::vector<TranscriptEntry>* transcript = nullptr);

// Length-prefixed JSON wire encoding of the transcript.
std::string encode_transcript(const std::vector<TranscriptEntry>& transcript);
std::vector<TranscriptEntry> decode_transcript(const std::string& bytes);

}  // namespace mrt
