#include "mrtsim/sync.hpp"

#include <algorithm>
#include <cstdio>

namespace mrt {

std::string to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::kRandomizationRecord: return "randomization_record";
    case PayloadKind::kSensorSample: return "sensor_sample";
    case PayloadKind::kSnapshot: return "snapshot";
    case PayloadKind::kEngagement: return "engagement";
    case PayloadKind::kDailyObservation: return "daily_observation";
    case PayloadKind::kDeliveryReceipt: return "delivery_receipt";
  }
  return "sensor_sample";
}

PayloadKind payload_kind_from_string(const std::string& s) {
  if (s == "randomization_record") return PayloadKind::kRandomizationRecord;
  if (s == "sensor_sample") return PayloadKind::kSensorSample;
  if (s == "snapshot") return PayloadKind::kSnapshot;
  if (s == "engagement") return PayloadKind::kEngagement;
  if (s == "daily_observation") return PayloadKind::kDailyObservation;
  if (s == "delivery_receipt") return PayloadKind::kDeliveryReceipt;
  throw ConfigError("unknown payload kind '" + s + "'");
}

std::int64_t SyncPolicy::backoff(int consecutive_failures) const {
  std::int64_t delay = backoff_initial_seconds;
  for (int i = 1; i < consecutive_failures && delay < backoff_cap_seconds; ++i) delay *= 2;
  return std::min(delay, backoff_cap_seconds);
}

SyncEnvelope& Outbox::enqueue(PayloadKind kind, std::string body, UtcSeconds now) {
  SyncEnvelope env;
  char idbuf[40];
  std::snprintf(idbuf, sizeof(idbuf), "p%03d-%08lld", participant_id_, static_cast<long long>(seq_++));
  env.message_id = idbuf;
  env.participant_id = participant_id_;
  env.kind = kind;
  env.body = std::move(body);
  env.client_sent_at = now;
  env.attempt = 0;
  entries_.push_back(std::move(env));
  ++total_enqueued_;
  return entries_.back();
}

bool Outbox::acknowledge(const std::string& message_id) {
  if (entries_.empty() || entries_.front().message_id != message_id) return false;
  entries_.pop_front();
  return true;
}

void Outbox::record_failure(UtcSeconds now, const SyncPolicy& policy) {
  ++consecutive_failures_;
  next_attempt_at_ = now + policy.backoff(consecutive_failures_);
}

void Outbox::record_success() {
  consecutive_failures_ = 0;
  next_attempt_at_ = std::numeric_limits<std::int64_t>::min();
}

namespace {

bool body_well_formed(const std::string& body) {
  const auto parsed = Json::parse(body, nullptr, false);
  return !parsed.is_discarded() && parsed.is_object() && parsed.contains("event");
}

}  // namespace

IngestResult SyncServer::ingest(const SyncEnvelope& envelope, UtcSeconds now) {
  IngestResult result;
  result.message_id = envelope.message_id;
  if (seen_.contains(envelope.message_id)) {
    ++duplicates_;
    result.status = IngestStatus::kDuplicate;
    return result;
  }
  if (!body_well_formed(envelope.body)) {
    seen_.insert(envelope.message_id);
    result.status = IngestStatus::kQuarantined;
    result.quarantine_reason = "malformed payload body";
    QuarantinedPayload qp{envelope.message_id, envelope.participant_id, envelope.body,
                          result.quarantine_reason, now, "", -1};
    // Salvage a decision-point locator if the body is still partially
    // readable, so the analysis row can carry its quarantine code.
    const auto partial = Json::parse(envelope.body, nullptr, false);
    if (!partial.is_discarded() && partial.is_object()) {
      if (partial.contains("component_id") && partial.at("component_id").is_string()) {
        qp.component_id = partial.at("component_id").get<std::string>();
      }
      if (partial.contains("global_index") && partial.at("global_index").is_number_integer()) {
        qp.global_index = partial.at("global_index").get<int>();
      }
    }
    quarantine_.push_back(std::move(qp));
    return result;
  }
  seen_.insert(envelope.message_id);
  stored_.push_back(
      StoredPayload{envelope.message_id, envelope.participant_id, envelope.kind, envelope.body, now, envelope.attempt});
  result.status = IngestStatus::kStored;
  return result;
}

SendStats attempt_send(Outbox& outbox, SyncServer& server, const SendOptions& options, UtcSeconds now,
                       const SyncPolicy& policy, std::vector<TranscriptEntry>* transcript) {
  SendStats stats;
  if (outbox.empty() || !outbox.ready(now)) return stats;

  if (options.transport != Connection::kOnline) {
    // No usable channel: a captive portal swallows the request before the
    // server sees it. Entries stay queued; back off before the next try.
    outbox.record_failure(now, policy);
    if (transcript && !outbox.entries().empty()) {
      TranscriptEntry t{now, "send", outbox.entries().front(),
                        options.transport == Connection::kCaptivePortal ? "captive_portal" : "offline"};
      t.envelope.attempt += 1;
      transcript->push_back(std::move(t));
    }
    return stats;
  }

  while (!outbox.empty()) {
    SyncEnvelope& env = outbox.entries().front();
    env.attempt += 1;
    ++stats.sent;
    if (transcript) transcript->push_back(TranscriptEntry{now, "send", env, ""});

    const IngestResult res = server.ingest(env, now);
    switch (res.status) {
      case IngestStatus::kStored: ++stats.stored; break;
      case IngestStatus::kDuplicate: ++stats.duplicates; break;
      case IngestStatus::kQuarantined: ++stats.quarantined; break;
    }

    if (options.acks_lost) {
      ++stats.acks_lost;
      if (transcript) transcript->push_back(TranscriptEntry{now, "ack", env, "ack_lost"});
      outbox.record_failure(now, policy);
      return stats;
    }

    if (transcript) {
      transcript->push_back(TranscriptEntry{
          now, res.status == IngestStatus::kQuarantined ? "nack" : "ack", env,
          res.status == IngestStatus::kQuarantined ? res.quarantine_reason : ""});
    }
    ++stats.acked;
    outbox.acknowledge(env.message_id);
  }
  outbox.record_success();
  return stats;
}

std::string encode_transcript(const std::vector<TranscriptEntry>& transcript) {
  std::string out;
  for (const auto& t : transcript) {
    Json j{{"at", format_utc(t.at)},
           {"direction", t.direction},
           {"message_id", t.envelope.message_id},
           {"participant_id", t.envelope.participant_id},
           {"kind", to_string(t.envelope.kind)},
           {"client_sent_at", format_utc(t.envelope.client_sent_at)},
           {"attempt", t.envelope.attempt},
           {"body", t.envelope.body}};
    if (!t.note.empty()) j["note"] = t.note;
    const std::string line = j.dump();
    char prefix[16];
    std::snprintf(prefix, sizeof(prefix), "%08zx", line.size());
    out += prefix;
    out += line;
  }
  return out;
}

std::vector<TranscriptEntry> decode_transcript(const std::string& bytes) {
  std::vector<TranscriptEntry> out;
  size_t pos = 0;
  while (pos + 8 <= bytes.size()) {
    const size_t len = std::stoul(bytes.substr(pos, 8), nullptr, 16);
    pos += 8;
    if (pos + len > bytes.size()) throw ConfigError("truncated transcript");
    const Json j = Json::parse(bytes.substr(pos, len));
    pos += len;
    TranscriptEntry t;
    t.at = parse_utc(j.at("at").get<std::string>()).value_or(0);
    t.direction = j.at("direction").get<std::string>();
    t.envelope.message_id = j.at("message_id").get<std::string>();
    t.envelope.participant_id = j.at("participant_id").get<int>();
    t.envelope.kind = payload_kind_from_string(j.at("kind").get<std::string>());
    t.envelope.client_sent_at = parse_utc(j.at("client_sent_at").get<std::string>()).value_or(0);
    t.envelope.attempt = j.at("attempt").get<int>();
    t.envelope.body = j.at("body").get<std::string>();
    t.note = j.value("note", "");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace mrt
