#include <doctest.h>

#include "mrtsim/sync.hpp"

using namespace mrt;

namespace {

std::string body(int n) {
  return std::string(R"({"event":"sensor","n":)") + std::to_string(n) + "}";
}

}  // namespace

TEST_CASE("enqueue persists in order with stable ids") {
  Outbox outbox(7);
  CHECK(outbox.enqueue(PayloadKind::kSensorSample, body(0), 100).message_id == "p007-00000000");
  CHECK(outbox.size() == 1);
  for (int i = 1; i < 100; ++i) outbox.enqueue(PayloadKind::kSensorSample, body(i), 100 + i);
  CHECK(outbox.size() == 100);
  // FIFO order preserved
  int n = 0;
  for (const auto& e : outbox.entries()) {
    CHECK(e.body == body(n));
    ++n;
  }
}

TEST_CASE("online send acks and drains everything") {
  Outbox outbox(1);
  SyncServer server;
  for (int i = 0; i < 5; ++i) outbox.enqueue(PayloadKind::kSensorSample, body(i), 0);
  const auto stats = attempt_send(outbox, server, SendOptions{}, 10, SyncPolicy{});
  CHECK(stats.sent == 5);
  CHECK(stats.acked == 5);
  CHECK(outbox.empty());
  CHECK(server.stored().size() == 5);
}

TEST_CASE("captive portal: zero removals, zero server-stored rows") {
  Outbox outbox(1);
  SyncServer server;
  outbox.enqueue(PayloadKind::kSensorSample, body(0), 0);
  SendOptions options;
  options.transport = Connection::kCaptivePortal;
  const auto stats = attempt_send(outbox, server, options, 10, SyncPolicy{});
  CHECK(stats.stored == 0);
  CHECK(outbox.size() == 1);
  CHECK(server.stored().empty());
}

TEST_CASE("a lost ack retains the entry and a later resend stores exactly one copy") {
  Outbox outbox(1);
  SyncServer server;
  outbox.enqueue(PayloadKind::kSensorSample, body(0), 0);

  SendOptions ack_lost;
  ack_lost.acks_lost = true;
  const auto first = attempt_send(outbox, server, ack_lost, 10, SyncPolicy{});
  CHECK(first.stored == 1);     // the server took it
  CHECK(first.acks_lost == 1);  // the phone never learned
  CHECK(outbox.size() == 1);

  // Backoff gates the retry.
  SyncPolicy policy;
  CHECK_FALSE(outbox.ready(10 + policy.backoff_initial_seconds - 1));
  const UtcSeconds retry_at = 10 + policy.backoff_initial_seconds;
  const auto second = attempt_send(outbox, server, SendOptions{}, retry_at, policy);
  CHECK(second.duplicates == 1);
  CHECK(second.acked == 1);
  CHECK(outbox.empty());
  CHECK(server.stored().size() == 1);
  CHECK(server.duplicate_count() == 1);
  // the retry carries the same message id with an incremented attempt
  CHECK(server.stored()[0].message_id == "p001-00000000");
}

TEST_CASE("backoff doubles from 30 s and caps at one hour") {
  SyncPolicy policy;
  CHECK(policy.backoff(1) == 30);
  CHECK(policy.backoff(2) == 60);
  CHECK(policy.backoff(3) == 120);
  CHECK(policy.backoff(8) == 3600);
  CHECK(policy.backoff(20) == 3600);
}

TEST_CASE("duplicate message ids are acked without storing") {
  SyncServer server;
  SyncEnvelope env;
  env.message_id = "p001-00000042";
  env.participant_id = 1;
  env.kind = PayloadKind::kSensorSample;
  env.body = body(42);
  CHECK(server.ingest(env, 0).status == IngestStatus::kStored);
  CHECK(server.ingest(env, 1).status == IngestStatus::kDuplicate);
  CHECK(server.ingest(env, 2).status == IngestStatus::kDuplicate);
  CHECK(server.stored().size() == 1);
  CHECK(server.duplicate_count() == 2);
}

TEST_CASE("malformed payloads are quarantined with a negative ack, never dropped silently") {
  Outbox outbox(1);
  SyncServer server;
  outbox.enqueue(PayloadKind::kSensorSample, "this is not json", 0);
  outbox.enqueue(PayloadKind::kSensorSample, body(1), 0);
  const auto stats = attempt_send(outbox, server, SendOptions{}, 10, SyncPolicy{});
  CHECK(stats.quarantined == 1);
  CHECK(stats.stored == 1);
  CHECK(outbox.empty());  // negative ack still clears the entry: the server took custody
  REQUIRE(server.quarantine().size() == 1);
  CHECK(server.quarantine()[0].reason == "malformed payload body");
}

TEST_CASE("quarantine salvages decision-point locators from partially readable bodies") {
  SyncServer server;
  SyncEnvelope env;
  env.message_id = "p001-00000001";
  env.participant_id = 1;
  // Parseable JSON object, but missing the required "event" tag.
  env.body = R"({"component_id":"suggestions","global_index":17})";
  CHECK(server.ingest(env, 0).status == IngestStatus::kQuarantined);
  REQUIRE(server.quarantine().size() == 1);
  CHECK(server.quarantine()[0].component_id == "suggestions");
  CHECK(server.quarantine()[0].global_index == 17);
}

TEST_CASE("identical payload bodies are distinct messages, never conflated") {
  Outbox outbox(1);
  SyncServer server;
  // two identical zero-step reports
  outbox.enqueue(PayloadKind::kSensorSample, body(0), 0);
  outbox.enqueue(PayloadKind::kSensorSample, body(0), 0);
  attempt_send(outbox, server, SendOptions{}, 10, SyncPolicy{});
  CHECK(server.stored().size() == 2);
}

TEST_CASE("transcript wire format round trips") {
  Outbox outbox(3);
  SyncServer server;
  outbox.enqueue(PayloadKind::kEngagement, body(5), 100);
  std::vector<TranscriptEntry> transcript;
  attempt_send(outbox, server, SendOptions{}, 120, SyncPolicy{}, &transcript);
  REQUIRE(transcript.size() == 2);  // send + ack
  const std::string bytes = encode_transcript(transcript);
  const auto back = decode_transcript(bytes);
  REQUIRE(back.size() == 2);
  CHECK(back[0].direction == "send");
  CHECK(back[0].envelope.message_id == transcript[0].envelope.message_id);
  CHECK(back[0].envelope.body == transcript[0].envelope.body);
  CHECK(back[1].direction == "ack");
  CHECK(encode_transcript(back) == bytes);
}
