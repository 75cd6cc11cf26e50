#include "mrtsim/events.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mrt {

std::string to_string(SensorStream s) { return s == SensorStream::kTracker ? "TRACKER" : "PHONE_FIT"; }

SensorStream sensor_stream_from_string(const std::string& s) {
  if (s == "TRACKER") return SensorStream::kTracker;
  if (s == "PHONE_FIT") return SensorStream::kPhoneFit;
  throw ConfigError("unknown sensor stream '" + s + "'");
}

UtcSeconds event_time(const Event& e) {
  return std::visit(
      [](const auto& ev) -> UtcSeconds {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, EvRandomization>) return ev.synced_at;
        if constexpr (std::is_same_v<T, EvDelivery>) return ev.synced_at;
        if constexpr (std::is_same_v<T, EvEngagement>) return ev.synced_at;
        if constexpr (std::is_same_v<T, EvSensor>) return ev.synced_at;
        if constexpr (std::is_same_v<T, EvSnapshot>) return ev.synced_at;
        if constexpr (std::is_same_v<T, EvDailyObservation>) return ev.synced_at;
        if constexpr (std::is_same_v<T, EvPushSent>) return ev.sent_at;
        if constexpr (std::is_same_v<T, EvQuarantine>) return ev.at;
        if constexpr (std::is_same_v<T, EvWithdrawal>) return ev.at;
        if constexpr (std::is_same_v<T, EvSyncSummary>) return std::numeric_limits<std::int64_t>::max();
        return 0;
      },
      e);
}

namespace {

int event_participant(const Event& e) {
  return std::visit(
      [](const auto& ev) -> int {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, EvRandomization>) return ev.record.participant_id;
        else if constexpr (std::is_same_v<T, EvEngagement>) return ev.engagement.participant_id;
        else if constexpr (std::is_same_v<T, EvSensor>) return ev.sample.participant_id;
        else if constexpr (std::is_same_v<T, EvDailyObservation>) return ev.observation.participant_id;
        else if constexpr (std::is_same_v<T, EvSyncSummary>) return 0;
        else return ev.participant_id;
      },
      e);
}

Json opt_time(const std::optional<UtcSeconds>& t) {
  if (!t) return nullptr;
  return format_utc(*t);
}

std::optional<UtcSeconds> time_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto t = parse_utc(j.at(key).get<std::string>());
  if (!t) throw ConfigError(std::string("bad timestamp in field '") + key + "'");
  return t;
}

Json snapshot_to_json(const ContextSnapshot& s) {
  return Json{{"captured_at", format_utc(s.captured_at)},
              {"location", to_string(s.location)},
              {"weather", to_string(s.weather)},
              {"recent_activity", s.recent_activity},
              {"driving", s.driving},
              {"connection", to_string(s.connection)}};
}

ContextSnapshot snapshot_from_json(const Json& j) {
  ContextSnapshot s;
  s.captured_at = parse_utc(j.at("captured_at").get<std::string>()).value_or(0);
  s.location = location_from_string(j.at("location").get<std::string>());
  s.weather = weather_from_string(j.at("weather").get<std::string>());
  s.recent_activity = j.at("recent_activity").get<bool>();
  s.driving = j.at("driving").get<bool>();
  s.connection = connection_from_string(j.at("connection").get<std::string>());
  return s;
}

Json event_to_json(const Event& e) {
  return std::visit(
      [](const auto& ev) -> Json {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, EvRandomization>) {
          const auto& r = ev.record;
          Json j{{"event", "randomization"},
                 {"participant_id", r.participant_id},
                 {"component_id", r.component_id},
                 {"global_index", r.global_index},
                 {"day_index", r.day_index},
                 {"slot_index", r.slot_index},
                 {"probability", r.probability.text()},
                 {"outcome", to_string(r.outcome)},
                 {"available", r.availability.available},
                 {"availability_reasons", r.availability.reasons.joined()},
                 {"evaluated_at", format_utc(r.availability.evaluated_at)},
                 {"context", snapshot_to_json(r.context)},
                 {"context_staleness_seconds", r.context_staleness_seconds},
                 {"randomized_at", opt_time(r.randomized_at)},
                 {"tz_offset_minutes", r.tz_offset_minutes},
                 {"delivered_at", opt_time(r.delivered_at)},
                 {"agent", to_string(r.agent)},
                 {"content_id", r.content_id ? Json(*r.content_id) : Json(nullptr)},
                 {"message_id", ev.message_id},
                 {"synced_at", format_utc(ev.synced_at)}};
          return j;
        } else if constexpr (std::is_same_v<T, EvDelivery>) {
          return Json{{"event", "delivery"},
                      {"participant_id", ev.participant_id},
                      {"component_id", ev.component_id},
                      {"global_index", ev.global_index},
                      {"delivered_at", format_utc(ev.delivered_at)},
                      {"tz_offset_minutes", ev.tz_offset_minutes},
                      {"context_staleness_seconds", ev.context_staleness_seconds},
                      {"content_id", ev.content_id},
                      {"message_id", ev.message_id},
                      {"synced_at", format_utc(ev.synced_at)}};
        } else if constexpr (std::is_same_v<T, EvEngagement>) {
          return Json{{"event", "engagement"},
                      {"participant_id", ev.engagement.participant_id},
                      {"component_id", ev.engagement.component_id},
                      {"global_index", ev.engagement.global_index},
                      {"kind", to_string(ev.engagement.kind)},
                      {"at", format_utc(ev.engagement.at)},
                      {"message_id", ev.message_id},
                      {"synced_at", format_utc(ev.synced_at)}};
        } else if constexpr (std::is_same_v<T, EvSensor>) {
          return Json{{"event", "sensor"},
                      {"participant_id", ev.sample.participant_id},
                      {"stream", to_string(ev.sample.stream)},
                      {"start", format_utc(ev.sample.start)},
                      {"end", format_utc(ev.sample.end)},
                      {"steps", ev.sample.steps},
                      {"message_id", ev.message_id},
                      {"synced_at", format_utc(ev.synced_at)}};
        } else if constexpr (std::is_same_v<T, EvSnapshot>) {
          Json j = snapshot_to_json(ev.snapshot);
          j["event"] = "snapshot";
          j["participant_id"] = ev.participant_id;
          j["message_id"] = ev.message_id;
          j["synced_at"] = format_utc(ev.synced_at);
          return j;
        } else if constexpr (std::is_same_v<T, EvDailyObservation>) {
          return Json{{"event", "daily_observation"},
                      {"participant_id", ev.observation.participant_id},
                      {"day_index", ev.observation.day_index},
                      {"measure_id", ev.observation.measure_id},
                      {"value", ev.observation.value},
                      {"recorded_at", format_utc(ev.observation.recorded_at)},
                      {"message_id", ev.message_id},
                      {"synced_at", format_utc(ev.synced_at)}};
        } else if constexpr (std::is_same_v<T, EvPushSent>) {
          return Json{{"event", "push_sent"},
                      {"participant_id", ev.participant_id},
                      {"component_id", ev.component_id},
                      {"global_index", ev.global_index},
                      {"sent_at", format_utc(ev.sent_at)}};
        } else if constexpr (std::is_same_v<T, EvQuarantine>) {
          return Json{{"event", "quarantine"},
                      {"message_id", ev.message_id},
                      {"participant_id", ev.participant_id},
                      {"reason", ev.reason},
                      {"at", format_utc(ev.at)},
                      {"component_id", ev.component_id},
                      {"global_index", ev.global_index}};
        } else if constexpr (std::is_same_v<T, EvWithdrawal>) {
          return Json{{"event", "withdrawal"}, {"participant_id", ev.participant_id}, {"at", format_utc(ev.at)}};
        } else {
          return Json{{"event", "sync_summary"},
                      {"enqueued", ev.enqueued},
                      {"stored", ev.stored},
                      {"duplicates", ev.duplicates},
                      {"quarantined", ev.quarantined},
                      {"acks_lost", ev.acks_lost},
                      {"prepared_rows", ev.prepared_rows},
                      {"filled_rows", ev.filled_rows}};
        }
      },
      e);
}

Event event_from_json(const Json& j) {
  const std::string kind = j.at("event").get<std::string>();
  if (kind == "randomization") {
    EvRandomization ev;
    auto& r = ev.record;
    r.participant_id = j.at("participant_id").get<int>();
    r.component_id = j.at("component_id").get<std::string>();
    r.global_index = j.at("global_index").get<int>();
    r.day_index = j.at("day_index").get<int>();
    r.slot_index = j.at("slot_index").get<int>();
    r.probability = Probability::parse(j.at("probability").get<std::string>());
    r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    r.availability.available = j.at("available").get<bool>();
    r.availability.reasons = ReasonSet::from_joined(j.at("availability_reasons").get<std::string>());
    r.availability.evaluated_at = parse_utc(j.at("evaluated_at").get<std::string>()).value_or(0);
    r.context = snapshot_from_json(j.at("context"));
    r.context_staleness_seconds = j.at("context_staleness_seconds").get<std::int64_t>();
    r.randomized_at = time_from(j, "randomized_at");
    r.tz_offset_minutes = j.at("tz_offset_minutes").get<int>();
    r.delivered_at = time_from(j, "delivered_at");
    r.agent = agent_from_string(j.at("agent").get<std::string>());
    if (!j.at("content_id").is_null()) r.content_id = j.at("content_id").get<std::string>();
    ev.message_id = j.at("message_id").get<std::string>();
    ev.synced_at = parse_utc(j.at("synced_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "delivery") {
    EvDelivery ev;
    ev.participant_id = j.at("participant_id").get<int>();
    ev.component_id = j.at("component_id").get<std::string>();
    ev.global_index = j.at("global_index").get<int>();
    ev.delivered_at = parse_utc(j.at("delivered_at").get<std::string>()).value_or(0);
    ev.tz_offset_minutes = j.at("tz_offset_minutes").get<int>();
    ev.context_staleness_seconds = j.at("context_staleness_seconds").get<std::int64_t>();
    ev.content_id = j.at("content_id").get<std::string>();
    ev.message_id = j.at("message_id").get<std::string>();
    ev.synced_at = parse_utc(j.at("synced_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "engagement") {
    EvEngagement ev;
    ev.engagement.participant_id = j.at("participant_id").get<int>();
    ev.engagement.component_id = j.at("component_id").get<std::string>();
    ev.engagement.global_index = j.at("global_index").get<int>();
    ev.engagement.kind = engagement_from_string(j.at("kind").get<std::string>());
    ev.engagement.at = parse_utc(j.at("at").get<std::string>()).value_or(0);
    ev.message_id = j.at("message_id").get<std::string>();
    ev.synced_at = parse_utc(j.at("synced_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "sensor") {
    EvSensor ev;
    ev.sample.participant_id = j.at("participant_id").get<int>();
    ev.sample.stream = sensor_stream_from_string(j.at("stream").get<std::string>());
    ev.sample.start = parse_utc(j.at("start").get<std::string>()).value_or(0);
    ev.sample.end = parse_utc(j.at("end").get<std::string>()).value_or(0);
    ev.sample.steps = j.at("steps").get<std::int64_t>();
    ev.message_id = j.at("message_id").get<std::string>();
    ev.synced_at = parse_utc(j.at("synced_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "snapshot") {
    EvSnapshot ev;
    ev.participant_id = j.at("participant_id").get<int>();
    ev.snapshot = snapshot_from_json(j);
    ev.message_id = j.at("message_id").get<std::string>();
    ev.synced_at = parse_utc(j.at("synced_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "daily_observation") {
    EvDailyObservation ev;
    ev.observation.participant_id = j.at("participant_id").get<int>();
    ev.observation.day_index = j.at("day_index").get<int>();
    ev.observation.measure_id = j.at("measure_id").get<std::string>();
    ev.observation.value = j.at("value").get<double>();
    ev.observation.recorded_at = parse_utc(j.at("recorded_at").get<std::string>()).value_or(0);
    ev.message_id = j.at("message_id").get<std::string>();
    ev.synced_at = parse_utc(j.at("synced_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "push_sent") {
    EvPushSent ev;
    ev.participant_id = j.at("participant_id").get<int>();
    ev.component_id = j.at("component_id").get<std::string>();
    ev.global_index = j.at("global_index").get<int>();
    ev.sent_at = parse_utc(j.at("sent_at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "quarantine") {
    EvQuarantine ev;
    ev.message_id = j.at("message_id").get<std::string>();
    ev.participant_id = j.at("participant_id").get<int>();
    ev.reason = j.at("reason").get<std::string>();
    ev.at = parse_utc(j.at("at").get<std::string>()).value_or(0);
    ev.component_id = j.value("component_id", "");
    ev.global_index = j.value("global_index", -1);
    return ev;
  }
  if (kind == "withdrawal") {
    EvWithdrawal ev;
    ev.participant_id = j.at("participant_id").get<int>();
    ev.at = parse_utc(j.at("at").get<std::string>()).value_or(0);
    return ev;
  }
  if (kind == "sync_summary") {
    EvSyncSummary ev;
    ev.enqueued = j.at("enqueued").get<std::int64_t>();
    ev.stored = j.at("stored").get<std::int64_t>();
    ev.duplicates = j.at("duplicates").get<std::int64_t>();
    ev.quarantined = j.at("quarantined").get<std::int64_t>();
    ev.acks_lost = j.at("acks_lost").get<std::int64_t>();
    ev.prepared_rows = j.at("prepared_rows").get<std::int64_t>();
    ev.filled_rows = j.at("filled_rows").get<std::int64_t>();
    return ev;
  }
  throw ConfigError("unknown event kind '" + kind + "'");
}

}  // namespace

void EventLog::finalize() {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    const UtcSeconds ta = event_time(a), tb = event_time(b);
    if (ta != tb) return ta < tb;
    if (a.index() != b.index()) return a.index() < b.index();
    return event_participant(a) < event_participant(b);
  });
}

std::string event_to_jsonl(const Event& e) { return event_to_json(e).dump(); }

void write_event_log(const EventLog& log, std::ostream& out) {
  Json header{{"event", "run_header"}, {"schema_version", log.schema_version}, {"scenario", log.scenario}};
  out << header.dump() << '\n';
  for (const auto& e : log.events) out << event_to_jsonl(e) << '\n';
}

void write_event_log_file(const EventLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write event log to " + path);
  write_event_log(log, out);
}

EventLog read_event_log(std::istream& in) {
  EventLog log;
  std::string line;
  bool have_header = false;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ConfigError("event log line " + std::to_string(lineno) + ": malformed JSON");
    }
    if (!have_header) {
      if (j.value("event", "") != "run_header") {
        throw ConfigError("event log must start with a run_header line");
      }
      log.schema_version = j.value("schema_version", 0);
      if (log.schema_version != kEventSchemaVersion) {
        throw ConfigError("unsupported event log schema version " + std::to_string(log.schema_version));
      }
      log.scenario = j.at("scenario");
      have_header = true;
      continue;
    }
    log.events.push_back(event_from_json(j));
  }
  if (!have_header) throw ConfigError("empty event log");
  return log;
}

EventLog read_event_log_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read event log " + path);
  return read_event_log(in);
}

}  // namespace mrt
