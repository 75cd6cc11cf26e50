#include "mrtsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "mrtsim/rng.hpp"

namespace mrt {

std::uint64_t hash_body(const std::string& body) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : body) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

GroundTruthLedger::GroundTruthLedger(UtcSeconds t0, int participant_count, std::int64_t total_minutes)
    : t0_(t0), total_minutes_(total_minutes) {
  baseline_.assign(participant_count, std::vector<std::uint16_t>(total_minutes, 0));
  injected_.assign(participant_count, std::vector<std::uint16_t>(total_minutes, 0));
}

void GroundTruthLedger::add_baseline(int participant_id, std::int64_t minute_index, int steps) {
  if (minute_index < 0 || minute_index >= total_minutes_) return;
  baseline_[participant_id - 1][minute_index] += static_cast<std::uint16_t>(steps);
}

void GroundTruthLedger::add_injected(int participant_id, std::int64_t minute_index, int steps) {
  if (minute_index < 0 || minute_index >= total_minutes_) return;
  injected_[participant_id - 1][minute_index] += static_cast<std::uint16_t>(steps);
}

std::int64_t GroundTruthLedger::minute_steps(int participant_id, std::int64_t minute_index) const {
  if (minute_index < 0 || minute_index >= total_minutes_) return 0;
  return baseline_[participant_id - 1][minute_index] + injected_[participant_id - 1][minute_index];
}

std::int64_t GroundTruthLedger::true_steps(int participant_id, UtcSeconds start, UtcSeconds end) const {
  std::int64_t sum = 0;
  for (std::int64_t m = (start - t0_) / 60; m * 60 + t0_ < end; ++m) {
    if (m < 0) continue;
    if (m >= total_minutes_) break;
    sum += minute_steps(participant_id, m);
  }
  return sum;
}

std::int64_t GroundTruthLedger::baseline_steps(int participant_id, UtcSeconds start, UtcSeconds end) const {
  std::int64_t sum = 0;
  for (std::int64_t m = (start - t0_) / 60; m * 60 + t0_ < end; ++m) {
    if (m < 0) continue;
    if (m >= total_minutes_) break;
    sum += baseline_[participant_id - 1][m];
  }
  return sum;
}

void GroundTruthLedger::write_file(const std::string& path, const Json& scenario) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write ledger to " + path);
  Json header{{"record", "ledger_header"},
              {"sealed", true},
              {"t0", format_utc(t0_)},
              {"total_minutes", total_minutes_},
              {"participants", static_cast<int>(baseline_.size())},
              {"scenario", scenario}};
  out << header.dump() << '\n';
  for (size_t p = 0; p < baseline_.size(); ++p) {
    for (std::int64_t day = 0; day * kMinutesPerDay < total_minutes_; ++day) {
      const std::int64_t lo = day * kMinutesPerDay;
      const std::int64_t hi = std::min<std::int64_t>(lo + kMinutesPerDay, total_minutes_);
      Json base = Json::array(), inj = Json::array();
      bool any = false;
      for (std::int64_t m = lo; m < hi; ++m) {
        base.push_back(baseline_[p][m]);
        inj.push_back(injected_[p][m]);
        any = any || baseline_[p][m] || injected_[p][m];
      }
      if (!any) continue;
      out << Json{{"record", "true_steps"},
                  {"participant_id", static_cast<int>(p + 1)},
                  {"day_offset", day},
                  {"baseline", std::move(base)},
                  {"injected", std::move(inj)}}
                 .dump()
          << '\n';
    }
  }
  for (const auto& e : effects) {
    out << Json{{"record", "effect"},
                {"participant_id", e.participant_id},
                {"component_id", e.component_id},
                {"global_index", e.global_index},
                {"window_start", format_utc(e.window_start)},
                {"window_end", format_utc(e.window_end)},
                {"delta_steps", e.delta_steps}}
               .dump()
        << '\n';
  }
  for (const auto& c : causes) {
    out << Json{{"record", "cause"},
                {"kind", to_string(c.kind)},
                {"participant_id", c.participant_id},
                {"start", format_utc(c.start)},
                {"end", format_utc(c.end)}}
               .dump()
        << '\n';
  }
  for (const auto& pl : payloads) {
    out << Json{{"record", "payload"},
                {"message_id", pl.message_id},
                {"kind", to_string(pl.kind)},
                {"body_hash", pl.body_hash}}
               .dump()
        << '\n';
  }
}

ServerTable ServerTable::prepare(const TrialConfig& config) {
  ServerTable t;
  for (int p = 1; p <= config.participant_count; ++p) {
    for (size_t ci = 0; ci < config.components.size(); ++ci) {
      const int n = config.study_days * config.components[ci].decision_points_per_day;
      for (int g = 0; g < n; ++g) {
        t.rows_.emplace(std::make_tuple(p, static_cast<int>(ci), g), false);
      }
    }
  }
  return t;
}

void ServerTable::fill(int participant_id, int component_index, int global_index) {
  const auto it = rows_.find(std::make_tuple(participant_id, component_index, global_index));
  if (it == rows_.end()) throw std::logic_error("server table: fill outside the pre-built schedule");
  if (it->second) throw std::logic_error("server table: row already filled");
  it->second = true;
  ++filled_count_;
}

bool ServerTable::filled(int participant_id, int component_index, int global_index) const {
  const auto it = rows_.find(std::make_tuple(participant_id, component_index, global_index));
  return it != rows_.end() && it->second;
}

namespace {

using rng::Stream;

constexpr std::int64_t kPrefetchLeadSeconds = 30 * 60;
constexpr std::int64_t kPushExpirySeconds = 24 * 3600;
constexpr std::int64_t kDrainSeconds = 24 * 3600;

struct DpFire {
  UtcSeconds fired = 0;
  int component_index = 0;
  int day_index = 0;
  int slot_index = 0;
  int global_index = 0;
};

struct PendingEngagement {
  UtcSeconds respond_at = 0;
  UtcSeconds timeout_at = 0;
  EngagementKind kind = EngagementKind::kNoResponse;
  int component_index = 0;
  int global_index = 0;
  bool done = false;
};

struct PendingPush {
  UtcSeconds arrival = 0;
  UtcSeconds randomized_at = 0;
  int component_index = 0;
  int day_index = 0;
  int global_index = 0;
  std::string content_id;
  bool done = false;
};

struct InjectionWindow {
  std::int64_t start_minute = 0;  // minute index since t0
  int width = 0;
  std::int64_t delta = 0;
};

struct Toggle {
  UtcSeconds at = 0;
  FaultKind kind = FaultKind::kConnectivityLoss;
  int delta = 0;  // +1 window opens, -1 window closes
};

struct FitBout {
  bool open = false;
  UtcSeconds start = 0;
  std::int64_t true_steps = 0;
};

struct Participant {
  int id = 0;
  TravelItinerary itinerary;
  TravelItinerary phone_itin;
  double bout_start_p = 0.03;

  // fault depths; state derives from them
  int connectivity_loss = 0, captive = 0, app_kill = 0, power_off = 0;
  int tracker_dead = 0, bt_off = 0, gps_off = 0, ack_loss = 0, push_drop = 0;
  bool withdrawn = false;

  bool in_bout = false;
  int prev1_steps = 0, prev2_steps = 0;

  SnoozeState snooze;
  Outbox outbox;
  std::vector<SensorSample> tracker_buffer;
  std::vector<SensorSample> fit_os_buffer;
  FitBout fit;
  std::vector<std::optional<PrefetchedContent>> cache;
  ContextSnapshot last_capture;
  bool has_capture = false;

  std::vector<InjectionWindow> injections;
  std::vector<PendingEngagement> engagements;
  size_t engagement_head = 0;
  std::vector<PendingPush> pushes;
  size_t push_head = 0;

  std::vector<Toggle> toggles;
  size_t toggle_head = 0;
  std::vector<DpFire> fires;  // phone view (phone agent) or true view (server agent)
  size_t fire_head = 0;
  std::vector<UtcSeconds> prefetch_times;
  size_t prefetch_head = 0;

  UtcSeconds local_study_end_utc = 0;
  UtcSeconds withdrawn_at = std::numeric_limits<std::int64_t>::max();

  Participant() : outbox(0) {}

  bool phone_up() const { return power_off == 0; }
  bool app_up() const { return power_off == 0 && app_kill == 0; }
  Connection transport() const {
    if (captive > 0) return Connection::kCaptivePortal;
    if (connectivity_loss > 0) return Connection::kOffline;
    return Connection::kOnline;
  }
};

class Simulation {
 public:
  Simulation(const ScenarioConfig& scenario, const RunOptions& options)
      : sc_(scenario), opt_(options), server_agent_(scenario.agent == Agent::kServer) {}

  RunResult execute();

 private:
  const ScenarioConfig& sc_;
  RunOptions opt_;
  bool server_agent_;

  UtcSeconds t0_ = 0;
  UtcSeconds run_end_ = 0;
  std::int64_t date0_days_ = 0;

  std::vector<Participant> parts_;
  SyncServer server_;
  size_t stored_seen_ = 0;
  size_t quarantine_seen_ = 0;
  std::vector<TranscriptEntry> transcript_;
  std::unordered_map<std::string, Event> pending_typed_;
  std::vector<ContextSnapshot> server_snapshot_;  // latest synced per participant
  std::vector<bool> server_has_snapshot_;
  std::vector<SnoozeState> server_snooze_;

  EventLog log_;
  GroundTruthLedger ledger_;
  RunSummary summary_;
  std::optional<ServerTable> table_;
  SendStats sync_totals_;

  std::int64_t minute_index(UtcSeconds t) const { return (t - t0_) / 60; }

  void setup();
  void apply_toggles(Participant& p, UtcSeconds now);
  int behavior_minute(Participant& p, UtcSeconds now);
  ContextSnapshot capture(Participant& p, UtcSeconds now);
  void enqueue_event(Participant& p, PayloadKind kind, Event typed, UtcSeconds now);
  void do_sync(Participant& p, UtcSeconds now);
  void process_prefetch(Participant& p, UtcSeconds now);
  void process_decision_points(Participant& p, UtcSeconds now);
  void process_pushes(Participant& p, UtcSeconds now);
  void process_engagements(Participant& p, UtcSeconds now);
  void process_daily_obs(Participant& p, UtcSeconds now);
  void register_delivery_effect(Participant& p, int component_index, int day_index, int global_index,
                                const std::string& content_id, UtcSeconds delivered_at, bool from_push);
  void schedule_engagement(Participant& p, const RandomizationRecord& rec, int component_index);
  std::string choose_content(const Participant& p, int component_index, int global_index) const;
  bool driving_now(const Participant& p, std::int64_t local_day, int local_minute) const;
  LocationCategory location_now(const Participant& p, std::int64_t local_day, int local_minute) const;
  WeatherTag weather_of_day(std::int64_t local_day) const;
};

void Simulation::setup() {
  sc_.validate();
  t0_ = scenario_start_utc(sc_);
  date0_days_ = days_from_civil(sc_.trial.start_date);

  parts_.resize(sc_.trial.participant_count);
  UtcSeconds latest_end = 0;
  std::vector<LedgerCause> pending_causes;

  for (int i = 0; i < sc_.trial.participant_count; ++i) {
    Participant& p = parts_[i];
    p.id = i + 1;
    p.outbox = Outbox(p.id);
    p.itinerary = itinerary_for(sc_, p.id);
    p.phone_itin = phone_itinerary_for(sc_, p.id);
    const double jitter = 2.0 * rng::uniform01(sc_.seed, Stream::kParticipantTrait, p.id) - 1.0;
    p.bout_start_p = sc_.behavior.bout_start_prob * (1.0 + sc_.behavior.rate_heterogeneity * jitter);
    p.cache.assign(sc_.trial.components.size(), std::nullopt);

    const std::int64_t local_end = (date0_days_ + sc_.trial.study_days) * kSecondsPerDay;
    p.local_study_end_utc = first_utc_at_or_after_local(local_end, p.itinerary);
    latest_end = std::max(latest_end, p.local_study_end_utc);

    const TravelItinerary& sched_itin = server_agent_ ? p.itinerary : p.phone_itin;
    for (size_t ci = 0; ci < sc_.trial.components.size(); ++ci) {
      const auto& comp = sc_.trial.components[ci];
      const DailyWindow w = comp.window.value_or(sc_.trial.waking_window);
      for (int day = 0; day < sc_.trial.study_days; ++day) {
        for (int slot = 0; slot < comp.decision_points_per_day; ++slot) {
          const std::int64_t local_target =
              (date0_days_ + day) * kSecondsPerDay +
              std::int64_t{slot_minute(w, comp.decision_points_per_day, slot)} * 60;
          DpFire f;
          f.fired = first_utc_at_or_after_local(local_target, sched_itin);
          f.component_index = static_cast<int>(ci);
          f.day_index = day;
          f.slot_index = slot;
          f.global_index = day * comp.decision_points_per_day + slot;
          p.fires.push_back(f);
          p.prefetch_times.push_back(f.fired - kPrefetchLeadSeconds);
          ++summary_.decision_points_scheduled;
        }
      }
    }
    std::sort(p.fires.begin(), p.fires.end(), [](const DpFire& a, const DpFire& b) {
      if (a.fired != b.fired) return a.fired < b.fired;
      if (a.component_index != b.component_index) return a.component_index < b.component_index;
      return a.global_index < b.global_index;
    });
    std::sort(p.prefetch_times.begin(), p.prefetch_times.end());

    for (const auto& f : sc_.faults) {
      if (!f.applies_to(p.id)) continue;
      ++summary_.faults_fired;
      if (f.kind == FaultKind::kDropout) {
        p.withdrawn_at = *f.start_utc;
        pending_causes.push_back(LedgerCause{f.kind, p.id, *f.start_utc, 0});
        continue;
      }
      if (f.kind == FaultKind::kTimezoneTravel) {
        pending_causes.push_back(LedgerCause{f.kind, p.id, *f.start_utc, *f.start_utc});
        continue;
      }
      p.toggles.push_back(Toggle{*f.start_utc, f.kind, +1});
      p.toggles.push_back(Toggle{*f.end_utc, f.kind, -1});
      pending_causes.push_back(LedgerCause{f.kind, p.id, *f.start_utc, *f.end_utc});
    }
    std::sort(p.toggles.begin(), p.toggles.end(), [](const Toggle& a, const Toggle& b) {
      if (a.at != b.at) return a.at < b.at;
      return a.delta > b.delta;
    });
  }

  run_end_ = latest_end + kDrainSeconds;
  const std::int64_t total_minutes = (run_end_ - t0_) / 60 + 1;
  ledger_ = GroundTruthLedger(t0_, sc_.trial.participant_count, total_minutes);
  for (auto& c : pending_causes) {
    if (c.kind == FaultKind::kDropout) c.end = run_end_;
    ledger_.causes.push_back(c);
  }

  server_snapshot_.resize(sc_.trial.participant_count + 1);
  server_has_snapshot_.assign(sc_.trial.participant_count + 1, false);
  server_snooze_.assign(sc_.trial.participant_count + 1, SnoozeState{});
  if (server_agent_) {
    table_ = ServerTable::prepare(sc_.trial);
    summary_.server_prepared_rows = table_->prepared_count();
  }
  log_.scenario = sc_.to_json();
}

void Simulation::apply_toggles(Participant& p, UtcSeconds now) {
  while (p.toggle_head < p.toggles.size() && p.toggles[p.toggle_head].at <= now) {
    const Toggle& t = p.toggles[p.toggle_head++];
    int* counter = nullptr;
    switch (t.kind) {
      case FaultKind::kConnectivityLoss: counter = &p.connectivity_loss; break;
      case FaultKind::kCaptivePortal: counter = &p.captive; break;
      case FaultKind::kAppSwipeKill: counter = &p.app_kill; break;
      case FaultKind::kPhonePowerOff: counter = &p.power_off; break;
      case FaultKind::kTrackerBatteryDead: counter = &p.tracker_dead; break;
      case FaultKind::kBluetoothOff: counter = &p.bt_off; break;
      case FaultKind::kGpsOff: counter = &p.gps_off; break;
      case FaultKind::kAckLoss: counter = &p.ack_loss; break;
      case FaultKind::kPushDrop: counter = &p.push_drop; break;
      default: break;
    }
    if (counter) *counter += t.delta;
  }
  if (!p.withdrawn && now >= p.withdrawn_at) {
    p.withdrawn = true;
    log_.events.push_back(EvWithdrawal{p.id, p.withdrawn_at});
  }
}

bool Simulation::driving_now(const Participant& p, std::int64_t local_day, int local_minute) const {
  if (!rng::bernoulli(sc_.behavior.daily_drive_prob, sc_.seed, Stream::kDriving, p.id, local_day)) return false;
  const int start = 8 * 60 + static_cast<int>(rng::below(11 * 60, sc_.seed, Stream::kDriving, p.id, local_day, 1));
  return local_minute >= start && local_minute < start + sc_.behavior.drive_window_minutes;
}

LocationCategory Simulation::location_now(const Participant& p, std::int64_t local_day, int local_minute) const {
  if (p.gps_off > 0) return LocationCategory::kUnknown;
  const int dow = weekday_from_days(date0_days_ + local_day);
  const bool weekend = dow >= 5;
  if (weekend) {
    const bool outing = rng::bernoulli(0.5, sc_.seed, Stream::kLocation, p.id, local_day);
    if (outing && local_minute >= 14 * 60 && local_minute < 16 * 60) return LocationCategory::kOther;
    return LocationCategory::kHome;
  }
  if (local_minute < 8 * 60 + 30 || local_minute >= 17 * 60 + 30) return LocationCategory::kHome;
  if (local_minute >= 9 * 60 && local_minute < 17 * 60) return LocationCategory::kWork;
  return LocationCategory::kOther;  // commuting
}

WeatherTag Simulation::weather_of_day(std::int64_t local_day) const {
  const double u = rng::uniform01(sc_.seed, Stream::kWeather, static_cast<std::uint64_t>(local_day));
  if (u < 0.50) return WeatherTag::kClear;
  if (u < 0.80) return WeatherTag::kCloudy;
  if (u < 0.95) return WeatherTag::kRain;
  return WeatherTag::kSnow;
}

int Simulation::behavior_minute(Participant& p, UtcSeconds now) {
  const std::int64_t local = local_seconds_at(now, p.itinerary);
  const std::int64_t local_day = local / kSecondsPerDay - date0_days_;
  const int local_minute = static_cast<int>((local % kSecondsPerDay) / 60);
  if (local_day < 0 || local_day >= sc_.trial.study_days || p.withdrawn) {
    p.in_bout = false;
    return 0;
  }
  const bool asleep =
      local_minute >= sc_.behavior.sleep_start_minute || local_minute < sc_.behavior.sleep_end_minute;
  if (asleep || driving_now(p, local_day, local_minute)) {
    p.in_bout = false;
    return 0;
  }
  const std::int64_t m = minute_index(now);
  if (p.in_bout) {
    if (rng::bernoulli(sc_.behavior.bout_stop_prob, sc_.seed, Stream::kBoutTransition, p.id, m)) {
      p.in_bout = false;
    }
  } else {
    if (rng::bernoulli(p.bout_start_p, sc_.seed, Stream::kBoutTransition, p.id, m)) p.in_bout = true;
  }
  if (!p.in_bout) return 0;
  const int lo = sc_.behavior.steps_per_active_minute_min;
  const int hi = sc_.behavior.steps_per_active_minute_max;
  return lo + static_cast<int>(rng::below(hi - lo + 1, sc_.seed, Stream::kStepsPerMinute, p.id, m));
}

ContextSnapshot Simulation::capture(Participant& p, UtcSeconds now) {
  const std::int64_t local = local_seconds_at(now, p.itinerary);
  const std::int64_t local_day = local / kSecondsPerDay - date0_days_;
  const int local_minute = static_cast<int>((local % kSecondsPerDay) / 60);
  ContextSnapshot s;
  s.captured_at = now;
  s.connection = p.transport();
  s.location = location_now(p, local_day, local_minute);
  s.recent_activity = p.prev1_steps > 0 || p.prev2_steps > 0;
  s.driving = driving_now(p, local_day, local_minute);
  if (s.connection == Connection::kOnline) {
    s.weather = weather_of_day(local_day);
  } else {
    s.weather = p.has_capture ? p.last_capture.weather : WeatherTag::kUnknown;
  }
  p.last_capture = s;
  p.has_capture = true;
  return s;
}

void Simulation::enqueue_event(Participant& p, PayloadKind kind, Event typed, UtcSeconds now) {
  const std::string body = opt_.lean ? std::string(R"({"event":"lean"})") : event_to_jsonl(typed);
  SyncEnvelope& env = p.outbox.enqueue(kind, body, now);
  ledger_.payloads.push_back(PayloadFingerprint{env.message_id, kind, hash_body(env.body)});
  ++summary_.payloads_generated;
  pending_typed_.emplace(env.message_id, std::move(typed));
}

void Simulation::do_sync(Participant& p, UtcSeconds now) {
  if (!p.phone_up() || !p.app_up() || p.outbox.empty()) return;
  SendOptions options;
  options.transport = p.transport();
  options.acks_lost = p.ack_loss > 0;
  const SendStats stats =
      attempt_send(p.outbox, server_, options, now, sc_.sync, opt_.keep_transcript ? &transcript_ : nullptr);
  sync_totals_.sent += stats.sent;
  sync_totals_.acked += stats.acked;
  sync_totals_.stored += stats.stored;
  sync_totals_.duplicates += stats.duplicates;
  sync_totals_.quarantined += stats.quarantined;
  sync_totals_.acks_lost += stats.acks_lost;

  const auto& stored = server_.stored();
  for (; stored_seen_ < stored.size(); ++stored_seen_) {
    const StoredPayload& sp = stored[stored_seen_];
    auto it = pending_typed_.find(sp.message_id);
    if (it == pending_typed_.end()) continue;
    Event e = std::move(it->second);
    pending_typed_.erase(it);
    std::visit(
        [&](auto& ev) {
          using T = std::decay_t<decltype(ev)>;
          if constexpr (!std::is_same_v<T, EvPushSent> && !std::is_same_v<T, EvQuarantine> &&
                        !std::is_same_v<T, EvWithdrawal> && !std::is_same_v<T, EvSyncSummary>) {
            ev.message_id = sp.message_id;
            ev.synced_at = sp.received_at;
          }
        },
        e);
    // Server-side state fed by synced payloads.
    if (const auto* snap = std::get_if<EvSnapshot>(&e)) {
      if (!server_has_snapshot_[snap->participant_id] ||
          snap->snapshot.captured_at >= server_snapshot_[snap->participant_id].captured_at) {
        server_snapshot_[snap->participant_id] = snap->snapshot;
        server_has_snapshot_[snap->participant_id] = true;
      }
    } else if (const auto* eng = std::get_if<EvEngagement>(&e)) {
      if (eng->engagement.kind == EngagementKind::kSnoozeSet) {
        server_snooze_[eng->engagement.participant_id] =
            SnoozeState::set(eng->engagement.at, sc_.behavior.snooze_duration_seconds);
      }
    }
    log_.events.push_back(std::move(e));
  }
  const auto& quarantined = server_.quarantine();
  for (; quarantine_seen_ < quarantined.size(); ++quarantine_seen_) {
    const QuarantinedPayload& qp = quarantined[quarantine_seen_];
    pending_typed_.erase(qp.message_id);
    log_.events.push_back(EvQuarantine{qp.message_id, qp.participant_id, qp.reason, qp.received_at,
                                       qp.component_id, qp.global_index});
  }
}

std::string Simulation::choose_content(const Participant& p, int component_index, int global_index) const {
  return rng::bernoulli(0.5, sc_.seed, Stream::kContentChoice, p.id, component_index, global_index)
             ? "walk"
             : "sedentary_break";
}

void Simulation::register_delivery_effect(Participant& p, int component_index, int day_index, int global_index,
                                          const std::string& content_id, UtcSeconds delivered_at, bool from_push) {
  const auto& comp = sc_.trial.components[component_index];
  const EffectSpec* eff = sc_.effect_for(comp.id);
  if (!eff || eff->delta_steps == 0) return;

  double delta = eff->delta_steps;
  if (eff->decay_to_zero_day) {
    const int d = *eff->decay_to_zero_day;
    delta = day_index >= d ? 0.0
                           : delta - (static_cast<double>(eff->delta_steps) / d) * day_index;
  }
  if (content_id == "walk") {
    delta *= eff->walk_multiplier;
  } else if (content_id == "sedentary_break") {
    delta *= eff->sedentary_multiplier;
  }
  const int dow = weekday_from_days(date0_days_ + day_index);
  if (dow >= 5) delta *= eff->weekend_multiplier;
  const std::int64_t delta_steps = static_cast<std::int64_t>(std::llround(delta));
  if (delta_steps <= 0) return;

  InjectionWindow w;
  if (comp.proximal_window.kind == ProximalWindow::Kind::kPostWindowMinutes) {
    w.start_minute = minute_index(delivered_at) + (from_push ? 1 : 0);
    w.width = comp.proximal_window.minutes;
  } else {
    // Planning: the effect lands on the following local day's waking window.
    const std::int64_t next_day_wake =
        (date0_days_ + day_index + 1) * kSecondsPerDay + std::int64_t{sc_.behavior.sleep_end_minute} * 60;
    w.start_minute = minute_index(first_utc_at_or_after_local(next_day_wake, p.itinerary));
    w.width = sc_.behavior.sleep_start_minute - sc_.behavior.sleep_end_minute;
  }
  w.delta = delta_steps;
  p.injections.push_back(w);
  ledger_.effects.push_back(LedgerEffect{p.id, comp.id, global_index, (t0_ + w.start_minute * 60),
                                         (t0_ + (w.start_minute + w.width) * 60), delta_steps});
}

void Simulation::schedule_engagement(Participant& p, const RandomizationRecord& rec, int component_index) {
  const UtcSeconds delivered = *rec.delivered_at;
  const double u = rng::uniform01(sc_.seed, Stream::kEngagement, p.id, component_index, rec.global_index);
  PendingEngagement pe;
  pe.component_index = component_index;
  pe.global_index = rec.global_index;
  pe.timeout_at = delivered + kEngagementTimeoutSeconds;
  const auto& b = sc_.behavior;
  if (u < b.snooze_prob) {
    pe.kind = EngagementKind::kSnoozeSet;
  } else if (u < b.snooze_prob + b.thumbs_prob) {
    pe.kind = rng::bernoulli(b.thumbs_up_fraction, sc_.seed, Stream::kEngagement, p.id, component_index,
                             rec.global_index, 1)
                  ? EngagementKind::kThumbsUp
                  : EngagementKind::kThumbsDown;
  } else {
    pe.kind = EngagementKind::kNoResponse;
  }
  if (pe.kind == EngagementKind::kNoResponse) {
    pe.respond_at = pe.timeout_at;
  } else {
    pe.respond_at =
        delivered + 60 * (1 + static_cast<std::int64_t>(rng::below(28, sc_.seed, Stream::kEngagement, p.id,
                                                                   component_index, rec.global_index, 2)));
  }
  p.engagements.push_back(pe);
}

void Simulation::process_prefetch(Participant& p, UtcSeconds now) {
  bool due = false;
  while (p.prefetch_head < p.prefetch_times.size() && p.prefetch_times[p.prefetch_head] <= now) {
    due = due || p.prefetch_times[p.prefetch_head] > now - kSecondsPerMinute;
    ++p.prefetch_head;
  }
  if (!due || !p.phone_up() || !p.app_up() || p.withdrawn) return;
  const ContextSnapshot snap = capture(p, now);
  enqueue_event(p, PayloadKind::kSnapshot, EvSnapshot{p.id, snap, "", 0}, now);
  if (snap.connection != Connection::kOnline) return;
  // Cache content for every component's next upcoming decision point.
  for (size_t ci = 0; ci < sc_.trial.components.size(); ++ci) {
    for (size_t fi = p.fire_head; fi < p.fires.size(); ++fi) {
      const DpFire& f = p.fires[fi];
      if (f.component_index != static_cast<int>(ci) || f.fired < now) continue;
      if (f.fired - now > kPrefetchLeadSeconds + 60) break;
      PrefetchedContent pc;
      pc.participant_id = p.id;
      pc.component_id = sc_.trial.components[ci].id;
      pc.global_index = f.global_index;
      pc.content_id = choose_content(p, static_cast<int>(ci), f.global_index);
      pc.fetched_at = now;
      pc.context_used = snap;
      p.cache[ci] = std::move(pc);
      break;
    }
  }
}

void Simulation::process_decision_points(Participant& p, UtcSeconds now) {
  while (p.fire_head < p.fires.size() && p.fires[p.fire_head].fired <= now) {
    const DpFire f = p.fires[p.fire_head++];
    const auto& comp = sc_.trial.components[f.component_index];

    DecisionPoint dp;
    dp.participant_id = p.id;
    dp.component_index = f.component_index;
    dp.component_id = comp.id;
    dp.day_index = f.day_index;
    dp.slot_index = f.slot_index;
    dp.global_index = f.global_index;

    if (p.withdrawn) {
      ++summary_.missed_decision_points;
      continue;
    }

    if (server_agent_) {
      // Context collection is agent-independent: the phone still captures at
      // the scheduled instant and syncs before the server's decision step.
      if (p.phone_up() && p.app_up()) {
        const ContextSnapshot snap = capture(p, now);
        enqueue_event(p, PayloadKind::kSnapshot, EvSnapshot{p.id, snap, "", 0}, now);
        do_sync(p, now);
      }
      // The server randomizes on its own clock with the freshest synced
      // snapshot; a silent phone degrades to a stale capture and the
      // conservative NO_CONNECTION path, but the row always gets filled.
      ContextSnapshot snap =
          server_has_snapshot_[p.id] ? server_snapshot_[p.id] : ContextSnapshot{};
      if (!server_has_snapshot_[p.id]) snap.captured_at = std::numeric_limits<std::int64_t>::min() / 8;
      const AvailabilityResult avail =
          evaluate_availability(snap, server_snooze_[p.id], f.fired, sc_.availability);
      RandomizationRecord rec =
          randomize(dp, avail, comp.randomization_probability, sc_.seed, f.fired, Agent::kServer);
      rec.context = snap;
      rec.context_staleness_seconds =
          server_has_snapshot_[p.id] ? snap.staleness_seconds(f.fired) : -1;
      rec.tz_offset_minutes = p.itinerary.segment_at(f.fired).offset_minutes;
      table_->fill(p.id, f.component_index, f.global_index);
      ++summary_.records;
      if (!avail.available) ++summary_.not_randomized;

      if (rec.outcome == Outcome::kTreat) {
        ++summary_.treatments;
        const std::string content = choose_content(p, f.component_index, f.global_index);
        rec.content_id = content;
        const bool dropped =
            p.push_drop > 0 ||
            rng::bernoulli(sc_.push.drop_probability, sc_.seed, Stream::kPushDrop, p.id, f.component_index,
                           f.global_index);
        log_.events.push_back(EvPushSent{p.id, comp.id, f.global_index, f.fired});
        if (!dropped) {
          std::int64_t delay_s = 0;
          if (sc_.push.enabled) {
            delay_s = std::max<std::int64_t>(
                1, std::llround(rng::lognormal_from_median(sc_.push.median_delay_seconds, sc_.push.sigma,
                                                           sc_.seed, Stream::kPushDelay, p.id,
                                                           f.component_index, f.global_index)));
          }
          PendingPush push;
          push.arrival = f.fired + delay_s;
          push.randomized_at = f.fired;
          push.component_index = f.component_index;
          push.day_index = f.day_index;
          push.global_index = f.global_index;
          push.content_id = content;
          p.pushes.push_back(push);
        }
      }
      // The server's own record needs no phone sync.
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "srv-%03d-%zu", p.id, static_cast<size_t>(f.component_index) * 100000 +
                                                                    static_cast<size_t>(f.global_index));
      log_.events.push_back(EvRandomization{std::move(rec), idbuf, f.fired});
      continue;
    }

    // Phone agent.
    if (!p.phone_up() || !p.app_up()) {
      ++summary_.missed_decision_points;
      continue;
    }
    ContextSnapshot snap = capture(p, now);
    enqueue_event(p, PayloadKind::kSnapshot, EvSnapshot{p.id, snap, "", 0}, now);

    const auto& cache = p.cache[f.component_index];
    ContextSnapshot eval = snap;
    const EffectiveContext ec = effective_context(snap.connection, cache, f.fired, sc_.availability);
    if (snap.connection != Connection::kOnline && ec.via_cache) {
      eval.connection = ec.connection;
      eval.weather = cache->context_used.weather;
      eval.captured_at = cache->fetched_at;
    }
    const AvailabilityResult avail = evaluate_availability(eval, p.snooze, f.fired, sc_.availability);
    RandomizationRecord rec =
        randomize(dp, avail, comp.randomization_probability, sc_.seed, f.fired, Agent::kPhone);
    rec.context = eval;
    rec.context_staleness_seconds = eval.staleness_seconds(f.fired);
    rec.tz_offset_minutes = p.phone_itin.segment_at(f.fired).offset_minutes;
    ++summary_.records;
    if (!avail.available) ++summary_.not_randomized;

    if (rec.outcome == Outcome::kTreat) {
      ++summary_.treatments;
      const DeliveryDecision decision =
          phone_delivery(snap.connection, cache, f.fired, sc_.availability,
                         choose_content(p, f.component_index, f.global_index));
      if (decision.deliverable) {
        rec.content_id = decision.content_id;
        rec.delivered_at = f.fired;
      }
      if (rec.delivered_at) {
        ++summary_.deliveries;
        register_delivery_effect(p, f.component_index, f.day_index, f.global_index, *rec.content_id, f.fired,
                                 false);
        schedule_engagement(p, rec, f.component_index);
      }
      // Undeliverable TREAT keeps its draw; the pipeline codes it.
    }
    enqueue_event(p, PayloadKind::kRandomizationRecord, EvRandomization{std::move(rec), "", 0}, now);
  }
}

void Simulation::process_pushes(Participant& p, UtcSeconds now) {
  for (size_t i = p.push_head; i < p.pushes.size(); ++i) {
    PendingPush& push = p.pushes[i];
    if (push.done) continue;
    if (push.arrival > now) continue;
    if (now - push.randomized_at > kPushExpirySeconds) {
      push.done = true;  // expired: a TREAT that never reached the phone
      continue;
    }
    if (!p.phone_up() || !p.app_up() || p.transport() != Connection::kOnline) continue;
    push.done = true;
    // Sub-minute arrival keeps its true second; deferred pushes land now.
    const UtcSeconds delivered = push.arrival > now - kSecondsPerMinute ? push.arrival : now;
    ++summary_.deliveries;
    const auto& comp = sc_.trial.components[push.component_index];
    const std::int64_t staleness =
        p.has_capture ? delivered - p.last_capture.captured_at : -1;
    EvDelivery d;
    d.participant_id = p.id;
    d.component_id = comp.id;
    d.global_index = push.global_index;
    d.delivered_at = delivered;
    d.tz_offset_minutes = p.phone_itin.segment_at(delivered).offset_minutes;
    d.context_staleness_seconds = staleness;
    d.content_id = push.content_id;
    enqueue_event(p, PayloadKind::kDeliveryReceipt, std::move(d), now);
    register_delivery_effect(p, push.component_index, push.day_index, push.global_index, push.content_id,
                             delivered, true);
    RandomizationRecord stub;
    stub.participant_id = p.id;
    stub.component_id = comp.id;
    stub.global_index = push.global_index;
    stub.delivered_at = delivered;
    schedule_engagement(p, stub, push.component_index);
  }
  while (p.push_head < p.pushes.size() && p.pushes[p.push_head].done) ++p.push_head;
}

void Simulation::process_engagements(Participant& p, UtcSeconds now) {
  for (size_t i = p.engagement_head; i < p.engagements.size(); ++i) {
    PendingEngagement& pe = p.engagements[i];
    if (pe.done || pe.respond_at > now) continue;
    if (!p.phone_up() || !p.app_up()) continue;  // emitted on revival
    pe.done = true;
    EngagementEvent ev;
    ev.participant_id = p.id;
    ev.component_id = sc_.trial.components[pe.component_index].id;
    ev.global_index = pe.global_index;
    if (now > pe.respond_at && pe.kind != EngagementKind::kNoResponse) {
      // The response window passed while the app was down; the app records
      // the timeout rather than a blank.
      ev.kind = EngagementKind::kNoResponse;
      ev.at = pe.timeout_at;
    } else {
      ev.kind = pe.kind;
      ev.at = pe.respond_at;
    }
    if (ev.kind == EngagementKind::kSnoozeSet) {
      p.snooze = SnoozeState::set(ev.at, sc_.behavior.snooze_duration_seconds);
    }
    enqueue_event(p, PayloadKind::kEngagement, EvEngagement{ev, "", 0}, now);
  }
  while (p.engagement_head < p.engagements.size() && p.engagements[p.engagement_head].done) ++p.engagement_head;
}

void Simulation::process_daily_obs(Participant& p, UtcSeconds now) {
  const std::int64_t local = local_seconds_at(now, p.itinerary);
  const std::int64_t local_day = local / kSecondsPerDay - date0_days_;
  const int local_minute = static_cast<int>((local % kSecondsPerDay) / 60);
  if (local_day < 0 || local_day >= sc_.trial.study_days) return;
  if (local_minute != sc_.behavior.daily_obs_minute) return;
  if (!p.phone_up() || !p.app_up() || p.withdrawn) return;
  for (const char* measure : {"stress", "typicality"}) {
    DailyObservation obs;
    obs.participant_id = p.id;
    obs.day_index = static_cast<int>(local_day);
    obs.measure_id = measure;
    obs.value = static_cast<double>(rng::below(11, sc_.seed, Stream::kDailyObservation, p.id, local_day,
                                               measure[0] == 's' ? 0 : 1));
    obs.recorded_at = now;
    enqueue_event(p, PayloadKind::kDailyObservation, EvDailyObservation{std::move(obs), "", 0}, now);
  }
}

RunResult Simulation::execute() {
  setup();

  for (UtcSeconds now = t0_; now <= run_end_; now += kSecondsPerMinute) {
    for (auto& p : parts_) {
      apply_toggles(p, now);
      process_prefetch(p, now);
      process_decision_points(p, now);
      do_sync(p, now);
    }
    for (auto& p : parts_) {
      const int baseline = behavior_minute(p, now);
      const std::int64_t m = minute_index(now);
      std::int64_t injected = 0;
      for (auto it = p.injections.begin(); it != p.injections.end();) {
        const std::int64_t j = m - it->start_minute;
        if (j >= it->width) {
          it = p.injections.erase(it);
          continue;
        }
        if (j >= 0) {
          injected += (j + 1) * it->delta / it->width - j * it->delta / it->width;
        }
        ++it;
      }
      if (baseline > 0) ledger_.add_baseline(p.id, m, baseline);
      if (injected > 0) ledger_.add_injected(p.id, m, static_cast<int>(injected));
      const int total = baseline + static_cast<int>(injected);

      // Tracker: minute-level, positive counts only, buffered on-device. A
      // sample can transfer only once its minute has elapsed.
      if (p.tracker_dead == 0 && total > 0) {
        p.tracker_buffer.push_back(
            SensorSample{SensorStream::kTracker, p.id, now, now + kSecondsPerMinute, total});
      }
      if (p.phone_up() && p.app_up() && p.bt_off == 0) {
        size_t drained = 0;
        while (drained < p.tracker_buffer.size() && p.tracker_buffer[drained].end <= now) {
          enqueue_event(p, PayloadKind::kSensorSample, EvSensor{p.tracker_buffer[drained], "", 0}, now);
          ++drained;
        }
        p.tracker_buffer.erase(p.tracker_buffer.begin(), p.tracker_buffer.begin() + drained);
      }

      // Phone-fit: bout-level aggregates, undercounted, only while carried.
      const std::int64_t local = local_seconds_at(now, p.itinerary);
      const int local_minute = static_cast<int>((local % kSecondsPerDay) / 60);
      const bool carried = local_minute >= sc_.behavior.phone_carried_start_minute &&
                           local_minute < sc_.behavior.phone_carried_end_minute;
      const bool fit_recording = p.phone_up() && carried;
      if (fit_recording && total > 0) {
        if (!p.fit.open) {
          p.fit.open = true;
          p.fit.start = now;
          p.fit.true_steps = 0;
        }
        p.fit.true_steps += total;
      } else if (p.fit.open) {
        const std::int64_t counted =
            std::llround(sc_.behavior.phone_fit_undercount * static_cast<double>(p.fit.true_steps));
        if (counted > 0) {
          p.fit_os_buffer.push_back(SensorSample{SensorStream::kPhoneFit, p.id, p.fit.start, now, counted});
        }
        p.fit.open = false;
      }
      if (p.app_up() && !p.fit_os_buffer.empty()) {
        for (auto& s : p.fit_os_buffer) {
          enqueue_event(p, PayloadKind::kSensorSample, EvSensor{s, "", 0}, now);
        }
        p.fit_os_buffer.clear();
      }

      process_pushes(p, now);
      process_engagements(p, now);
      process_daily_obs(p, now);
      do_sync(p, now);

      p.prev2_steps = p.prev1_steps;
      p.prev1_steps = total;
    }
  }

  EvSyncSummary ss;
  ss.enqueued = summary_.payloads_generated;
  ss.stored = sync_totals_.stored;
  ss.duplicates = sync_totals_.duplicates;
  ss.quarantined = sync_totals_.quarantined;
  ss.acks_lost = sync_totals_.acks_lost;
  if (table_) {
    ss.prepared_rows = table_->prepared_count();
    ss.filled_rows = table_->filled_count();
    summary_.server_unfilled_rows = table_->unfilled_count();
  }
  summary_.payloads_stored = sync_totals_.stored;
  summary_.duplicates = sync_totals_.duplicates;
  summary_.quarantined = sync_totals_.quarantined;
  log_.events.push_back(ss);
  log_.finalize();

  RunResult result;
  result.log = std::move(log_);
  result.ledger = std::move(ledger_);
  result.summary = summary_;
  result.transcript = std::move(transcript_);
  result.server_table = std::move(table_);
  return result;
}

}  // namespace

RunResult run(const ScenarioConfig& scenario, const RunOptions& options) {
  Simulation sim(scenario, options);
  return sim.execute();
}

}  // namespace mrt
