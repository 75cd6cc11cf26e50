#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mrtsim/audit.hpp"
#include "mrtsim/estimator.hpp"
#include "mrtsim/events.hpp"
#include "mrtsim/pipeline.hpp"
#include "mrtsim/scenario.hpp"
#include "mrtsim/simulator.hpp"

namespace fs = std::filesystem;
using namespace mrt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitAuditFailure = 2;

bool verbose() {
  const char* v = std::getenv("MRTSIM_LOG");
  return v && std::string(v) != "quiet" && std::string(v) != "0";
}

void info(const std::string& msg) {
  if (verbose()) std::cerr << "[mrtsim] " << msg << "\n";
}

ScenarioConfig load_scenario(const std::string& spec, std::optional<std::uint64_t> seed_override) {
  ScenarioConfig sc = spec == "default" ? default_scenario() : ScenarioConfig::from_file(spec);
  if (seed_override) sc.seed = *seed_override;
  return sc;
}

int cmd_simulate(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
                 bool with_transcript) {
  ScenarioConfig sc = load_scenario(scenario_path, seed);
  fs::create_directories(out_dir);
  RunOptions opt;
  opt.keep_transcript = with_transcript;
  info("running scenario (seed " + std::to_string(sc.seed) + ")");
  RunResult result = run(sc, opt);

  const std::string log_path = (fs::path(out_dir) / "events.jsonl").string();
  const std::string ledger_path = (fs::path(out_dir) / "ledger.jsonl").string();
  write_event_log_file(result.log, log_path);
  result.ledger.write_file(ledger_path, result.log.scenario);
  if (with_transcript) {
    std::ofstream t((fs::path(out_dir) / "transcript.bin").string(), std::ios::binary);
    t << encode_transcript(result.transcript);
  }

  const auto& s = result.summary;
  std::cout << "decision points scheduled: " << s.decision_points_scheduled << "\n"
            << "randomization records:     " << s.records << "\n"
            << "treatments drawn:          " << s.treatments << "\n"
            << "treatments delivered:      " << s.deliveries << "\n"
            << "not randomized:            " << s.not_randomized << "\n"
            << "missed decision points:    " << s.missed_decision_points << "\n"
            << "faults fired:              " << s.faults_fired << "\n"
            << "payloads generated:        " << s.payloads_generated << "\n"
            << "payloads stored:           " << s.payloads_stored << "\n"
            << "duplicates deduplicated:   " << s.duplicates << "\n"
            << "payloads quarantined:      " << s.quarantined << "\n";
  if (sc.agent == Agent::kServer) {
    std::cout << "server rows prepared:      " << s.server_prepared_rows << "\n"
              << "server rows unfilled:      " << s.server_unfilled_rows << "\n";
  }
  std::cout << "event log: " << log_path << "\n"
            << "ledger:    " << ledger_path << "\n";
  return kExitOk;
}

int cmd_export(const std::string& log_path, const std::string& out_dir, const std::string& variant,
               const std::string& format) {
  const EventLog log = read_event_log_file(log_path);
  const ExportVariant v = variant == "redundant" ? ExportVariant::kRedundantImputed : ExportVariant::kZeroImputed;
  const ExportFormat f = format == "jsonl" ? ExportFormat::kJsonl : ExportFormat::kCsv;
  const auto rows = make_analysis_rows(log, v);
  fs::create_directories(out_dir);
  const std::string path =
      (fs::path(out_dir) / ("rows_" + variant + "." + format)).string();
  write_export_file(rows, f, path);
  std::cout << rows.size() << " rows -> " << path << "\n";
  return kExitOk;
}

int cmd_analyze(const std::string& rows_path, const std::string& component,
                const std::vector<std::string>& moderators, const std::vector<std::string>& controls,
                const std::string& out_path) {
  const ExportTable table = parse_export_file(rows_path);
  AnalysisSpec spec;
  spec.component_id = component;
  spec.controls = controls;
  spec.moderators = moderators;
  const EffectEstimate est = estimate(table.rows, spec);
  std::cout << est.to_text();
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    out << est.to_json().dump(2) << "\n";
    info("report written to " + out_path);
  }
  return kExitOk;
}

int cmd_audit(const std::string& export_path, const std::string& log_path, const std::string& out_path) {
  const AuditReport report = run_audit_files(export_path, log_path);
  std::cout << report.to_text();
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    out << report.to_json().dump(2) << "\n";
  }
  return report.passed() ? kExitOk : kExitAuditFailure;
}

int cmd_count(const std::string& config_path, const std::string& component, bool per_participant) {
  TrialConfig trial;
  if (config_path == "default") {
    trial = default_scenario().trial;
  } else {
    // Accept either a bare trial config or a full scenario file.
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const Json j = Json::parse(buf.str());
    trial = j.contains("trial") ? TrialConfig::from_json(j.at("trial")) : TrialConfig::from_json(j);
  }
  if (component.empty()) {
    std::int64_t total = 0;
    for (const auto& c : trial.components) {
      const auto n = per_participant ? per_participant_decision_points(trial, c.id)
                                     : count_decision_points(trial, c.id);
      std::cout << c.id << ": " << n << "\n";
      total += n;
    }
    std::cout << "total: " << total << "\n";
  } else {
    std::cout << (per_participant ? per_participant_decision_points(trial, component)
                                  : count_decision_points(trial, component))
              << "\n";
  }
  return kExitOk;
}

int cmd_replay(const std::string& log_path, const std::string& out_dir) {
  const EventLog log = read_event_log_file(log_path);
  fs::create_directories(out_dir);
  for (const auto variant : {ExportVariant::kZeroImputed, ExportVariant::kRedundantImputed}) {
    const auto rows = make_analysis_rows(log, variant);
    for (const auto format : {ExportFormat::kCsv, ExportFormat::kJsonl}) {
      const std::string path =
          (fs::path(out_dir) / ("rows_" + to_string(variant) + "." + to_string(format))).string();
      write_export_file(rows, format, path);
      std::cout << rows.size() << " rows -> " << path << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"micro-randomized trial protocol engine, simulator, and dataset pipeline"};
  app.require_subcommand(1);

  std::string scenario = "default";
  std::string out_dir = "out";
  std::string log_path;
  std::string rows_path;
  std::string export_path;
  std::string component;
  std::string variant = "zero";
  std::string format = "csv";
  std::string report_path;
  std::vector<std::string> moderators;
  std::vector<std::string> controls;
  std::optional<std::uint64_t> seed;
  bool with_transcript = false;
  bool per_participant = false;

  auto* simulate = app.add_subcommand("simulate", "run a scenario, write event log + ledger");
  simulate->add_option("--scenario", scenario, "scenario JSON file or 'default'");
  simulate->add_option("--seed", seed, "override the scenario seed");
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_flag("--transcript", with_transcript, "also write the sync wire transcript");

  auto* exp = app.add_subcommand("export", "derive analysis rows from an event log");
  exp->add_option("--log", log_path, "events.jsonl from simulate")->required();
  exp->add_option("--out", out_dir, "output directory");
  exp->add_option("--variant", variant, "zero|redundant")->check(CLI::IsMember({"zero", "redundant"}));
  exp->add_option("--format", format, "csv|jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  auto* analyze = app.add_subcommand("analyze", "estimate treatment effects from an export");
  analyze->add_option("--rows", rows_path, "rows export (csv or jsonl)")->required();
  analyze->add_option("--component", component, "component id")->required();
  analyze->add_option("--moderator", moderators, "moderator covariate (repeatable)");
  analyze->add_option("--control", controls, "control covariate (repeatable)");
  analyze->add_option("--out", report_path, "write the JSON report here");

  auto* audit_cmd = app.add_subcommand("audit", "run the data-quality checklist");
  audit_cmd->add_option("--export", export_path, "rows export")->required();
  audit_cmd->add_option("--log", log_path, "events.jsonl")->required();
  audit_cmd->add_option("--out", report_path, "write the JSON report here");

  auto* count = app.add_subcommand("count", "decision-point arithmetic");
  count->add_option("--config", scenario, "trial/scenario JSON file or 'default'");
  count->add_option("--component", component, "component id (omit for all)");
  count->add_flag("--per-participant", per_participant, "per-participant count");

  auto* replay = app.add_subcommand("replay", "re-derive all exports from an event log alone");
  replay->add_option("--log", log_path, "events.jsonl")->required();
  replay->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(scenario, seed, out_dir, with_transcript);
    if (exp->parsed()) return cmd_export(log_path, out_dir, variant, format);
    if (analyze->parsed()) return cmd_analyze(rows_path, component, moderators, controls, report_path);
    if (audit_cmd->parsed()) return cmd_audit(export_path, log_path, report_path);
    if (count->parsed()) return cmd_count(scenario, component, per_participant);
    if (replay->parsed()) return cmd_replay(log_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const EstimationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
