#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "mrtsim/audit.hpp"
#include "mrtsim/estimator.hpp"
#include "mrtsim/pipeline.hpp"
#include "mrtsim/scenario.hpp"
#include "mrtsim/simulator.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace mrt;

namespace {

ScenarioConfig load_scenario_arg(const std::string& scenario) {
  if (scenario == "default") return default_scenario();
  // Accept either a path or raw JSON text.
  if (!scenario.empty() && scenario.front() == '{') return ScenarioConfig::from_json_text(scenario);
  return ScenarioConfig::from_file(scenario);
}

py::dict json_to_py(const Json& j);

py::object json_value_to_py(const Json& v) {
  if (v.is_null()) return py::none();
  if (v.is_boolean()) return py::bool_(v.get<bool>());
  if (v.is_number_integer()) return py::int_(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return py::int_(v.get<std::uint64_t>());
  if (v.is_number_float()) return py::float_(v.get<double>());
  if (v.is_string()) return py::str(v.get<std::string>());
  if (v.is_array()) {
    py::list out;
    for (const auto& item : v) out.append(json_value_to_py(item));
    return out;
  }
  return json_to_py(v);
}

py::dict json_to_py(const Json& j) {
  py::dict out;
  for (const auto& [key, value] : j.items()) out[py::str(key)] = json_value_to_py(value);
  return out;
}

py::dict simulate(const std::string& scenario, const std::string& out_dir,
                  std::optional<std::uint64_t> seed, bool transcript) {
  ScenarioConfig sc = load_scenario_arg(scenario);
  if (seed) sc.seed = *seed;
  fs::create_directories(out_dir);
  RunOptions opt;
  opt.keep_transcript = transcript;
  const RunResult result = run(sc, opt);
  const std::string log_path = (fs::path(out_dir) / "events.jsonl").string();
  const std::string ledger_path = (fs::path(out_dir) / "ledger.jsonl").string();
  write_event_log_file(result.log, log_path);
  result.ledger.write_file(ledger_path, result.log.scenario);
  if (transcript) {
    std::ofstream t((fs::path(out_dir) / "transcript.bin").string(), std::ios::binary);
    t << encode_transcript(result.transcript);
  }
  const auto& s = result.summary;
  py::dict out;
  out["events_path"] = log_path;
  out["ledger_path"] = ledger_path;
  out["decision_points_scheduled"] = s.decision_points_scheduled;
  out["records"] = s.records;
  out["treatments"] = s.treatments;
  out["deliveries"] = s.deliveries;
  out["not_randomized"] = s.not_randomized;
  out["missed_decision_points"] = s.missed_decision_points;
  out["faults_fired"] = s.faults_fired;
  out["payloads_generated"] = s.payloads_generated;
  out["payloads_stored"] = s.payloads_stored;
  out["duplicates"] = s.duplicates;
  out["quarantined"] = s.quarantined;
  return out;
}

std::string export_rows(const std::string& log_path, const std::string& out_dir,
                        const std::string& variant, const std::string& format) {
  const EventLog log = read_event_log_file(log_path);
  const ExportVariant v =
      variant == "redundant" ? ExportVariant::kRedundantImputed : ExportVariant::kZeroImputed;
  const ExportFormat f = format == "jsonl" ? ExportFormat::kJsonl : ExportFormat::kCsv;
  const auto rows = make_analysis_rows(log, v);
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / ("rows_" + variant + "." + format)).string();
  write_export_file(rows, f, path);
  return path;
}

py::dict analyze(const std::string& rows_path, const std::string& component,
                 const std::vector<std::string>& moderators, const std::vector<std::string>& controls) {
  const ExportTable table = parse_export_file(rows_path);
  AnalysisSpec spec;
  spec.component_id = component;
  spec.moderators = moderators;
  spec.controls = controls;
  return json_to_py(estimate(table.rows, spec).to_json());
}

py::dict audit(const std::string& export_path, const std::string& log_path) {
  return json_to_py(run_audit_files(export_path, log_path).to_json());
}

std::int64_t count(const std::string& config, const std::string& component, bool per_participant) {
  TrialConfig trial;
  if (config == "default") {
    trial = default_scenario().trial;
  } else if (!config.empty() && config.front() == '{') {
    const Json j = Json::parse(config);
    trial = j.contains("trial") ? TrialConfig::from_json(j.at("trial")) : TrialConfig::from_json(j);
  } else {
    std::ifstream in(config, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + config);
    std::ostringstream buf;
    buf << in.rdbuf();
    const Json j = Json::parse(buf.str());
    trial = j.contains("trial") ? TrialConfig::from_json(j.at("trial")) : TrialConfig::from_json(j);
  }
  return per_participant ? per_participant_decision_points(trial, component)
                         : count_decision_points(trial, component);
}

py::dict replay(const std::string& log_path, const std::string& out_dir) {
  const EventLog log = read_event_log_file(log_path);
  fs::create_directories(out_dir);
  py::dict out;
  for (const auto variant : {ExportVariant::kZeroImputed, ExportVariant::kRedundantImputed}) {
    const auto rows = make_analysis_rows(log, variant);
    for (const auto format : {ExportFormat::kCsv, ExportFormat::kJsonl}) {
      const std::string path =
          (fs::path(out_dir) / ("rows_" + to_string(variant) + "." + to_string(format))).string();
      write_export_file(rows, format, path);
      out[py::str("rows_" + to_string(variant) + "_" + to_string(format))] = path;
    }
    out[py::str("row_count_" + to_string(variant))] = static_cast<std::int64_t>(rows.size());
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_mrtsim, m) {
  m.doc() = "micro-randomized trial protocol engine, simulator, and dataset pipeline";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<EstimationError>(m, "EstimationError");

  m.def("simulate", &simulate, py::arg("scenario") = "default", py::arg("out_dir") = "out",
        py::arg("seed") = py::none(), py::arg("transcript") = false,
        "Run a scenario; writes events.jsonl and ledger.jsonl, returns the run summary.");
  m.def("export_rows", &export_rows, py::arg("log_path"), py::arg("out_dir") = "out",
        py::arg("variant") = "zero", py::arg("format") = "csv",
        "Derive analysis rows from an event log; returns the export path.");
  m.def("analyze", &analyze, py::arg("rows_path"), py::arg("component"),
        py::arg("moderators") = std::vector<std::string>{},
        py::arg("controls") = std::vector<std::string>{},
        "Centered-treatment least squares with participant-clustered errors.");
  m.def("audit", &audit, py::arg("export_path"), py::arg("log_path"),
        "Run the data-quality checklist; returns the report as a dict.");
  m.def("count", &count, py::arg("config") = "default", py::arg("component") = "suggestions",
        py::arg("per_participant") = false, "Decision-point arithmetic.");
  m.def("replay", &replay, py::arg("log_path"), py::arg("out_dir") = "out",
        "Re-derive every export variant and format from an event log alone.");
  m.def("default_scenario", &default_scenario_text, "The built-in scenario as JSON text.");
}
