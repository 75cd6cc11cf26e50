#pragma once

#include <string>
#include <vector>

#include "mrtsim/events.hpp"
#include "mrtsim/pipeline.hpp"

namespace mrt {

enum class CheckStatus { kPass, kFail, kNotApplicable };
std::string to_string(CheckStatus s);

struct AuditViolation {
  int check = 0;
  std::string locator;  // row key or log event reference
  std::string message;
};

struct AuditCheckResult {
  int number = 0;
  std::string title;
  CheckStatus status = CheckStatus::kPass;
  int violation_count = 0;
};

// Executable checklist over an exported dataset plus its event log; one check
// group per checklist item, FAIL iff at least one violation is listed.
struct AuditReport {
  std::vector<AuditCheckResult> checks;
  std::vector<AuditViolation> violations;
  bool structural_failure = false;
  std::string structural_message;

  bool passed() const;
  Json to_json() const;
  std::string to_text() const;
};

AuditReport run_audit(const ExportTable& export_table, const EventLog& log);

// File front end: unparseable inputs become a structural-failure report
// instead of an exception.
AuditReport run_audit_files(const std::string& export_path, const std::string& log_path);

}  // namespace mrt
