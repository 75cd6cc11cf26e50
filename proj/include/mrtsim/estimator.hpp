#pragma once

#include <map>
#include <string>
#include <vector>

#include "mrtsim/pipeline.hpp"

namespace mrt {

class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

// Centered-treatment least squares: outcome regressed on
// [1, controls, (A - p) * (1, moderators)] with participant-clustered
// sandwich standard errors. Constant randomization probability makes the
// weights unity; a weight hook for time-varying probabilities is the one
// declared extension point.
struct AnalysisSpec {
  std::string component_id;
  std::vector<std::string> controls;
  std::vector<std::string> moderators;  // each enters as (A-p) x moderator
};

struct EffectEstimate {
  std::vector<std::string> names;  // column names, effect terms prefixed "effect:"
  std::vector<double> beta;
  std::vector<double> se;
  std::vector<double> t_stat;
  std::vector<double> p_value;
  int rows_used = 0;
  int clusters = 0;
  std::map<std::string, int> excluded;  // reason -> row count

  int effect_index(const std::string& name = "") const;  // "" = main effect
  Json to_json() const;
  std::string to_text() const;
};

// Covariate names: day_index, slot_index, day_of_week, is_weekend,
// location_home, location_work, location_other, plus any merged daily
// measure by its name (e.g. stress, typicality).
EffectEstimate estimate(const std::vector<AnalysisRow>& rows, const AnalysisSpec& spec);

// Adds the implied (A-p) x moderator terms and reports each moderator line.
EffectEstimate moderation_report(const std::vector<AnalysisRow>& rows, const AnalysisSpec& spec);

struct SensitivityComparison {
  EffectEstimate zero_imputed;
  EffectEstimate redundant_imputed;
  std::vector<double> coefficient_delta;  // redundant - zero, aligned on zero's names
  int differing_rows = 0;                 // rows whose outcome value or source differs

  Json to_json() const;
};

SensitivityComparison sensitivity_compare(const std::vector<AnalysisRow>& rows_zero,
                                          const std::vector<AnalysisRow>& rows_redundant,
                                          const AnalysisSpec& spec);

// Exact central binomial acceptance interval: smallest k with CDF >= alpha/2
// through smallest k with CDF >= 1 - alpha/2.
std::pair<std::int64_t, std::int64_t> binomial_interval(std::int64_t n, double p, double alpha);

}  // namespace mrt
