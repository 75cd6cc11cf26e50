#include <doctest.h>

#include <array>
#include <cmath>

#include "mrtsim/estimator.hpp"
#include "support/helpers.hpp"

using namespace mrt;
using namespace mrt::test;

namespace {

AnalysisRow row_for(int participant, int treatment, double p, std::int64_t outcome, int day = 0,
                    int global_index = 0) {
  AnalysisRow r;
  r.participant_id = participant;
  r.component_id = "suggestions";
  r.global_index = global_index;
  r.day_index = day;
  r.available = true;
  r.treatment = treatment;
  r.probability = Probability::parse(p == 0.6 ? "0.6" : "0.5");
  r.proximal_outcome = outcome;
  r.outcome_source = OutcomeSource::kTracker;
  r.has_record = true;
  return r;
}

// Independent oracle: normal equations solved by Gaussian elimination with
// partial pivoting in long double.
std::vector<long double> solve_normal_equations(const std::vector<std::array<long double, 3>>& X,
                                                const std::vector<long double>& y) {
  constexpr int k = 3;
  long double A[k][k + 1] = {};
  for (size_t r = 0; r < X.size(); ++r) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) A[i][j] += X[r][i] * X[r][j];
      A[i][k] += X[r][i] * y[r];
    }
  }
  for (int c = 0; c < k; ++c) {
    int pivot = c;
    for (int r = c + 1; r < k; ++r) {
      if (std::fabs((double)A[r][c]) > std::fabs((double)A[pivot][c])) pivot = r;
    }
    std::swap(A[c], A[pivot]);
    for (int j = k; j >= c; --j) A[c][j] /= A[c][c];
    for (int r = 0; r < k; ++r) {
      if (r == c) continue;
      const long double f = A[r][c];
      for (int j = c; j <= k; ++j) A[r][j] -= f * A[c][j];
    }
  }
  return {A[0][k], A[1][k], A[2][k]};
}

}  // namespace

TEST_CASE("six-row dataset matches the closed-form normal-equation solution") {
  // outcomes y with A in {0,1}, p = 0.6, moderator m in {0,1,2}; exact
  // rational solution computed beforehand: (341/3, 4385/78, -75/26).
  std::vector<AnalysisRow> rows;
  const int y[6] = {120, 80, 150, 70, 135, 95};
  const int a[6] = {1, 0, 1, 0, 1, 0};
  const int m[6] = {0, 0, 1, 1, 2, 2};
  for (int i = 0; i < 6; ++i) {
    AnalysisRow r = row_for(i % 2 + 1, a[i], 0.6, y[i], m[i], i);
    rows.push_back(r);
  }
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  spec.moderators = {"day_index"};
  const EffectEstimate est = estimate(rows, spec);
  REQUIRE(est.names.size() == 3);
  CHECK(est.beta[0] == doctest::Approx(341.0 / 3.0).epsilon(1e-10));
  CHECK(est.beta[1] == doctest::Approx(4385.0 / 78.0).epsilon(1e-10));
  CHECK(est.beta[2] == doctest::Approx(-75.0 / 26.0).epsilon(1e-10));

  // independent oracle run at test time agrees
  std::vector<std::array<long double, 3>> X;
  std::vector<long double> yv;
  for (int i = 0; i < 6; ++i) {
    const long double c = a[i] - 0.6L;
    X.push_back({1.0L, c, c * m[i]});
    yv.push_back(y[i]);
  }
  const auto oracle = solve_normal_equations(X, yv);
  for (int i = 0; i < 3; ++i) {
    CHECK(est.beta[i] == doctest::Approx((double)oracle[i]).epsilon(1e-10));
  }
}

TEST_CASE("centering invariance: shifting all outcomes moves only the intercept") {
  ScenarioConfig sc = small_scenario(4, 6, 151);
  sc.effects.push_back(EffectSpec{"suggestions", 25, 1.0, 1.0, 1.0, std::nullopt});
  const RunResult r = run(sc);
  auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  spec.moderators = {"day_index"};
  const EffectEstimate base = estimate(rows, spec);
  for (auto& row : rows) {
    if (row.proximal_outcome) row.proximal_outcome = *row.proximal_outcome + 1000;
  }
  const EffectEstimate shifted = estimate(rows, spec);
  CHECK(shifted.beta[0] == doctest::Approx(base.beta[0] + 1000).epsilon(1e-9));
  for (size_t i = 1; i < base.beta.size(); ++i) {
    CHECK(shifted.beta[i] == doctest::Approx(base.beta[i]).epsilon(1e-9));
  }
}

TEST_CASE("uncentered regression recovers the same effect coefficient on full-rank designs") {
  ScenarioConfig sc = small_scenario(4, 5, 157);
  sc.effects.push_back(EffectSpec{"suggestions", 40, 1.0, 1.0, 1.0, std::nullopt});
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  const EffectEstimate centered = estimate(rows, spec);

  // Second algebraic route: setting p = 0 turns the centered regressor into
  // raw A. With constant p the slope must agree exactly and the intercepts
  // differ by beta * p.
  std::vector<AnalysisRow> uncentered_rows = rows;
  for (auto& row : uncentered_rows) row.probability = Probability::parse("0");
  const EffectEstimate raw = estimate(uncentered_rows, spec);
  const double p = 0.5;
  CHECK(raw.beta[1] == doctest::Approx(centered.beta[1]).epsilon(1e-9));
  CHECK(raw.beta[0] + raw.beta[1] * p == doctest::Approx(centered.beta[0]).epsilon(1e-9));
}

TEST_CASE("rank deficiency is reported with the collinear column names") {
  std::vector<AnalysisRow> rows;
  for (int i = 0; i < 12; ++i) {
    AnalysisRow r = row_for(i % 3 + 1, i % 2, 0.6, 100 + i, /*day=*/5, i);
    r.is_weekend = false;  // constant -> collinear with intercept
    rows.push_back(r);
  }
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  spec.controls = {"is_weekend"};
  CHECK_THROWS_AS(estimate(rows, spec), EstimationError);
  try {
    estimate(rows, spec);
  } catch (const EstimationError& e) {
    CHECK(std::string(e.what()).find("collinear") != std::string::npos);
  }
}

TEST_CASE("fewer than two participants is an explicit error") {
  std::vector<AnalysisRow> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(row_for(1, i % 2, 0.6, 100 + i, i, i));
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  CHECK_THROWS_AS(estimate(rows, spec), EstimationError);
}

TEST_CASE("unavailable and travel-excluded rows are excluded but accounted") {
  ScenarioConfig sc = small_scenario(3, 4, 163);
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  const EffectEstimate est = estimate(rows, spec);
  int unavailable = 0, total = 0;
  for (const auto& row : rows) {
    if (row.component_id != "suggestions") continue;
    ++total;
    if (!row.treatment) ++unavailable;
  }
  CHECK(est.rows_used + est.excluded.at("unavailable") == total);
  CHECK(est.excluded.at("unavailable") == unavailable);
  CHECK(est.clusters == 3);
}

TEST_CASE("sensitivity comparison: identical on fault-free runs, fallback identity holds") {
  const ScenarioConfig sc = small_scenario(3, 4, 167);
  const RunResult r = run(sc);
  const auto zero = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  const auto redundant = make_analysis_rows(r.log, ExportVariant::kRedundantImputed);
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  const SensitivityComparison cmp = sensitivity_compare(zero, redundant, spec);
  CHECK(cmp.differing_rows == 0);
  for (const double d : cmp.coefficient_delta) CHECK(d == doctest::Approx(0.0));
}

TEST_CASE("sensitivity comparison counts exactly the covered gap rows") {
  ScenarioConfig sc = small_scenario(2, 4, 173);
  sc.faults.push_back(window_fault(FaultKind::kTrackerBatteryDead, {1}, sc, 1, 0, 3, 0));
  const RunResult r = run(sc);
  const auto zero = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  const auto redundant = make_analysis_rows(r.log, ExportVariant::kRedundantImputed);
  int covered_gaps = 0;
  for (size_t i = 0; i < zero.size(); ++i) {
    if (redundant[i].outcome_source == OutcomeSource::kRedundantImputed) ++covered_gaps;
  }
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  const SensitivityComparison cmp = sensitivity_compare(zero, redundant, spec);
  CHECK(covered_gaps > 0);
  CHECK(cmp.differing_rows == covered_gaps);
}

TEST_CASE("binomial interval oracle matches frozen reference values") {
  // Frozen from an independent statistics package.
  const auto suggestions = binomial_interval(10000, 0.6, 0.01);
  CHECK(suggestions.first == 5874);
  CHECK(suggestions.second == 6126);
  const auto type1 = binomial_interval(200, 0.05, 0.01);
  CHECK(type1.first == 3);
  CHECK(type1.second == 19);
}

TEST_CASE("estimate report serializes") {
  ScenarioConfig sc = small_scenario(3, 9, 179);  // spans a weekend so is_weekend varies
  sc.effects.push_back(EffectSpec{"suggestions", 10, 1.0, 1.0, 1.0, std::nullopt});
  const RunResult r = run(sc);
  const auto rows = make_analysis_rows(r.log, ExportVariant::kZeroImputed);
  AnalysisSpec spec;
  spec.component_id = "suggestions";
  spec.moderators = {"day_index", "is_weekend"};
  const EffectEstimate est = moderation_report(rows, spec);
  const Json j = est.to_json();
  CHECK(j.contains("terms"));
  CHECK(j.at("terms").size() == est.names.size());
  CHECK(est.effect_index() >= 0);
  CHECK(est.effect_index("day_index") > est.effect_index());
  CHECK(!est.to_text().empty());
}
