#include <doctest.h>

#include <map>
#include <set>

#include "mrtsim/model.hpp"
#include "mrtsim/scenario.hpp"

using namespace mrt;

TEST_CASE("default trial counts match the published design") {
  const TrialConfig trial = default_scenario().trial;
  CHECK(count_decision_points(trial, "suggestions") == 7770);
  CHECK(count_decision_points(trial, "planning") == 1554);
  CHECK(per_participant_decision_points(trial, "suggestions") == 210);
  CHECK(per_participant_decision_points(trial, "planning") == 42);
  CHECK(build_schedule(trial).size() == 7770 + 1554);
}

TEST_CASE("count over a filtered participant view") {
  const TrialConfig trial = default_scenario().trial;
  const std::vector<int> nobody;
  CHECK(count_decision_points(trial, "suggestions", nobody) == 0);
  const std::vector<int> two{1, 2};
  CHECK(count_decision_points(trial, "suggestions", two) == 420);
  CHECK_THROWS_AS(count_decision_points(trial, "nonexistent"), ConfigError);
}

TEST_CASE("schedule is deterministic and indices are contiguous") {
  const TrialConfig trial = default_scenario().trial;
  const auto a = build_schedule(trial);
  const auto b = build_schedule(trial);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].participant_id == b[i].participant_id);
    CHECK(a[i].global_index == b[i].global_index);
    CHECK(a[i].scheduled_local_minute == b[i].scheduled_local_minute);
    CHECK(a[i].global_index == a[i].day_index * (a[i].component_id == "suggestions" ? 5 : 1) + a[i].slot_index);
  }
  // per (participant, component): global_index covers 0..N-1 exactly once
  std::map<std::pair<int, std::string>, std::set<int>> seen;
  for (const auto& dp : a) seen[{dp.participant_id, dp.component_id}].insert(dp.global_index);
  for (const auto& [key, indices] : seen) {
    const int n = key.second == "suggestions" ? 210 : 42;
    CHECK(static_cast<int>(indices.size()) == n);
    CHECK(*indices.begin() == 0);
    CHECK(*indices.rbegin() == n - 1);
  }
}

TEST_CASE("empty component list gives an empty schedule") {
  TrialConfig trial;
  trial.participant_count = 1;
  trial.study_days = 10;
  trial.components.clear();
  CHECK(build_schedule(trial).empty());
}

TEST_CASE("validation rejects degenerate configs") {
  TrialConfig trial = default_scenario().trial;
  trial.participant_count = 0;
  CHECK_THROWS_AS(build_schedule(trial), ConfigError);
  trial = default_scenario().trial;
  trial.study_days = 0;
  CHECK_THROWS_AS(build_schedule(trial), ConfigError);
  trial = default_scenario().trial;
  trial.components[1].id = "suggestions";  // duplicate id
  CHECK_THROWS_AS(build_schedule(trial), ConfigError);
}

TEST_CASE("slots sit at subdivision midpoints of the waking window") {
  const DailyWindow window{8 * 60, 20 * 60};
  CHECK(slot_minute(window, 5, 0) == 9 * 60 + 12);
  CHECK(slot_minute(window, 5, 1) == 11 * 60 + 36);
  CHECK(slot_minute(window, 5, 2) == 14 * 60);
  CHECK(slot_minute(window, 5, 3) == 16 * 60 + 24);
  CHECK(slot_minute(window, 5, 4) == 18 * 60 + 48);
  const DailyWindow evening{19 * 60, 21 * 60};
  CHECK(slot_minute(evening, 1, 0) == 20 * 60);
}

TEST_CASE("trial config json round trip") {
  const TrialConfig trial = default_scenario().trial;
  const TrialConfig back = TrialConfig::from_json(trial.to_json());
  CHECK(back.participant_count == trial.participant_count);
  CHECK(back.study_days == trial.study_days);
  CHECK(back.components.size() == trial.components.size());
  CHECK(back.components[0].randomization_probability.text() == "0.6");
  CHECK(back.components[0].randomization_probability.value() == doctest::Approx(0.6));
  CHECK(back.to_json() == trial.to_json());
}

TEST_CASE("probability parsing is strict") {
  CHECK(Probability::parse("0.6").value() == doctest::Approx(0.6));
  CHECK(Probability::parse("1").value() == 1.0);
  CHECK(Probability::parse("0.6").text() == "0.6");
  CHECK_THROWS_AS(Probability::parse("1.5"), ConfigError);
  CHECK_THROWS_AS(Probability::parse("-0.1"), ConfigError);
  CHECK_THROWS_AS(Probability::parse("abc"), ConfigError);
  CHECK_THROWS_AS(Probability::parse(""), ConfigError);
}

TEST_CASE("scenario file diagnostics") {
  CHECK_THROWS_AS(ScenarioConfig::from_json_text("{ not json"), ConfigError);
  try {
    ScenarioConfig::from_json_text("{ not json");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("parse error") != std::string::npos);
  }
  CHECK_THROWS_AS(
      ScenarioConfig::from_json_text(
          R"({"trial": {"participant_count": 0, "study_days": 1, "components": []}})"),
      ConfigError);
}
