"""End-to-end smoke tests for the python bindings."""

import json

import pytest

import mrtsim


@pytest.fixture(scope="module")
def small_scenario():
    scenario = json.loads(mrtsim.default_scenario())
    scenario["seed"] = 99
    scenario["trial"]["participant_count"] = 2
    scenario["trial"]["study_days"] = 3
    scenario["trial"]["components"][0]["decision_points_per_day"] = 3
    return json.dumps(scenario)


@pytest.fixture(scope="module")
def run_dir(small_scenario, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    summary = mrtsim.simulate(small_scenario, str(out))
    return out, summary


def test_counts_match_published_design():
    assert mrtsim.count("default", "suggestions") == 7770
    assert mrtsim.count("default", "planning") == 1554
    assert mrtsim.count("default", "suggestions", per_participant=True) == 210
    assert mrtsim.count("default", "planning", per_participant=True) == 42


def test_simulate_writes_log_and_ledger(run_dir):
    out, summary = run_dir
    assert (out / "events.jsonl").exists()
    assert (out / "ledger.jsonl").exists()
    assert summary["decision_points_scheduled"] == 2 * 3 * (3 + 1)
    assert summary["records"] == summary["decision_points_scheduled"]
    assert summary["payloads_stored"] == summary["payloads_generated"]


def test_export_analyze_audit_pipeline(run_dir, tmp_path):
    out, _ = run_dir
    rows_path = mrtsim.export_rows(str(out / "events.jsonl"), str(tmp_path), "zero", "csv")
    header = open(rows_path).readline().strip().split(",")
    assert "probability" in header
    assert "missingness_codes" in header

    report = mrtsim.analyze(rows_path, "suggestions")
    names = [t["name"] for t in report["terms"]]
    assert "effect:(A-p)" in names
    assert report["clusters"] == 2

    audit = mrtsim.audit(rows_path, str(out / "events.jsonl"))
    assert audit["passed"] is True
    assert len(audit["checks"]) == 7


def test_replay_is_self_sufficient(run_dir, tmp_path):
    out, summary = run_dir
    derived = mrtsim.replay(str(out / "events.jsonl"), str(tmp_path))
    assert derived["row_count_zero"] == summary["decision_points_scheduled"]
    assert derived["row_count_redundant"] == summary["decision_points_scheduled"]


def test_determinism(small_scenario, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    mrtsim.simulate(small_scenario, str(a), seed=123)
    mrtsim.simulate(small_scenario, str(b), seed=123)
    assert (a / "events.jsonl").read_bytes() == (b / "events.jsonl").read_bytes()


def test_validation_errors_are_typed():
    with pytest.raises(mrtsim.ConfigError):
        mrtsim.count('{"participant_count": 0, "study_days": 1, "components": []}', "x")
