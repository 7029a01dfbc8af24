import csv
import json
import math

import pytest

from worldcache.config import load_config
from worldcache.errors import NonFiniteError
from worldcache.sweep import ResultRow, run_policy
from worldcache.telemetry import (
    ROW_COLUMNS,
    STEP_COLUMNS,
    format_rows,
    format_summary,
    report_to_dict,
    write_report,
    write_rows_csv,
    write_steps_csv,
)
from worldcache.types import CacheDecision, DecisionKind, RunReport, StepTelemetry


def small_report():
    config = load_config(None, ["scenario.shape=1x2x16x16x4", "scenario.kind=static", "policy.total_steps=8"])
    return run_policy(config, "worldcache"), config


def test_report_document_keys(tmp_path):
    report, config = small_report()
    path = write_report(tmp_path / "report.json", report, config.to_dict())
    document = json.loads(path.read_text(encoding="utf-8"))
    assert set(document) == {
        "version",
        "policy",
        "mode",
        "open_loop",
        "total_steps",
        "hits",
        "probe_cost",
        "deep_cost",
        "summary",
        "wall_time_ms",
        "config",
        "steps",
    }
    assert {"skip_rate", "simulated_speedup", "final_output_error"} <= set(document["summary"])
    assert "probe" in document["wall_time_ms"] and "signals" in document["wall_time_ms"]
    assert document["total_steps"] == 8 and len(document["steps"]) == 8
    assert set(document["steps"][0]) == set(STEP_COLUMNS)
    assert document["config"]["scenario"]["kind"] == "static"


def test_steps_csv_is_reproducible(tmp_path):
    first, _ = small_report()
    second, _ = small_report()
    a = write_steps_csv(tmp_path / "a.csv", first).read_bytes()
    b = write_steps_csv(tmp_path / "b.csv", second).read_bytes()
    assert a == b
    rows = list(csv.DictReader(a.decode("utf-8").splitlines()))
    assert list(rows[0]) == STEP_COLUMNS
    assert rows[0]["decision"] == "miss-forced-warmup"
    assert rows[0]["gamma"] == ""
    assert rows[0]["warp_used"] == "0"
    assert float(rows[0]["cost_spent"]) == 10.0


def test_non_finite_summary_is_rejected():
    decision = CacheDecision(DecisionKind.HIT, 0.0, 0.1, 0)
    step = StepTelemetry(0, decision, 0.0, 0.0, None, 0.1, 1.0, gamma=math.nan)
    report = RunReport("worldcache", "open-loop", [step], 1.0, 9.0)
    with pytest.raises(NonFiniteError):
        report_to_dict(report)


def test_rows_csv_and_formatting(tmp_path):
    report, _ = small_report()
    row = ResultRow.from_report("worldcache", report, "policy.tau0", 0.05)
    path = write_rows_csv(tmp_path / "rows.csv", [row])
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.split(",") == ROW_COLUMNS
    lines = format_rows([row])
    assert len(lines) == 2 and "policy.tau0=0.05" in lines[1]
    assert format_summary(report).startswith("worldcache [closed-loop] steps=8")
