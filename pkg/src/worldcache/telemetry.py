"""Machine-readable outputs: report.json, steps.csv and row tables."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from .errors import NonFiniteError
from .types import RunReport, StepTelemetry

REPORT_VERSION = 1

STEP_COLUMNS = [
    "step",
    "decision",
    "raw_drift",
    "swd",
    "velocity",
    "threshold",
    "gamma",
    "scalar_gamma",
    "warp_used",
    "cost_spent",
    "overhead",
    "oracle_error",
]

ROW_COLUMNS = [
    "label",
    "policy",
    "mode",
    "key",
    "value",
    "steps",
    "hits",
    "skip_rate",
    "simulated_speedup",
    "final_output_error",
    "mean_hit_error",
    "mean_gamma",
]


def _finite(value: Optional[float], name: str) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteError(f"{name} is not finite: {value}")
    return value


def step_row(step: StepTelemetry) -> Dict[str, Any]:
    return {
        "step": step.step,
        "decision": step.decision.kind.value,
        "raw_drift": step.raw_drift,
        "swd": step.swd,
        "velocity": step.velocity,
        "threshold": step.threshold,
        "gamma": step.gamma,
        "scalar_gamma": step.scalar_gamma,
        "warp_used": step.warp_used,
        "cost_spent": step.cost_spent,
        "overhead": step.overhead,
        "oracle_error": step.oracle_error,
    }


def report_to_dict(report: RunReport, config: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Summary plus per-step records; wall times appear only as totals."""

    summary = {
        "skip_rate": report.skip_rate,
        "simulated_speedup": report.simulated_speedup,
        "final_output_error": report.final_output_error,
        "mean_hit_error": report.mean_hit_error,
        "mean_gamma": report.mean_gamma,
        "mean_scalar_gamma": report.mean_scalar_gamma,
        "total_cost": report.total_cost,
        "total_overhead": report.total_overhead,
    }
    for name, value in summary.items():
        summary[name] = _finite(value, name)
    return {
        "version": REPORT_VERSION,
        "policy": report.policy,
        "mode": report.mode,
        "open_loop": report.open_loop,
        "total_steps": report.total_steps,
        "hits": report.hits,
        "probe_cost": report.probe_cost,
        "deep_cost": report.deep_cost,
        "summary": summary,
        "wall_time_ms": {k: _finite(v, k) for k, v in sorted(report.wall_time_totals().items())},
        "config": dict(config or {}),
        "steps": [step_row(s) for s in report.steps],
    }


def _write_json(path: Union[str, Path], document: Any) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write("\n")
    return target


def write_report(path: Union[str, Path], report: RunReport, config: Optional[Mapping[str, Any]] = None) -> Path:
    return _write_json(path, report_to_dict(report, config))


def _csv_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Union[str, Path], columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row.get(c)) for c in columns])
    return target


def write_steps_csv(path: Union[str, Path], report: RunReport) -> Path:
    return _write_csv(path, STEP_COLUMNS, [step_row(s) for s in report.steps])


def write_rows_csv(path: Union[str, Path], rows: Sequence[Any]) -> Path:
    return _write_csv(path, ROW_COLUMNS, [dataclasses.asdict(r) for r in rows])


def write_rows_json(path: Union[str, Path], rows: Sequence[Any], config: Optional[Mapping[str, Any]] = None) -> Path:
    return _write_json(path, {"version": REPORT_VERSION, "config": dict(config or {}), "rows": [dataclasses.asdict(r) for r in rows]})


def format_summary(report: RunReport) -> str:
    error = "-" if report.final_output_error is None else f"{report.final_output_error:.3e}"
    return (
        f"{report.policy} [{report.mode}] steps={report.total_steps} hits={report.hits} "
        f"skip_rate={report.skip_rate:.3f} speedup={report.simulated_speedup:.3f} final_error={error}"
    )


def format_rows(rows: Sequence[Any]) -> List[str]:
    lines = [f"{'label':<32} {'skip':>6} {'speedup':>8} {'final_err':>10} {'hit_err':>10}"]
    for r in rows:
        label = r.label if not r.key else f"{r.label} {r.key}={r.value}"
        final = "-" if r.final_output_error is None else f"{r.final_output_error:.3e}"
        hit = "-" if r.mean_hit_error is None else f"{r.mean_hit_error:.3e}"
        lines.append(f"{label:<32} {r.skip_rate:>6.3f} {r.simulated_speedup:>8.3f} {final:>10} {hit:>10}")
    return lines
