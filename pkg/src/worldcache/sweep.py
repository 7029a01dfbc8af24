"""Policy comparisons, incremental ablations and parameter sweeps.

Every configuration runs as an independent stream in a thread pool; rows
come back in a deterministic order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .config import CliConfig
from .controllers import POLICY_NAMES, fixed_threshold_config
from .engine import run_closed_loop, run_trajectory
from .errors import ConfigError
from .policy import AtsMode, OfaOperator, PolicyConfig
from .replay import replay_decisions, replay_sweep
from .sim import make_denoiser, run_oracle, update_rule
from .trace_format import Trace
from .types import RunReport

logger = logging.getLogger(__name__)

ABLATION_MODULES = ("cfc", "swd", "ofa", "ats")


@dataclass
class ResultRow:
    label: str
    policy: str
    mode: str
    steps: int
    hits: int
    skip_rate: float
    simulated_speedup: float
    final_output_error: Optional[float]
    mean_hit_error: Optional[float]
    mean_gamma: Optional[float]
    key: str = ""
    value: str = ""

    @classmethod
    def from_report(cls, label: str, report: RunReport, key: str = "", value: Any = "") -> "ResultRow":
        return cls(
            label=label,
            policy=report.policy,
            mode=report.mode,
            steps=report.total_steps,
            hits=report.hits,
            skip_rate=report.skip_rate,
            simulated_speedup=report.simulated_speedup,
            final_output_error=report.final_output_error,
            mean_hit_error=report.mean_hit_error,
            mean_gamma=report.mean_gamma,
            key=key,
            value=_format_value(value),
        )


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def run_policy(config: CliConfig, policy: str, policy_cfg: Optional[PolicyConfig] = None) -> RunReport:
    """Run one policy on the configured scenario, closed- or open-loop."""

    scenario = config.scenario
    cfg = policy_cfg or config.policy
    denoiser = make_denoiser(scenario)
    oracle = run_oracle(scenario, denoiser) if (config.run.oracle or not config.run.closed_loop) else None
    reference = oracle.outputs if (oracle is not None and config.run.oracle) else None
    if config.run.closed_loop:
        return run_closed_loop(
            policy,
            denoiser,
            denoiser.initial_input(),
            update_rule(scenario.eta),
            cfg,
            lk=config.flow,
            reference=reference,
            schedule_period=config.run.schedule_period,
        )
    return run_trajectory(
        policy,
        denoiser,
        oracle.inputs,
        cfg,
        lk=config.flow,
        reference=reference,
        schedule_period=config.run.schedule_period,
    )


def _replay_config(policy: str, cfg: PolicyConfig) -> Optional[PolicyConfig]:
    if policy == "full-compute":
        return cfg.replace(tau0=0.0)
    if policy in {"fixed-threshold-scalar-ratio", "fixed-threshold"}:
        return fixed_threshold_config(cfg)
    if policy == "worldcache":
        return cfg
    return None


def _replay_policy(config: CliConfig, trace: Trace, policy: str, cfg: PolicyConfig) -> Optional[RunReport]:
    resolved = _replay_config(policy, cfg)
    if resolved is None:
        logger.warning("policy %s has no replay form; skipped", policy)
        return None
    report = replay_decisions(
        trace,
        resolved,
        config.flow,
        probe_cost=config.scenario.probe_cost,
        deep_cost=config.scenario.deep_cost,
    )
    report.policy = policy
    return report


def replay_policy(config: CliConfig, trace: Trace, policy: str = "worldcache") -> RunReport:
    """Replay one policy's decisions over ``trace``; policies without a replay form are rejected."""

    if _replay_config(policy, config.policy) is None:
        raise ConfigError(f"Policy '{policy}' has no replay form")
    return _replay_policy(config, trace, policy, config.policy)


def _run_all(jobs: Sequence[Callable[[], Optional[RunReport]]], workers: int) -> List[Optional[RunReport]]:
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def compare_policies(
    config: CliConfig,
    policies: Sequence[str] = POLICY_NAMES,
    trace: Optional[Trace] = None,
) -> List[ResultRow]:
    jobs = []
    for name in policies:
        if trace is None:
            jobs.append(lambda name=name: run_policy(config, name))
        else:
            jobs.append(lambda name=name: _replay_policy(config, trace, name, config.policy))
    reports = _run_all(jobs, config.run.workers)
    return [ResultRow.from_report(name, r) for name, r in zip(policies, reports) if r is not None]


def ablation_configs(base: PolicyConfig, modules: Sequence[str]) -> List[Tuple[str, str, PolicyConfig]]:
    """Incremental rows: full compute, then each selected module switched on in turn.

    Before OFA is enabled hits reuse the newer residual; before ATS the
    threshold is not relaxed over steps.
    """

    unknown = [m for m in modules if m not in ABLATION_MODULES]
    if unknown:
        raise ConfigError(f"Unknown ablation modules {unknown}; choose from {list(ABLATION_MODULES)}")
    cfg = base.replace(
        alpha=0.0,
        beta_s=0.0,
        ats_mode=AtsMode.OFF,
        ofa_operator=OfaOperator.RESIDUAL,
    )
    rows: List[Tuple[str, str, PolicyConfig]] = [("base", "full-compute", base)]
    for module in ABLATION_MODULES:
        if module not in modules:
            continue
        if module == "cfc":
            cfg = cfg.replace(alpha=base.alpha)
        elif module == "swd":
            cfg = cfg.replace(beta_s=base.beta_s)
        elif module == "ofa":
            operator = base.ofa_operator if base.ofa_operator.uses_osi else OfaOperator.OSI_WARP
            cfg = cfg.replace(ofa_operator=operator)
        else:
            mode = base.ats_mode if base.ats_mode is not AtsMode.OFF else AtsMode.QUADRATIC
            cfg = cfg.replace(ats_mode=mode)
        rows.append((f"+{module}", "worldcache", cfg))
    return rows


def ablation_rows(config: CliConfig, modules: Sequence[str], trace: Optional[Trace] = None) -> List[ResultRow]:
    plan = ablation_configs(config.policy, modules)
    jobs = []
    for _, policy, cfg in plan:
        if trace is None:
            jobs.append(lambda policy=policy, cfg=cfg: run_policy(config, policy, cfg))
        else:
            jobs.append(lambda policy=policy, cfg=cfg: _replay_policy(config, trace, policy, cfg))
    reports = _run_all(jobs, config.run.workers)
    return [ResultRow.from_report(label, r) for (label, _, _), r in zip(plan, reports) if r is not None]


def parse_sweep(text: str) -> Tuple[str, List[Any]]:
    """Parse ``key=start:stop:count`` (inclusive linspace) or ``key=a,b,c``.

    A key without a section refers to the policy section.
    """

    if "=" not in text:
        raise ConfigError(f"Sweep '{text}' must look like key=start:stop:count or key=a,b,c")
    key, body = text.split("=", 1)
    key = key.strip()
    if "." not in key:
        key = f"policy.{key}"
    body = body.strip()
    if ":" in body:
        parts = body.split(":")
        if len(parts) != 3:
            raise ConfigError(f"Sweep range '{body}' must be start:stop:count")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"Sweep range '{body}': {exc}") from exc
        if count < 1:
            raise ConfigError(f"Sweep count must be positive, got {count}")
        return key, [float(v) for v in np.linspace(start, stop, count)]
    values = [v.strip() for v in body.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"Sweep '{text}' has no values")
    return key, values


def _sort_key(value: Any) -> Tuple[int, Any]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (0, value)
    return (1, str(getattr(value, "value", value)))


def run_sweep(
    config: CliConfig,
    key: str,
    values: Sequence[Any],
    policy: str = "worldcache",
    trace: Optional[Trace] = None,
) -> List[ResultRow]:
    """One row per value of ``key``, sorted by the resolved value."""

    section, field_name = key.split(".", 1)
    configs = [config.with_value(key, v) for v in values]
    resolved = [getattr(getattr(c, section), field_name) for c in configs]

    if trace is not None:
        if section != "policy":
            raise ConfigError(f"Replay sweeps vary policy keys only, got '{key}'")
        base = config.policy
        if policy in {"fixed-threshold-scalar-ratio", "fixed-threshold"}:
            base = fixed_threshold_config(base)
        elif policy != "worldcache":
            raise ConfigError(f"Policy '{policy}' has no replay sweep; use worldcache or fixed-threshold-scalar-ratio")
        pairs = replay_sweep(trace, base, field_name, resolved, lk=config.flow, workers=config.run.workers)
        rows = []
        for value, report in pairs:
            report.policy = policy
            rows.append(ResultRow.from_report(policy, report, key, value))
    else:
        reports = _run_all([lambda c=c: run_policy(c, policy) for c in configs], config.run.workers)
        rows = [ResultRow.from_report(policy, r, key, v) for v, r in zip(resolved, reports)]

    order = sorted(range(len(rows)), key=lambda i: _sort_key(resolved[i]))
    return [rows[i] for i in order]
