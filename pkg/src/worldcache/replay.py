"""Record full-compute traces and replay WorldCache decisions over them offline.

Replay is open-loop: every recorded step was fully computed, so the velocity
anchor is simply the input recorded two steps back and the drift signals
are fixed by the trace. Decisions are therefore a per-step function of
tau0, and the hit count can only grow as tau0 grows. When deep outputs are
recorded, hits are approximated from the two most recent replay misses and
scored against the recorded output.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

from .cache_state import ResidualCache, cache_ready, record_full_step
from .errors import MissingTapError, StepOrderError, TraceFormatError
from .ofa import LKParams, approximate_step
from .policy import OfaOperator, PolicyConfig, decide
from .signals import read_drift, saliency_map
from .sim import ScenarioConfig, make_denoiser, run_oracle
from .tensor_core import relative_l1
from .trace_format import TAP_Z0, TAP_ZK, TAP_ZN, Trace, TraceHeader, TraceStep, read_trace, write_trace
from .types import RunReport, StepTelemetry

logger = logging.getLogger(__name__)

ALL_TAPS = TAP_Z0 | TAP_ZK | TAP_ZN


def record_trace(
    cfg: ScenarioConfig,
    path: Optional[Union[str, Path]] = None,
    taps: int = ALL_TAPS,
) -> Trace:
    """Record a full-compute closed-loop run of ``cfg``; write it when ``path`` is given."""

    oracle = run_oracle(cfg, make_denoiser(cfg))
    header = TraceHeader(shape=cfg.shape, total_steps=cfg.total_steps, taps=taps, seed=cfg.seed)
    steps = [
        TraceStep(
            step=t,
            z0=oracle.inputs[t] if taps & TAP_Z0 else None,
            zk=oracle.probes[t] if taps & TAP_ZK else None,
            zN=oracle.outputs[t] if taps & TAP_ZN else None,
        )
        for t in range(cfg.total_steps)
    ]
    trace = Trace(header, steps)
    if path is not None:
        write_trace(path, header, steps)
        logger.info("recorded %s trace with %d steps to %s", cfg.kind.value, cfg.total_steps, path)
    return trace


def replay_decisions(
    trace: Trace,
    cfg: Optional[PolicyConfig] = None,
    lk: Optional[LKParams] = None,
    *,
    probe_cost: float = 1.0,
    deep_cost: float = 9.0,
) -> RunReport:
    header = trace.header
    missing = [name for bit, name in ((TAP_Z0, "z0"), (TAP_ZK, "zk")) if not header.has(bit)]
    if missing:
        raise MissingTapError(f"replay needs taps {missing} which the trace lacks")
    cfg = cfg or PolicyConfig()
    if cfg.total_steps != header.total_steps:
        logger.debug("aligning total_steps %d to trace length %d", cfg.total_steps, header.total_steps)
        cfg = cfg.replace(total_steps=header.total_steps)
    has_deep = header.has(TAP_ZN)
    overhead_per_hit = 0.0 if cfg.ofa_operator is OfaOperator.HOLD else cfg.overhead_fraction * deep_cost

    cache = ResidualCache()
    misses = 0
    prev_probe = None
    last_step = -1
    steps: List[StepTelemetry] = []
    for index, record in enumerate(trace.steps):
        t = record.step
        if t <= last_step:
            raise StepOrderError(f"trace step {t} follows step {last_step}")
        if t >= header.total_steps:
            raise TraceFormatError(f"trace step {t} lies outside the {header.total_steps} declared steps")
        anchor = trace.steps[index - 2].z0 if index >= 2 else None
        reading = read_drift(
            t,
            record.zk,
            prev_probe,
            record.z0,
            anchor,
            saliency_map(record.zk, t),
            beta_s=cfg.beta_s,
            eps=cfg.eps,
            reference=cfg.drift_reference,
        )
        decision = decide(cfg, reading.decision_drift, reading.velocity_or_zero, t, misses >= 2)

        gamma = scalar_gamma = error = None
        warp_used = False
        if decision.is_hit:
            cost = probe_cost + overhead_per_hit
            overhead = overhead_per_hit
            if has_deep and cache_ready(cache):
                approx, _ = approximate_step(t, record.z0, record.zk, cache, cfg, lk)
                gamma, scalar_gamma, warp_used = approx.gamma, approx.scalar_gamma, approx.warp_used
                error = relative_l1(approx.output, record.zN)
        else:
            cost = probe_cost + deep_cost
            overhead = 0.0
            misses += 1
            if has_deep:
                cache = record_full_step(cache, t, record.z0, record.zk, record.zN)

        steps.append(
            StepTelemetry(
                step=t,
                decision=decision,
                raw_drift=reading.raw_drift,
                swd=reading.swd_drift,
                velocity=reading.velocity,
                threshold=decision.threshold_used,
                cost_spent=cost,
                gamma=gamma,
                scalar_gamma=scalar_gamma,
                warp_used=warp_used,
                overhead=overhead,
                oracle_error=error,
            )
        )
        prev_probe = record.zk
        last_step = t

    report = RunReport(
        policy="worldcache",
        mode="replay",
        steps=steps,
        probe_cost=probe_cost,
        deep_cost=deep_cost,
        open_loop=True,
        final_output_error=None,
    )
    logger.info(
        "replay tau0=%g: hits=%d/%d skip=%.3f speedup=%.3f",
        cfg.tau0,
        report.hits,
        report.total_steps,
        report.skip_rate,
        report.simulated_speedup,
    )
    return report


def replay_file(path: Union[str, Path], cfg: Optional[PolicyConfig] = None, lk: Optional[LKParams] = None) -> RunReport:
    return replay_decisions(read_trace(path), cfg, lk)


def replay_sweep(
    trace: Trace,
    cfg: PolicyConfig,
    key: str,
    values: Sequence[Any],
    *,
    lk: Optional[LKParams] = None,
    workers: int = 4,
) -> List[Tuple[Any, RunReport]]:
    """Replay the trace once per value of the policy field ``key``."""

    configs = [cfg.replace(**{key: value}) for value in values]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(lambda c: replay_decisions(trace, c, lk), configs))
    return list(zip(values, reports))
