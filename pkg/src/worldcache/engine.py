"""Trajectory drivers: run a cache controller over a denoiser and assemble a RunReport."""

from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

from .controllers import CacheController, build_controller
from .errors import ShapeMismatchError
from .ofa import LKParams
from .policy import PolicyConfig
from .tensor_core import LatentTensor, relative_l1
from .types import DenoiserInterface, RunReport, StepTelemetry

logger = logging.getLogger(__name__)

PolicyLike = Union[str, CacheController]
UpdateRule = Callable[[LatentTensor, LatentTensor, int], LatentTensor]


def run_step(
    controller: CacheController,
    denoiser: DenoiserInterface,
    z0: LatentTensor,
    t: int,
) -> Tuple[LatentTensor, StepTelemetry]:
    return controller.run_step(denoiser, z0, t)


def _controller(
    policy: PolicyLike,
    cfg: Optional[PolicyConfig],
    lk: Optional[LKParams],
    schedule_period: int,
) -> CacheController:
    if isinstance(policy, CacheController):
        policy.reset()
        return policy
    return build_controller(policy, cfg, lk, schedule_period=schedule_period)


def _check_reference(reference: Optional[Sequence[LatentTensor]], total: int) -> None:
    if reference is not None and len(reference) != total:
        raise ShapeMismatchError(f"reference has {len(reference)} steps, expected {total}")


def _finish(
    controller: CacheController,
    denoiser: DenoiserInterface,
    mode: str,
    steps: List[StepTelemetry],
    outputs: List[LatentTensor],
) -> RunReport:
    final_error = steps[-1].oracle_error if steps else None
    report = RunReport(
        policy=controller.name,
        mode=mode,
        steps=steps,
        probe_cost=denoiser.probe_cost,
        deep_cost=denoiser.deep_cost,
        open_loop=mode != "closed-loop",
        final_output_error=final_error,
        outputs=outputs,
    )
    logger.info(
        "%s %s: steps=%d hits=%d skip=%.3f speedup=%.3f final_error=%s",
        report.policy,
        mode,
        report.total_steps,
        report.hits,
        report.skip_rate,
        report.simulated_speedup,
        "-" if final_error is None else f"{final_error:.3e}",
    )
    return report


def run_trajectory(
    policy: PolicyLike,
    denoiser: DenoiserInterface,
    inputs: Sequence[LatentTensor],
    cfg: Optional[PolicyConfig] = None,
    *,
    lk: Optional[LKParams] = None,
    reference: Optional[Sequence[LatentTensor]] = None,
    schedule_period: int = 2,
) -> RunReport:
    """Open-loop run: every step's input is given up front.

    ``reference`` holds the full-compute output of each step and fills
    ``oracle_error``.
    """

    cfg = cfg or PolicyConfig()
    if len(inputs) != cfg.total_steps:
        raise ShapeMismatchError(f"got {len(inputs)} inputs for total_steps={cfg.total_steps}")
    _check_reference(reference, cfg.total_steps)
    controller = _controller(policy, cfg, lk, schedule_period)

    steps: List[StepTelemetry] = []
    outputs: List[LatentTensor] = []
    for t, z0 in enumerate(inputs):
        output, telemetry = controller.run_step(denoiser, z0, t)
        if reference is not None:
            telemetry.oracle_error = relative_l1(output, reference[t])
        steps.append(telemetry)
        outputs.append(output)
    return _finish(controller, denoiser, "open-loop", steps, outputs)


def run_closed_loop(
    policy: PolicyLike,
    denoiser: DenoiserInterface,
    z_init: LatentTensor,
    update: UpdateRule,
    cfg: Optional[PolicyConfig] = None,
    *,
    lk: Optional[LKParams] = None,
    reference: Optional[Sequence[LatentTensor]] = None,
    schedule_period: int = 2,
) -> RunReport:
    """Closed-loop run: step t+1's input is ``update(output_t, input_t, t)``."""

    cfg = cfg or PolicyConfig()
    _check_reference(reference, cfg.total_steps)
    controller = _controller(policy, cfg, lk, schedule_period)

    steps: List[StepTelemetry] = []
    outputs: List[LatentTensor] = []
    z0 = z_init
    for t in range(cfg.total_steps):
        output, telemetry = controller.run_step(denoiser, z0, t)
        if reference is not None:
            telemetry.oracle_error = relative_l1(output, reference[t])
        steps.append(telemetry)
        outputs.append(output)
        z0 = update(output, z0, t)
    return _finish(controller, denoiser, "closed-loop", steps, outputs)
