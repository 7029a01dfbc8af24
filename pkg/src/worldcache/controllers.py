"""Per-stream cache controllers: WorldCache and the comparison baselines."""

from __future__ import annotations

import logging
import time
from typing import Dict, Optional, Tuple

from .cache_state import ResidualCache, cache_ready, record_full_step, velocity_anchor
from .errors import ConfigError, StepOrderError
from .ofa import Approximation, LKParams, approximate, approximate_step, exceeds_guard
from .policy import AtsMode, OfaOperator, PolicyConfig, decide
from .signals import DriftReading, DriftReference, SaliencyMap, read_drift, saliency_map
from .tensor_core import LatentTensor, as_latent
from .types import CacheDecision, DecisionKind, DenoiserInterface, StepTelemetry

logger = logging.getLogger(__name__)

POLICY_NAMES = ("worldcache", "fixed-threshold-scalar-ratio", "fixed-schedule", "full-compute")


class _Stopwatch:
    def __init__(self) -> None:
        self.times: Dict[str, float] = {}
        self._start = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.times[name] = self.times.get(name, 0.0) + (now - self._start) * 1000.0
        self._start = now


class CacheController:
    """Owns one stream's ping-pong cache and last-probe register.

    Subclasses choose how signals are read, how the decision is made and
    how a hit is approximated; the probe always runs.
    """

    name = "base"
    operator = OfaOperator.HOLD

    def __init__(self, cfg: Optional[PolicyConfig] = None, lk: Optional[LKParams] = None) -> None:
        self.cfg = cfg or PolicyConfig()
        self.lk = lk or LKParams()
        self.reset()

    def reset(self) -> None:
        self.cache = ResidualCache()
        self._last_probe: Optional[LatentTensor] = None
        self._last_step: Optional[int] = None

    def run_step(self, denoiser: DenoiserInterface, z0: LatentTensor, t: int) -> Tuple[LatentTensor, StepTelemetry]:
        if self._last_step is not None and t <= self._last_step:
            raise StepOrderError(f"step {t} invoked after step {self._last_step}")
        clock = _Stopwatch()
        z0 = as_latent(z0, denoiser.latent_shape)
        zk = as_latent(denoiser.probe_forward(z0, t), denoiser.latent_shape)
        clock.lap("probe")

        reading = self._read(z0, zk, t)
        decision = self._decide(reading, t)
        clock.lap("signals")

        approx: Optional[Approximation] = None
        overhead = 0.0
        if decision.is_hit:
            overhead = self._overhead(denoiser)
            approx = self._approximate(z0, zk, t, clock)
            if approx is None:
                decision = CacheDecision(DecisionKind.MISS_EXTRAPOLATION, decision.drift_used, decision.threshold_used, t)

        if decision.is_hit:
            output = approx.output
            cost = denoiser.probe_cost + overhead
        else:
            output = as_latent(denoiser.deep_forward(zk, t), denoiser.latent_shape)
            clock.lap("deep")
            self.cache = record_full_step(self.cache, t, z0, zk, output)
            clock.lap("cache")
            cost = denoiser.probe_cost + denoiser.deep_cost + overhead

        self._last_probe = zk
        self._last_step = t
        telemetry = StepTelemetry(
            step=t,
            decision=decision,
            raw_drift=reading.raw_drift,
            swd=reading.swd_drift,
            velocity=reading.velocity,
            threshold=decision.threshold_used,
            cost_spent=cost,
            gamma=approx.gamma if decision.is_hit else None,
            scalar_gamma=None if approx is None else approx.scalar_gamma,
            warp_used=bool(decision.is_hit and approx.warp_used),
            overhead=overhead,
            wall_times=clock.times,
        )
        logger.debug(
            "%s step=%d kind=%s drift=%.6g thr=%.6g gamma=%s",
            self.name,
            t,
            decision.kind.value,
            decision.drift_used,
            decision.threshold_used,
            "-" if telemetry.gamma is None else f"{telemetry.gamma:.4f}",
        )
        return output, telemetry

    def _overhead(self, denoiser: DenoiserInterface) -> float:
        if self.operator is OfaOperator.HOLD:
            return 0.0
        return self.cfg.overhead_fraction * denoiser.deep_cost

    def _saliency(self, zk: LatentTensor, t: int) -> SaliencyMap:
        height, width = zk.shape[2:4]
        return SaliencyMap.flat(height, width, t)

    def _read(self, z0: LatentTensor, zk: LatentTensor, t: int) -> DriftReading:
        return read_drift(
            t,
            zk,
            self._last_probe,
            z0,
            velocity_anchor(self.cache),
            self._saliency(zk, t),
            beta_s=0.0,
            eps=self.cfg.eps,
            reference=DriftReference.RELATIVE,
        )

    def _decide(self, reading: DriftReading, t: int) -> CacheDecision:
        raise NotImplementedError

    def _approximate(self, z0: LatentTensor, zk: LatentTensor, t: int, clock: _Stopwatch) -> Optional[Approximation]:
        approx = approximate(self.operator, z0, zk, self.cache, self.cfg)
        clock.lap("approx")
        return approx


class WorldCacheController(CacheController):
    name = "worldcache"

    @property
    def operator(self) -> OfaOperator:  # type: ignore[override]
        return self.cfg.ofa_operator

    def _saliency(self, zk: LatentTensor, t: int) -> SaliencyMap:
        return saliency_map(zk, t)

    def _read(self, z0: LatentTensor, zk: LatentTensor, t: int) -> DriftReading:
        return read_drift(
            t,
            zk,
            self._last_probe,
            z0,
            velocity_anchor(self.cache),
            self._saliency(zk, t),
            beta_s=self.cfg.beta_s,
            eps=self.cfg.eps,
            reference=self.cfg.drift_reference,
        )

    def _decide(self, reading: DriftReading, t: int) -> CacheDecision:
        return decide(self.cfg, reading.decision_drift, reading.velocity_or_zero, t, cache_ready(self.cache))

    def _approximate(self, z0: LatentTensor, zk: LatentTensor, t: int, clock: _Stopwatch) -> Optional[Approximation]:
        approx, _ = approximate_step(t, z0, zk, self.cache, self.cfg, self.lk)
        clock.lap("approx")
        if exceeds_guard(approx, self.cfg):
            logger.debug("step=%d extrapolation coefficient %.4f exceeds %.4f; recomputing", t, approx.raw_gamma, self.cfg.gamma_max)
            return None
        return approx


def fixed_threshold_config(cfg: PolicyConfig) -> PolicyConfig:
    """Reduce a policy to a fixed global threshold on raw drift with scalar-ratio reuse."""

    return cfg.replace(
        alpha=0.0,
        beta_s=0.0,
        ats_mode=AtsMode.OFF,
        warp_enabled=False,
        ofa_operator=OfaOperator.SCALAR_RATIO,
        drift_reference=DriftReference.RELATIVE,
        gamma_guard=False,
    )


class FixedThresholdController(WorldCacheController):
    name = "fixed-threshold-scalar-ratio"

    def __init__(self, cfg: Optional[PolicyConfig] = None, lk: Optional[LKParams] = None) -> None:
        super().__init__(fixed_threshold_config(cfg or PolicyConfig()), lk)

    def _saliency(self, zk: LatentTensor, t: int) -> SaliencyMap:
        height, width = zk.shape[2:4]
        return SaliencyMap.flat(height, width, t)


class FixedScheduleController(CacheController):
    """Recompute every ``period`` steps after warmup and hold the newest deep output in between."""

    name = "fixed-schedule"
    operator = OfaOperator.HOLD

    def __init__(self, cfg: Optional[PolicyConfig] = None, lk: Optional[LKParams] = None, period: int = 2) -> None:
        if period < 1:
            raise ConfigError(f"schedule period must be at least 1, got {period}")
        self.period = period
        super().__init__(cfg, lk)

    def _decide(self, reading: DriftReading, t: int) -> CacheDecision:
        if t < self.cfg.warmup_steps or not cache_ready(self.cache):
            return CacheDecision(DecisionKind.MISS_FORCED_WARMUP, reading.raw_drift, 0.0, t)
        if (t - self.cfg.warmup_steps) % self.period != 0:
            return CacheDecision(DecisionKind.HIT, reading.raw_drift, 0.0, t)
        return CacheDecision(DecisionKind.MISS_SCHEDULED, reading.raw_drift, 0.0, t)


class FullComputeController(CacheController):
    name = "full-compute"

    def _decide(self, reading: DriftReading, t: int) -> CacheDecision:
        return CacheDecision(DecisionKind.MISS_SCHEDULED, reading.raw_drift, 0.0, t)


def build_controller(
    name: str,
    cfg: Optional[PolicyConfig] = None,
    lk: Optional[LKParams] = None,
    *,
    schedule_period: int = 2,
) -> CacheController:
    if name == "worldcache":
        return WorldCacheController(cfg, lk)
    if name in {"fixed-threshold-scalar-ratio", "fixed-threshold"}:
        return FixedThresholdController(cfg, lk)
    if name == "fixed-schedule":
        return FixedScheduleController(cfg, lk, period=schedule_period)
    if name in {"full-compute", "full"}:
        return FullComputeController(cfg, lk)
    raise ConfigError(f"Unknown policy '{name}'")
