"""Skip-decision policy: motion-adaptive threshold, step-dependent relaxation and the decision rule."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError, StepOrderError
from .signals import DEFAULT_EPS, DriftReference
from .types import CacheDecision, DecisionKind

ATS_REFERENCE_STEPS = 35


class AtsMode(Enum):
    OFF = "off"
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class OfaOperator(Enum):
    """How a hit step approximates the deep output."""

    OSI = "osi"
    WARP = "warp"
    OSI_WARP = "osi-warp"
    RESIDUAL = "residual"
    SCALAR_RATIO = "scalar-ratio"
    HOLD = "hold"

    @property
    def uses_warp(self) -> bool:
        return self in (OfaOperator.WARP, OfaOperator.OSI_WARP)

    @property
    def uses_osi(self) -> bool:
        return self in (OfaOperator.OSI, OfaOperator.OSI_WARP)


@dataclass
class PolicyConfig:
    tau0: float = 0.08
    alpha: float = 2.0
    beta_s: float = 0.12
    beta_d: float = 4.0
    ats_mode: AtsMode = AtsMode.QUADRATIC
    gamma_max: float = 2.0
    eps: float = DEFAULT_EPS
    warmup_steps: int = 3
    warp_enabled: bool = True
    warp_disable_before: int = 5
    s_flow: float = 0.5
    total_steps: int = 35
    ofa_operator: OfaOperator = OfaOperator.OSI_WARP
    drift_reference: DriftReference = DriftReference.RELATIVE
    gamma_guard: bool = False
    overhead_fraction: float = 0.03

    def __post_init__(self) -> None:
        try:
            self.ats_mode = AtsMode(self.ats_mode)
            self.ofa_operator = OfaOperator(self.ofa_operator)
            self.drift_reference = DriftReference(self.drift_reference)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("tau0", "alpha", "beta_s", "beta_d", "overhead_fraction"):
            if getattr(self, name) < 0:
                raise ConfigError(f"policy.{name} must be nonnegative, got {getattr(self, name)}")
        if self.gamma_max <= 0:
            raise ConfigError(f"policy.gamma_max must be positive, got {self.gamma_max}")
        if self.eps <= 0:
            raise ConfigError(f"policy.eps must be positive, got {self.eps}")
        if self.warmup_steps < 2:
            raise ConfigError(f"policy.warmup_steps must be at least 2, got {self.warmup_steps}")
        if self.warp_disable_before < 0:
            raise ConfigError(f"policy.warp_disable_before must be nonnegative, got {self.warp_disable_before}")
        if not 0.0 < self.s_flow <= 1.0:
            raise ConfigError(f"policy.s_flow must lie in (0, 1], got {self.s_flow}")
        if self.total_steps < 1:
            raise ConfigError(f"policy.total_steps must be positive, got {self.total_steps}")

    def replace(self, **changes) -> "PolicyConfig":
        return dataclasses.replace(self, **changes)


def cfc_threshold(tau0: float, alpha: float, v: float) -> float:
    return tau0 / (1.0 + alpha * v)


def _check_step(t: int, total: int) -> None:
    if not 0 <= t <= total:
        raise StepOrderError(f"step {t} outside [0, {total}]")


def ats_multiplier_linear(t: int, total_steps: int, beta_d: float) -> float:
    _check_step(t, total_steps)
    return 1.0 + beta_d * (t / total_steps)


def ats_multiplier_quadratic(t: int, total_steps: int) -> float:
    """Quadratic-fit relaxation; rises from 1 at t = 0 to 1 + C(N/35) at t = N."""

    _check_step(t, total_steps)
    u = total_steps / ATS_REFERENCE_STEPS
    c = u * u / 6.0 + u / 2.0 + 10.0 / 3.0
    return 1.0 + c * (t / total_steps)


def ats_multiplier(cfg: PolicyConfig, t: int) -> float:
    if cfg.ats_mode is AtsMode.LINEAR:
        return ats_multiplier_linear(t, cfg.total_steps, cfg.beta_d)
    if cfg.ats_mode is AtsMode.QUADRATIC:
        return ats_multiplier_quadratic(t, cfg.total_steps)
    return 1.0


def effective_threshold(cfg: PolicyConfig, v: float, t: int) -> float:
    return cfc_threshold(cfg.tau0, cfg.alpha, v) * ats_multiplier(cfg, t)


def decide(cfg: PolicyConfig, swd: float, v: float, t: int, cache_ready: bool) -> CacheDecision:
    threshold = effective_threshold(cfg, v, t)
    if t < cfg.warmup_steps or not cache_ready:
        return CacheDecision(DecisionKind.MISS_FORCED_WARMUP, swd, threshold, t)
    if swd < threshold:
        return CacheDecision(DecisionKind.HIT, swd, threshold, t)
    return CacheDecision(DecisionKind.MISS_DRIFT, swd, threshold, t)
