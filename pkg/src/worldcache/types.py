"""Core data structures for WorldCache.

Latent tensors are float64 numpy arrays laid out as (batch, frames, height,
width, channels). A step is either a miss (the deep segment runs and the
ping-pong cache is refreshed) or a hit (the deep output is approximated from
the two most recent misses).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

MAX_ELEMENTS = 2**40


@dataclass(frozen=True)
class TensorShape:
    """Extents of a latent tensor in (B, T_f, H, W, D) order."""

    batch: int
    frames: int
    height: int
    width: int
    channels: int

    def __post_init__(self) -> None:
        for name, value in zip(("batch", "frames", "height", "width", "channels"), self.as_tuple()):
            if int(value) != value or value < 1:
                raise ValueError(f"TensorShape.{name} must be a positive integer, got {value!r}")
        if self.count > MAX_ELEMENTS:
            raise ValueError(f"TensorShape {self.as_tuple()} has too many elements ({self.count})")

    @classmethod
    def from_sequence(cls, extents: Sequence[int]) -> "TensorShape":
        if len(extents) != 5:
            raise ValueError(f"TensorShape needs five extents, got {len(extents)}")
        return cls(*(int(e) for e in extents))

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.batch, self.frames, self.height, self.width, self.channels)

    @property
    def count(self) -> int:
        return self.batch * self.frames * self.height * self.width * self.channels

    @property
    def spatial(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def __str__(self) -> str:
        return "x".join(str(e) for e in self.as_tuple())


class DecisionKind(Enum):
    """Outcome of the skip decision for one step."""

    MISS_FORCED_WARMUP = "miss-forced-warmup"
    MISS_DRIFT = "miss-drift"
    MISS_EXTRAPOLATION = "miss-extrapolation"
    MISS_SCHEDULED = "miss-scheduled"
    HIT = "hit"

    @property
    def is_hit(self) -> bool:
        return self is DecisionKind.HIT


@dataclass(frozen=True)
class CacheDecision:
    kind: DecisionKind
    drift_used: float
    threshold_used: float
    step: int

    @property
    def is_hit(self) -> bool:
        return self.kind.is_hit


@dataclass
class StepTelemetry:
    """Per-step record of signals, decision and cost.

    ``velocity`` is ``None`` while no two-steps-back anchor exists; the
    threshold was then computed with v = 0. ``gamma`` is set on hits only;
    ``scalar_gamma`` is the scalar-ratio coefficient on the same residual
    deltas, kept for attenuation analysis.
    """

    step: int
    decision: CacheDecision
    raw_drift: float
    swd: float
    velocity: Optional[float]
    threshold: float
    cost_spent: float
    gamma: Optional[float] = None
    scalar_gamma: Optional[float] = None
    warp_used: bool = False
    overhead: float = 0.0
    wall_times: Dict[str, float] = field(default_factory=dict)
    oracle_error: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.cost_spent > 0:
            raise ValueError(f"step {self.step}: cost_spent must be positive, got {self.cost_spent}")
        if self.gamma is not None and not self.decision.is_hit:
            raise ValueError(f"step {self.step}: gamma is only recorded on hits")

    @property
    def is_hit(self) -> bool:
        return self.decision.is_hit


@dataclass
class RunReport:
    """Telemetry and summary figures for one trajectory.

    ``mode`` is ``closed-loop``, ``open-loop`` or ``replay``; replayed reports
    always have ``open_loop`` set. ``outputs`` holds the per-step outputs of
    live runs and is empty for replays.
    """

    policy: str
    mode: str
    steps: List[StepTelemetry]
    probe_cost: float
    deep_cost: float
    open_loop: bool = False
    final_output_error: Optional[float] = None
    outputs: List[np.ndarray] = field(default_factory=list, repr=False, compare=False)

    @property
    def total_steps(self) -> int:
        return len(self.steps)

    @property
    def hits(self) -> int:
        return sum(1 for s in self.steps if s.is_hit)

    @property
    def skip_rate(self) -> float:
        if not self.steps:
            return 0.0
        return self.hits / len(self.steps)

    @property
    def total_cost(self) -> float:
        return sum(s.cost_spent for s in self.steps)

    @property
    def total_overhead(self) -> float:
        return sum(s.overhead for s in self.steps)

    @property
    def simulated_speedup(self) -> float:
        if not self.steps:
            return 1.0
        full = len(self.steps) * (self.probe_cost + self.deep_cost)
        return full / self.total_cost

    @property
    def mean_hit_error(self) -> Optional[float]:
        errors = [s.oracle_error for s in self.steps if s.is_hit and s.oracle_error is not None]
        return _average(errors) if errors else None

    @property
    def mean_gamma(self) -> Optional[float]:
        values = [s.gamma for s in self.steps if s.gamma is not None]
        return _average(values) if values else None

    @property
    def mean_scalar_gamma(self) -> Optional[float]:
        values = [s.scalar_gamma for s in self.steps if s.is_hit and s.scalar_gamma is not None]
        return _average(values) if values else None

    def decision_kinds(self) -> List[DecisionKind]:
        return [s.decision.kind for s in self.steps]

    def wall_time_totals(self) -> Dict[str, float]:
        totals: Dict[str, float] = {}
        for s in self.steps:
            for name, millis in s.wall_times.items():
                totals[name] = totals.get(name, 0.0) + millis
        return totals


def _average(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


class DenoiserInterface(Protocol):
    """Two-segment denoiser: a probe prefix that always runs and a skippable deep suffix."""

    latent_shape: TensorShape
    probe_cost: float
    deep_cost: float

    def probe_forward(self, z0: np.ndarray, t: int) -> np.ndarray:
        ...

    def deep_forward(self, zk: np.ndarray, t: int) -> np.ndarray:
        ...
