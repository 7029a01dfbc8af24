"""Drift signals: probe drift, motion velocity, saliency and saliency-weighted drift."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError
from .tensor_core import (
    LatentTensor,
    channel_variance_map,
    l1_norm,
    minmax_normalize,
    per_location_l1,
    subtract,
)

DEFAULT_EPS = 1e-8


class DriftReference(Enum):
    """Normalization of the saliency-weighted drift used for decisions.

    RELATIVE divides the weighted L1 sum by the previous probe's L1 norm, so it
    is comparable to the raw drift ratio. ABSOLUTE is the mean weighted L1 per
    location in latent-value units.
    """

    RELATIVE = "relative"
    ABSOLUTE = "absolute"


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray
    source_step: int

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ShapeMismatchError(f"saliency map must be 2-D, got shape {self.values.shape}")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("saliency values must lie in [0, 1]")

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def flat(cls, height: int, width: int, source_step: int = 0) -> "SaliencyMap":
        return cls(np.zeros((height, width)), source_step)


@dataclass(frozen=True)
class DriftReading:
    """Signals measured at one step.

    ``decision_drift`` is whichever of the SWD variants the policy compares
    against its threshold.
    """

    step: int
    raw_drift: float
    swd_drift: float
    velocity: Optional[float]
    decision_drift: float

    def __post_init__(self) -> None:
        for name in ("raw_drift", "swd_drift", "decision_drift"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise NonFiniteError(f"{name} must be finite and nonnegative, got {value}")
        if self.velocity is not None and (not np.isfinite(self.velocity) or self.velocity < 0):
            raise NonFiniteError(f"velocity must be finite and nonnegative, got {self.velocity}")

    @property
    def velocity_or_zero(self) -> float:
        return 0.0 if self.velocity is None else self.velocity


def probe_drift(z_k_curr: LatentTensor, z_k_prev: LatentTensor, eps: float = DEFAULT_EPS) -> float:
    return l1_norm(subtract(z_k_curr, z_k_prev)) / (l1_norm(z_k_prev) + eps)


def motion_velocity(z0_curr: LatentTensor, z0_anchor: LatentTensor, eps: float = DEFAULT_EPS) -> float:
    return l1_norm(subtract(z0_curr, z0_anchor)) / (l1_norm(z0_anchor) + eps)


def saliency_map(z_k: LatentTensor, step: int = 0) -> SaliencyMap:
    return SaliencyMap(minmax_normalize(channel_variance_map(z_k)), step)


def _weighted_sum(diff: LatentTensor, saliency: SaliencyMap, beta_s: float) -> float:
    if saliency.shape != diff.shape[2:4]:
        raise ShapeMismatchError(
            f"saliency map {saliency.shape} does not match spatial extent {diff.shape[2:4]}"
        )
    if beta_s == 0:
        return l1_norm(diff)
    weights = 1.0 + beta_s * saliency.values
    return float((per_location_l1(diff) * weights).sum())


def swd_drift(
    z_k_curr: LatentTensor,
    z_k_prev: LatentTensor,
    saliency: SaliencyMap,
    beta_s: float,
) -> float:
    diff = subtract(z_k_curr, z_k_prev)
    height, width = diff.shape[2:4]
    return _weighted_sum(diff, saliency, beta_s) / (height * width)


def relative_swd_drift(
    z_k_curr: LatentTensor,
    z_k_prev: LatentTensor,
    saliency: SaliencyMap,
    beta_s: float,
    eps: float = DEFAULT_EPS,
) -> float:
    """Saliency-weighted drift normalized like probe_drift; equals it when beta_s is 0."""

    diff = subtract(z_k_curr, z_k_prev)
    return _weighted_sum(diff, saliency, beta_s) / (l1_norm(z_k_prev) + eps)


def read_drift(
    step: int,
    z_k_curr: LatentTensor,
    z_k_prev: Optional[LatentTensor],
    z0_curr: LatentTensor,
    z0_anchor: Optional[LatentTensor],
    saliency: SaliencyMap,
    *,
    beta_s: float,
    eps: float = DEFAULT_EPS,
    reference: DriftReference = DriftReference.RELATIVE,
) -> DriftReading:
    """Measure every drift signal for one step.

    Without a previous probe (the first step) drifts read as zero; without an
    anchor the velocity is absent.
    """

    velocity = None if z0_anchor is None else motion_velocity(z0_curr, z0_anchor, eps)
    if z_k_prev is None:
        return DriftReading(step, 0.0, 0.0, velocity, 0.0)
    raw = probe_drift(z_k_curr, z_k_prev, eps)
    swd = swd_drift(z_k_curr, z_k_prev, saliency, beta_s)
    if reference is DriftReference.ABSOLUTE:
        decision = swd
    else:
        decision = relative_swd_drift(z_k_curr, z_k_prev, saliency, beta_s, eps)
    return DriftReading(step, raw, swd, velocity, decision)
