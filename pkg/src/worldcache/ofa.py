"""Hit-step approximation: optimal state interpolation, latent flow and feature warping.

Residual deltas are taken against the older cache slot:

    delta_tgt = (zk - z0) - r_older
    delta_src = r_newer' - r_older

where ``r_newer'`` is the newer slot's residual, optionally warped onto the
current frame. The interpolated output is ``z0 + r_older + gamma * delta_src``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .cache_state import CacheSlot, ResidualCache
from .errors import ConfigError, NonFiniteError, ShapeMismatchError
from .policy import OfaOperator, PolicyConfig
from .tensor_core import (
    LatentTensor,
    bilinear_resize,
    bilinear_sample,
    grid_to_latent,
    identity_grid,
    inner_product,
    l1_norm,
    latent_to_grid,
    spatial_mean,
    squared_norm,
    subtract,
)

logger = logging.getLogger(__name__)

MIN_FLOW_EXTENT = 3


@dataclass(frozen=True)
class LKParams:
    window_radius: int = 2
    num_iterations: int = 3
    lam: float = 1e-4

    def __post_init__(self) -> None:
        if self.window_radius < 1:
            raise ConfigError(f"flow.window_radius must be at least 1, got {self.window_radius}")
        if self.num_iterations < 1:
            raise ConfigError(f"flow.num_iterations must be at least 1, got {self.num_iterations}")
        if self.lam <= 0:
            raise ConfigError(f"flow.lam must be positive, got {self.lam}")

    @property
    def window_size(self) -> int:
        return 2 * self.window_radius + 1


@dataclass(frozen=True)
class DisplacementField:
    """Per-location (dy, dx) flow in latent pixels; ``prev(p + u) ~ curr(p)``."""

    vectors: np.ndarray
    scale_used: float

    def __post_init__(self) -> None:
        if self.vectors.ndim != 3 or self.vectors.shape[-1] != 2:
            raise ShapeMismatchError(f"flow vectors must be (H, W, 2), got {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise NonFiniteError("flow vectors must be finite")

    @classmethod
    def zero(cls, height: int, width: int, scale_used: float = 1.0) -> "DisplacementField":
        return cls(np.zeros((height, width, 2)), scale_used)

    @property
    def shape(self):
        return self.vectors.shape[:2]

    @property
    def dy(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def dx(self) -> np.ndarray:
        return self.vectors[..., 1]

    def mean_magnitude(self) -> float:
        return float(np.hypot(self.dy, self.dx).mean())


@dataclass(frozen=True)
class Approximation:
    """Result of one hit-step approximation.

    ``raw_gamma`` is the unclamped OSI projection on unwarped deltas (the value
    the extrapolation guard checks); ``scalar_gamma`` is the scalar-ratio
    coefficient on the same deltas.
    """

    output: LatentTensor
    gamma: float
    raw_gamma: float
    scalar_gamma: float
    warp_used: bool


def osi_projection(delta_tgt: LatentTensor, delta_src: LatentTensor, eps: float) -> float:
    return inner_product(delta_tgt, delta_src) / (squared_norm(delta_src) + eps)


def osi_gamma(delta_tgt: LatentTensor, delta_src: LatentTensor, eps: float, gamma_max: float) -> float:
    return float(np.clip(osi_projection(delta_tgt, delta_src, eps), 0.0, gamma_max))


def scalar_ratio_gamma(delta_tgt: LatentTensor, delta_src: LatentTensor, eps: float) -> float:
    if delta_tgt.shape != delta_src.shape:
        raise ShapeMismatchError(f"shape mismatch: {delta_tgt.shape} vs {delta_src.shape}")
    return l1_norm(delta_tgt) / (l1_norm(delta_src) + eps)


def _deltas(
    z0: LatentTensor,
    zk: LatentTensor,
    newer_residual: LatentTensor,
    older: CacheSlot,
) -> tuple[LatentTensor, LatentTensor]:
    partial = subtract(zk, z0)
    return subtract(partial, older.residual), subtract(newer_residual, older.residual)


def osi_approximate(
    z0: LatentTensor,
    zk: LatentTensor,
    cache: ResidualCache,
    cfg: PolicyConfig,
    corrected_newer_residual: Optional[LatentTensor] = None,
) -> LatentTensor:
    newer, older = cache.require_ready()
    source = newer.residual if corrected_newer_residual is None else corrected_newer_residual
    delta_tgt, delta_src = _deltas(z0, zk, source, older)
    gamma = osi_gamma(delta_tgt, delta_src, cfg.eps, cfg.gamma_max)
    return z0 + older.residual + gamma * delta_src


def approximate(
    operator: OfaOperator,
    z0: LatentTensor,
    zk: LatentTensor,
    cache: ResidualCache,
    cfg: PolicyConfig,
    corrected_newer_residual: Optional[LatentTensor] = None,
) -> Approximation:
    """Approximate the deep output of a hit step with ``operator``.

    ``corrected_newer_residual`` is ignored by operators that do not warp.
    """

    newer, older = cache.require_ready()
    if z0.shape != newer.z0.shape or zk.shape != newer.z0.shape:
        raise ShapeMismatchError(f"step latents {z0.shape}/{zk.shape} do not match cache {newer.z0.shape}")
    delta_tgt, delta_src = _deltas(z0, zk, newer.residual, older)
    raw_gamma = osi_projection(delta_tgt, delta_src, cfg.eps)
    scalar_gamma = scalar_ratio_gamma(delta_tgt, delta_src, cfg.eps)
    warped = corrected_newer_residual if operator.uses_warp else None

    if operator is OfaOperator.HOLD:
        return Approximation(np.array(newer.zN), 0.0, raw_gamma, scalar_gamma, False)
    if operator in (OfaOperator.RESIDUAL, OfaOperator.WARP):
        residual = newer.residual if warped is None else warped
        return Approximation(z0 + residual, 1.0, raw_gamma, scalar_gamma, warped is not None)
    if operator is OfaOperator.SCALAR_RATIO:
        return Approximation(z0 + older.residual + scalar_gamma * delta_src, scalar_gamma, raw_gamma, scalar_gamma, False)

    if warped is not None:
        delta_tgt, delta_src = _deltas(z0, zk, warped, older)
    gamma = osi_gamma(delta_tgt, delta_src, cfg.eps, cfg.gamma_max)
    return Approximation(z0 + older.residual + gamma * delta_src, gamma, raw_gamma, scalar_gamma, warped is not None)


def _gradients(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(grid, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    return gy, gx


def _window_sum(values: np.ndarray, size: int) -> np.ndarray:
    return ndimage.uniform_filter(values, size=size, mode="nearest") * (size * size)


def _lucas_kanade(curr: np.ndarray, prev: np.ndarray, lk: LKParams) -> np.ndarray:
    """Iterative dense LK on (h, w, C) grids; returns (h, w, 2) flow in grid pixels."""

    height, width = curr.shape[:2]
    base = identity_grid(height, width)
    flow = np.zeros((height, width, 2))
    size = lk.window_size
    for _ in range(lk.num_iterations):
        warped = bilinear_sample(prev, base + flow)
        gy, gx = _gradients(warped)
        it = curr - warped
        a11 = _window_sum((gy * gy).sum(axis=-1), size) + lk.lam
        a12 = _window_sum((gy * gx).sum(axis=-1), size)
        a22 = _window_sum((gx * gx).sum(axis=-1), size) + lk.lam
        b1 = _window_sum((gy * it).sum(axis=-1), size)
        b2 = _window_sum((gx * it).sum(axis=-1), size)
        det = a11 * a22 - a12 * a12
        flow[..., 0] += (a22 * b1 - a12 * b2) / det
        flow[..., 1] += (a11 * b2 - a12 * b1) / det
    return flow


def flow_grid_extent(height: int, width: int, s_flow: float) -> tuple[int, int]:
    return (max(1, int(round(s_flow * height))), max(1, int(round(s_flow * width))))


def flow_grid_usable(coarse: tuple[int, int]) -> bool:
    return min(coarse) >= MIN_FLOW_EXTENT


def estimate_flow(
    z0_curr: LatentTensor,
    z0_prev: LatentTensor,
    s_flow: float = 0.5,
    lk: Optional[LKParams] = None,
) -> DisplacementField:
    """Dense flow from ``z0_prev`` to ``z0_curr`` solved on an ``s_flow``-scaled grid."""

    lk = lk or LKParams()
    if z0_curr.shape != z0_prev.shape:
        raise ShapeMismatchError(f"shape mismatch: {z0_curr.shape} vs {z0_prev.shape}")
    if not 0.0 < s_flow <= 1.0:
        raise ConfigError(f"s_flow must lie in (0, 1], got {s_flow}")
    height, width = z0_curr.shape[2:4]
    coarse = flow_grid_extent(height, width, s_flow)
    if not flow_grid_usable(coarse):
        raise ShapeMismatchError(
            f"flow grid {coarse[0]}x{coarse[1]} is below {MIN_FLOW_EXTENT}x{MIN_FLOW_EXTENT} (s_flow={s_flow})"
        )

    curr = bilinear_resize(spatial_mean(z0_curr), coarse)
    prev = bilinear_resize(spatial_mean(z0_prev), coarse)
    flow = _lucas_kanade(curr, prev, lk)
    if coarse != (height, width):
        flow = bilinear_resize(flow, (height, width)) / s_flow
    limit = float(max(height, width))
    if np.abs(flow).max(initial=0.0) > limit:
        logger.debug("clamping flow magnitudes to %.1f px", limit)
        flow = np.clip(flow, -limit, limit)
    return DisplacementField(flow, s_flow)


def warp_features(zN_prev: LatentTensor, flow: DisplacementField) -> LatentTensor:
    height, width = zN_prev.shape[2:4]
    if flow.shape != (height, width):
        raise ShapeMismatchError(f"flow extent {flow.shape} does not match latent extent {(height, width)}")
    coords = identity_grid(height, width) + flow.vectors
    warped = bilinear_sample(latent_to_grid(zN_prev), coords)
    return grid_to_latent(warped, zN_prev.shape)


def corrected_residual(slot: CacheSlot, flow: DisplacementField) -> LatentTensor:
    """Newer-slot residual aligned to the current frame.

    The whole residual is warped, which equals warp(zN) - warp(z0); warping
    only zN would carry the frame displacement of z0 into the residual.
    """

    return warp_features(slot.residual, flow)


def warp_gate(t: int, cfg: PolicyConfig) -> bool:
    return cfg.warp_enabled and t >= cfg.warp_disable_before


def approximate_step(
    t: int,
    z0: LatentTensor,
    zk: LatentTensor,
    cache: ResidualCache,
    cfg: PolicyConfig,
    lk: Optional[LKParams] = None,
) -> tuple[Approximation, Optional[DisplacementField]]:
    """Run the configured operator for step ``t``, warping when the gate is open."""

    operator = cfg.ofa_operator
    flow = None
    corrected = None
    if operator.uses_warp and warp_gate(t, cfg):
        coarse = flow_grid_extent(z0.shape[2], z0.shape[3], cfg.s_flow)
        if flow_grid_usable(coarse):
            newer, _ = cache.require_ready()
            flow = estimate_flow(z0, newer.z0, cfg.s_flow, lk)
            corrected = corrected_residual(newer, flow)
        else:
            logger.debug("step %d: flow grid %dx%d too small, warp skipped", t, *coarse)
    return approximate(operator, z0, zk, cache, cfg, corrected), flow


def exceeds_guard(approx: Approximation, cfg: PolicyConfig) -> bool:
    return cfg.gamma_guard and cfg.ofa_operator.uses_osi and approx.raw_gamma > cfg.gamma_max
