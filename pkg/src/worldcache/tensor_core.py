"""Dense tensor substrate.

Latents are float64 arrays of shape (B, T_f, H, W, D). Spatial maps are
(H, W) arrays and spatial grids are (H, W, C) arrays. Every function here is
pure: inputs are never modified.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError
from .types import TensorShape

LatentTensor = np.ndarray


def as_latent(x, shape: Optional[TensorShape] = None) -> LatentTensor:
    """Validate ``x`` as a finite five-axis latent and return it as float64."""

    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 5:
        raise ShapeMismatchError(f"latent must have 5 axes (B, T_f, H, W, D), got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeMismatchError(f"latent has an empty extent: {arr.shape}")
    if shape is not None and arr.shape != shape.as_tuple():
        raise ShapeMismatchError(f"latent shape {arr.shape} does not match {shape.as_tuple()}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"latent of shape {arr.shape} contains NaN or Inf")
    return arr


def shape_of(x: LatentTensor) -> TensorShape:
    return TensorShape.from_sequence(x.shape)


def _check_same(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ShapeMismatchError(f"shape mismatch: {x.shape} vs {y.shape}")


def l1_norm(x: LatentTensor) -> float:
    return float(np.abs(x).sum())


def subtract(x: LatentTensor, y: LatentTensor) -> LatentTensor:
    _check_same(x, y)
    return np.subtract(x, y)


def inner_product(x: LatentTensor, y: LatentTensor) -> float:
    _check_same(x, y)
    return float(np.dot(x.ravel(), y.ravel()))


def squared_norm(x: LatentTensor) -> float:
    flat = x.ravel()
    return float(np.dot(flat, flat))


def per_location_l1(x: LatentTensor) -> np.ndarray:
    """(H, W) map of the L1 norm over batch, frame and channel axes."""

    return np.abs(x).sum(axis=(0, 1, 4))


def spatial_mean(x: LatentTensor) -> np.ndarray:
    """Average over batch and frame axes, giving an (H, W, D) grid."""

    return x.mean(axis=(0, 1))


def channel_variance_map(x: LatentTensor) -> np.ndarray:
    # population variance; D = 1 yields zeros
    return spatial_mean(x).var(axis=-1)


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    """Rescale a map to [0, 1]; a constant map becomes all zeros."""

    m = np.asarray(m, dtype=np.float64)
    lo = float(m.min())
    hi = float(m.max())
    if hi == lo:
        return np.zeros_like(m)
    return np.clip((m - lo) / (hi - lo), 0.0, 1.0)


def identity_grid(height: int, width: int) -> np.ndarray:
    """(H, W, 2) grid of (y, x) pixel coordinates."""

    ys, xs = np.meshgrid(
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64),
        indexing="ij",
    )
    return np.stack([ys, xs], axis=-1)


def _interpolate(grid: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    height, width = grid.shape[:2]
    ys = np.clip(ys, 0.0, height - 1)
    xs = np.clip(xs, 0.0, width - 1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), height - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    wy = (ys - y0)[..., None]
    wx = (xs - x0)[..., None]

    a = grid[y0, x0]
    b = grid[y0, x1]
    c = grid[y1, x0]
    d = grid[y1, x1]
    # a + w * (b - a) keeps integer coordinates and constant grids exact
    top = a + wx * (b - a)
    bottom = c + wx * (d - c)
    return top + wy * (bottom - top)


def bilinear_resize(grid: np.ndarray, target: Tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resize of an (H, W, C) grid to ``target``."""

    out_h, out_w = int(target[0]), int(target[1])
    if out_h < 1 or out_w < 1:
        raise ShapeMismatchError(f"resize target must be at least 1x1, got {target}")
    height, width = grid.shape[:2]
    if (out_h, out_w) == (height, width):
        return np.array(grid, dtype=np.float64, copy=True)
    ys = np.linspace(0.0, height - 1, out_h)
    xs = np.linspace(0.0, width - 1, out_w)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _interpolate(np.asarray(grid, dtype=np.float64), yy, xx)


def bilinear_sample(grid: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample an (H, W, C) grid at (H', W', 2) coordinates, clamping to the edges."""

    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[-1] != 2:
        raise ShapeMismatchError(f"coords must be (H, W, 2), got {coords.shape}")
    if not np.isfinite(coords).all():
        raise NonFiniteError("sampling coordinates contain NaN or Inf")
    return _interpolate(np.asarray(grid, dtype=np.float64), coords[..., 0], coords[..., 1])


def latent_to_grid(x: LatentTensor) -> np.ndarray:
    """Fold a latent into an (H, W, B*T_f*D) grid for spatial resampling."""

    b, f, h, w, d = x.shape
    return np.transpose(x, (2, 3, 0, 1, 4)).reshape(h, w, b * f * d)


def grid_to_latent(grid: np.ndarray, shape: Tuple[int, int, int, int, int]) -> LatentTensor:
    b, f, h, w, d = shape
    return np.transpose(grid.reshape(h, w, b, f, d), (2, 3, 0, 1, 4)).copy()


def relative_l1(x: LatentTensor, reference: LatentTensor, eps: float = 1e-12) -> float:
    """L1 distance of ``x`` from ``reference`` relative to the reference's L1 norm."""

    return l1_norm(subtract(x, reference)) / (l1_norm(reference) + eps)
