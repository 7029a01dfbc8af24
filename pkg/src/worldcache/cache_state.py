"""Two-slot ping-pong cache of the most recent fully computed steps.

Slots are keyed by recency: ``newer`` is the latest miss and ``older`` the
one before it. Stored arrays are read-only copies, and recording returns a
new cache, so a hit can never mutate cached state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CacheNotReadyError, StepOrderError
from .tensor_core import LatentTensor, subtract


def _frozen(x: np.ndarray) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CacheSlot:
    step: int
    z0: LatentTensor
    zk: LatentTensor
    zN: LatentTensor
    residual: LatentTensor

    @classmethod
    def capture(cls, step: int, z0: LatentTensor, zk: LatentTensor, zN: LatentTensor) -> "CacheSlot":
        z0 = _frozen(z0)
        zN = _frozen(zN)
        return cls(step, z0, _frozen(zk), zN, _frozen(subtract(zN, z0)))


@dataclass(frozen=True)
class ResidualCache:
    newer: Optional[CacheSlot] = None
    older: Optional[CacheSlot] = None

    def __post_init__(self) -> None:
        if self.older is not None and self.newer is None:
            raise ValueError("older slot set without a newer slot")
        if self.newer is not None and self.older is not None and self.newer.step <= self.older.step:
            raise StepOrderError(f"newer slot step {self.newer.step} must exceed older {self.older.step}")

    @property
    def latest_step(self) -> Optional[int]:
        return None if self.newer is None else self.newer.step

    def require_ready(self) -> tuple[CacheSlot, CacheSlot]:
        if self.newer is None or self.older is None:
            raise CacheNotReadyError("approximation needs two fully computed steps in the cache")
        return self.newer, self.older


def record_full_step(
    cache: ResidualCache,
    step: int,
    z0: LatentTensor,
    zk: LatentTensor,
    zN: LatentTensor,
) -> ResidualCache:
    if cache.newer is not None and step <= cache.newer.step:
        raise StepOrderError(f"step {step} is not after cached step {cache.newer.step}")
    return ResidualCache(newer=CacheSlot.capture(step, z0, zk, zN), older=cache.newer)


def cache_ready(cache: ResidualCache) -> bool:
    return cache.newer is not None and cache.older is not None


def velocity_anchor(cache: ResidualCache) -> Optional[LatentTensor]:
    return None if cache.older is None else cache.older.z0
