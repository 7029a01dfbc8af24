"""Synthetic denoisers with known ground truth and the full-compute oracle.

Each scenario defines a per-step residual ``r_t = base + dynamic_t``. The
probe returns ``z0 + dynamic_t + probe_fraction * base`` and the deep segment
adds the rest of the base, so ``deep(probe(z0)) - z0 == r_t``. The base field
is orthogonal to every dynamic direction. The curved scenario has no base,
so its residual is a pure rotation in the plane of two orthonormal fields.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .tensor_core import LatentTensor, bilinear_resize, grid_to_latent, inner_product, squared_norm
from .types import TensorShape

logger = logging.getLogger(__name__)

DEFAULT_SHAPE = (1, 4, 32, 32, 16)
_COARSE_FIELD = 4
_RISING_ROTATION = 1.0
_NOISE_STREAM = 1000


class ScenarioKind(Enum):
    STATIC = "static"
    LINEAR_DRIFT = "linear-drift"
    TRANSLATING = "translating-pattern"
    CURVED = "curved"
    RISING_DRIFT = "rising-drift"


# (base_scale, dynamic_scale) per kind; for translating-pattern the dynamic
# scale is the blob amplitude.
_KIND_SCALES = {
    ScenarioKind.STATIC: (0.05, 0.0),
    ScenarioKind.LINEAR_DRIFT: (0.05, 0.05),
    ScenarioKind.CURVED: (0.0, 0.04),
    ScenarioKind.RISING_DRIFT: (0.02, 0.3),
    ScenarioKind.TRANSLATING: (0.0, 1.0),
}


@dataclass
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.STATIC
    shape: TensorShape = field(default_factory=lambda: TensorShape(*DEFAULT_SHAPE))
    seed: int = 0
    motion_speed: float = 0.5
    curvature: float = 0.5
    noise_sigma: float = 0.0
    total_steps: int = 35
    probe_fraction: float = 0.4
    base_scale: Optional[float] = None
    dynamic_scale: Optional[float] = None
    eta: float = 0.5
    probe_cost: float = 1.0
    deep_cost: float = 9.0
    max_elements: int = 10**6

    def __post_init__(self) -> None:
        try:
            self.kind = ScenarioKind(self.kind)
            if not isinstance(self.shape, TensorShape):
                self.shape = TensorShape.from_sequence(self.shape)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.shape.count > self.max_elements:
            raise ConfigError(f"scenario shape {self.shape} exceeds {self.max_elements} elements")
        if self.seed < 0:
            raise ConfigError(f"scenario.seed must be nonnegative, got {self.seed}")
        if not 0.0 <= self.curvature <= 1.0:
            raise ConfigError(f"scenario.curvature must lie in [0, 1], got {self.curvature}")
        if not 0.0 <= self.probe_fraction <= 1.0:
            raise ConfigError(f"scenario.probe_fraction must lie in [0, 1], got {self.probe_fraction}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"scenario.eta must lie in [0, 1], got {self.eta}")
        for name in ("motion_speed", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"scenario.{name} must be nonnegative, got {getattr(self, name)}")
        for name in ("probe_cost", "deep_cost"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"scenario.{name} must be positive, got {getattr(self, name)}")
        if self.total_steps < 1:
            raise ConfigError(f"scenario.total_steps must be positive, got {self.total_steps}")
        if self.kind is ScenarioKind.CURVED and self.base_scale:
            raise ConfigError("scenario.base_scale must be 0 for curved; its residual is a pure rotation")

    @property
    def resolved_base_scale(self) -> float:
        return _KIND_SCALES[self.kind][0] if self.base_scale is None else self.base_scale

    @property
    def resolved_dynamic_scale(self) -> float:
        return _KIND_SCALES[self.kind][1] if self.dynamic_scale is None else self.dynamic_scale

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class OracleRun:
    """Full-compute closed-loop trajectory."""

    inputs: List[LatentTensor]
    probes: List[LatentTensor]
    outputs: List[LatentTensor]

    @property
    def final(self) -> LatentTensor:
        return self.outputs[-1]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def _unit_rms(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt(squared_norm(x) / x.size)


def _orthonormalize(fields: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Gram-Schmidt over whole tensors, each result scaled to unit RMS."""

    basis: List[np.ndarray] = []
    for f in fields:
        v = np.array(f, dtype=np.float64)
        for b in basis:
            v = v - (inner_product(v, b) / squared_norm(b)) * b
        basis.append(_unit_rms(v))
    return basis


def _smooth_field(rng: np.random.Generator, shape: TensorShape) -> np.ndarray:
    coarse = (min(_COARSE_FIELD, shape.height), min(_COARSE_FIELD, shape.width))
    grid = rng.standard_normal((coarse[0], coarse[1], shape.batch * shape.frames * shape.channels))
    return grid_to_latent(bilinear_resize(grid, shape.spatial), shape.as_tuple())


def _uniform_field(rng: np.random.Generator, shape: TensorShape) -> np.ndarray:
    profile = rng.standard_normal((shape.batch, shape.frames, 1, 1, shape.channels))
    return np.broadcast_to(profile, shape.as_tuple()).copy()


def _read_only(x: np.ndarray) -> np.ndarray:
    x.setflags(write=False)
    return x


class SyntheticDenoiser:
    """Deterministic two-segment denoiser for one scenario."""

    def __init__(self, cfg: ScenarioConfig) -> None:
        self.cfg = cfg
        self.latent_shape = cfg.shape
        self.probe_cost = cfg.probe_cost
        self.deep_cost = cfg.deep_cost
        self._dynamic: Dict[int, np.ndarray] = {}
        self._build_fields()

    def _build_fields(self) -> None:
        cfg = self.cfg
        shape = cfg.shape
        rng = _rng(cfg.seed, 1)
        self._directions: List[np.ndarray] = []
        if cfg.kind is ScenarioKind.STATIC:
            self._base = _read_only(cfg.resolved_base_scale * _unit_rms(_uniform_field(rng, shape)))
        elif cfg.kind is ScenarioKind.TRANSLATING:
            self._base = _read_only(np.zeros(shape.as_tuple()))
            self._build_blobs(rng)
        elif cfg.kind is ScenarioKind.CURVED:
            self._base = _read_only(np.zeros(shape.as_tuple()))
            self._directions = _orthonormalize([_smooth_field(rng, shape) for _ in range(2)])
        else:
            count = 2 if cfg.kind is ScenarioKind.LINEAR_DRIFT else 3
            fields = _orthonormalize([_smooth_field(rng, shape) for _ in range(count)])
            self._base = _read_only(cfg.resolved_base_scale * fields[0])
            self._directions = fields[1:]

    def _build_blobs(self, rng: np.random.Generator) -> None:
        shape = self.cfg.shape
        height, width = shape.spatial
        self._sigma = max(1.5, height / 8.0)
        self._blob_rows = [height * (i + 1) / 4.0 + rng.uniform(-1.0, 1.0) for i in range(3)]
        self._blob_cols = [width * 0.2 + rng.uniform(0.0, 0.1 * width) for _ in range(3)]
        self._blob_profiles = [1.0 + 0.5 * rng.standard_normal(shape.channels) for _ in range(3)]
        self._offset = 1.0

    def _pattern(self, t: float) -> np.ndarray:
        """Blob stack after ``t`` steps of motion along the width axis."""

        shape = self.cfg.shape
        ys = np.arange(shape.height, dtype=np.float64)[:, None]
        xs = np.arange(shape.width, dtype=np.float64)[None, :]
        grid = np.zeros((shape.height, shape.width, shape.channels))
        shift = self.cfg.motion_speed * t
        for row, col, profile in zip(self._blob_rows, self._blob_cols, self._blob_profiles):
            bump = np.exp(-((ys - row) ** 2 + (xs - col - shift) ** 2) / (2.0 * self._sigma**2))
            grid += bump[:, :, None] * profile[None, None, :]
        grid *= self.cfg.resolved_dynamic_scale
        return np.broadcast_to(grid, shape.as_tuple()).copy()

    @property
    def base(self) -> np.ndarray:
        return self._base

    def dynamic(self, t: int) -> np.ndarray:
        """Step-dependent part of the residual, fully visible to the probe."""

        cached = self._dynamic.get(t)
        if cached is not None:
            return cached
        cfg = self.cfg
        scale = cfg.resolved_dynamic_scale
        ratio = t / cfg.total_steps
        if cfg.kind is ScenarioKind.STATIC:
            value = np.zeros(cfg.shape.as_tuple())
        elif cfg.kind is ScenarioKind.LINEAR_DRIFT:
            value = (scale * ratio) * self._directions[0]
        elif cfg.kind is ScenarioKind.CURVED:
            angle = cfg.curvature * t
            value = scale * (np.cos(angle) * self._directions[0] + np.sin(angle) * self._directions[1])
        elif cfg.kind is ScenarioKind.RISING_DRIFT:
            angle = _RISING_ROTATION * t
            value = (scale * ratio * ratio) * (np.cos(angle) * self._directions[0] + np.sin(angle) * self._directions[1])
        else:
            eta = cfg.eta if cfg.eta > 0 else 1.0
            value = (self._pattern(t + 1) - self._pattern(t)) / eta
        if cfg.noise_sigma > 0:
            value = value + cfg.noise_sigma * _rng(cfg.seed, _NOISE_STREAM + t).standard_normal(cfg.shape.as_tuple())
        value = _read_only(value)
        self._dynamic[t] = value
        return value

    def residual(self, t: int) -> np.ndarray:
        return self._base + self.dynamic(t)

    def initial_input(self) -> LatentTensor:
        shape = self.cfg.shape.as_tuple()
        if self.cfg.kind is ScenarioKind.TRANSLATING:
            return self._offset + self._pattern(0)
        return _rng(self.cfg.seed, 0).standard_normal(shape)

    def probe_forward(self, z0: LatentTensor, t: int) -> LatentTensor:
        return z0 + self.dynamic(t) + self.cfg.probe_fraction * self._base

    def deep_forward(self, zk: LatentTensor, t: int) -> LatentTensor:
        return zk + (1.0 - self.cfg.probe_fraction) * self._base


def make_denoiser(cfg: ScenarioConfig) -> SyntheticDenoiser:
    return SyntheticDenoiser(cfg)


def closed_loop_update(z_out: LatentTensor, z0: LatentTensor, t: int, eta: float = 0.5) -> LatentTensor:
    """Explicit sampler step: move the input a fraction ``eta`` toward the output."""

    return z0 + eta * (z_out - z0)


def update_rule(eta: float):
    return functools.partial(closed_loop_update, eta=eta)


def reference_outputs(denoiser: SyntheticDenoiser, inputs: Sequence[LatentTensor]) -> List[LatentTensor]:
    return [denoiser.deep_forward(denoiser.probe_forward(z0, t), t) for t, z0 in enumerate(inputs)]


def run_oracle(cfg: ScenarioConfig, denoiser: Optional[SyntheticDenoiser] = None) -> OracleRun:
    denoiser = denoiser or make_denoiser(cfg)
    inputs: List[LatentTensor] = []
    probes: List[LatentTensor] = []
    outputs: List[LatentTensor] = []
    z0 = denoiser.initial_input()
    for t in range(cfg.total_steps):
        zk = denoiser.probe_forward(z0, t)
        zN = denoiser.deep_forward(zk, t)
        inputs.append(z0)
        probes.append(zk)
        outputs.append(zN)
        z0 = closed_loop_update(zN, z0, t, cfg.eta)
    logger.debug("oracle %s seed=%d: %d steps", cfg.kind.value, cfg.seed, cfg.total_steps)
    return OracleRun(inputs, probes, outputs)
