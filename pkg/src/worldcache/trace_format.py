"""WCTR binary trace codec.

Layout (all integers little-endian)::

    magic      4 bytes  b"WCTR"
    version    u16      1
    shape      5 x u32  B, T_f, H, W, D
    total      u32      number of step records
    taps       u8       bit0 = z0, bit1 = zk, bit2 = zN
    seed       u64
    records    total x (u32 step, then each present tap as float32 row-major)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import ShapeMismatchError, TraceFormatError, TracePayloadError
from .types import TensorShape

MAGIC = b"WCTR"
VERSION = 1
TAP_Z0 = 1
TAP_ZK = 2
TAP_ZN = 4
TAP_NAMES = ((TAP_Z0, "z0"), (TAP_ZK, "zk"), (TAP_ZN, "zN"))

_HEADER = struct.Struct("<4sH5IIBQ")
_STEP = struct.Struct("<I")
_FLOAT = np.dtype("<f4")


@dataclass(frozen=True)
class TraceHeader:
    shape: TensorShape
    total_steps: int
    taps: int
    seed: int = 0
    version: int = VERSION

    def has(self, tap: int) -> bool:
        return bool(self.taps & tap)

    @property
    def tap_count(self) -> int:
        return sum(1 for bit, _ in TAP_NAMES if self.taps & bit)

    @property
    def record_size(self) -> int:
        return _STEP.size + self.tap_count * self.shape.count * _FLOAT.itemsize

    @property
    def payload_size(self) -> int:
        return _HEADER.size + self.total_steps * self.record_size


@dataclass
class TraceStep:
    step: int
    z0: Optional[np.ndarray] = None
    zk: Optional[np.ndarray] = None
    zN: Optional[np.ndarray] = None

    def tap(self, name: str) -> Optional[np.ndarray]:
        return getattr(self, name)


@dataclass
class Trace:
    header: TraceHeader
    steps: List[TraceStep]


def dump_trace(header: TraceHeader, steps: Sequence[TraceStep]) -> bytes:
    """Serialize a trace; tensors are stored as float32."""

    if header.taps & ~(TAP_Z0 | TAP_ZK | TAP_ZN):
        raise TraceFormatError(f"unknown tap bits in mask {header.taps:#x}")
    if len(steps) != header.total_steps:
        raise ShapeMismatchError(f"header declares {header.total_steps} steps, got {len(steps)}")
    expected = header.shape.as_tuple()
    chunks = [
        _HEADER.pack(MAGIC, header.version, *expected, header.total_steps, header.taps, header.seed)
    ]
    for record in steps:
        chunks.append(_STEP.pack(record.step))
        for bit, name in TAP_NAMES:
            if not header.taps & bit:
                continue
            value = record.tap(name)
            if value is None:
                raise ShapeMismatchError(f"step {record.step} lacks tap {name} declared in the header")
            arr = np.asarray(value)
            if arr.shape != expected:
                raise ShapeMismatchError(f"step {record.step} tap {name} has shape {arr.shape}, expected {expected}")
            if not np.isfinite(arr).all():
                raise TraceFormatError(f"step {record.step} tap {name} is not finite")
            chunks.append(np.ascontiguousarray(arr, dtype=_FLOAT).tobytes())
    return b"".join(chunks)


def parse_trace(data: bytes) -> Trace:
    if len(data) < _HEADER.size:
        raise TracePayloadError(f"trace is {len(data)} bytes, shorter than the {_HEADER.size}-byte header")
    magic, version, b, f, h, w, d, total, taps, seed = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TraceFormatError(f"unsupported trace version {version}")
    try:
        shape = TensorShape(b, f, h, w, d)
    except ValueError as exc:
        raise TraceFormatError(f"bad shape in header: {exc}") from exc
    header = TraceHeader(shape=shape, total_steps=total, taps=taps, seed=seed, version=version)
    if len(data) != header.payload_size:
        raise TracePayloadError(f"trace declares {header.payload_size} bytes but has {len(data)}")

    count = shape.count
    offset = _HEADER.size
    steps: List[TraceStep] = []
    for _ in range(total):
        (step,) = _STEP.unpack_from(data, offset)
        offset += _STEP.size
        record = TraceStep(step)
        for bit, name in TAP_NAMES:
            if not taps & bit:
                continue
            values = np.frombuffer(data, dtype=_FLOAT, count=count, offset=offset)
            offset += count * _FLOAT.itemsize
            if not np.isfinite(values).all():
                raise TraceFormatError(f"step {step} tap {name} is not finite")
            setattr(record, name, values.astype(np.float64).reshape(shape.as_tuple()))
        steps.append(record)
    return Trace(header, steps)


def write_trace(path: Union[str, Path], header: TraceHeader, steps: Sequence[TraceStep]) -> None:
    payload = dump_trace(header, steps)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(payload)


def read_trace(path: Union[str, Path]) -> Trace:
    return parse_trace(Path(path).read_bytes())
