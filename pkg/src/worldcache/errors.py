"""Exception hierarchy shared by every WorldCache module."""
from __future__ import annotations


class WorldCacheError(Exception):
    """Base class for errors raised by the package."""


class ShapeMismatchError(WorldCacheError, ValueError):
    """Raised when tensor extents disagree."""


class NonFiniteError(WorldCacheError, ValueError):
    """Raised when a latent carries NaN or Inf values."""


class StepOrderError(WorldCacheError, ValueError):
    """Raised when step indices do not increase strictly."""


class CacheNotReadyError(WorldCacheError, RuntimeError):
    """Raised when an approximation is requested before two slots are filled."""


class TraceFormatError(WorldCacheError, ValueError):
    """Raised when a trace has a bad magic, version or header."""


class TracePayloadError(TraceFormatError):
    """Raised when a trace's declared payload size does not match its length."""


class MissingTapError(TraceFormatError):
    """Raised when a trace lacks taps that an operation needs."""


class ConfigError(WorldCacheError, ValueError):
    """Raised for unknown keys, bad types or out-of-range settings."""
