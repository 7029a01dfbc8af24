"""Run configuration: TOML files plus dotted command-line overrides.

Sections map onto dataclasses::

    [policy]    PolicyConfig
    [flow]      LKParams
    [scenario]  ScenarioConfig (its step count follows policy.total_steps)
    [run]       RunConfig
"""
from __future__ import annotations

import dataclasses
import tomllib
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

from .errors import ConfigError
from .ofa import LKParams
from .policy import PolicyConfig
from .sim import ScenarioConfig
from .types import TensorShape

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    out_dir: str = "out"
    closed_loop: bool = True
    oracle: bool = True
    schedule_period: int = 2
    workers: int = 4

    def __post_init__(self) -> None:
        if self.schedule_period < 1:
            raise ConfigError(f"run.schedule_period must be at least 1, got {self.schedule_period}")
        if self.workers < 1:
            raise ConfigError(f"run.workers must be at least 1, got {self.workers}")


@dataclass
class CliConfig:
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    flow: LKParams = field(default_factory=LKParams)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self) -> None:
        if self.scenario.total_steps != self.policy.total_steps:
            self.scenario = self.scenario.replace(total_steps=self.policy.total_steps)

    def with_value(self, dotted: str, value: Any) -> "CliConfig":
        return apply_overrides(self, {dotted: value})

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: _section_dict(getattr(self, name)) for name in SECTIONS}


SECTIONS: Dict[str, type] = {
    "policy": PolicyConfig,
    "flow": LKParams,
    "scenario": ScenarioConfig,
    "run": RunConfig,
}
_LOCKED = {("scenario", "total_steps"): "set policy.total_steps instead"}


def _section_dict(section: Any) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for f in dataclasses.fields(section):
        value = getattr(section, f.name)
        if isinstance(value, Enum):
            value = value.value
        elif isinstance(value, TensorShape):
            value = list(value.as_tuple())
        out[f.name] = value
    return out


def _unwrap_optional(hint: Any) -> Tuple[Any, bool]:
    args = typing.get_args(hint)
    if typing.get_origin(hint) is Union and type(None) in args:
        rest = [a for a in args if a is not type(None)]
        return rest[0], True
    return hint, False


def coerce_value(hint: Any, raw: Any, where: str) -> Any:
    """Convert ``raw`` (TOML value or command-line string) to the field type ``hint``."""

    hint, optional = _unwrap_optional(hint)
    if optional and (raw is None or (isinstance(raw, str) and raw.lower() in {"none", "null", ""})):
        return None
    try:
        if hint is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if hint is int:
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(f"not an integer: {raw!r}")
            return int(raw)
        if hint is float:
            if isinstance(raw, bool):
                raise ValueError(f"not a number: {raw!r}")
            return float(raw)
        if hint is str:
            return str(raw)
        if isinstance(hint, type) and issubclass(hint, Enum):
            return hint(raw)
        if hint is TensorShape:
            extents = raw.replace("x", ",").split(",") if isinstance(raw, str) else raw
            return TensorShape.from_sequence([int(e) for e in extents])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unsupported field type {hint!r}")


def _section_updates(section: str, values: Mapping[str, Any]) -> Dict[str, Any]:
    cls = SECTIONS[section]
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    updates: Dict[str, Any] = {}
    for key, raw in values.items():
        where = f"{section}.{key}"
        if key not in names:
            raise ConfigError(f"Unknown key '{where}'")
        if (section, key) in _LOCKED:
            raise ConfigError(f"'{where}' cannot be set: {_LOCKED[(section, key)]}")
        updates[key] = coerce_value(hints[key], raw, where)
    return updates


def _split_dotted(dotted: str) -> Tuple[str, str]:
    if "." not in dotted:
        raise ConfigError(f"Override '{dotted}' must look like section.key")
    section, key = dotted.split(".", 1)
    if section not in SECTIONS:
        raise ConfigError(f"Unknown section '{section}' in '{dotted}'")
    return section, key


def apply_overrides(config: CliConfig, overrides: Mapping[str, Any]) -> CliConfig:
    grouped: Dict[str, Dict[str, Any]] = {}
    for dotted, raw in overrides.items():
        section, key = _split_dotted(dotted)
        grouped.setdefault(section, {})[key] = raw
    sections = {name: getattr(config, name) for name in SECTIONS}
    for section, values in grouped.items():
        updates = _section_updates(section, values)
        try:
            sections[section] = dataclasses.replace(sections[section], **updates)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
    return CliConfig(**sections)


def parse_override(token: str) -> Tuple[str, str]:
    """Split ``section.key=value`` (an optional leading ``--`` is dropped)."""

    body = token[2:] if token.startswith("--") else token
    if "=" not in body:
        raise ConfigError(f"Override '{token}' must look like section.key=value")
    dotted, raw = body.split("=", 1)
    _split_dotted(dotted)
    return dotted, raw


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> CliConfig:
    config = CliConfig()
    if path is not None:
        try:
            with open(path, "rb") as handle:
                document = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        flat: Dict[str, Any] = {}
        for section, values in document.items():
            if section not in SECTIONS:
                raise ConfigError(f"Unknown section '[{section}]' in {path}")
            if not isinstance(values, dict):
                raise ConfigError(f"'{section}' in {path} must be a table")
            for key, raw in values.items():
                flat[f"{section}.{key}"] = raw
        config = apply_overrides(config, flat)
    pairs = dict(parse_override(token) for token in overrides)
    if pairs:
        config = apply_overrides(config, pairs)
    return config
