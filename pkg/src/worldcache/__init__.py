"""WorldCache: probe-driven deep-feature caching over an iterative denoiser."""

from .controllers import build_controller
from .engine import run_closed_loop, run_step, run_trajectory
from .policy import AtsMode, OfaOperator, PolicyConfig
from .sim import ScenarioConfig, ScenarioKind, make_denoiser, run_oracle
from .types import CacheDecision, DecisionKind, RunReport, StepTelemetry, TensorShape

__all__ = [
    "AtsMode",
    "CacheDecision",
    "DecisionKind",
    "OfaOperator",
    "PolicyConfig",
    "RunReport",
    "ScenarioConfig",
    "ScenarioKind",
    "StepTelemetry",
    "TensorShape",
    "build_controller",
    "make_denoiser",
    "run_closed_loop",
    "run_oracle",
    "run_step",
    "run_trajectory",
]
