import numpy as np
import pytest

from worldcache.controllers import (
    FixedScheduleController,
    FixedThresholdController,
    WorldCacheController,
    build_controller,
    fixed_threshold_config,
)
from worldcache.engine import run_closed_loop, run_step, run_trajectory
from worldcache.errors import ConfigError, ShapeMismatchError, StepOrderError
from worldcache.policy import AtsMode, OfaOperator, PolicyConfig
from worldcache.sim import ScenarioConfig, ScenarioKind, make_denoiser, run_oracle, update_rule
from worldcache.types import DecisionKind, TensorShape

SMALL = (1, 2, 16, 16, 4)


class CountingDenoiser:
    """Adds a fixed residual; counts deep calls."""

    def __init__(self, shape=(1, 1, 4, 4, 2)) -> None:
        self.latent_shape = TensorShape.from_sequence(shape)
        self.probe_cost = 1.0
        self.deep_cost = 9.0
        self.deep_calls = 0

    def probe_forward(self, z0, t):
        return z0 + 0.01

    def deep_forward(self, zk, t):
        self.deep_calls += 1
        return zk + 0.01


def closed_loop(kind, policy, cfg=None, *, shape=SMALL, steps=35, **scenario):
    scenario_cfg = ScenarioConfig(kind=kind, shape=shape, total_steps=steps, **scenario)
    denoiser = make_denoiser(scenario_cfg)
    oracle = run_oracle(scenario_cfg, denoiser)
    cfg = (cfg or PolicyConfig()).replace(total_steps=steps)
    report = run_closed_loop(
        policy,
        denoiser,
        denoiser.initial_input(),
        update_rule(scenario_cfg.eta),
        cfg,
        reference=oracle.outputs,
    )
    return report, oracle


def open_loop(kind, policy, cfg, *, shape=SMALL, **scenario):
    scenario_cfg = ScenarioConfig(kind=kind, shape=shape, **scenario)
    denoiser = make_denoiser(scenario_cfg)
    oracle = run_oracle(scenario_cfg, denoiser)
    return run_trajectory(policy, denoiser, oracle.inputs, cfg, reference=oracle.outputs)


def test_first_steps_are_forced_misses():
    denoiser = CountingDenoiser()
    controller = WorldCacheController(PolicyConfig(tau0=1e9))
    z = np.zeros((1, 1, 4, 4, 2))
    kinds = []
    for t in range(5):
        _, telemetry = run_step(controller, denoiser, z, t)
        kinds.append(telemetry.decision.kind)
    assert kinds[:3] == [DecisionKind.MISS_FORCED_WARMUP] * 3
    assert denoiser.deep_calls == kinds.count(DecisionKind.MISS_FORCED_WARMUP) + kinds.count(DecisionKind.MISS_DRIFT)


def test_hit_costs_probe_plus_overhead():
    denoiser = CountingDenoiser()
    controller = WorldCacheController(PolicyConfig(tau0=1e9, warp_enabled=False))
    z = np.zeros((1, 1, 4, 4, 2))
    telemetry = [run_step(controller, denoiser, z, t)[1] for t in range(4)]
    assert [s.cost_spent for s in telemetry[:3]] == [10.0, 10.0, 10.0]
    assert telemetry[3].is_hit
    assert telemetry[3].cost_spent == pytest.approx(1.0 + 0.03 * 9.0)
    assert denoiser.deep_calls == 3


def test_step_order_is_enforced():
    controller = WorldCacheController()
    denoiser = CountingDenoiser()
    z = np.zeros((1, 1, 4, 4, 2))
    run_step(controller, denoiser, z, 2)
    with pytest.raises(StepOrderError):
        run_step(controller, denoiser, z, 2)


def test_wrong_input_shape_is_rejected():
    with pytest.raises(ShapeMismatchError):
        run_step(WorldCacheController(), CountingDenoiser(), np.zeros((1, 1, 4, 4, 3)), 0)


def test_build_controller_names_and_aliases():
    assert isinstance(build_controller("worldcache"), WorldCacheController)
    assert isinstance(build_controller("fixed-threshold"), FixedThresholdController)
    assert build_controller("full").name == "full-compute"
    schedule = build_controller("fixed-schedule", schedule_period=3)
    assert isinstance(schedule, FixedScheduleController) and schedule.period == 3
    with pytest.raises(ConfigError, match="Unknown policy 'teacache'"):
        build_controller("teacache")


def test_fixed_threshold_controller_reduces_config():
    controller = FixedThresholdController(PolicyConfig(tau0=0.2))
    cfg = controller.cfg
    assert cfg.tau0 == 0.2 and cfg.alpha == 0.0 and cfg.beta_s == 0.0
    assert cfg.ats_mode is AtsMode.OFF and cfg.ofa_operator is OfaOperator.SCALAR_RATIO
    assert not cfg.gamma_guard and not cfg.warp_enabled


def test_fixed_schedule_pattern():
    denoiser = CountingDenoiser()
    z = np.zeros((1, 1, 4, 4, 2))
    report = run_trajectory("fixed-schedule", denoiser, [z] * 7, PolicyConfig(total_steps=7))
    assert [s.step for s in report.steps if s.is_hit] == [4, 6]
    assert report.decision_kinds()[3] is DecisionKind.MISS_SCHEDULED
    longer = run_trajectory("fixed-schedule", CountingDenoiser(), [z] * 35, PolicyConfig())
    assert longer.hits == 16


def test_full_compute_never_hits():
    report = run_trajectory("full-compute", CountingDenoiser(), [np.zeros((1, 1, 4, 4, 2))] * 6, PolicyConfig(total_steps=6))
    assert report.hits == 0 and report.simulated_speedup == 1.0
    assert set(report.decision_kinds()) == {DecisionKind.MISS_SCHEDULED}


def test_run_trajectory_checks_input_count():
    with pytest.raises(ShapeMismatchError):
        run_trajectory("worldcache", CountingDenoiser(), [np.zeros((1, 1, 4, 4, 2))] * 3, PolicyConfig(total_steps=4))


def test_controller_instance_is_reset_between_runs():
    controller = WorldCacheController(PolicyConfig(total_steps=4))
    z = [np.zeros((1, 1, 4, 4, 2))] * 4
    first = run_trajectory(controller, CountingDenoiser(), z, controller.cfg)
    second = run_trajectory(controller, CountingDenoiser(), z, controller.cfg)
    assert first.decision_kinds() == second.decision_kinds()


def test_guarded_linear_drift_is_reconstructed_exactly():
    cfg = PolicyConfig(warp_enabled=False, gamma_guard=True)
    report, _ = closed_loop(ScenarioKind.LINEAR_DRIFT, "worldcache", cfg, shape=(1, 4, 32, 32, 16))
    assert report.final_output_error <= 1e-6
    assert report.skip_rate >= 0.5
    assert DecisionKind.MISS_EXTRAPOLATION in report.decision_kinds()
    for step in report.steps:
        if step.is_hit:
            assert step.gamma <= 2.0


@pytest.mark.parametrize("kind", list(ScenarioKind))
def test_zero_threshold_matches_full_compute(kind):
    cached, _ = closed_loop(kind, "worldcache", PolicyConfig(tau0=0.0), steps=12)
    full, _ = closed_loop(kind, "full-compute", steps=12)
    assert cached.hits == 0
    assert len(cached.outputs) == len(full.outputs) == 12
    for a, b in zip(cached.outputs, full.outputs):
        assert np.array_equal(a, b)


def test_static_scenario_cost_ledger():
    report, oracle = closed_loop(ScenarioKind.STATIC, "worldcache", shape=(1, 4, 32, 32, 16))
    assert report.simulated_speedup >= 1.5
    assert report.skip_rate >= 0.8
    assert report.final_output_error <= 1e-6
    assert report.total_overhead == pytest.approx(report.hits * 0.03 * 9.0)
    np.testing.assert_allclose(report.outputs[-1], oracle.final, atol=1e-9)


def test_huge_threshold_skips_everything_after_warmup():
    report, _ = closed_loop(ScenarioKind.STATIC, "worldcache", PolicyConfig(tau0=1e9))
    assert report.hits == 32
    assert report.decision_kinds()[:3] == [DecisionKind.MISS_FORCED_WARMUP] * 3


def test_small_latents_run_without_warp():
    report, _ = closed_loop(ScenarioKind.STATIC, "worldcache", PolicyConfig(tau0=1e9), shape=(1, 1, 4, 4, 2))
    assert report.hits == 32
    assert not any(step.warp_used for step in report.steps)


@pytest.mark.parametrize("kind", [ScenarioKind.LINEAR_DRIFT, ScenarioKind.CURVED, ScenarioKind.RISING_DRIFT])
def test_huge_threshold_forces_hits_on_moving_scenarios(kind):
    report, _ = closed_loop(kind, "worldcache", PolicyConfig(tau0=1e9))
    kinds = report.decision_kinds()
    assert kinds[:3] == [DecisionKind.MISS_FORCED_WARMUP] * 3
    assert kinds[3:] == [DecisionKind.HIT] * 32
    assert all(0.0 <= step.gamma <= 2.0 for step in report.steps[3:])


def test_osi_attenuates_on_curved_motion():
    cfg = PolicyConfig(ofa_operator=OfaOperator.OSI)
    worldcache = open_loop(ScenarioKind.CURVED, "worldcache", cfg, curvature=0.5)
    scalar = open_loop(ScenarioKind.CURVED, "fixed-threshold-scalar-ratio", cfg, curvature=0.5)
    assert worldcache.mean_gamma < worldcache.mean_scalar_gamma
    assert worldcache.skip_rate >= scalar.skip_rate
    assert worldcache.final_output_error < scalar.final_output_error


def test_warp_reduces_error_on_translating_pattern():
    shape = (1, 4, 32, 32, 16)
    plain = open_loop(ScenarioKind.TRANSLATING, "worldcache", PolicyConfig(ofa_operator=OfaOperator.OSI), shape=shape, motion_speed=0.5)
    warped = open_loop(ScenarioKind.TRANSLATING, "worldcache", PolicyConfig(ofa_operator=OfaOperator.OSI_WARP), shape=shape, motion_speed=0.5)
    assert plain.decision_kinds() == warped.decision_kinds()
    assert warped.hits > 0
    assert any(step.warp_used for step in warped.steps)
    assert warped.mean_hit_error <= 0.9 * plain.mean_hit_error


def test_closed_loop_reports_are_deterministic():
    first, _ = closed_loop(ScenarioKind.CURVED, "worldcache", steps=10)
    second, _ = closed_loop(ScenarioKind.CURVED, "worldcache", steps=10)
    assert first.decision_kinds() == second.decision_kinds()
    assert [s.raw_drift for s in first.steps] == [s.raw_drift for s in second.steps]
    assert first.mode == "closed-loop" and not first.open_loop


def test_fixed_threshold_skips_repeated_inputs():
    z = [np.zeros((1, 1, 4, 4, 2))] * 8
    report = run_trajectory("fixed-threshold-scalar-ratio", CountingDenoiser(), z, PolicyConfig(total_steps=8))
    assert report.hits == 5


def test_fixed_threshold_matches_reduced_worldcache():
    scenario = ScenarioConfig(kind=ScenarioKind.CURVED, shape=SMALL)
    denoiser = make_denoiser(scenario)
    inputs = run_oracle(scenario, denoiser).inputs
    cfg = PolicyConfig(tau0=0.03)
    reduced = WorldCacheController(fixed_threshold_config(cfg))
    baseline = run_trajectory("fixed-threshold-scalar-ratio", denoiser, inputs, cfg)
    same = run_trajectory(reduced, denoiser, inputs, cfg)
    assert baseline.decision_kinds() == same.decision_kinds()


def test_fixed_schedule_hold_and_degenerate_period():
    z = [np.zeros((1, 1, 4, 4, 2))] * 7
    cfg = PolicyConfig(total_steps=7)
    every = run_trajectory(FixedScheduleController(cfg, period=1), CountingDenoiser(), z, cfg)
    assert every.hits == 0
    held = run_trajectory("fixed-schedule", CountingDenoiser(), z, cfg)
    for output in held.outputs:
        np.testing.assert_array_equal(output, np.full((1, 1, 4, 4, 2), 0.02))
    with pytest.raises(ConfigError):
        FixedScheduleController(cfg, period=0)
