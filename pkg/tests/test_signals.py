import numpy as np
import pytest

from worldcache.signals import (
    DriftReference,
    SaliencyMap,
    motion_velocity,
    probe_drift,
    read_drift,
    relative_swd_drift,
    saliency_map,
    swd_drift,
)
from worldcache.tensor_core import channel_variance_map, minmax_normalize

SHAPE = (1, 2, 4, 4, 3)


def seeded_pair(seed: int):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(SHAPE), rng.standard_normal(SHAPE)


def test_probe_drift_cases():
    x, y = seeded_pair(0)
    assert probe_drift(x, x) == 0.0
    ones = np.ones(SHAPE)
    assert probe_drift(1.1 * ones, ones) == pytest.approx(0.1, rel=1e-6)
    expected = sum(abs(a - b) for a, b in zip(x.ravel(), y.ravel())) / (sum(abs(b) for b in y.ravel()) + 1e-8)
    assert probe_drift(x, y) == pytest.approx(expected, rel=1e-12)


def test_motion_velocity_cases():
    x, y = seeded_pair(1)
    assert motion_velocity(x, x) == 0.0
    ones = np.ones(SHAPE)
    assert motion_velocity(2.0 * ones, ones) == pytest.approx(1.0, rel=1e-6)
    expected = np.abs(x - y).sum() / (np.abs(y).sum() + 1e-8)
    assert motion_velocity(x, y) == pytest.approx(expected, rel=1e-12)


def test_drift_ratios_are_scale_aware():
    x, y = seeded_pair(2)
    assert probe_drift(3.0 * x, 3.0 * y, eps=0.0) == pytest.approx(probe_drift(x, y, eps=0.0), rel=1e-12)
    assert motion_velocity(0.5 * x, 0.5 * y, eps=0.0) == pytest.approx(motion_velocity(x, y, eps=0.0), rel=1e-12)


def test_saliency_map_cases():
    constant = np.full(SHAPE, 2.0)
    assert np.array_equal(saliency_map(constant).values, np.zeros((4, 4)))

    probe = np.ones((1, 1, 4, 4, 2))
    probe[0, 0, 2, 3] = [-1.0, 1.0]
    values = saliency_map(probe, step=7).values
    assert values[2, 3] == 1.0
    values[2, 3] = 0.0
    assert np.array_equal(values, np.zeros((4, 4)))

    x, _ = seeded_pair(3)
    assert np.array_equal(saliency_map(x).values, minmax_normalize(channel_variance_map(x)))


def test_saliency_shift_invariance():
    x, _ = seeded_pair(4)
    assert np.allclose(saliency_map(x + 10.0).values, saliency_map(x).values, atol=1e-9)


def test_swd_drift_cases():
    x, y = seeded_pair(5)
    sal = saliency_map(x)
    assert swd_drift(x, x, sal, 0.5) == 0.0
    assert swd_drift(x, y, sal, 0.0) == pytest.approx(np.abs(x - y).sum() / 16.0, rel=1e-12)


def test_swd_weighting_ratio_at_salient_location():
    values = np.zeros((4, 4))
    values[1, 1] = 1.0
    sal = SaliencyMap(values, 0)
    prev = np.zeros(SHAPE)
    at_salient = prev.copy()
    at_salient[0, 0, 1, 1, 0] = 0.3
    at_flat = prev.copy()
    at_flat[0, 0, 2, 2, 0] = 0.3
    beta = 0.12
    ratio = swd_drift(at_salient, prev, sal, beta) / swd_drift(at_flat, prev, sal, beta)
    assert ratio == pytest.approx(1.0 + beta, rel=1e-12)


def test_swd_monotone_in_beta_and_dominates_flat_map():
    x, y = seeded_pair(6)
    sal = saliency_map(x)
    flat = SaliencyMap.flat(4, 4)
    previous = -1.0
    for beta in (0.0, 0.05, 0.12, 0.5, 1.0):
        value = swd_drift(x, y, sal, beta)
        assert value >= previous
        assert value >= swd_drift(x, y, flat, beta)
        previous = value


def test_relative_swd_equals_probe_drift_without_weighting():
    x, y = seeded_pair(7)
    sal = saliency_map(x)
    assert relative_swd_drift(x, y, sal, 0.0) == probe_drift(x, y)


def test_read_drift_without_history():
    x, y = seeded_pair(8)
    reading = read_drift(0, x, None, y, None, saliency_map(x), beta_s=0.12)
    assert reading.raw_drift == 0.0 and reading.decision_drift == 0.0
    assert reading.velocity is None
    assert reading.velocity_or_zero == 0.0


def test_read_drift_reference_modes():
    x, y = seeded_pair(9)
    sal = saliency_map(x)
    absolute = read_drift(3, x, y, x, y, sal, beta_s=0.12, reference=DriftReference.ABSOLUTE)
    relative = read_drift(3, x, y, x, y, sal, beta_s=0.12, reference=DriftReference.RELATIVE)
    assert absolute.decision_drift == absolute.swd_drift
    assert relative.decision_drift == pytest.approx(relative_swd_drift(x, y, sal, 0.12))
    assert relative.velocity == pytest.approx(motion_velocity(x, y))
