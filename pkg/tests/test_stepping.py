import math

import numpy as np
import pytest

from diskmin import StepSizeUnderflow
from diskmin.stepping import DensePath, Driver, initial_step, integrate_fixed

import oracles


def test_scalar_exponential():
    y_end, path = integrate_fixed(lambda t, y: y, np.array([1.0]), 2.0, 1e-12, 1e-12)
    assert y_end[0] == pytest.approx(math.exp(2.0), rel=1e-10)
    assert path.s_start == 0.0
    assert path.s_end == pytest.approx(2.0, abs=1e-15)


def test_dense_output_accuracy():
    y_end, path = integrate_fixed(
        lambda t, y: np.array([math.cos(t), -math.sin(t)]),
        np.array([0.0, 1.0]), 6.0, 1e-11, 1e-11)
    for s in np.linspace(0, 6, 113):
        z = path.eval(s)
        assert z[0] == pytest.approx(math.sin(s), abs=5e-10)
        assert z[1] == pytest.approx(math.cos(s), abs=5e-10)


def test_dense_output_rejects_outside_range():
    _, path = integrate_fixed(lambda t, y: y, np.array([1.0]), 1.0, 1e-10, 1e-10)
    with pytest.raises(ValueError):
        path.eval(1.5)
    with pytest.raises(ValueError):
        path.eval(-0.5)


def test_matches_fixed_step_rk4_crosscheck():
    def f(t, y):
        return np.array([y[1], -math.sin(y[0])])

    y0 = np.array([1.2, 0.0])
    got, _ = integrate_fixed(f, y0, 5.0, 1e-12, 1e-12)
    want = oracles.rk4(f, y0, 0.0, 5.0, 40000)
    assert np.allclose(got, want, atol=1e-8)


def test_driver_respects_max_step():
    drv = Driver(lambda t, y: -y, np.array([1.0]), 1e-9, 1e-9)
    seg = drv.advance(max_step=1e-4)
    assert seg.h <= 1e-4 + 1e-18
    assert drv.s == pytest.approx(seg.h)


def test_driver_recovers_from_rhs_exception():
    """Stage failures reject the step and shrink h instead of propagating."""
    calls = {"n": 0}

    def f(t, y):
        calls["n"] += 1
        if t > 0.5 and calls["n"] < 60:
            raise FloatingPointError("transient")
        return np.array([1.0])

    y_end, _ = integrate_fixed(f, np.array([0.0]), 1.0, 1e-9, 1e-9)
    assert y_end[0] == pytest.approx(1.0, rel=1e-9)


def test_underflow_on_unresolvable_singularity():
    def f(t, y):
        return np.array([1.0 / (1.0 - t)])

    with pytest.raises(StepSizeUnderflow):
        integrate_fixed(f, np.array([0.0]), 2.0, 1e-10, 1e-10)


def test_initial_step_is_sane():
    h = initial_step(lambda t, y: y, 0.0, np.array([1.0]), 1e-9, 1e-9, 10.0)
    assert 0 < h <= 10.0


def test_stiff_controller_stays_stable():
    # linear fast/slow split; the controller must keep the error in check
    lam = 80.0

    def f(t, y):
        return np.array([-lam * (y[0] - math.cos(t)) - math.sin(t)])

    y_end, _ = integrate_fixed(f, np.array([2.0]), 3.0, 1e-10, 1e-10)
    exact = math.cos(3.0) + (2.0 - 1.0) * math.exp(-lam * 3.0)
    assert y_end[0] == pytest.approx(exact, abs=1e-8)


def test_fsal_reuse_consistency():
    """Integrating in two stints through a DensePath must agree with one go."""
    f = lambda t, y: np.array([y[0] * math.sin(t)])
    one, _ = integrate_fixed(f, np.array([1.0]), 4.0, 1e-12, 1e-12)
    mid, _ = integrate_fixed(f, np.array([1.0]), 2.0, 1e-12, 1e-12)

    def g(t, y):  # shifted clock for the second stint
        return np.array([y[0] * math.sin(t + 2.0)])

    two, _ = integrate_fixed(g, mid, 2.0, 1e-12, 1e-12)
    assert two[0] == pytest.approx(one[0], rel=1e-10)
    assert one[0] == pytest.approx(math.exp(1.0 - math.cos(4.0)), rel=1e-10)
