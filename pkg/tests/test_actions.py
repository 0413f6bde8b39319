import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from smdpnav.actions import (MIN_DURATION, RobotLimits, activate, activate_relu, direct_3d, elu_velocity,
                             scale_factor, to_executable)
from smdpnav.smdp import VirtualAction

LIM = RobotLimits(0.6, 0.9, 0.4)
reals = st.floats(-20, 20, allow_nan=False)


def test_elu_examples():
    assert activate([0.5, 0.3]) == VirtualAction(0.5, 0.3)
    assert activate([0.2, 0.0]).v_tp == pytest.approx(0.2, abs=1e-15)
    assert activate([0.0, 0.0]).v_tp == pytest.approx(0.2 * math.exp(-1), abs=1e-15)
    assert 0.2 * math.exp(-1) == pytest.approx(0.073576, abs=1e-6)


def test_elu_continuity_at_knee():
    below = float(elu_velocity(np.nextafter(0.2, 0)))
    above = float(elu_velocity(0.2))
    assert abs(below - above) < 1e-12


@given(reals, reals)
def test_elu_monotone_positive(a, b):
    assume(a < b)
    va, vb = float(elu_velocity(a)), float(elu_velocity(b))
    assert va > 0
    assert va <= vb
    if b - a > 1e-6:
        assert va < vb


def test_elu_extremes_are_finite():
    assert float(elu_velocity(-1e6)) >= 0
    assert np.isfinite(elu_velocity(np.array([-1e308, 1e3]))).all()


def test_relu_variant():
    assert activate_relu([-1.0, 0.2]) == VirtualAction(0.0, 0.2)
    assert activate_relu([0.7, -0.1]) == VirtualAction(0.7, -0.1)


@pytest.mark.parametrize("raw", [[math.nan, 0], [0, math.inf]])
def test_activate_rejects_nonfinite(raw):
    with pytest.raises(ValueError):
        activate(raw)


@pytest.mark.parametrize("virtual,expected", [
    ((1.2, 0.9), (0.6, 0.45, 0.8)),
    ((0.3, 0.45), (0.6, 0.9, 0.2)),
    ((0.6, 0.0), (0.6, 0.0, 0.4)),
])
def test_conversion_examples(virtual, expected):
    a = to_executable(VirtualAction(*virtual), LIM)
    assert (a.v, a.omega, a.d) == pytest.approx(expected, abs=1e-12)


@given(st.floats(1e-4, 50), st.floats(-50, 50, allow_subnormal=False))
def test_conversion_invariants(v_tp, w_tp):
    va = VirtualAction(v_tp, w_tp)
    a = to_executable(va, LIM)
    assert max(a.v / LIM.v_m, abs(a.omega) / LIM.omega_m) == pytest.approx(1.0, abs=1e-12)
    assert a.v <= LIM.v_m * (1 + 1e-15) and abs(a.omega) <= LIM.omega_m * (1 + 1e-15)
    assert a.v * a.d == pytest.approx(v_tp * LIM.tau_tp, rel=1e-12)
    assert np.sign(a.omega) == np.sign(w_tp)
    if abs(w_tp) > 1e-9:
        assert a.v / a.omega == pytest.approx(v_tp / w_tp, rel=1e-12)
    assert a.d == pytest.approx(scale_factor(va, LIM) * LIM.tau_tp, rel=1e-15)


def test_conversion_rejects_bad_inputs():
    with pytest.raises(ValueError):
        to_executable(VirtualAction(-0.1, 0.0), LIM)
    with pytest.raises(ValueError):
        to_executable(VirtualAction(math.nan, 0.0), LIM)
    with pytest.raises(ValueError):
        RobotLimits(0.0, 1.0, 1.0)


def test_zero_virtual_action_gets_tiny_duration():
    a = to_executable(VirtualAction(0.0, 0.0), LIM)
    assert a.v == 0 and a.omega == 0 and 0 < a.d < 1e-5


def test_direct_3d_examples():
    a = direct_3d([0.3, -0.5, 0.0], LIM)
    assert (a.v, a.omega) == (0.3, -0.5)
    assert a.d == pytest.approx(1.5)
    assert direct_3d([5.0, 9.0, 0.0], LIM).v == LIM.v_m
    assert direct_3d([5.0, 9.0, 0.0], LIM).omega == LIM.omega_m
    assert direct_3d([-1.0, -9.0, 0.0], LIM).v == 0.0
    assert direct_3d([-1.0, -9.0, 0.0], LIM).omega == -LIM.omega_m


@pytest.mark.parametrize("z", [-1e300, -800.0, -30.0, 0.0, 30.0, 800.0, 1e300])
def test_direct_3d_duration_range(z):
    d = direct_3d([0.1, 0.1, z], LIM, d_max=3.0).d
    assert MIN_DURATION <= d <= 3.0


def test_direct_3d_requires_three():
    with pytest.raises(ValueError):
        direct_3d([0.1, 0.1], LIM)
    with pytest.raises(ValueError):
        direct_3d([0.1, 0.1, math.nan], LIM)
