import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdpass.disgrad import DiscreteGradient, discrete_gradient
from sdpass.pch import (
    COND_LIMIT, PortHamiltonianSystem, SingularStructureError, ida_closed_loop, pch_drift,
    pch_residual, pch_residual_exact, theorem3_structure,
)

from conftest import QSTAR, R, slope

pt = st.tuples(st.floats(-3, 3), st.floats(-2, 2)).map(np.array)
STATES = [np.array(s) for s in ((0.3, -0.1), (-0.5, 0.4), (2.0, 1.0), (1.2, -0.7), (-2.5, 0.3))]


def test_pendulum_drift(pendulum):
    pch_sys = pendulum[1]
    x = np.array([0.7, -0.3])
    assert np.allclose(pch_drift(pch_sys, x), [-0.3, -math.sin(0.7) + R * 0.3])


def test_drift_vanishes_at_critical_point(pendulum):
    assert np.allclose(pch_drift(pendulum[1], np.zeros(2)), 0.0)


@given(pt)
def test_power_balance(pendulum, x):
    pch_sys = pendulum[1]
    grad = np.array([math.sin(x[0]), x[1]])
    assert grad @ pch_drift(pch_sys, x) == pytest.approx(-R * x[1] ** 2, abs=1e-12)
    pch_sys.check(x)


def test_structure_check_rejects_bad_matrices():
    bad = PortHamiltonianSystem(lambda x: np.eye(2), lambda x: np.zeros((2, 2)),
                                lambda x: x[0], lambda x: np.zeros(2))
    with pytest.raises(ValueError):
        bad.check(np.zeros(2))


@given(pt)
def test_closed_loop_drift(loop, x):
    expected = [x[1], -math.sin(x[0] - QSTAR) - R * x[1]]
    assert np.allclose(loop.drift(x), expected, atol=1e-14)
    assert loop.output(x) == pytest.approx(x[1])


def test_target_is_equilibrium(loop):
    assert np.allclose(loop.drift(np.array([QSTAR, 0.0])), 0.0, atol=1e-15)


def test_ida_builder_quadratic():
    J = lambda x: np.array([[0.0, 2.0], [-2.0, 0.0]])
    Rm = lambda x: np.diag([0.1, 0.3])
    cl = ida_closed_loop(J, Rm, lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2))
    x = np.array([0.2, -0.5])
    assert np.allclose(cl.drift(x), (J(x) - Rm(x)) @ x)


@given(pt, st.floats(0.01, 0.5))
def test_sampled_structure_symmetries(loop, x, delta):
    s = theorem3_structure(loop, delta, x)
    assert np.max(np.abs(s.J + s.J.T)) <= 1e-12
    assert np.max(np.abs(s.R - s.R.T)) <= 1e-12
    assert np.allclose(s.M, s.J - s.R, atol=1e-15)
    assert np.min(np.linalg.eigvalsh(s.R)) >= -1e-12


def test_structure_tends_to_continuous(loop):
    x = np.array([0.3, -0.1])
    Md = loop.M_d(x)
    dev = [np.max(np.abs(theorem3_structure(loop, d, x).M - Md)) for d in (1e-2, 1e-3, 1e-4)]
    assert dev[-1] < 1e-3
    assert dev[0] > dev[1] > dev[2]


def test_structure_differs_from_constant_display(loop):
    # recorded discrepancy: the displayed pendulum M_d^delta is delta independent
    x = np.array([0.3, -0.1])
    dev = np.max(np.abs(theorem3_structure(loop, 0.1, x).M - loop.M_d(x)))
    assert 1e-4 < dev < 0.1


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.01, 1.0))
def test_truncated_increment_display(loop, q, p, delta):
    s = theorem3_structure(loop, delta, np.array([q, p]))
    sq = math.sin(q - QSTAR)
    expected = (delta * np.array([p, -sq - R * p])
                + 0.5 * delta**2 * np.array([-sq - R * p,
                                             R * sq + p * (R**2 - math.cos(q - QSTAR))]))
    assert np.allclose(s.F2, expected, atol=1e-13)


def test_residual_order(loop):
    ds = np.array([0.2, 0.1, 0.05, 0.025])
    mean = [np.mean([pch_residual(loop, d, x) for x in STATES]) for d in ds]
    assert abs(slope(ds, mean) - 3) <= 0.3
    for x in STATES[1:3]:
        assert abs(slope(ds, [pch_residual(loop, d, x) for d in ds]) - 3) <= 0.3


def test_residual_zero_at_target(loop):
    assert pch_residual(loop, 0.3, np.array([QSTAR, 0.0])) <= 1e-15


def test_exact_increment_residual_is_small(loop):
    x = np.array([-0.5, 0.4])
    assert pch_residual_exact(loop, 0.05, x) < 1e-4


def test_discrete_gradient_expansion_display(loop):
    x = np.array([0.3, -0.1])
    q, p = x
    errs = []
    ds = np.array([0.2, 0.1, 0.05])
    for d in ds:
        s = theorem3_structure(loop, d, x)
        dg = discrete_gradient(DiscreteGradient(loop.H_d), x, x + s.F2)
        disp = (np.array([math.sin(q - QSTAR), p])
                + d / 2 * np.array([math.cos(q - QSTAR) * p, -math.sin(q - QSTAR) - R * p]))
        errs.append(np.linalg.norm(dg - disp))
    assert abs(slope(ds, errs) - 2) <= 0.3


def test_ill_conditioned_structure_raises():
    # quadratic H_d with M = -I + sqrt(3) J: Q = I + C + C^2 with C = M/2 whose
    # eigenvalues are the primitive cube roots of unity, so Q is singular
    b = math.sqrt(3.0)
    cl = ida_closed_loop(lambda x: np.array([[0.0, b], [-b, 0.0]]), lambda x: np.eye(2),
                         lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2))
    with pytest.raises(SingularStructureError):
        theorem3_structure(cl, 1.0, np.array([0.3, 0.1]))
    assert np.isfinite(theorem3_structure(cl, 0.5, np.array([0.3, 0.1])).M).all()
    assert COND_LIMIT == 1e12
