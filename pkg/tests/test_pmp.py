"""Tests for the maximum-principle machinery."""

import math

import numpy as np
import pytest

from rocketmintime.const import ControlLaw, ExtremalPoint, TerminalSpec
from rocketmintime.dynamics import rhs
from rocketmintime.exceptions import (
    DegenerateTargetError,
    OnSwitchingSurfaceError,
    SingularDenominatorError,
)
from rocketmintime.pmp import (
    adjoint_rhs,
    control,
    control_blended,
    control_min_time,
    control_regularized,
    eliminate_pvy,
    goh_glcc_report,
    hamiltonian,
    hamiltonian_system,
    switching_fn,
    transversality_residual,
)
from tests.conftest import (
    DEFAULT_PARAMS,
    central_gradient,
    random_points,
    random_singular_points,
)

_B_BAR = DEFAULT_PARAMS.b_bar


def _point_with_rate_costates(p_omega_x: float, p_omega_y: float, p0: float = -1.0):
    p = np.zeros(8)
    p[6:] = p_omega_x, p_omega_y
    return ExtremalPoint(x=np.zeros(8), p=p, p0=p0)


def test_min_time_control():
    # Phi = (0.6, 0.8)
    z = _point_with_rate_costates(-0.8 / _B_BAR, 0.6 / _B_BAR)
    assert np.allclose(switching_fn(z, DEFAULT_PARAMS), (0.6, 0.8))
    assert np.allclose(control_min_time(z, DEFAULT_PARAMS), (0.6, 0.8))
    assert np.allclose(control(z, ControlLaw.min_time(), DEFAULT_PARAMS), (0.6, 0.8))
    with pytest.raises(OnSwitchingSurfaceError):
        control_min_time(_point_with_rate_costates(0.0, 0.0), DEFAULT_PARAMS)


@pytest.mark.parametrize(
    "h1, h2, expected",
    (
        (50.0, 0.0, (0.5, 0.0)),
        (0.0, 50.0, (0.0, 0.5)),
        (500.0, -500.0, (1.0, -1.0)),
        (-20.0, 10.0, (-0.2, 0.1)),
    ),
)
def test_regularized_control(h1, h2, expected):
    z = _point_with_rate_costates(-h2 / _B_BAR, h1 / _B_BAR)
    assert np.allclose(control_regularized(z, DEFAULT_PARAMS, 50.0), expected)
    law = ControlLaw.regularized(50.0)
    assert np.allclose(control(z, law, DEFAULT_PARAMS), expected)


def test_blended_control_limits():
    for z in random_points(20):
        regularized = control_regularized(z, DEFAULT_PARAMS, 50.0)
        assert np.allclose(control_blended(z, DEFAULT_PARAMS, 50.0, 0.0), regularized)
        min_time = control_min_time(z, DEFAULT_PARAMS)
        assert np.allclose(control_blended(z, DEFAULT_PARAMS, 50.0, 1.0), min_time)

    with pytest.raises(SingularDenominatorError):
        control_blended(
            _point_with_rate_costates(0.5, 0.5, p0=0.0), DEFAULT_PARAMS, 50.0, 0.0
        )
    with pytest.raises(SingularDenominatorError):
        control_regularized(
            _point_with_rate_costates(0.5, 0.5, p0=0.0), DEFAULT_PARAMS, 50.0
        )


def test_adjoint_matches_hamiltonian_gradient():
    rng = np.random.default_rng(7)
    for z in random_points(100):
        u = rng.uniform(-0.7, 0.7, 2)

        def h_of_x(x, z=z, u=u):
            return hamiltonian(ExtremalPoint(x=x, p=z.p, p0=z.p0), u, DEFAULT_PARAMS)

        expected = -central_gradient(h_of_x, z.x)
        got = adjoint_rhs(z, u, DEFAULT_PARAMS)
        assert np.max(np.abs(got - expected)) <= 1e-6, (z, got, expected)

        state_part = hamiltonian_system(z.z, tuple(u), DEFAULT_PARAMS)[:8]
        assert np.allclose(state_part, rhs(z.x, u, DEFAULT_PARAMS))


def test_hamiltonian_energy_term():
    z = random_points(1)[0]
    u = np.array([0.3, -0.4])
    plain = hamiltonian(z, u, DEFAULT_PARAMS)
    regularized = hamiltonian(z, u, DEFAULT_PARAMS, ControlLaw.regularized(50.0))
    assert regularized - plain == pytest.approx(z.p0 * 50.0 * 0.25)
    blended = hamiltonian(z, u, DEFAULT_PARAMS, ControlLaw.blended(50.0, 1.0))
    assert blended == pytest.approx(plain)


def test_transversality_elimination():
    spec = TerminalSpec(
        initial_state=(0.0,) * 8, theta_f=math.radians(85.0), psi_f=math.radians(5.0)
    )
    p = np.zeros(8)
    p[0], p[2] = 0.3, -0.7
    p[1] = eliminate_pvy(p[0], p[2], spec)
    z_f = ExtremalPoint(x=np.zeros(8), p=p)
    assert transversality_residual(z_f, spec) == pytest.approx(0.0, abs=1e-15)

    planar = TerminalSpec(initial_state=(0.0,) * 8, theta_f=0.5, psi_f=0.0)
    with pytest.raises(DegenerateTargetError):
        eliminate_pvy(0.3, -0.7, planar)


def test_goh_glcc_on_singular_surface():
    for z in random_singular_points(20):
        report = goh_glcc_report(z, DEFAULT_PARAMS)
        assert report.goh_first_order == 0.0
        assert report.goh_second_order_12 == pytest.approx(0.0, abs=1e-12)
        assert report.glcc_satisfied
        assert report.glcc_1 == pytest.approx(report.glcc_2)
        assert report.glcc_margin > 0
