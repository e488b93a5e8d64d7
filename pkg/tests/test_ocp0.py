"""Tests for the problem of order zero and its embedding on the singular surface."""

import logging
import math

import numpy as np
import pytest

from rocketmintime.const import ControlLaw, IntegratorConfig
from rocketmintime.exceptions import InfeasibleOcp0Error, InvalidInputError
from rocketmintime.frames import thrust_axis
from rocketmintime.liealgebra import singular_distance
from rocketmintime.ocp0 import embed_extremal, solve_ocp0
from rocketmintime.odeint import integrate_extremal
from rocketmintime.pmp import eliminate_pvy
from tests.conftest import DEFAULT_PARAMS, tc_spec


def _random_ocp0_inputs(n: int, seed: int = 17):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        v0 = rng.uniform(-1000.0, 1000.0, 3)
        w = rng.normal(size=3)
        w /= np.linalg.norm(w)
        g = rng.normal(size=3)
        g *= rng.uniform(0.0, 9.8) / np.linalg.norm(g)
        yield v0, w, g


def test_ocp0_identities():
    for v0, w, g in _random_ocp0_inputs(100):
        sol = solve_ocp0(v0, w, 12.0, g)
        assert sol.t_f > 0
        assert abs(np.linalg.norm(sol.e_star) - 1.0) <= 1e-10
        assert abs(float(sol.e_star @ w)) <= 1e-9
        v_f = v0 + (12.0 * sol.e_star + g) * sol.t_f
        parallel = np.linalg.norm(np.cross(v_f, w)) / max(1.0, np.linalg.norm(v_f))
        assert parallel <= 1e-8, (v0, w, g)
        assert np.allclose(sol.final_velocity, v_f, rtol=1e-9, atol=1e-7)
        if sol.principal_branch:
            # angles rebuild the thrust direction
            axis = thrust_axis(sol.theta_star, sol.psi_star)
            assert np.allclose(axis, sol.e_star, atol=1e-12)


@pytest.mark.parametrize(
    "name, v0, theta_deg, psi_deg, t_f",
    (
        ("tc1", 1000.0, 176.9, 18.5, 16.505),
        ("tc1", 1500.0, None, None, 24.757),
        ("tc2", 2000.0, 176.0, None, 47.41),
        ("tc3", 1000.0, None, None, None),
    ),
)
def test_attitude_hold_on_reference_cases(caplog, name, v0, theta_deg, psi_deg, t_f):
    spec = tc_spec(name, v0)
    w = thrust_axis(spec.theta_f, spec.psi_f)
    with caplog.at_level(logging.WARNING, logger="rocketmintime.ocp0"):
        sol = solve_ocp0(spec.x0[:3], w, DEFAULT_PARAMS.a, DEFAULT_PARAMS.g)
    # all reference cases pitch past 90 deg
    assert sol.principal_branch is False
    assert len(caplog.messages) == 1
    assert not sol.zero_time
    assert np.allclose(thrust_axis(sol.theta_star, sol.psi_star), sol.e_star)
    if theta_deg is not None:
        assert math.degrees(sol.theta_star) == pytest.approx(theta_deg, abs=0.3)
    if psi_deg is not None:
        assert math.degrees(sol.psi_star) == pytest.approx(psi_deg, abs=0.2)
    if t_f is not None:
        assert sol.t_f == pytest.approx(t_f, rel=1e-3)

    # velocity costate is normal to the final axis and consistent with p_vy
    assert abs(float(sol.p_v @ w)) <= 1e-12
    assert eliminate_pvy(sol.p_v[0], sol.p_v[2], spec) == pytest.approx(sol.p_v[1])

    z0 = embed_extremal(sol, 0.0, DEFAULT_PARAMS)
    assert singular_distance(z0) <= 1e-10
    traj = integrate_extremal(
        z0,
        ControlLaw.min_time(),
        DEFAULT_PARAMS,
        IntegratorConfig(),
        (0.0, sol.t_f),
        forced_control=(0.0, 0.0),
        detect_events=False,
    )
    z_f = traj.final
    assert np.max(np.abs(z_f.x[3:6] - z0.x[3:6])) <= 1e-10
    assert np.allclose(z_f.x[:3], sol.final_velocity, rtol=1e-10)
    assert singular_distance(z_f) <= 1e-9


def test_zero_time(caplog):
    w = thrust_axis(math.radians(85.0), math.radians(5.0))
    with caplog.at_level(logging.INFO):
        sol = solve_ocp0(1000.0 * w, w, DEFAULT_PARAMS.a, DEFAULT_PARAMS.g)
    assert sol.zero_time
    assert sol.t_f == 0.0
    assert np.allclose(sol.e_star, w)
    assert len(caplog.messages) == 1


def test_ocp0_errors():
    w = np.array([0.0, 0.0, 1.0])
    with pytest.raises(InfeasibleOcp0Error):
        solve_ocp0(np.array([100.0, 0.0, 0.0]), w, 12.0, np.array([-20.0, 0, 0]))
    with pytest.raises(InvalidInputError):
        solve_ocp0(np.zeros(3), np.array([0.0, 0.0, 2.0]), 12.0, np.zeros(3))
    with pytest.raises(InvalidInputError):
        solve_ocp0(np.array([np.nan, 0, 0]), w, 12.0, np.zeros(3))
