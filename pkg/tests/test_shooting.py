"""Tests for the shooting unknowns and the stage residuals."""

import math

import numpy as np
import pytest

from rocketmintime.continuation import solve_seed
from rocketmintime.exceptions import ShootingError
from rocketmintime.scenarios import Scenario
from rocketmintime.shooting import (
    EndpointValues,
    ShootingUnknowns,
    StageContext,
    initial_point,
    initial_state_lambda1,
    integrate_unknowns,
    pvy_is_eliminable,
    residual_s1,
    residual_s2,
    residual_s3,
    shooting_residual,
    unknowns_from_ocp0,
)
from tests.conftest import DEFAULT_PARAMS, tc_spec


@pytest.mark.parametrize("p_vy", (None, 0.25))
def test_unknowns_vector(p_vy):
    unknowns = ShootingUnknowns(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, t_f=40.0, p_vy=p_vy)
    vector = unknowns.to_vector(10.0)
    assert len(vector) == (8 if p_vy is None else 9)
    assert vector[7] == 4.0
    assert ShootingUnknowns.from_vector(vector, 10.0) == unknowns
    assert unknowns.carries_pvy is (p_vy is not None)


def test_stage_contexts():
    spec = tc_spec("tc1", 1000.0)
    sol0 = solve_seed(spec, DEFAULT_PARAMS)
    ctx1 = StageContext(1, 0.0, 50.0, spec, sol0=sol0)
    assert ctx1.law.mode == "regularized"
    assert np.allclose(ctx1.attitude_targets, spec.targets)

    endpoint = EndpointValues(0.2, 0.1, 0.0, 0.01, -0.01)
    ctx2 = StageContext(2, 0.5, 50.0, spec, endpoint=endpoint)
    midpoint = 0.5 * (np.asarray(endpoint.as_tuple()) + np.asarray(spec.targets))
    assert np.allclose(ctx2.attitude_targets, midpoint)
    assert np.allclose(ctx2.at(1.0).attitude_targets, spec.targets)

    ctx3 = StageContext(3, 0.3, 50.0, spec, endpoint=endpoint)
    assert ctx3.law.mode == "blended"
    assert ctx3.law.lambda3 == 0.3
    assert np.allclose(ctx3.attitude_targets, spec.targets)

    # stage 1 blends the attitude from the OCP0 one
    start = initial_state_lambda1(0.0, sol0, spec)
    assert start[3:5] == pytest.approx((sol0.theta_star, sol0.psi_star))
    assert np.allclose(initial_state_lambda1(1.0, sol0, spec), spec.x0)
    assert np.allclose(start[:3], spec.x0[:3])


@pytest.mark.parametrize(
    "scenario",
    (
        Scenario("tc1-1000", 1000.0, 75.0, 0.5, 85.0, 5.0),
        Scenario("planar", 1000.0, 75.0, 0.5, 85.0, 0.0),
    ),
)
def test_stage1_residual_vanishes_at_ocp0(scenario):
    spec = scenario.to_terminal_spec()
    sol0 = solve_seed(spec, DEFAULT_PARAMS)
    unknowns = unknowns_from_ocp0(sol0, spec)
    assert unknowns.carries_pvy is not pvy_is_eliminable(spec)

    ctx = StageContext(1, 0.0, 50.0, spec, sol0=sol0)
    z0 = initial_point(unknowns, ctx)
    assert np.allclose(z0.p[:3], sol0.p_v, atol=1e-12)

    residual = shooting_residual(unknowns, ctx, DEFAULT_PARAMS)
    assert len(residual) == (9 if unknowns.carries_pvy else 8)
    assert np.max(np.abs(residual)) <= 1e-7, residual

    # the true initial attitude breaks the OCP0 extremal
    moved = shooting_residual(unknowns, ctx.at(1.0), DEFAULT_PARAMS)
    assert np.max(np.abs(moved)) > 1e-3


def test_integration_failures():
    spec = tc_spec("tc1", 1000.0)
    sol0 = solve_seed(spec, DEFAULT_PARAMS)
    ctx = StageContext(1, 0.0, 50.0, spec, sol0=sol0)
    unknowns = unknowns_from_ocp0(sol0, spec)
    for t_f in (0.0, -1.0, math.inf):
        with pytest.raises(ShootingError) as exc_info:
            integrate_unknowns(
                ShootingUnknowns(**{**unknowns.as_dict(), "t_f": t_f}),
                ctx,
                DEFAULT_PARAMS,
            )
        assert exc_info.value.stage == 1


def test_stage_chain_continuity():
    spec = tc_spec("tc1", 1000.0)
    sol0 = solve_seed(spec, DEFAULT_PARAMS)
    unknowns = unknowns_from_ocp0(sol0, spec)
    ctx1 = StageContext(1, 1.0, 50.0, spec, sol0=sol0)
    end1 = integrate_unknowns(unknowns, ctx1, DEFAULT_PARAMS)
    endpoint = EndpointValues.from_state(end1.final.x)

    # stage 2 at lambda2 = 0 targets the stage-1 endpoint itself
    ctx2 = StageContext(2, 0.0, 50.0, spec, endpoint=endpoint)
    s1 = residual_s1(unknowns, ctx1, DEFAULT_PARAMS)
    s2 = residual_s2(unknowns, ctx2, DEFAULT_PARAMS)
    assert np.max(np.abs(s2[:5])) <= 1e-8
    assert np.allclose(s2[5:], s1[5:], atol=1e-8)

    # stage 3 at lambda3 = 0 is stage 2 at lambda2 = 1
    ctx3 = StageContext(3, 0.0, 50.0, spec, endpoint=endpoint)
    s3 = residual_s3(unknowns, ctx3, DEFAULT_PARAMS)
    assert np.allclose(
        s3, residual_s2(unknowns, ctx2.at(1.0), DEFAULT_PARAMS), atol=1e-8
    )
    assert np.array_equal(s3, shooting_residual(unknowns, ctx3, DEFAULT_PARAMS))

    with pytest.raises(AssertionError):
        residual_s1(unknowns, ctx2, DEFAULT_PARAMS)
