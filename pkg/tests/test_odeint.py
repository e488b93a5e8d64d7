"""Tests for the extremal integrator, switching events and chattering detection."""

import math

import numpy as np
import pytest

from rocketmintime.const import ControlLaw, ExtremalPoint, IntegratorConfig
from rocketmintime.exceptions import InvalidInputError
from rocketmintime.odeint import (
    CHATTERING_ALPHAS,
    classify_switch,
    detect_chattering,
    events_from_samples,
    integrate_extremal,
)
from tests.conftest import (
    DEFAULT_PARAMS,
    PLANAR_SWITCH_TIME,
    planar_switching_extremal,
    random_singular_points,
)


def test_planar_switch():
    traj = planar_switching_extremal()
    assert len(traj.events) == 1
    event = traj.events[0]
    assert event.t == pytest.approx(PLANAR_SWITCH_TIME, abs=1e-6)
    assert event.order == 1
    assert event.control_jump == pytest.approx(math.pi, abs=1e-6)
    assert event.phi_norm <= 1e-8

    # bang arcs on both sides, planar motion kept
    assert np.allclose(traj.control_at(traj.z(2.0)), (1.0, 0.0))
    assert np.allclose(traj.control_at(traj.z(7.0)), (-1.0, 0.0))
    assert np.max(np.abs(traj.final.x[[4, 5, 6]])) == 0.0

    # the maximized Hamiltonian is a first integral
    samples = traj.sample(traj.sample_grid(0.05))
    assert np.ptp(samples.hamiltonian) <= 1e-8
    assert traj.max_abs_hamiltonian() == pytest.approx(0.99, abs=1e-8)


@pytest.mark.parametrize("cadence", (0.1, 0.5))
def test_events_from_exported_samples(cadence):
    traj = planar_switching_extremal()
    grid = traj.sample_grid(cadence)
    # a single exported row at the switch
    assert np.sum(np.abs(grid - traj.events[0].t) < 1e-6) == 1
    samples = traj.sample(grid)
    events = events_from_samples(samples, DEFAULT_PARAMS)
    assert [event.order for event in events] == [1]
    assert events[0].t == pytest.approx(traj.events[0].t, abs=1e-6)
    assert events[0].control_jump == pytest.approx(math.pi, abs=1e-6)

    # zero-control rows around the switch are skipped when measuring the jump
    row = int(np.argmin(np.abs(grid - traj.events[0].t)))
    samples.u[row - 1 : row + 2] = 0.0
    events = events_from_samples(samples, DEFAULT_PARAMS)
    assert events[0].control_jump == pytest.approx(math.pi, abs=1e-6)

    assert events_from_samples(traj.sample([0.0, 1.0]), DEFAULT_PARAMS) == []


def test_sample_hook_and_grid():
    received = []
    traj = integrate_extremal(
        planar_switching_extremal().point(0.0),
        ControlLaw.regularized(),
        DEFAULT_PARAMS,
        IntegratorConfig(),
        (0.0, 2.0),
        output_cadence=0.5,
        sample_hook=received.append,
    )
    assert len(received) == 1
    assert np.allclose(received[0].t, (0.0, 0.5, 1.0, 1.5, 2.0))
    assert traj.n_steps >= 1
    # regularized law away from saturation: u1 = h1 / (2 gamma)
    h1 = DEFAULT_PARAMS.b_bar * traj.point(1.0).p[7]
    assert traj.control_at(traj.z(1.0))[0] == pytest.approx(h1 / 100.0)

    with pytest.raises(InvalidInputError):
        integrate_extremal(
            traj.point(0.0), ControlLaw(), DEFAULT_PARAMS, None, (1.0, 1.0)
        )


@pytest.mark.parametrize(
    "times, flagged, t_accumulation",
    (
        ((0.0, 1.0, 1.5, 1.75, 1.875, 1.9375), True, 2.0),
        ((0.0, 1.0, 2.0, 3.0, 4.0, 5.0), False, None),
        ((0.0, 1.0, 1.5, 1.75), False, None),
        ((0.0, 1.0, 1.5, 1.75, 1.875, 2.5, 2.6), False, None),
    ),
)
def test_detect_chattering(times, flagged, t_accumulation):
    report = detect_chattering(times)
    assert report.flagged is flagged
    if t_accumulation is None:
        assert report.t_accumulation is None
    else:
        assert report.t_accumulation == pytest.approx(t_accumulation)
        assert report.ratios == pytest.approx((0.5,) * 4)


def test_classification_orders():
    rng = np.random.default_rng(23)
    for z in random_singular_points(10):
        report = classify_switch(z, DEFAULT_PARAMS)
        assert report.on_surface
        assert report.order == 4
        assert report.chattering_branch
        assert report.h1_b1 < 0
        assert report.alpha_candidates == CHATTERING_ALPHAS[-1]

        # costate on the velocity only: order-2 contact
        order_2 = ExtremalPoint(x=z.x, p=np.r_[rng.normal(size=3), np.zeros(5)])
        assert classify_switch(order_2, DEFAULT_PARAMS).order == 2

        # nonzero pitch rate on S: order 3 with symmetric limits (c = 0)
        spinning = ExtremalPoint(x=z.x.copy(), p=z.p, p0=z.p0)
        spinning.x[7] = 0.05
        order_3 = classify_switch(spinning, DEFAULT_PARAMS)
        assert order_3.order == 3
        assert order_3.beta_minus == pytest.approx(order_3.beta_plus)
