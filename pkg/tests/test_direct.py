"""Tests for the direct transcription and its augmented-Lagrangian solver."""

import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from rocketmintime.const import (
    DirectConfig,
    RocketParams,
    TERMINAL_CONSTRAINTS,
)
from rocketmintime.direct import (
    Transcription,
    find_singular_window,
    initial_tf_guess,
    pack_decision,
    project_disk,
    solve_direct,
    split_decision,
    transcription_residuals,
)
from rocketmintime.dynamics import terminal_residuals
from rocketmintime.exceptions import InvalidInputError
from rocketmintime.odeint import TrajectorySamples
from rocketmintime.scenarios import Scenario
from tests.conftest import DEFAULT_PARAMS, tc_spec


def test_decision_layout():
    controls = np.arange(40, dtype=float).reshape(20, 2) / 40.0
    decision = pack_decision(12.5, controls)
    assert len(decision) == 41
    t_f, unpacked = split_decision(decision, 20)
    assert t_f == 12.5
    assert np.array_equal(unpacked, controls)

    projected = project_disk(np.array([[0.6, 0.8], [3.0, 4.0], [0.1, 0.0]]))
    assert np.allclose(projected, [[0.6, 0.8], [0.6, 0.8], [0.1, 0.0]])


def test_zero_control_residuals():
    spec = tc_spec("tc1", 1000.0)
    evaluation = transcription_residuals(
        pack_decision(30.0, np.zeros((20, 2))), spec, DEFAULT_PARAMS, 20
    )
    assert evaluation.objective == 30.0
    assert not evaluation.infeasible
    assert evaluation.violation_time is None
    # attitude frozen without torque
    constraints = dict(zip(TERMINAL_CONSTRAINTS, evaluation.constraints))
    assert constraints["theta"] == pytest.approx(spec.x0[3] - spec.theta_f, abs=1e-15)
    assert constraints["psi"] == pytest.approx(spec.x0[4] - spec.psi_f, abs=1e-15)
    assert constraints["phi"] == 0.0
    assert constraints["omega_x"] == constraints["omega_y"] == 0.0
    assert np.allclose(
        evaluation.constraints, terminal_residuals(evaluation.final_state, spec)
    )


def test_transcription_errors():
    spec = tc_spec("tc1", 1000.0)
    with pytest.raises(InvalidInputError):
        Transcription(spec, DEFAULT_PARAMS, 10)
    with pytest.raises(InvalidInputError):
        Transcription(spec, DEFAULT_PARAMS, 20, ("theta", "altitude"))
    with pytest.raises(InvalidInputError):
        transcription_residuals(np.full(41, np.nan), spec, DEFAULT_PARAMS, 20)
    with pytest.raises(InvalidInputError):
        DirectConfig(n_segments=19)
    with pytest.raises(InvalidInputError):
        solve_direct(spec, DEFAULT_PARAMS, stage_plan=())


def test_yaw_clip_at_euler_singularity(caplog):
    spec = tc_spec("tc1", 1000.0)
    state = list(spec.initial_state)
    state[4] = math.pi / 2
    singular = replace(spec, initial_state=tuple(state))
    transcription = Transcription(singular, DEFAULT_PARAMS, 20)
    decision = pack_decision(10.0, np.zeros((20, 2)))
    with caplog.at_level(logging.DEBUG, logger="rocketmintime.direct"):
        evaluation = transcription.evaluate(decision)
        transcription.evaluate(decision)
    assert evaluation.infeasible
    assert np.all(np.isfinite(evaluation.final_state))
    assert len(caplog.messages) == 2
    assert [record.levelno for record in caplog.records] == [
        logging.WARNING,
        logging.DEBUG,
    ]
    assert "[direct]" in caplog.messages[0]

    caplog.clear()
    with caplog.at_level(logging.DEBUG, logger="rocketmintime.direct"):
        Transcription(spec, DEFAULT_PARAMS, 20).evaluate(decision)
    assert len(caplog.messages) == 0


def test_rk4_fourth_order():
    spec = tc_spec("tc1", 1000.0)
    finals = {}
    for n_segments in (20, 40, 80):
        tr = Transcription(spec, DEFAULT_PARAMS, n_segments, substeps=1)
        controls = np.tile((0.3, 0.0), (n_segments, 1))
        finals[n_segments] = tr.evaluate(pack_decision(30.0, controls)).final_state
    coarse = np.linalg.norm(finals[20] - finals[80])
    fine = np.linalg.norm(finals[40] - finals[80])
    # (1 - 1/256) / (1/16 - 1/256) = 17 for a fourth-order scheme
    assert 10.0 < coarse / fine < 25.0


def test_adjoint_gradient_matches_finite_differences():
    spec = tc_spec("tc2", 2000.0)
    tr = Transcription(spec, DEFAULT_PARAMS, 20)
    rng = np.random.default_rng(31)
    controls = rng.uniform(-0.5, 0.5, (20, 2))
    weights = rng.normal(size=len(TERMINAL_CONSTRAINTS))
    t_f = 20.0

    def objective(decision):
        return float(weights @ tr.evaluate(decision).constraints)

    x_f, grad_tf, grad_u = tr.terminal_gradient(t_f, controls, lambda _x: weights)
    decision = pack_decision(t_f, controls)
    assert np.allclose(x_f, tr.evaluate(decision).final_state)
    adjoint = pack_decision(grad_tf, grad_u)
    h = 1e-6
    for index in (0, 1, 8, 20, 21, 30, 40):
        step = np.zeros_like(decision)
        step[index] = h
        fd = (objective(decision + step) - objective(decision - step)) / (2.0 * h)
        assert abs(adjoint[index] - fd) <= 1e-5 * max(1.0, abs(fd)), (index, fd)


def test_initial_tf_guess():
    spec = tc_spec("tc1", 1000.0)
    guess = initial_tf_guess(spec, DEFAULT_PARAMS)
    # bang-bang pitch change of 10 deg alone needs 2 sqrt(dtheta / b_bar)
    assert guess >= 1.2 * 2.0 * math.sqrt(math.radians(10.0) / DEFAULT_PARAMS.b_bar)


def test_zero_maneuver():
    spec = Scenario(
        "at-target", 1000.0, 85.0, 5.0, 85.0, 5.0
    ).to_terminal_spec()
    result = solve_direct(
        spec,
        RocketParams(),
        n_segments=20,
        stage_plan=(TERMINAL_CONSTRAINTS,),
    )
    assert result.converged, result.message
    assert result.t_f == pytest.approx(0.0, abs=1e-6)
    assert result.max_violation <= 1e-6
    assert result.cost == result.t_f
    assert len(result.stages) == 1
    assert set(result.constraint_violation) == set(TERMINAL_CONSTRAINTS)


def test_singular_window():
    times = np.arange(8.0)
    norms = np.array([1.0, 1.0, 0.2, 0.1, 0.3, 1.0, 0.2, 1.0])
    samples = TrajectorySamples(
        t=times,
        x=np.zeros((8, 8)),
        p=np.zeros((8, 8)),
        u=np.column_stack((norms, np.zeros(8))),
        phi_norm=np.zeros(8),
        hamiltonian=np.zeros(8),
    )
    window = find_singular_window(samples)
    assert (window.t_start, window.t_end) == (2.0, 4.0)
    assert window.duration == 2.0
    assert window.max_control_norm == pytest.approx(0.3)
    assert window.max_singular_distance == 0.0

    assert find_singular_window(samples, min_duration=5.0) is None
    assert find_singular_window(samples, norm_threshold=0.05) is None
