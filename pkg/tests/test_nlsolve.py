"""Tests for the hybrid Powell wrapper."""

import logging

import numpy as np
import pytest

from rocketmintime.nlsolve import fd_jacobian, solve


def _rosenbrock_gradient(x):
    bend = x[1] - x[0] ** 2
    return np.array([-2.0 * (1.0 - x[0]) - 400.0 * x[0] * bend, 200.0 * bend])


def test_scalar_root():
    report = solve(lambda x: x**2 - 4.0, np.array([1.0]))
    assert report.converged
    assert report.root[0] == pytest.approx(2.0, abs=1e-9)
    assert report.residual_norm <= 1e-10
    assert report.iterations >= 1


def test_linear_system():
    rng = np.random.default_rng(29)
    matrix = rng.normal(size=(8, 8)) + 8.0 * np.eye(8)
    rhs = rng.normal(size=8)
    report = solve(lambda x: matrix @ x - rhs, np.zeros(8))
    assert report.converged
    assert np.allclose(report.root, np.linalg.solve(matrix, rhs), atol=1e-10)
    assert report.fun is not None


def test_rosenbrock_gradient():
    calls = []
    report = solve(
        _rosenbrock_gradient,
        np.array([-1.2, 1.0]),
        tol=1e-8,
        callback=lambda n, x, norm: calls.append((n, norm)),
    )
    assert report.converged, report.message
    assert np.allclose(report.root, (1.0, 1.0), atol=1e-6)
    assert [n for n, _ in calls] == list(range(1, len(calls) + 1))
    assert calls[-1][1] <= 1e-8


def test_failures(caplog):
    with caplog.at_level(logging.INFO):
        report = solve(lambda x: np.array([np.nan]), np.array([1.0]))
    assert report.status == "nan_encountered"
    assert not report.converged
    assert len(caplog.messages) == 1

    report = solve(lambda x: x**2 + 1.0, np.array([0.5]), max_iter=20)
    assert not report.converged
    assert report.status in ("stalled", "max_iter")
    assert report.residual_norm >= 1.0


def test_threaded_jacobian():
    x = np.array([0.3, -0.2])
    f_x = _rosenbrock_gradient(x)
    serial = fd_jacobian(_rosenbrock_gradient, x, f_x, np.ones(2))
    threaded = fd_jacobian(_rosenbrock_gradient, x, f_x, np.ones(2), workers=2)
    assert np.array_equal(serial, threaded)
    exact = np.array(
        [[2.0 - 400.0 * (x[1] - 3 * x[0] ** 2), -400.0 * x[0]], [-400.0 * x[0], 200.0]]
    )
    assert np.allclose(serial, exact, rtol=1e-5, atol=1e-4)


@pytest.mark.parametrize("restarts", (0, 2))
def test_restarts_from_best_iterate(caplog, restarts):
    with caplog.at_level(logging.DEBUG, logger="rocketmintime.nlsolve"):
        report = solve(
            lambda x: x**2 + 1.0, np.array([0.5]), max_iter=20, restarts=restarts
        )
    assert not report.converged
    # hybrid runs, one Levenberg-Marquardt run, then the Newton steps
    assert report.iterations <= 2 * 20 * (restarts + 1) + 20
    restart_lines = [m for m in caplog.messages if "restart" in m]
    assert len(restart_lines) == restarts + 2
    assert "with lm" in restart_lines[-2]
    assert "with newton" in restart_lines[-1]
    assert report.residual_norm == pytest.approx(1.0 + report.root[0] ** 2)
