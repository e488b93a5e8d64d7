"""Tests for rocketmintime."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from rocketmintime.const import (
    ControlLaw,
    ExtremalPoint,
    IntegratorConfig,
    RocketParams,
    STATE_DIM,
    TerminalSpec,
)
from rocketmintime.liealgebra import singular_surface_point
from rocketmintime.nlsolve import SolveReport
from rocketmintime.odeint import ExtremalTrajectory, integrate_extremal
from rocketmintime.scenarios import preset

DEFAULT_PARAMS = RocketParams()
SEED = 20_240_605

# planar extremal whose switching function crosses zero at PLANAR_SWITCH_TIME
PLANAR_SWITCH_TIME = 5.0
PLANAR_P_THETA = 0.1

# stage-3 roots are refused from this lambda3 on
STAGE3_STALL_LAMBDA = 0.3


def random_states(n: int, seed: int = SEED) -> list[np.ndarray]:
    """States with angles in (-1.2, 1.2) rad and rates in (-0.5, 0.5) rad/s."""
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(n):
        x = np.empty(STATE_DIM)
        x[:3] = rng.uniform(-500.0, 500.0, 3)
        x[3:6] = rng.uniform(-1.2, 1.2, 3)
        x[6:] = rng.uniform(-0.5, 0.5, 2)
        states.append(x)
    return states


def random_points(n: int, seed: int = SEED) -> list[ExtremalPoint]:
    rng = np.random.default_rng(seed + 1)
    return [
        ExtremalPoint(x=x, p=rng.uniform(-1.0, 1.0, STATE_DIM))
        for x in random_states(n, seed)
    ]


def random_singular_points(
    n: int, params: RocketParams = DEFAULT_PARAMS, seed: int = SEED
) -> list[ExtremalPoint]:
    """Points of the singular surface at random attitudes and velocities."""
    rng = np.random.default_rng(seed + 2)
    return [
        singular_surface_point(
            *rng.uniform(-1.2, 1.2, 3), rng.uniform(-500.0, 500.0, 3), params
        )
        for _ in range(n)
    ]


def tc_spec(name: str, v0: float) -> TerminalSpec:
    return preset(name, v0).to_terminal_spec()


def central_gradient(
    func: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(len(x)):
        step = np.zeros_like(x)
        step[j] = h
        grad[j] = (func(x + step) - func(x - step)) / (2.0 * h)
    return grad


def planar_switching_extremal(t1: float = 8.0) -> ExtremalTrajectory:
    """
    Min-time extremal in the pitch plane with a single switch.

    With p_v = 0 the pitch costate is constant, so p_omega_y decreases linearly
    and the switching function passes through the origin at
    PLANAR_SWITCH_TIME: u1 flips from +1 to -1 there.
    """
    x = np.array([0.0, 0.0, 100.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    p = np.zeros(STATE_DIM)
    p[3] = PLANAR_P_THETA
    p[7] = PLANAR_P_THETA * PLANAR_SWITCH_TIME
    return integrate_extremal(
        ExtremalPoint(x=x, p=p),
        ControlLaw.min_time(),
        DEFAULT_PARAMS,
        IntegratorConfig(),
        (0.0, t1),
    )


def stage3_stalling_solve(func, x0, *args, **kwargs) -> SolveReport:
    """
    Stand-in for `nlsolve.solve` in the continuation driver.

    Accepts the guess as a root in stages 1 and 2 and in stage 3 below
    STAGE3_STALL_LAMBDA, and stalls from there on.
    """
    ctx = func.ctx
    accepted = ctx.stage < 3 or ctx.lam < STAGE3_STALL_LAMBDA
    return SolveReport(
        root=np.array(x0, dtype=float),
        residual_norm=0.0 if accepted else 1.0,
        jacobian_condition_estimate=1.0,
        iterations=1,
        status="converged" if accepted else "stalled",
    )
