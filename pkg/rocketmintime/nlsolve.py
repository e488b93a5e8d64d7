"""
Square nonlinear solver for the shooting equations.

MINPACK's Powell hybrid method (dogleg trust region with Broyden rank-1
updates, `scipy.optimize.root(method="hybr")`) driven by a forward-difference
Jacobian, restarted with a fresh Jacobian when it stops progressing. Both
MINPACK methods only accept steps that decrease the residual, so after a
Levenberg-Marquardt (`method="lm"`) run a few undamped Newton steps from the
starting point are the last resort. Convergence is decided here on the sup
norm of the residual, not on MINPACK's relative step test.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import root

from rocketmintime.const import SolveStatus

_LOGGER = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100
DEFAULT_RESTARTS = 4
NEWTON_MAX_STEPS = 20
FD_REL_STEP = float(np.sqrt(np.finfo(float).eps))
# MINPACK's own stopping test only ends runs that can no longer progress
_MINPACK_XTOL = 1e-15

Residual = Callable[[np.ndarray], np.ndarray]
IterationCallback = Callable[[int, np.ndarray, float], None]


@dataclass
class SolveReport:
    """Outcome of `solve`."""

    root: np.ndarray
    residual_norm: float
    jacobian_condition_estimate: float
    iterations: int
    status: SolveStatus
    message: str = ""
    fun: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class _Converged(Exception):
    """Residual below tolerance, raised from inside MINPACK callbacks."""

    pass  # noqa PIE790


class _NonFinite(Exception):
    """Residual with NaN or Inf components."""

    pass  # noqa PIE790


class _Exhausted(Exception):
    """Evaluation budget spent."""

    pass  # noqa PIE790


class _TrackedResidual:
    """Counting, caching wrapper of F that stops MINPACK on convergence."""

    def __init__(
        self,
        func: Residual,
        tol: float,
        max_iter: int,
        callback: IterationCallback | None,
    ):
        self._func = func
        self.tol = tol
        self.limit = max_iter
        self._callback = callback
        self.evaluations = 0
        self.last_x: np.ndarray | None = None
        self.last_f: np.ndarray | None = None
        self.best_x: np.ndarray | None = None
        self.best_f: np.ndarray | None = None
        self.last_jacobian: np.ndarray | None = None

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Uncounted evaluation (finite-difference columns)."""
        return np.asarray(self._func(np.array(x, dtype=float)), dtype=float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.last_x is not None and np.array_equal(x, self.last_x):
            return self.last_f
        if self.evaluations >= self.limit:
            raise _Exhausted
        f = self.raw(x)
        self.evaluations += 1
        if not np.all(np.isfinite(f)):
            raise _NonFinite
        self.last_x, self.last_f = np.array(x, dtype=float), f
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        if self.best_f is None or norm < float(np.max(np.abs(self.best_f))):
            self.best_x, self.best_f = self.last_x, f
        _LOGGER.debug("[nlsolve] eval %d: |F|inf=%.3e", self.evaluations, norm)
        if self._callback is not None:
            self._callback(self.evaluations, self.last_x, norm)
        if norm <= self.tol:
            raise _Converged
        return f


def fd_jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    f_x: np.ndarray,
    scale: np.ndarray,
    rel_step: float = FD_REL_STEP,
    workers: int = 1,
) -> np.ndarray:
    """Forward-difference Jacobian, columns evaluated in threads if workers > 1."""
    steps = rel_step * np.maximum(np.abs(x), scale)

    def column(j: int) -> np.ndarray:
        x_step = np.array(x, dtype=float)
        x_step[j] += steps[j]
        return (np.asarray(func(x_step), dtype=float) - f_x) / (x_step[j] - x[j])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(column, range(len(x))))
    else:
        columns = [column(j) for j in range(len(x))]
    return np.column_stack(columns)


def _condition_from_r(packed_r: np.ndarray | None, n: int) -> float:
    if packed_r is None or len(packed_r) != n * (n + 1) // 2:
        return float("nan")
    r_matrix = np.zeros((n, n))
    r_matrix[np.triu_indices(n)] = packed_r
    return float(np.linalg.cond(r_matrix))


def _minpack_run(
    tracked: _TrackedResidual,
    x_start: np.ndarray,
    jac: Callable[[np.ndarray], np.ndarray],
    method: str,
    factor: float,
    budget: int,
) -> tuple[SolveStatus, str, Any]:
    """One MINPACK run of at most `budget` residual evaluations."""
    tracked.limit = tracked.evaluations + budget
    if method == "hybr":
        options = {"xtol": _MINPACK_XTOL, "maxfev": 10 * budget, "factor": factor}
    else:
        options = {"xtol": _MINPACK_XTOL, "maxiter": 10 * budget, "factor": factor}
    try:
        result = root(tracked, x_start, jac=jac, method=method, options=options)
    except _Converged:
        return "converged", "residual below tolerance", None
    except _Exhausted:
        return "max_iter", f"{tracked.evaluations} residual evaluations", None
    except _NonFinite:
        return "nan_encountered", "non-finite residual", None
    if tracked.last_f is not None and float(np.max(np.abs(tracked.last_f))) <= (
        tracked.tol
    ):
        return "converged", "residual below tolerance", result
    return "stalled", str(result.message), result


def _newton_run(
    tracked: _TrackedResidual,
    x_start: np.ndarray,
    jac: Callable[[np.ndarray], np.ndarray],
    budget: int,
) -> tuple[SolveStatus, str, None]:
    """Undamped Newton steps on a fresh Jacobian each, with no decrease test."""
    tracked.limit = tracked.evaluations + budget
    x = np.array(x_start, dtype=float)
    try:
        while True:
            f_x = tracked(x)
            step = np.linalg.lstsq(jac(x), -f_x, rcond=None)[0]
            if not np.all(np.isfinite(step)) or not np.any(step):
                return "stalled", "singular Jacobian in Newton steps", None
            x = x + step
    except _Converged:
        return "converged", "residual below tolerance", None
    except np.linalg.LinAlgError:
        return "stalled", "singular Jacobian in Newton steps", None
    except _Exhausted:
        return "max_iter", f"no convergence in {budget} Newton steps", None
    except _NonFinite:
        return "stalled", "non-finite residual in Newton steps", None


def solve(
    func: Residual,
    x0: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    callback: IterationCallback | None = None,
    scale: np.ndarray | None = None,
    workers: int = 1,
    factor: float = 100.0,
    rel_step: float = FD_REL_STEP,
    restarts: int = DEFAULT_RESTARTS,
    newton_steps: int = NEWTON_MAX_STEPS,
) -> SolveReport:
    """
    Solve func(x) = 0 for a square system starting at x0.

    When the hybrid method stalls or spends its `max_iter` evaluations, it is
    restarted from the best iterate with a fresh finite-difference Jacobian and
    half the initial step bound, at most `restarts` times. A Levenberg-Marquardt
    run from the best iterate, with the budget of all the hybrid runs, comes
    next, then at most `newton_steps` undamped Newton steps from x0.

    `iterations` counts residual evaluations outside the finite-difference
    Jacobians, over all attempts. `scale` sets the magnitude below which FD
    steps stop shrinking with |x_j| (default 1).
    """
    x0 = np.array(x0, dtype=float).ravel()
    n = len(x0)
    assert tol > 0 and max_iter > 0, (tol, max_iter)
    assert restarts >= 0 and newton_steps >= 0, (restarts, newton_steps)
    scale_arr = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    tracked = _TrackedResidual(func, tol, max_iter, callback)

    def jac(x: np.ndarray) -> np.ndarray:
        f_x = tracked(x)
        tracked.last_jacobian = fd_jacobian(
            tracked.raw, x, f_x, scale_arr, rel_step, workers
        )
        return tracked.last_jacobian

    attempts = [
        ("hybr", max(0.1, factor * 0.5**k), max_iter) for k in range(restarts + 1)
    ]
    attempts.append(("lm", factor, max_iter * (restarts + 1)))
    if newton_steps:
        attempts.append(("newton", 0.0, min(max_iter, newton_steps)))
    x_start = x0
    status: SolveStatus = "stalled"
    message = ""
    result = None
    for attempt, (method, step_bound, budget) in enumerate(attempts):
        if attempt:
            _LOGGER.debug(
                "[nlsolve] %s (%s), restart %d with %s from |F|inf=%.3e",
                status,
                message,
                attempt,
                method,
                float(np.max(np.abs(tracked.best_f))),
            )
        if method == "newton":
            status, message, result = _newton_run(tracked, x0, jac, budget)
        else:
            status, message, result = _minpack_run(
                tracked, x_start, jac, method, step_bound, budget
            )
        if status in ("converged", "nan_encountered") or tracked.best_x is None:
            break
        x_start = tracked.best_x

    x_last = tracked.last_x if tracked.last_x is not None else x0
    f_last = tracked.last_f
    if status != "converged" and tracked.best_x is not None:
        x_last, f_last = tracked.best_x, tracked.best_f
    residual_norm = (
        float(np.max(np.abs(f_last))) if f_last is not None else float("inf")
    )
    if result is not None and getattr(result, "r", None) is not None:
        condition = _condition_from_r(result.r, n)
    elif tracked.last_jacobian is not None:
        condition = float(np.linalg.cond(tracked.last_jacobian))
    else:
        condition = float("nan")
    level = logging.DEBUG if status == "converged" else logging.INFO
    _LOGGER.log(
        level,
        "[nlsolve] %s after %d evaluations, |F|inf=%.3e (%s)",
        status,
        tracked.evaluations,
        residual_norm,
        message,
    )
    return SolveReport(
        root=np.array(x_last),
        residual_norm=residual_norm,
        jacobian_condition_estimate=condition,
        iterations=tracked.evaluations,
        status=status,
        message=message,
        fun=f_last,
    )
