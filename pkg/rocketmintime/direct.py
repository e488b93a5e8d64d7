"""
Direct transcription of the minimum-time problem.

Piecewise-constant controls on N uniform segments of the normalized time
tau = t / t_f, fixed-step RK4 inside each segment, and the final time as a
decision variable multiplying the dynamics. The terminal conditions are added
stage by stage (planar pitch problem first), each stage warm-started from the
previous one and solved by an augmented Lagrangian whose bound-constrained
subproblems go to L-BFGS-B. Gradients are exact discrete adjoints of the RK4
propagation.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from rocketmintime.const import (
    DirectConfig,
    EULER_SINGULARITY_TOL,
    ExtremalPoint,
    IX_OMEGA_X,
    IX_OMEGA_Y,
    IX_PSI,
    RocketParams,
    SLICE_ANGLES,
    SLICE_V,
    STATE_DIM,
    TERMINAL_CONSTRAINTS,
    TerminalConstraint,
    TerminalSpec,
)
from rocketmintime.dynamics import drift_vjp, rhs, terminal_jacobian, terminal_residuals
from rocketmintime.exceptions import InvalidInputError, RocketMinTimeError
from rocketmintime.frames import thrust_axis
from rocketmintime.liealgebra import singular_distance
from rocketmintime.ocp0 import solve_ocp0
from rocketmintime.odeint import TrajectorySamples

_LOGGER = logging.getLogger(__name__)

# Step 1 is the planar pitch problem, later steps add one condition each
DEFAULT_STAGE_PLAN: tuple[tuple[TerminalConstraint, ...], ...] = (
    ("omega_y", "theta", "vel_pitch"),
    ("omega_y", "theta", "vel_pitch", "vel_yaw"),
    ("omega_y", "theta", "vel_pitch", "vel_yaw", "psi"),
    ("omega_y", "theta", "vel_pitch", "vel_yaw", "psi", "phi"),
    ("omega_y", "theta", "vel_pitch", "vel_yaw", "psi", "phi", "omega_x"),
)
# Evaluation states are kept strictly inside the Euler chart
_PSI_LIMIT = math.acos(10.0 * EULER_SINGULARITY_TOL)
_PENALTY_DECREASE = 0.25


@dataclass
class TranscriptionEvaluation:
    """Active terminal residuals and objective of one decision vector."""

    constraints: np.ndarray
    objective: float
    final_state: np.ndarray
    infeasible: bool = False
    violation_time: float | None = None


@dataclass
class _Propagation:
    times: np.ndarray
    states: np.ndarray
    infeasible: np.ndarray
    violation_time: np.ndarray
    stage_states: list[np.ndarray] | None = None
    stage_rates: list[np.ndarray] | None = None


def split_decision(decision: np.ndarray, n_segments: int) -> tuple[float, np.ndarray]:
    """(t_f, controls of shape (N, 2)) from (t_f, u1[0..N), u2[0..N))."""
    decision = np.asarray(decision, dtype=float)
    assert decision.shape == (2 * n_segments + 1,), decision.shape
    controls = np.column_stack(
        (decision[1 : n_segments + 1], decision[n_segments + 1 :])
    )
    return float(decision[0]), controls


def pack_decision(t_f: float, controls: np.ndarray) -> np.ndarray:
    return np.concatenate(([t_f], controls[:, 0], controls[:, 1]))


def project_disk(controls: np.ndarray) -> np.ndarray:
    """Radial projection of every segment control onto the unit disk."""
    norms = np.linalg.norm(controls, axis=-1, keepdims=True)
    return np.where(norms > 1.0, controls / np.maximum(norms, 1.0), controls)


class Transcription:
    """
    Single-shooting transcription with N piecewise-constant control segments.

    Decision vectors are (t_f, u1[0..N), u2[0..N)); the control bound mode is
    the unit disk.
    """

    def __init__(
        self,
        spec: TerminalSpec,
        params: RocketParams,
        n_segments: int,
        active: Sequence[TerminalConstraint] = TERMINAL_CONSTRAINTS,
        substeps: int = 2,
    ):
        if n_segments < 20:
            raise InvalidInputError(f"N must be >= 20, got {n_segments}")
        unknown = set(active) - set(TERMINAL_CONSTRAINTS)
        if unknown:
            raise InvalidInputError(f"Unknown terminal constraints: {unknown}")
        self.spec = spec
        self.params = params
        self.n_segments = n_segments
        self.substeps = substeps
        self.active = tuple(c for c in TERMINAL_CONSTRAINTS if c in active)
        self.rows = [TERMINAL_CONSTRAINTS.index(c) for c in self.active]
        self.jacobian = terminal_jacobian(spec)[self.rows]
        self.h = 1.0 / (n_segments * substeps)
        self._psi_peak = 0.0
        self._clip_warned = False

    @property
    def n_decision(self) -> int:
        return 2 * self.n_segments + 1

    def _rates(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        psi_peak = float(np.max(np.abs(x[..., IX_PSI])))
        if psi_peak > _PSI_LIMIT:
            self._psi_peak = max(self._psi_peak, psi_peak)
        x_eval = x.copy()
        x_eval[..., IX_PSI] = np.clip(x_eval[..., IX_PSI], -_PSI_LIMIT, _PSI_LIMIT)
        return rhs(x_eval, u, self.params)

    def propagate(
        self, t_f: np.ndarray, controls: np.ndarray, store: bool = False
    ) -> _Propagation:
        """RK4 propagation of a batch of decisions, t_f (B,) and controls (B,N,2)."""
        t_f = np.atleast_1d(np.asarray(t_f, dtype=float))
        controls = np.asarray(controls, dtype=float).reshape(len(t_f), -1, 2)
        batch = len(t_f)
        n_nodes = self.n_segments * self.substeps + 1
        states = np.empty((n_nodes, batch, STATE_DIM))
        states[0] = self.spec.x0
        infeasible = np.zeros(batch, dtype=bool)
        violation_time = np.full(batch, np.nan)
        stage_states: list[np.ndarray] = []
        stage_rates: list[np.ndarray] = []
        h = self.h
        scale = t_f[:, None]
        self._psi_peak = 0.0
        node = 0
        x = states[0].copy()
        for k in range(self.n_segments):
            u = controls[:, k, :]
            for _ in range(self.substeps):
                f1 = self._rates(x, u)
                y2 = x + 0.5 * h * scale * f1
                f2 = self._rates(y2, u)
                y3 = x + 0.5 * h * scale * f2
                f3 = self._rates(y3, u)
                y4 = x + h * scale * f3
                f4 = self._rates(y4, u)
                if store:
                    stage_states.append(np.stack((x, y2, y3, y4)))
                    stage_rates.append(np.stack((f1, f2, f3, f4)))
                x = x + h / 6.0 * scale * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
                node += 1
                states[node] = x
                crossed = ~infeasible & (np.abs(x[:, IX_PSI]) > _PSI_LIMIT)
                violation_time[crossed] = node * h * t_f[crossed]
                infeasible |= crossed
        if self._psi_peak > 0.0:
            self._report_clip()
        times = np.outer(np.linspace(0.0, 1.0, n_nodes), t_f)
        return _Propagation(
            times=times,
            states=states,
            infeasible=infeasible,
            violation_time=violation_time,
            stage_states=stage_states if store else None,
            stage_rates=stage_rates if store else None,
        )

    def _report_clip(self) -> None:
        # first occurrence as a warning, repeats at debug level
        log = _LOGGER.debug if self._clip_warned else _LOGGER.warning
        log(
            "[direct] |psi|=%.6f rad clipped to %.6f rad away from the Euler "
            "singularity while evaluating rates",
            self._psi_peak,
            _PSI_LIMIT,
        )
        self._clip_warned = True

    def evaluate(self, decision: np.ndarray) -> TranscriptionEvaluation:
        t_f, controls = split_decision(decision, self.n_segments)
        prop = self.propagate(np.array([t_f]), controls[None])
        x_f = prop.states[-1, 0]
        violation = prop.violation_time[0]
        return TranscriptionEvaluation(
            constraints=terminal_residuals(x_f, self.spec)[self.rows],
            objective=t_f,
            final_state=x_f,
            infeasible=bool(prop.infeasible[0]),
            violation_time=None if np.isnan(violation) else float(violation),
        )

    def terminal_gradient(
        self,
        t_f: float,
        controls: np.ndarray,
        weights_of: Callable[[np.ndarray], np.ndarray],
    ) -> tuple[np.ndarray, float, np.ndarray]:
        """
        Final state and gradient of w·c(x(t_f)) with respect to (t_f, u).

        w = weights_of(x(t_f)) is held fixed. The terminal residuals are affine
        in the state, so the adjoint starts from J^T w and is pulled back
        through every RK4 stage.
        """
        prop = self.propagate(np.array([t_f]), controls[None], store=True)
        x_f = prop.states[-1, 0]
        b_bar, h = self.params.b_bar, self.h
        adj = self.jacobian.T @ weights_of(x_f)
        grad_tf = 0.0
        grad_u = np.zeros((self.n_segments, 2))
        for index in range(len(prop.stage_states) - 1, -1, -1):
            ys, fs = prop.stage_states[index][:, 0], prop.stage_rates[index][:, 0]
            k_bar = np.array([h / 6.0, h / 3.0, h / 3.0, h / 6.0])[:, None] * adj
            x_bar = adj.copy()
            for stage, pull in ((3, h), (2, 0.5 * h), (1, 0.5 * h)):
                y_bar = t_f * self._vjp(ys[stage], k_bar[stage])
                x_bar += y_bar
                k_bar[stage - 1] += pull * y_bar
            x_bar += t_f * self._vjp(ys[0], k_bar[0])
            grad_tf += float(np.sum(k_bar * fs))
            k_sum = k_bar.sum(axis=0)
            segment = index // self.substeps
            grad_u[segment, 0] += t_f * b_bar * k_sum[IX_OMEGA_Y]
            grad_u[segment, 1] -= t_f * b_bar * k_sum[IX_OMEGA_X]
            adj = x_bar
        return x_f, grad_tf, grad_u

    def _vjp(self, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
        x_eval = x.copy()
        x_eval[IX_PSI] = min(max(x_eval[IX_PSI], -_PSI_LIMIT), _PSI_LIMIT)
        return drift_vjp(x_eval, lam, self.params)


def transcription_residuals(
    decision: np.ndarray,
    spec: TerminalSpec,
    params: RocketParams,
    n_segments: int,
    active_constraints: Sequence[TerminalConstraint] = TERMINAL_CONSTRAINTS,
    substeps: int = 2,
) -> TranscriptionEvaluation:
    """Active terminal residuals and objective t_f of a decision vector."""
    decision = np.asarray(decision, dtype=float)
    if not np.all(np.isfinite(decision)):
        raise InvalidInputError("Decision vector must be finite")
    transcription = Transcription(
        spec, params, n_segments, active_constraints, substeps
    )
    return transcription.evaluate(decision)


class _AugmentedLagrangian:
    """
    L = t_f/t_ref - y·c_s + mu/2 |c_s|² + disk terms, c_s the scaled residuals.

    The disk constraints |u_k|² - 1 <= 0 enter through the shifted quadratic
    penalty (max(0, nu + mu s)² - nu²) / (2 mu).
    """

    def __init__(self, transcription: Transcription, t_ref: float, scales: np.ndarray):
        self.tr = transcription
        self.t_ref = t_ref
        self.scales = scales
        n_c = len(transcription.rows)
        self.y = np.zeros(n_c)
        self.nu = np.zeros(transcription.n_segments)
        self.mu = 1.0

    def unpack(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        t_f, controls = split_decision(z, self.tr.n_segments)
        return t_f * self.t_ref, controls

    def __call__(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        t_f, controls = self.unpack(z)
        x_f, grad_tf, grad_u = self.tr.terminal_gradient(t_f, controls, self._weights)
        c_s = self._scaled_residuals(x_f)

        slack = np.sum(controls**2, axis=1) - 1.0
        shifted = np.maximum(0.0, self.nu + self.mu * slack)
        value = (
            t_f / self.t_ref
            - float(self.y @ c_s)
            + 0.5 * self.mu * float(c_s @ c_s)
            + float(np.sum(shifted**2 - self.nu**2)) / (2.0 * self.mu)
        )
        grad_u = grad_u + 2.0 * shifted[:, None] * controls
        grad_z0 = self.t_ref * (1.0 / self.t_ref + grad_tf)
        return value, pack_decision(grad_z0, grad_u)

    def _scaled_residuals(self, x_f: np.ndarray) -> np.ndarray:
        return self.scales * terminal_residuals(x_f, self.tr.spec)[self.tr.rows]

    def _weights(self, x_f: np.ndarray) -> np.ndarray:
        return self.scales * (self.mu * self._scaled_residuals(x_f) - self.y)

    def _final_state(self, t_f: float, controls: np.ndarray) -> np.ndarray:
        return self.tr.propagate(np.array([t_f]), controls[None]).states[-1, 0]

    def violations(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Natural-unit terminal residuals and disk slacks at z."""
        t_f, controls = self.unpack(z)
        x_f = self._final_state(t_f, controls)
        residuals = terminal_residuals(x_f, self.tr.spec)[self.tr.rows]
        return residuals, np.sum(controls**2, axis=1) - 1.0

    def update_multipliers(self, residuals: np.ndarray, slack: np.ndarray) -> None:
        self.y = self.y - self.mu * self.scales * residuals
        self.nu = np.maximum(0.0, self.nu + self.mu * slack)


@dataclass
class DirectStageReport:
    """Outcome of one step of the stage plan."""

    active: tuple[TerminalConstraint, ...]
    t_f: float
    violation: float
    outer_iterations: int
    converged: bool


@dataclass
class SingularWindow:
    """Longest interval of unsaturated control along a direct solution."""

    t_start: float
    t_end: float
    max_control_norm: float
    max_singular_distance: float
    initial_singular_distance: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class DirectResult:
    """Direct solution in the extremal export schema, with stage diagnostics."""

    spec: TerminalSpec
    params: RocketParams
    t_f: float
    controls: np.ndarray
    samples: TrajectorySamples
    constraint_violation: dict[str, float]
    converged: bool
    message: str
    multipliers: np.ndarray
    stages: list[DirectStageReport] = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return max(map(abs, self.constraint_violation.values()), default=0.0)

    @property
    def cost(self) -> float:
        return self.t_f


def _constraint_scales(
    active: Sequence[TerminalConstraint], spec: TerminalSpec
) -> np.ndarray:
    speed = max(1.0, float(np.linalg.norm(spec.x0[SLICE_V])))
    return np.array([1.0 / speed if c.startswith("vel") else 1.0 for c in active])


def initial_tf_guess(spec: TerminalSpec, params: RocketParams) -> float:
    """
    Final-time seed: the larger of the OCP0 time and the bang-bang time of the
    largest attitude change about a single axis.
    """
    try:
        t_ocp0 = solve_ocp0(
            spec.x0[SLICE_V],
            thrust_axis(spec.theta_f, spec.psi_f),
            params.a,
            params.g,
        ).t_f
    except RocketMinTimeError:
        t_ocp0 = 0.0
    gaps = np.abs(np.asarray(spec.targets[:3]) - spec.x0[SLICE_ANGLES])
    t_attitude = 2.0 * math.sqrt(float(np.max(gaps)) / params.b_bar)
    return max(1.0, 1.2 * max(t_ocp0, t_attitude))


def _solve_stage(
    lagrangian: _AugmentedLagrangian,
    z0: np.ndarray,
    cfg: DirectConfig,
) -> tuple[np.ndarray, float, int, bool]:
    tr = lagrangian.tr
    bounds = [(0.0, cfg.tf_max / lagrangian.t_ref)] + [(-1.0, 1.0)] * (
        2 * tr.n_segments
    )
    lagrangian.mu = cfg.penalty0
    z = z0.copy()
    previous = math.inf
    violation = math.inf
    for outer in range(1, cfg.max_outer + 1):
        res = minimize(
            lagrangian,
            z,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.inner_maxiter},
        )
        t_f, controls = split_decision(res.x, tr.n_segments)
        z = pack_decision(t_f, project_disk(controls))
        residuals, slack = lagrangian.violations(z)
        violation = max(
            float(np.max(np.abs(residuals))) if len(residuals) else 0.0,
            float(np.max(slack, initial=0.0)),
        )
        lagrangian.update_multipliers(residuals, slack)
        _LOGGER.debug(
            "[direct %d] outer %d: t_f=%.4f s, violation %.3e, mu=%.1e (%s)",
            len(tr.active),
            outer,
            t_f * lagrangian.t_ref,
            violation,
            lagrangian.mu,
            res.message,
        )
        if violation <= cfg.constraint_tol:
            return z, violation, outer, True
        if violation > _PENALTY_DECREASE * previous:
            lagrangian.mu *= cfg.penalty_growth
        previous = violation
    return z, violation, cfg.max_outer, False


def _reconstruct_costate(
    tr: Transcription,
    t_f: float,
    controls: np.ndarray,
    times: np.ndarray,
    states: np.ndarray,
    natural_multipliers: np.ndarray,
) -> np.ndarray:
    """
    Costate along the direct solution.

    p(t_f) is proportional to (dc/dx)^T times the terminal multipliers, scaled
    so that H(t_f) = 0 with p0 = -1, then p' = -(df/dx)^T p is integrated
    backwards on a cubic spline of the transcribed states.
    """
    p_f = tr.jacobian.T @ natural_multipliers
    xdot_f = rhs(states[-1], controls[-1], tr.params)
    power = float(p_f @ xdot_f)
    if abs(power) > 1e-14:
        p_f = p_f / power
    if t_f <= 0.0 or not np.any(p_f):
        return np.tile(p_f, (len(times), 1))
    spline = CubicSpline(times, states, axis=0)
    sol = solve_ivp(
        lambda t, p: -tr._vjp(spline(t), p),
        (t_f, 0.0),
        p_f,
        method="DOP853",
        t_eval=times[::-1],
        rtol=1e-10,
        atol=1e-12,
    )
    if not sol.success:
        _LOGGER.warning("[direct] costate reconstruction failed: %s", sol.message)
        return np.full((len(times), STATE_DIM), np.nan)
    return sol.y.T[::-1]


def _samples(
    tr: Transcription,
    t_f: float,
    controls: np.ndarray,
    multipliers: np.ndarray,
) -> TrajectorySamples:
    prop = tr.propagate(np.array([t_f]), controls[None])
    times, states = prop.times[:, 0], prop.states[:, 0]
    node_controls = np.repeat(controls, tr.substeps, axis=0)
    node_controls = np.vstack((node_controls, controls[-1:]))
    costates = _reconstruct_costate(tr, t_f, controls, times, states, multipliers)
    phi_norm = tr.params.b_bar * np.hypot(
        costates[:, IX_OMEGA_X], costates[:, IX_OMEGA_Y]
    )
    xdot = tr._rates(states, node_controls)
    hamiltonian = np.sum(costates * xdot, axis=1) - 1.0
    return TrajectorySamples(
        t=times,
        x=states,
        p=costates,
        u=node_controls,
        phi_norm=phi_norm,
        hamiltonian=hamiltonian,
    )


def solve_direct(
    spec: TerminalSpec,
    params: RocketParams,
    n_segments: int | None = None,
    stage_plan: Sequence[Sequence[TerminalConstraint]] = DEFAULT_STAGE_PLAN,
    cfg: DirectConfig | None = None,
) -> DirectResult:
    """
    Minimize t_f over piecewise-constant controls, adding terminal conditions
    stage by stage.

    Step 1 starts from the constant control `cfg.initial_control`; each later
    step is warm-started from the previous solution and its multipliers.
    """
    cfg = cfg or DirectConfig()
    n_segments = n_segments or cfg.n_segments
    if not stage_plan:
        raise InvalidInputError("Empty stage plan")
    t_ref = cfg.tf_guess or initial_tf_guess(spec, params)
    controls = np.tile(np.asarray(cfg.initial_control, dtype=float), (n_segments, 1))
    z = pack_decision(1.0, project_disk(controls))
    reports: list[DirectStageReport] = []
    multipliers: dict[TerminalConstraint, float] = {}
    converged = True
    lagrangian = None
    for active in stage_plan:
        tr = Transcription(spec, params, n_segments, active, cfg.substeps)
        lagrangian = _AugmentedLagrangian(
            tr, t_ref, _constraint_scales(tr.active, spec)
        )
        lagrangian.y = np.array([multipliers.get(c, 0.0) for c in tr.active])
        z, violation, outer, stage_ok = _solve_stage(lagrangian, z, cfg)
        multipliers = dict(zip(tr.active, lagrangian.y))
        t_f = float(z[0] * t_ref)
        reports.append(
            DirectStageReport(tr.active, t_f, violation, outer, stage_ok)
        )
        log = _LOGGER.info if stage_ok else _LOGGER.warning
        log(
            "[direct] step %d (%s): t_f=%.4f s, violation %.3e after %d outer",
            len(reports),
            ", ".join(tr.active),
            t_f,
            violation,
            outer,
        )
        converged = converged and stage_ok

    assert lagrangian is not None
    tr = lagrangian.tr
    t_f, controls = lagrangian.unpack(z)
    evaluation = tr.evaluate(pack_decision(t_f, controls))
    # natural-unit multipliers of the cost t_f: y_j * scale_j * t_ref
    natural = lagrangian.y * lagrangian.scales * t_ref
    samples = _samples(tr, t_f, controls, natural)
    message = "converged" if converged else "augmented Lagrangian stagnated"
    if evaluation.infeasible:
        converged = False
        message = f"Euler singularity reached at t={evaluation.violation_time:.3f} s"
    return DirectResult(
        spec=spec,
        params=params,
        t_f=t_f,
        controls=controls,
        samples=samples,
        constraint_violation=dict(
            zip(tr.active, map(float, evaluation.constraints))
        ),
        converged=converged,
        message=message,
        multipliers=natural,
        stages=reports,
    )


def find_singular_window(
    result: DirectResult | TrajectorySamples,
    norm_threshold: float = 0.5,
    min_duration: float = 0.0,
) -> SingularWindow | None:
    """
    Longest time interval where |u| stays below `norm_threshold`.

    Along it the singular distance is measured on the reconstructed costate,
    together with its value at t = 0 for reference.
    """
    samples = result.samples if isinstance(result, DirectResult) else result
    inside = np.linalg.norm(samples.u, axis=1) < norm_threshold
    best: tuple[int, int] | None = None
    start = None
    for index, flag in enumerate(np.append(inside, False)):
        if flag and start is None:
            start = index
        elif not flag and start is not None:
            end = index - 1
            if best is None or (
                samples.t[end] - samples.t[start]
                > samples.t[best[1]] - samples.t[best[0]]
            ):
                best = (start, end)
            start = None
    if best is None:
        return None
    first, last = best
    if samples.t[last] - samples.t[first] < min_duration:
        return None
    distances = [
        singular_distance(ExtremalPoint(x=samples.x[i], p=samples.p[i]))
        for i in range(first, last + 1)
    ]
    initial = singular_distance(ExtremalPoint(x=samples.x[0], p=samples.p[0]))
    return SingularWindow(
        t_start=float(samples.t[first]),
        t_end=float(samples.t[last]),
        max_control_norm=float(
            np.max(np.linalg.norm(samples.u[first : last + 1], axis=1))
        ),
        max_singular_distance=float(np.max(distances)),
        initial_singular_distance=initial,
    )
