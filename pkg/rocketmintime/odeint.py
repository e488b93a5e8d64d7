"""
Integration of the 16-dimensional extremal system.

The Dormand-Prince 8(5,3) pair of scipy is stepped manually so that step sizes
can be watched (step underflow near chattering) and every step's dense output
can be scanned for switching events. Events are local minima of |Phi| at which
the switching function passes (close to) the origin and the control direction
flips.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from rocketmintime.const import (
    ControlLaw,
    EPS_PHI,
    ExtremalPoint,
    IntegratorConfig,
    IX_OMEGA_X,
    IX_OMEGA_Y,
    RocketParams,
    STATE_DIM,
    UNRESOLVED_TOL,
)
from rocketmintime.exceptions import (
    ChatteringSuspectedError,
    InvalidInputError,
    OnSwitchingSurfaceError,
    SingularDenominatorError,
)
from rocketmintime.liealgebra import pairing, singular_distance
from rocketmintime.pmp import control_from_switching, hamiltonian, hamiltonian_system
from rocketmintime.utils import angle_between

_LOGGER = logging.getLogger(__name__)

_P_OMEGA_X = STATE_DIM + IX_OMEGA_X
_P_OMEGA_Y = STATE_DIM + IX_OMEGA_Y
_EVENT_MERGE_REL = 1e-8

# Fuller-type spiral exponents of order-4 points, keyed by the sign of {h1,b1}
CHATTERING_ALPHAS = {
    -1: (1370 / 391, -871 / 614),
    1: (578 / 1493, -5650 / 453),
}
CHATTERING_RATIO = 0.7
CHATTERING_MIN_GAPS = 4


@dataclass
class SwitchClassification:
    """Order of a point of the switching surface, with the quantities tested."""

    order: int | None
    a: tuple[float, float]
    alpha: tuple[float, float]
    b: tuple[float, float]
    c: float
    phi_norm: float
    on_surface: bool
    beta_minus: tuple[float, float] | None = None
    beta_plus: tuple[float, float] | None = None
    h0_b: tuple[float, float] = (0.0, 0.0)
    h1_b1: float = 0.0
    chattering_branch: bool = False
    alpha_candidates: tuple[float, float] | None = None
    r0: tuple[float, float] | None = None


@dataclass
class SwitchEvent:
    """Localized crossing of the switching surface."""

    t: float
    z: ExtremalPoint
    order: int | None
    control_jump: float
    phi_norm: float
    classification: SwitchClassification


@dataclass
class TrajectorySamples:
    """Samples (t, x, p, u, |Phi|, H) of an extremal, one row per time."""

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    u: np.ndarray
    phi_norm: np.ndarray
    hamiltonian: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def row(self, index: int) -> tuple[float, ...]:
        """Flat row in export column order."""
        return (
            float(self.t[index]),
            *map(float, self.x[index]),
            *map(float, self.p[index]),
            *map(float, self.u[index]),
            float(self.phi_norm[index]),
            float(self.hamiltonian[index]),
        )


SampleHook = Callable[[TrajectorySamples], None]


@dataclass
class ChatteringReport:
    """Result of the geometric accumulation test on switching times."""

    flagged: bool
    event_times: tuple[float, ...]
    ratios: tuple[float, ...] = ()
    t_accumulation: float | None = None
    singular_distance: float | None = None


@dataclass
class ExtremalTrajectory:
    """Dense extremal solution over [t0, t1] with its switching events."""

    solution: OdeSolution
    t0: float
    t1: float
    law: ControlLaw
    params: RocketParams
    p0: float
    step_times: np.ndarray
    forced_control: tuple[float, float] | None = None
    events: list[SwitchEvent] = field(default_factory=list)
    eps_phi: float = EPS_PHI

    @property
    def n_steps(self) -> int:
        return len(self.step_times) - 1

    def z(self, t: float) -> np.ndarray:
        """Packed (x, p) at time t."""
        return self.solution(t)

    def point(self, t: float) -> ExtremalPoint:
        return ExtremalPoint.from_vector(self.solution(t), self.p0)

    @property
    def final(self) -> ExtremalPoint:
        return self.point(self.t1)

    def control_at(self, z: np.ndarray) -> tuple[float, float]:
        """Control fed back along the trajectory at packed point z."""
        if self.forced_control is not None:
            return self.forced_control
        b_bar = self.params.b_bar
        return _safe_control(
            b_bar * z[_P_OMEGA_Y],
            -b_bar * z[_P_OMEGA_X],
            self.p0,
            self.law,
            self.eps_phi,
        )

    def sample(self, times: Sequence[float] | np.ndarray) -> TrajectorySamples:
        """Evaluate the trajectory and its feedback quantities at given times."""
        times = np.clip(np.asarray(times, dtype=float), self.t0, self.t1)
        zs = np.atleast_2d(self.solution(times).T) if len(times) else np.zeros((0, 16))
        controls = np.array([self.control_at(z) for z in zs]).reshape(-1, 2)
        b_bar = self.params.b_bar
        phi_norm = b_bar * np.hypot(zs[:, _P_OMEGA_X], zs[:, _P_OMEGA_Y])
        ham = np.array(
            [
                hamiltonian(
                    ExtremalPoint.from_vector(z, self.p0), u, self.params, self.law
                )
                for z, u in zip(zs, controls)
            ]
        )
        return TrajectorySamples(
            t=times,
            x=zs[:, :STATE_DIM],
            p=zs[:, STATE_DIM:],
            u=controls,
            phi_norm=phi_norm,
            hamiltonian=ham,
        )

    def sample_grid(self, cadence: float, include_events: bool = True) -> np.ndarray:
        """Uniform grid at `cadence`, with the final time and event times merged in."""
        assert cadence > 0, cadence
        n = max(1, int(math.ceil((self.t1 - self.t0) / cadence)))
        grid = np.linspace(self.t0, self.t1, n + 1)
        if include_events and self.events:
            event_times = np.array([event.t for event in self.events])
            # one row per event, not a near-duplicate pair
            gap = _EVENT_MERGE_REL * max(abs(self.t1), 1.0)
            distance = np.min(np.abs(grid[:, None] - event_times[None, :]), axis=1)
            grid = np.union1d(grid[distance > gap], event_times)
        return grid

    @property
    def switch_times(self) -> list[float]:
        return [event.t for event in self.events]

    def max_abs_hamiltonian(self, n_points: int = 2001) -> float:
        """Sup of |H| over a uniform grid plus the integrator steps."""
        times = np.union1d(np.linspace(self.t0, self.t1, n_points), self.step_times)
        return float(np.max(np.abs(self.sample(times).hamiltonian)))


def _safe_control(
    h1: float, h2: float, p0: float, law: ControlLaw, eps_phi: float
) -> tuple[float, float]:
    try:
        return control_from_switching(h1, h2, p0, law, eps_phi)
    except (OnSwitchingSurfaceError, SingularDenominatorError):
        # measure-zero crossing of the switching surface
        return 0.0, 0.0


def _phi_slope(z: np.ndarray, params: RocketParams) -> float:
    """Sign-carrying derivative <p_omega, p_omega'> of |Phi|²/(2 b_bar²)."""
    zdot = hamiltonian_system(z, (0.0, 0.0), params)
    return float(
        z[_P_OMEGA_X] * zdot[_P_OMEGA_X] + z[_P_OMEGA_Y] * zdot[_P_OMEGA_Y]
    )


def integrate_extremal(
    z0: ExtremalPoint,
    law: ControlLaw,
    params: RocketParams,
    cfg: IntegratorConfig | None = None,
    t_span: tuple[float, float] = (0.0, 1.0),
    *,
    forced_control: tuple[float, float] | None = None,
    detect_events: bool = True,
    output_cadence: float | None = None,
    sample_hook: SampleHook | None = None,
) -> ExtremalTrajectory:
    """
    Integrate (x' = f + u·g, p' = -dH/dx) with u fed back from `law`.

    The control is evaluated at every Runge-Kutta stage. When `forced_control`
    is given it replaces the feedback law (used to follow singular arcs).
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise InvalidInputError(f"Integration needs t1 > t0, got {t_span}")
    p0 = z0.p0
    b_bar = params.b_bar

    def fun(_t: float, z: np.ndarray) -> np.ndarray:
        if forced_control is not None:
            u = forced_control
        else:
            u = _safe_control(
                b_bar * z[_P_OMEGA_Y], -b_bar * z[_P_OMEGA_X], p0, law, cfg.eps_phi
            )
        return hamiltonian_system(z, u, params)

    solver = DOP853(fun, t0, z0.z, t1, rtol=cfg.rel_tol, atol=cfg.abs_tol)
    step_times = [t0]
    interpolants = []
    candidates: list[float] = []
    slope_old = _phi_slope(z0.z, params) if detect_events else 0.0
    max_phi = b_bar * math.hypot(z0.p[IX_OMEGA_X], z0.p[IX_OMEGA_Y])
    n_steps = 0
    while solver.status == "running":
        message = solver.step()
        n_steps += 1
        if solver.status == "failed":
            raise _underflow_error(message or "step failed", solver.t, candidates)
        if solver.status == "running" and (
            solver.step_size < cfg.min_step or n_steps >= cfg.max_steps
        ):
            raise _underflow_error(
                f"step {solver.step_size:.2e} s after {n_steps} steps",
                solver.t,
                candidates,
            )
        dense = solver.dense_output()
        interpolants.append(dense)
        step_times.append(solver.t)
        z_new = solver.y
        max_phi = max(max_phi, b_bar * math.hypot(z_new[_P_OMEGA_X], z_new[_P_OMEGA_Y]))
        if detect_events:
            slope_new = _phi_slope(z_new, params)
            if slope_old < 0.0 <= slope_new:
                candidates.append(
                    brentq(
                        lambda t, sol=dense: _phi_slope(sol(t), params),
                        solver.t_old,
                        solver.t,
                        xtol=cfg.event_tol,
                    )
                )
            slope_old = slope_new

    trajectory = ExtremalTrajectory(
        solution=OdeSolution(step_times, interpolants),
        t0=t0,
        t1=t1,
        law=law,
        params=params,
        p0=p0,
        step_times=np.asarray(step_times),
        forced_control=forced_control,
        eps_phi=cfg.eps_phi,
    )
    if detect_events and candidates:
        threshold = max(cfg.eps_phi, cfg.switch_rel_tol * max_phi)
        trajectory.events = _accept_events(trajectory, candidates, threshold, cfg)
    _LOGGER.debug(
        "[odeint] %d steps on [%.3f, %.3f], %d switching events",
        n_steps,
        t0,
        t1,
        len(trajectory.events),
    )
    if sample_hook is not None:
        sample_hook(trajectory.sample(trajectory.sample_grid(output_cadence or 0.1)))
    return trajectory


def _underflow_error(
    message: str, t_failure: float, candidates: Sequence[float]
) -> ChatteringSuspectedError:
    report = detect_chattering(candidates)
    t_accumulation = report.t_accumulation if report.flagged else t_failure
    return ChatteringSuspectedError(
        f"Integration stalled at t={t_failure:.6f} s: {message}",
        t_failure=t_failure,
        t_accumulation=t_accumulation if t_accumulation is not None else t_failure,
    )


def _phi_direction(z: np.ndarray) -> np.ndarray:
    return np.array([z[_P_OMEGA_Y], -z[_P_OMEGA_X]])


def _accept_events(
    trajectory: ExtremalTrajectory,
    candidates: Sequence[float],
    threshold: float,
    cfg: IntegratorConfig,
) -> list[SwitchEvent]:
    params = trajectory.params
    events = []
    for t_event in candidates:
        z_event = trajectory.z(t_event)
        phi_norm = params.b_bar * math.hypot(
            z_event[_P_OMEGA_X], z_event[_P_OMEGA_Y]
        )
        if phi_norm > threshold:
            continue
        t_before = max(trajectory.t0, t_event - cfg.jump_probe)
        t_after = min(trajectory.t1, t_event + cfg.jump_probe)
        z_before, z_after = trajectory.z(t_before), trajectory.z(t_after)
        turn = angle_between(_phi_direction(z_before), _phi_direction(z_after))
        if turn <= math.pi / 2:
            continue
        point = ExtremalPoint.from_vector(z_event, trajectory.p0)
        classification = classify_switch(point, params, eps_phi=threshold)
        jump = angle_between(
            np.array(trajectory.control_at(z_before)),
            np.array(trajectory.control_at(z_after)),
        )
        events.append(
            SwitchEvent(
                t=float(t_event),
                z=point,
                order=classification.order,
                control_jump=jump,
                phi_norm=phi_norm,
                classification=classification,
            )
        )
        _LOGGER.debug(
            "[odeint] switch at t=%.4f s, order %s, |Phi|=%.2e, jump=%.3f rad",
            t_event,
            classification.order,
            phi_norm,
            jump,
        )
    return events


def _nonzero(values: Sequence[float]) -> bool:
    return max(abs(v) for v in values) >= UNRESOLVED_TOL


def classify_switch(
    z: ExtremalPoint, params: RocketParams, eps_phi: float = EPS_PHI
) -> SwitchClassification:
    """
    Order of contact of the extremal with the switching surface at z.

    Order 1 when ({h0,h1}, {h0,h2}) is nonzero, order 2 from the second
    brackets, order 3 from ad³h0.h_i (with the one-sided limits beta-/+ of the
    control), order 4 otherwise. With c = {h2, ad²h0.h1} = 0 the order-4 point
    is on the chattering branch, with the spiral exponents given by the sign
    of {h1, b1}.
    """
    b_bar = params.b_bar
    phi_norm = b_bar * math.hypot(z.p[IX_OMEGA_X], z.p[IX_OMEGA_Y])
    a = (b_bar * pairing("adf_g1", z, params), -b_bar * pairing("adf_g2", z, params))
    alpha = (
        b_bar * pairing("ad2f_g1", z, params),
        -b_bar * pairing("ad2f_g2", z, params),
    )
    b = (
        b_bar * pairing("ad3f_g1", z, params),
        -b_bar * pairing("ad3f_g2", z, params),
    )
    c = -(b_bar**2) * pairing("g2_ad2f_g1", z, params)
    report = SwitchClassification(
        order=None,
        a=a,
        alpha=alpha,
        b=b,
        c=c,
        phi_norm=phi_norm,
        on_surface=phi_norm <= eps_phi,
    )
    if _nonzero(a):
        report.order = 1
    elif _nonzero(alpha):
        report.order = 2
    elif _nonzero(b):
        report.order = 3
        report.beta_minus, report.beta_plus = _order3_limits(b, c)
    else:
        _classify_order4(report, z, params)
    return report


def _order3_limits(
    b: tuple[float, float], c: float
) -> tuple[tuple[float, float] | None, tuple[float, float] | None]:
    b1, b2 = b
    d_squared = -(c**2) + b1**2 + b2**2
    if d_squared < 0:
        return None, None
    d = math.sqrt(d_squared)
    norm = b1**2 + b2**2
    e12 = -b1 * c**2 + b1 * b2**2 + b1**3
    e21 = -b2 * c**2 + b2 * b1**2 + b2**3
    # (-1)^j with j = 2 for i = 1, and j = 1 for i = 2
    beta_minus = ((-b2 * c * d + e12) / norm, (b1 * c * d + e21) / norm)
    beta_plus = ((b2 * c * d + e12) / norm, (-b1 * c * d + e21) / norm)
    return beta_minus, beta_plus


def _classify_order4(
    report: SwitchClassification, z: ExtremalPoint, params: RocketParams
) -> None:
    b_bar = params.b_bar
    report.h0_b = (
        b_bar * pairing("ad4f_g1", z, params),
        -b_bar * pairing("ad4f_g2", z, params),
    )
    report.h1_b1 = b_bar**2 * pairing("g1_ad3f_g1", z, params)
    if abs(report.c) >= UNRESOLVED_TOL:
        report.order = 4
        return
    if abs(report.h1_b1) < UNRESOLVED_TOL:
        return
    report.order = 4
    report.chattering_branch = True
    alphas = CHATTERING_ALPHAS[1 if report.h1_b1 > 0 else -1]
    report.alpha_candidates = alphas
    r0 = [report.h1_b1 / (al**4 - 35.0 * al**2 + 24.0) for al in alphas]
    report.r0 = (r0[0], r0[1])


def _sampled_jump(controls: np.ndarray, index: int) -> float:
    """Angle between the nearest nonzero controls before and after a row."""
    active = np.linalg.norm(controls, axis=1) > 0.0
    before = np.flatnonzero(active[:index])
    after = np.flatnonzero(active[index + 1 :])
    if not len(before) or not len(after):
        return 0.0
    return angle_between(controls[before[-1]], controls[index + 1 + after[0]])


def events_from_samples(
    samples: TrajectorySamples,
    params: RocketParams,
    switch_rel_tol: float = 1e-2,
    eps_phi: float = EPS_PHI,
) -> list[SwitchEvent]:
    """
    Switching events of a sampled extremal (e.g. a re-read trajectory.csv).

    A sample is an event when |Phi| has a local minimum there, below the
    acceptance threshold, and the direction of Phi turns by more than pi/2
    between its two neighbours. Exported trajectories carry a row at every
    event time, so the integrator's event list is recovered.
    """
    phi = np.asarray(samples.phi_norm, dtype=float)
    if len(phi) < 3:
        return []
    threshold = max(eps_phi, switch_rel_tol * float(np.max(phi)))
    b_bar = params.b_bar
    directions = b_bar * np.column_stack(
        (samples.p[:, IX_OMEGA_Y], -samples.p[:, IX_OMEGA_X])
    )
    events = []
    for index in range(1, len(phi) - 1):
        if not (phi[index] <= phi[index - 1] and phi[index] <= phi[index + 1]):
            continue
        if phi[index] > threshold:
            continue
        if angle_between(directions[index - 1], directions[index + 1]) <= math.pi / 2:
            continue
        point = ExtremalPoint(x=samples.x[index], p=samples.p[index])
        classification = classify_switch(point, params, eps_phi=threshold)
        events.append(
            SwitchEvent(
                t=float(samples.t[index]),
                z=point,
                order=classification.order,
                control_jump=_sampled_jump(samples.u, index),
                phi_norm=float(phi[index]),
                classification=classification,
            )
        )
    return events


def detect_chattering(
    traj: ExtremalTrajectory | Sequence[float],
) -> ChatteringReport:
    """
    Geometric accumulation test on switching times.

    Flags 4 or more consecutive inter-event gaps each shorter than 0.7 times
    the previous one, and extrapolates the accumulation time from the last
    ratio.
    """
    if isinstance(traj, ExtremalTrajectory):
        times = tuple(traj.switch_times)
    else:
        times = tuple(float(t) for t in traj)
    gaps = np.diff(times)
    if len(gaps) <= CHATTERING_MIN_GAPS or np.any(gaps <= 0):
        return ChatteringReport(flagged=False, event_times=times)

    ratios = gaps[1:] / gaps[:-1]
    streak, best_end, best_len = 0, -1, 0
    for index, ratio in enumerate(ratios):
        streak = streak + 1 if ratio < CHATTERING_RATIO else 0
        if streak >= best_len:
            best_len, best_end = streak, index
    # each ratio compares a gap with the previous one
    if best_len < CHATTERING_MIN_GAPS:
        return ChatteringReport(
            flagged=False, event_times=times, ratios=tuple(map(float, ratios))
        )

    ratio = float(ratios[best_end])
    last_gap = float(gaps[best_end + 1])
    t_last = times[best_end + 2]
    t_accumulation = t_last + last_gap * ratio / (1.0 - ratio)
    distance = None
    if isinstance(traj, ExtremalTrajectory):
        t_probe = min(max(t_accumulation, traj.t0), traj.t1)
        distance = singular_distance(traj.point(t_probe))
    return ChatteringReport(
        flagged=True,
        event_times=times,
        ratios=tuple(map(float, ratios)),
        t_accumulation=t_accumulation,
        singular_distance=distance,
    )
