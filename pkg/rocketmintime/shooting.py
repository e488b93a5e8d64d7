"""
Shooting residuals of the three homotopy stages.

Stage 1 moves the initial attitude from the OCP0 solution to the true one
(free final attitude, zero final attitude costates). Stage 2 moves the final
attitude from the stage-1 endpoint to the targets. Stage 3 deforms the
regularized control law into the min-time one. Every residual is one
integration of the extremal system from the unknown initial costate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from rocketmintime.const import (
    ControlLaw,
    DEFAULT_P0,
    ExtremalPoint,
    IntegratorConfig,
    IX_OMEGA_X,
    IX_OMEGA_Y,
    IX_PHI,
    IX_PSI,
    IX_THETA,
    RocketParams,
    SLICE_ANGLES,
    SLICE_OMEGA,
    Stage,
    TerminalSpec,
    TF_SCALE,
)
from rocketmintime.dynamics import terminal_residuals
from rocketmintime.exceptions import (
    DegenerateTargetError,
    EulerSingularityError,
    IntegrationError,
    NumericError,
    ShootingError,
)
from rocketmintime.ocp0 import Ocp0Solution
from rocketmintime.odeint import ExtremalTrajectory, integrate_extremal
from rocketmintime.pmp import (
    eliminate_pvy,
    hamiltonian,
    transversality_residual,
)

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShootingUnknowns:
    """
    Unknowns of the shooting problem.

    p_vy is eliminated through transversality unless the target has psi_f = 0,
    where it is carried as a ninth unknown.
    """

    p_vx: float
    p_vz: float
    p_theta0: float
    p_psi0: float
    p_phi0: float
    p_omega_x0: float
    p_omega_y0: float
    t_f: float
    p_vy: float | None = None

    @property
    def carries_pvy(self) -> bool:
        return self.p_vy is not None

    def to_vector(self, tf_scale: float = TF_SCALE) -> np.ndarray:
        """Solver vector, with t_f in units of `tf_scale` seconds."""
        values = [
            self.p_vx,
            self.p_vz,
            self.p_theta0,
            self.p_psi0,
            self.p_phi0,
            self.p_omega_x0,
            self.p_omega_y0,
            self.t_f / tf_scale,
        ]
        if self.p_vy is not None:
            values.append(self.p_vy)
        return np.array(values, dtype=float)

    @classmethod
    def from_vector(
        cls, vector: np.ndarray, tf_scale: float = TF_SCALE
    ) -> ShootingUnknowns:
        values = [float(v) for v in vector]
        assert len(values) in (8, 9), len(values)
        p_vy = values[8] if len(values) == 9 else None
        return cls(*values[:7], t_f=values[7] * tf_scale, p_vy=p_vy)

    def as_dict(self) -> dict[str, float | None]:
        return {item.name: getattr(self, item.name) for item in fields(self)}


@dataclass(frozen=True)
class EndpointValues:
    """Free final attitude recorded at the end of stage 1."""

    theta: float
    psi: float
    phi: float
    omega_x: float
    omega_y: float

    @classmethod
    def from_state(cls, x: np.ndarray) -> EndpointValues:
        return cls(
            theta=float(x[IX_THETA]),
            psi=float(x[IX_PSI]),
            phi=float(x[IX_PHI]),
            omega_x=float(x[IX_OMEGA_X]),
            omega_y=float(x[IX_OMEGA_Y]),
        )

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return self.theta, self.psi, self.phi, self.omega_x, self.omega_y


@dataclass(frozen=True)
class StageContext:
    """Where a residual is evaluated along the homotopy chain."""

    stage: Stage
    lam: float
    gamma: float
    spec: TerminalSpec
    sol0: Ocp0Solution | None = None
    endpoint: EndpointValues | None = None

    def __post_init__(self):
        assert 0.0 <= self.lam <= 1.0, self.lam
        assert self.gamma > 0, self.gamma
        if self.stage == 1:
            assert self.sol0 is not None, "stage 1 needs the OCP0 solution"
        else:
            assert self.endpoint is not None, "stages 2-3 need the stage-1 endpoint"

    def at(self, lam: float) -> StageContext:
        return replace(self, lam=lam)

    @property
    def law(self) -> ControlLaw:
        if self.stage == 3:
            return ControlLaw.blended(self.gamma, self.lam)
        return ControlLaw.regularized(self.gamma)

    @property
    def attitude_targets(self) -> np.ndarray:
        """Final attitude (theta, psi, phi, omega_x, omega_y) aimed at."""
        targets = np.asarray(self.spec.targets)
        if self.stage == 1:
            return targets
        lam = 1.0 if self.stage == 3 else self.lam
        return (1.0 - lam) * np.asarray(self.endpoint.as_tuple()) + lam * targets


def pvy_is_eliminable(spec: TerminalSpec) -> bool:
    try:
        eliminate_pvy(0.0, 0.0, spec)
    except DegenerateTargetError:
        return False
    return True


def initial_state_lambda1(
    lambda1: float, sol0: Ocp0Solution, spec: TerminalSpec
) -> np.ndarray:
    """Initial state of stage 1: attitude blended from (theta*, psi*, 0, 0, 0)."""
    assert 0.0 <= lambda1 <= 1.0, lambda1
    x0 = spec.x0
    start = np.array([sol0.theta_star, sol0.psi_star, 0.0, 0.0, 0.0])
    x = x0.copy()
    attitude = np.r_[SLICE_ANGLES, SLICE_OMEGA]
    x[attitude] = (1.0 - lambda1) * start + lambda1 * x0[attitude]
    return x


def unknowns_from_ocp0(
    sol0: Ocp0Solution, spec: TerminalSpec
) -> ShootingUnknowns:
    """Seed of stage 1: the OCP0 costate with zero attitude costates."""
    p_vy = None if pvy_is_eliminable(spec) else float(sol0.p_v[1])
    return ShootingUnknowns(
        p_vx=float(sol0.p_v[0]),
        p_vz=float(sol0.p_v[2]),
        p_theta0=0.0,
        p_psi0=0.0,
        p_phi0=0.0,
        p_omega_x0=0.0,
        p_omega_y0=0.0,
        t_f=sol0.t_f,
        p_vy=p_vy,
    )


def initial_point(
    unknowns: ShootingUnknowns, ctx: StageContext, p0: float = DEFAULT_P0
) -> ExtremalPoint:
    """Full initial extremal point (x(0), p(0)) built from the unknowns."""
    if ctx.stage == 1:
        x = initial_state_lambda1(ctx.lam, ctx.sol0, ctx.spec)
    else:
        x = ctx.spec.x0
    if unknowns.p_vy is None:
        p_vy = eliminate_pvy(unknowns.p_vx, unknowns.p_vz, ctx.spec)
    else:
        p_vy = unknowns.p_vy
    p = np.array(
        [
            unknowns.p_vx,
            p_vy,
            unknowns.p_vz,
            unknowns.p_theta0,
            unknowns.p_psi0,
            unknowns.p_phi0,
            unknowns.p_omega_x0,
            unknowns.p_omega_y0,
        ]
    )
    return ExtremalPoint(x=x, p=p, p0=p0)


def integrate_unknowns(
    unknowns: ShootingUnknowns,
    ctx: StageContext,
    params: RocketParams,
    cfg: IntegratorConfig | None = None,
    *,
    detect_events: bool = False,
    law: ControlLaw | None = None,
) -> ExtremalTrajectory:
    """Integrate the extremal issued from the unknowns, tagging failures."""
    if not unknowns.t_f > 0 or not math.isfinite(unknowns.t_f):
        raise ShootingError(
            f"Final time must be positive, got {unknowns.t_f}", ctx.stage, ctx.lam
        )
    try:
        return integrate_extremal(
            initial_point(unknowns, ctx),
            law or ctx.law,
            params,
            cfg,
            (0.0, unknowns.t_f),
            detect_events=detect_events,
        )
    except (IntegrationError, EulerSingularityError, NumericError) as exc:
        _LOGGER.debug(
            "[stage %d λ=%.4f] integration failed: %s", ctx.stage, ctx.lam, exc
        )
        raise ShootingError(str(exc), ctx.stage, ctx.lam) from exc


def _final_hamiltonian(traj: ExtremalTrajectory) -> float:
    z_f = traj.final
    u = np.array(traj.control_at(z_f.z))
    return hamiltonian(z_f, u, traj.params, traj.law)


def _velocity_conditions(z_f: ExtremalPoint, spec: TerminalSpec) -> np.ndarray:
    return terminal_residuals(z_f.x, spec)[:2]


def _with_transversality(
    residual: np.ndarray,
    unknowns: ShootingUnknowns,
    z_f: ExtremalPoint,
    spec: TerminalSpec,
) -> np.ndarray:
    if unknowns.p_vy is None:
        return residual
    return np.append(residual, transversality_residual(z_f, spec))


def residual_s1(
    unknowns: ShootingUnknowns,
    ctx: StageContext,
    params: RocketParams,
    cfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """
    Stage-1 residual: free final attitude.

    (p_omega_x, p_omega_y, p_theta, p_psi, p_phi, H_gamma, vel_yaw, vel_pitch)
    at t_f.
    """
    assert ctx.stage == 1, ctx.stage
    traj = integrate_unknowns(unknowns, ctx, params, cfg)
    z_f = traj.final
    residual = np.concatenate(
        (
            z_f.p[SLICE_OMEGA],
            z_f.p[SLICE_ANGLES],
            [_final_hamiltonian(traj)],
            _velocity_conditions(z_f, ctx.spec),
        )
    )
    return _with_transversality(residual, unknowns, z_f, ctx.spec)


def _fixed_attitude_residual(
    unknowns: ShootingUnknowns,
    ctx: StageContext,
    params: RocketParams,
    cfg: IntegratorConfig | None,
) -> np.ndarray:
    traj = integrate_unknowns(unknowns, ctx, params, cfg)
    z_f = traj.final
    attitude = np.concatenate((z_f.x[SLICE_OMEGA], z_f.x[SLICE_ANGLES]))
    targets = ctx.attitude_targets
    # targets are ordered (theta, psi, phi, omega_x, omega_y)
    target_order = np.concatenate((targets[3:], targets[:3]))
    residual = np.concatenate(
        (
            attitude - target_order,
            [_final_hamiltonian(traj)],
            _velocity_conditions(z_f, ctx.spec),
        )
    )
    return _with_transversality(residual, unknowns, z_f, ctx.spec)


def residual_s2(
    unknowns: ShootingUnknowns,
    ctx: StageContext,
    params: RocketParams,
    cfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """
    Stage-2 residual: final attitude moved from the stage-1 endpoint.

    Components follow the stage-1 layout with the attitude costates replaced by
    (omega_x, omega_y, theta, psi, phi) minus their lambda2-blended targets.
    """
    assert ctx.stage == 2, ctx.stage
    return _fixed_attitude_residual(unknowns, ctx, params, cfg)


def residual_s3(
    unknowns: ShootingUnknowns,
    ctx: StageContext,
    params: RocketParams,
    cfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """Stage-3 residual: stage-2 layout at the targets, blended control law."""
    assert ctx.stage == 3, ctx.stage
    return _fixed_attitude_residual(unknowns, ctx, params, cfg)


_RESIDUALS = {1: residual_s1, 2: residual_s2, 3: residual_s3}


def shooting_residual(
    unknowns: ShootingUnknowns,
    ctx: StageContext,
    params: RocketParams,
    cfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """Residual of the stage named in `ctx`."""
    return _RESIDUALS[ctx.stage](unknowns, ctx, params, cfg)

