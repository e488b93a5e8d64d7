"""
The plant: bi-input control-affine system x' = f(x) + u1 g1 + u2 g2.

State layout is (v_x, v_y, v_z, theta, psi, phi, omega_x, omega_y), with
omega_z = 0 built into the model. `field_f` and `rhs` accept stacked states
(shape (..., 8)) so the direct transcription can propagate batches.
"""

from __future__ import annotations

import math

import numpy as np

from rocketmintime.const import (
    IX_OMEGA_X,
    IX_OMEGA_Y,
    IX_PHI,
    IX_PSI,
    IX_THETA,
    IX_VX,
    IX_VY,
    IX_VZ,
    RocketParams,
    STATE_DIM,
    TerminalSpec,
    VEHICLE_LENGTH,
    VEHICLE_MASS,
    VEHICLE_MU_MAX,
    VEHICLE_RADIUS,
    VEHICLE_THRUST_ATTITUDE,
)
from rocketmintime.exceptions import InvalidInputError
from rocketmintime.frames import check_euler_singularity


def default_params() -> RocketParams:
    """Rocket parameters of the reference launcher: a=12, b_bar=0.02, g=(-9.8,0,0)."""
    return RocketParams()


def params_from_vehicle(
    mass: float = VEHICLE_MASS,
    length: float = VEHICLE_LENGTH,
    radius: float = VEHICLE_RADIUS,
    thrust_attitude: float = VEHICLE_THRUST_ATTITUDE,
    mu_max: float = VEHICLE_MU_MAX,
    thrust_total: float | None = None,
) -> RocketParams:
    """
    Rebuild the parameter set from vehicle data.

    The rocket is modelled as a homogeneous cylinder, I_x = m (3 r² + l²) / 12,
    and the torque gain is b_bar = T_att l / (2 I_x) mu_max. Without a total
    thrust the reference acceleration a = 12 is kept.
    """
    if min(mass, length, radius, thrust_attitude, mu_max) <= 0:
        raise InvalidInputError("Vehicle data must be positive")
    inertia_x = mass * (3.0 * radius**2 + length**2) / 12.0
    b_bar = thrust_attitude * length / (2.0 * inertia_x) * mu_max
    if thrust_total is None:
        return RocketParams(b_bar=b_bar)
    return RocketParams(a=thrust_total / mass, b_bar=b_bar)


def field_f(x: np.ndarray, params: RocketParams) -> np.ndarray:
    """Drift vector field f(x)."""
    x = np.asarray(x, dtype=float)
    theta, psi, phi = x[..., IX_THETA], x[..., IX_PSI], x[..., IX_PHI]
    omega_x, omega_y = x[..., IX_OMEGA_X], x[..., IX_OMEGA_Y]
    check_euler_singularity(psi)

    cp = np.cos(psi)
    sf, cf = np.sin(phi), np.cos(phi)
    omega_2 = omega_x * sf + omega_y * cf
    zero = np.zeros_like(theta)
    gx, gy, gz = params.gravity
    return np.stack(
        (
            params.a * np.sin(theta) * cp + gx,
            -params.a * np.sin(psi) + gy,
            params.a * np.cos(theta) * cp + gz,
            omega_2 / cp,
            omega_x * cf - omega_y * sf,
            np.tan(psi) * omega_2,
            zero,
            zero,
        ),
        axis=-1,
    )


def drift_vjp(x: np.ndarray, lam: np.ndarray, params: RocketParams) -> np.ndarray:
    """
    Vector-Jacobian product (df/dx)^T lam, stacked like `field_f`.

    Along extremals this is -p' for lam = p.
    """
    x, lam = np.asarray(x, dtype=float), np.asarray(lam, dtype=float)
    theta, psi, phi = x[..., IX_THETA], x[..., IX_PSI], x[..., IX_PHI]
    omega_x, omega_y = x[..., IX_OMEGA_X], x[..., IX_OMEGA_Y]
    check_euler_singularity(psi)
    l_vx, l_vy, l_vz = lam[..., IX_VX], lam[..., IX_VY], lam[..., IX_VZ]
    l_theta, l_psi, l_phi = lam[..., IX_THETA], lam[..., IX_PSI], lam[..., IX_PHI]

    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(psi), np.cos(psi)
    sf, cf = np.sin(phi), np.cos(phi)
    tp = sp / cp
    omega_1 = omega_x * cf - omega_y * sf
    omega_2 = omega_x * sf + omega_y * cf
    zero = np.zeros_like(theta)
    a = params.a
    return np.stack(
        (
            zero,
            zero,
            zero,
            a * cp * (l_vx * ct - l_vz * st),
            -a * (l_vx * st * sp + l_vy * cp + l_vz * ct * sp)
            + (l_theta * sp + l_phi) * omega_2 / cp**2,
            l_theta * omega_1 / cp - l_psi * omega_2 + l_phi * tp * omega_1,
            l_theta * sf / cp + l_psi * cf + l_phi * tp * sf,
            l_theta * cf / cp - l_psi * sf + l_phi * tp * cf,
        ),
        axis=-1,
    )


def field_g1(params: RocketParams) -> np.ndarray:
    """Constant control field g1 = b_bar d/d(omega_y)."""
    g1 = np.zeros(STATE_DIM)
    g1[IX_OMEGA_Y] = params.b_bar
    return g1


def field_g2(params: RocketParams) -> np.ndarray:
    """Constant control field g2 = -b_bar d/d(omega_x)."""
    g2 = np.zeros(STATE_DIM)
    g2[IX_OMEGA_X] = -params.b_bar
    return g2


def rhs(x: np.ndarray, u: np.ndarray, params: RocketParams) -> np.ndarray:
    """Right-hand side f(x) + u1 g1 + u2 g2 (u may be stacked as (..., 2))."""
    u = np.asarray(u, dtype=float)
    xdot = field_f(x, params)
    xdot[..., IX_OMEGA_X] -= params.b_bar * u[..., 1]
    xdot[..., IX_OMEGA_Y] += params.b_bar * u[..., 0]
    return xdot


def control_is_admissible(
    u: np.ndarray, mode: str = "disk", tol: float = 1e-12
) -> bool:
    """Check the disk (min-time) or box (regularized) control constraint."""
    u = np.asarray(u, dtype=float)
    if mode == "disk":
        return bool(np.all(np.sum(u**2, axis=-1) <= 1.0 + tol))
    if mode == "box":
        return bool(np.all(np.abs(u) <= 1.0 + tol))
    raise InvalidInputError(f"Unknown control bound mode '{mode}'")


def velocity_from_flightpath(v: float, theta_v: float, psi_v: float) -> np.ndarray:
    """Velocity vector from modulus and flight-path angles."""
    if not v >= 0:
        raise InvalidInputError(f"Velocity modulus must be non-negative, got {v}")
    cp = math.cos(psi_v)
    return np.array(
        [v * math.sin(theta_v) * cp, -v * math.sin(psi_v), v * math.cos(theta_v) * cp]
    )


def terminal_residuals(x: np.ndarray, spec: TerminalSpec) -> np.ndarray:
    """
    Residuals of the target set M1 (zero vector iff x belongs to it).

    Components: velocity-yaw and velocity-pitch alignment with the final body
    axis, then the five attitude targets. Stacked states give stacked residuals.
    """
    x = np.asarray(x, dtype=float)
    st, ct = math.sin(spec.theta_f), math.cos(spec.theta_f)
    sp, cp = math.sin(spec.psi_f), math.cos(spec.psi_f)
    return np.stack(
        (
            x[..., IX_VZ] * sp + x[..., IX_VY] * ct * cp,
            x[..., IX_VZ] * st - x[..., IX_VX] * ct,
            x[..., IX_THETA] - spec.theta_f,
            x[..., IX_PSI] - spec.psi_f,
            x[..., IX_PHI] - spec.phi_f,
            x[..., IX_OMEGA_X] - spec.omega_xf,
            x[..., IX_OMEGA_Y] - spec.omega_yf,
        ),
        axis=-1,
    )


def terminal_jacobian(spec: TerminalSpec) -> np.ndarray:
    """Constant 7x8 Jacobian of `terminal_residuals` with respect to the state."""
    st, ct = math.sin(spec.theta_f), math.cos(spec.theta_f)
    sp, cp = math.sin(spec.psi_f), math.cos(spec.psi_f)
    jac = np.zeros((7, STATE_DIM))
    jac[0, IX_VY] = ct * cp
    jac[0, IX_VZ] = sp
    jac[1, IX_VX] = -ct
    jac[1, IX_VZ] = st
    for row, col in enumerate((IX_THETA, IX_PSI, IX_PHI, IX_OMEGA_X, IX_OMEGA_Y), 2):
        jac[row, col] = 1.0
    return jac
