"""
Hamiltonian machinery of the maximum principle.

H = h0 + u1 h1 + u2 h2 + p0 (+ p0 gamma |u|² (1 - lambda3) when regularized),
with h0 = <p, f>, h_i = <p, g_i> and the switching function Phi = (h1, h2).
The costate p0 is fixed to -1 along the indirect pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rocketmintime.const import (
    ControlLaw,
    DENOMINATOR_TOL,
    EPS_PHI,
    ExtremalPoint,
    IX_OMEGA_X,
    IX_OMEGA_Y,
    RocketParams,
    SLICE_V,
    STATE_DIM,
    TerminalSpec,
)
from rocketmintime.exceptions import (
    DegenerateTargetError,
    OnSwitchingSurfaceError,
    SingularDenominatorError,
)
from rocketmintime.frames import check_euler_singularity, thrust_axis
from rocketmintime.liealgebra import glcc_margin, pairing
from rocketmintime.utils import sat

_MIN_SIN_PSI_F = 1e-12


def switching_fn(z: ExtremalPoint, params: RocketParams) -> np.ndarray:
    """Phi = (h1, h2) = (b_bar p_omega_y, -b_bar p_omega_x)."""
    return np.array(
        [params.b_bar * z.p[IX_OMEGA_Y], -params.b_bar * z.p[IX_OMEGA_X]]
    )


def _min_time_control(h1: float, h2: float, eps_phi: float) -> tuple[float, float]:
    norm = math.hypot(h1, h2)
    if norm <= eps_phi:
        raise OnSwitchingSurfaceError(
            f"|Phi|={norm:.3e} below {eps_phi:.1e}: min-time control undefined"
        )
    return h1 / norm, h2 / norm


def _regularized_control(
    h1: float, h2: float, p0: float, gamma: float
) -> tuple[float, float]:
    if p0 == 0.0:
        raise SingularDenominatorError("Regularized control needs p0 != 0")
    return sat(-h1 / (2.0 * gamma * p0)), sat(-h2 / (2.0 * gamma * p0))


def _blended_control(
    h1: float, h2: float, p0: float, gamma: float, lambda3: float
) -> tuple[float, float]:
    norm = math.hypot(h1, h2)
    denominator = -2.0 * p0 * gamma * (1.0 - lambda3) + lambda3 * norm
    if denominator < DENOMINATOR_TOL:
        raise SingularDenominatorError(
            f"Blended control denominator {denominator:.3e} (lambda3={lambda3})"
        )
    return sat(h1 / denominator), sat(h2 / denominator)


def control_from_switching(
    h1: float,
    h2: float,
    p0: float,
    law: ControlLaw,
    eps_phi: float = EPS_PHI,
) -> tuple[float, float]:
    """Control of `law` from the switching function values."""
    if law.mode == "min_time":
        return _min_time_control(h1, h2, eps_phi)
    if law.mode == "regularized":
        return _regularized_control(h1, h2, p0, law.gamma)
    return _blended_control(h1, h2, p0, law.gamma, law.lambda3)


def control_min_time(
    z: ExtremalPoint, params: RocketParams, eps_phi: float = EPS_PHI
) -> np.ndarray:
    """u = Phi / |Phi|, maximizing u·Phi over the unit disk."""
    return np.array(_min_time_control(*switching_fn(z, params), eps_phi))


def control_regularized(
    z: ExtremalPoint, params: RocketParams, gamma: float
) -> np.ndarray:
    """Maximizer of the gamma-regularized Hamiltonian over the box |u_i| <= 1."""
    assert gamma > 0, gamma
    return np.array(_regularized_control(*switching_fn(z, params), z.p0, gamma))


def control_blended(
    z: ExtremalPoint, params: RocketParams, gamma: float, lambda3: float
) -> np.ndarray:
    """
    Control of the lambda3 homotopy between the regularized and min-time laws.

    u_ie = Phi_i / (-2 p0 gamma (1 - lambda3) + lambda3 |Phi|), clamped to the
    box. lambda3 = 0 gives the regularized law, lambda3 = 1 gives Phi / |Phi|.
    """
    assert 0.0 <= lambda3 <= 1.0, lambda3
    h1, h2 = switching_fn(z, params)
    return np.array(_blended_control(h1, h2, z.p0, gamma, lambda3))


def control(
    z: ExtremalPoint,
    law: ControlLaw,
    params: RocketParams,
    eps_phi: float = EPS_PHI,
) -> np.ndarray:
    """Control given by `law` at z."""
    h1, h2 = switching_fn(z, params)
    return np.array(control_from_switching(h1, h2, z.p0, law, eps_phi))


def hamiltonian_system(
    z: np.ndarray, u: tuple[float, float], params: RocketParams
) -> np.ndarray:
    """
    Right-hand side (x', p') of the extremal system for a 16-vector z.

    p' = -(df/dx)^T p; the control fields are constant so p' does not depend
    on u.
    """
    (
        _vx,
        _vy,
        _vz,
        theta,
        psi,
        phi,
        omega_x,
        omega_y,
        p_vx,
        p_vy,
        p_vz,
        p_theta,
        p_psi,
        p_phi,
        _p_wx,
        _p_wy,
    ) = (float(value) for value in z)
    check_euler_singularity(psi)
    a, b_bar = params.a, params.b_bar
    gx, gy, gz = params.gravity
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(psi), math.cos(psi)
    sf, cf = math.sin(phi), math.cos(phi)
    tp = sp / cp
    omega_1 = omega_x * cf - omega_y * sf
    omega_2 = omega_x * sf + omega_y * cf
    return np.array(
        [
            a * st * cp + gx,
            -a * sp + gy,
            a * ct * cp + gz,
            omega_2 / cp,
            omega_1,
            tp * omega_2,
            -b_bar * u[1],
            b_bar * u[0],
            0.0,
            0.0,
            0.0,
            -a * cp * (p_vx * ct - p_vz * st),
            a * (p_vx * st * sp + p_vy * cp + p_vz * ct * sp)
            - (p_theta * sp + p_phi) * omega_2 / cp**2,
            -(p_theta * omega_1 / cp - p_psi * omega_2 + p_phi * tp * omega_1),
            -(p_theta * sf / cp + p_psi * cf + p_phi * tp * sf),
            -(p_theta * cf / cp - p_psi * sf + p_phi * tp * cf),
        ]
    )


def adjoint_rhs(
    z: ExtremalPoint, u: np.ndarray, params: RocketParams
) -> np.ndarray:
    """Costate dynamics p' = -dH/dx (independent of u)."""
    return hamiltonian_system(z.z, (float(u[0]), float(u[1])), params)[STATE_DIM:]


def h0(z: ExtremalPoint, params: RocketParams) -> float:
    """Drift Hamiltonian <p, f(x)>."""
    xdot = hamiltonian_system(z.z, (0.0, 0.0), params)[:STATE_DIM]
    return float(np.dot(z.p, xdot))


def hamiltonian(
    z: ExtremalPoint,
    u: np.ndarray,
    params: RocketParams,
    law: ControlLaw | None = None,
) -> float:
    """
    Hamiltonian value, min-time by default.

    Regularized and blended laws add p0 gamma |u|² (1 - lambda3).
    """
    u = np.asarray(u, dtype=float)
    value = h0(z, params) + float(np.dot(u, switching_fn(z, params))) + z.p0
    if law is not None and law.energy_weight:
        value += z.p0 * law.energy_weight * float(np.dot(u, u))
    return value


def transversality_residual(z_f: ExtremalPoint, spec: TerminalSpec) -> float:
    """Projection of the terminal velocity costate on the final body axis."""
    return float(np.dot(z_f.p[SLICE_V], thrust_axis(spec.theta_f, spec.psi_f)))


def eliminate_pvy(p_vx: float, p_vz: float, spec: TerminalSpec) -> float:
    """p_vy zeroing `transversality_residual` for given p_vx, p_vz."""
    sin_psi_f = math.sin(spec.psi_f)
    if abs(sin_psi_f) < _MIN_SIN_PSI_F:
        raise DegenerateTargetError(
            f"Cannot eliminate p_vy with psi_f={spec.psi_f}: keep it as unknown"
        )
    cos_psi_f = math.cos(spec.psi_f)
    return (
        p_vx * math.sin(spec.theta_f) * cos_psi_f
        + p_vz * math.cos(spec.theta_f) * cos_psi_f
    ) / sin_psi_f


@dataclass
class GohGlccReport:
    """Pairings entering the Goh and generalized Legendre-Clebsch conditions."""

    goh_first_order: float
    goh_second_order_12: float
    goh_second_order_21: float
    glcc_1: float
    glcc_2: float
    cross_defect: float
    glcc_margin: float

    @property
    def glcc_satisfied(self) -> bool:
        """Both GLCC pairings non-positive (p0 = -1 normalization)."""
        return self.glcc_1 <= 0.0 and self.glcc_2 <= 0.0


def goh_glcc_report(z: ExtremalPoint, params: RocketParams) -> GohGlccReport:
    """Evaluate the singular-arc necessary conditions at z."""
    return GohGlccReport(
        goh_first_order=pairing("g1_adf_g2", z, params),
        goh_second_order_12=pairing("g1_ad2f_g2", z, params),
        goh_second_order_21=pairing("g2_ad2f_g1", z, params),
        glcc_1=pairing("g1_ad3f_g1", z, params),
        glcc_2=pairing("g2_ad3f_g2", z, params),
        cross_defect=pairing("g1_ad3f_g2", z, params)
        - pairing("g2_ad3f_g1", z, params),
        glcc_margin=glcc_margin(z.x, params),
    )
