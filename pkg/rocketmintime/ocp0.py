"""
Problem of order zero: steer the velocity direction alone in minimum time.

The thrust direction e is the control of V' = a e + g, and the target is V
parallel to the final body axis w. The optimal direction is constant and the
problem reduces to a quadratic in t_f. The solution embeds on the singular
surface S as a 16-dimensional extremal with zero rates and attitude costates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from rocketmintime.const import (
    DEFAULT_P0,
    ExtremalPoint,
    RocketParams,
    SLICE_ANGLES,
    SLICE_V,
    STATE_DIM,
    UNIT_NORM_TOL,
)
from rocketmintime.exceptions import (
    AngleExtractionError,
    InfeasibleOcp0Error,
    InvalidInputError,
    NumericError,
)
from rocketmintime.frames import check_euler_singularity
from rocketmintime.liealgebra import singular_distance, singular_surface_point
from rocketmintime.utils import ensure_finite

_LOGGER = logging.getLogger(__name__)

_ZERO_TIME_TOL = 1e-12
_EMBED_TOL = 1e-10


@dataclass
class Ocp0Solution:
    """Closed-form solution of the problem of order zero."""

    v0: np.ndarray
    w: np.ndarray
    e_star: np.ndarray
    t_f: float
    p_v: np.ndarray
    theta_star: float
    psi_star: float
    k: float
    p0: float = DEFAULT_P0
    zero_time: bool = False
    principal_branch: bool = True

    @property
    def final_velocity(self) -> np.ndarray:
        """V(t_f) = V0 + (a e* + g) t_f, equal to k w."""
        return self.k * self.w


def _angles_from_direction(e_star: np.ndarray) -> tuple[float, float, bool]:
    e1, e2, e3 = e_star
    if math.hypot(e1, e3) < UNIT_NORM_TOL:
        raise AngleExtractionError(
            f"Thrust direction {e_star} along the yaw axis: pitch undefined"
        )
    theta = math.atan2(e1, e3)
    psi = -math.asin(max(-1.0, min(1.0, e2)))
    return theta, psi, bool(e3 > 0)


def solve_ocp0(
    v0: np.ndarray,
    w: np.ndarray,
    a: float,
    g: np.ndarray,
    p0: float = DEFAULT_P0,
) -> Ocp0Solution:
    """
    Minimum-time constant thrust direction aligning the velocity with w.

    With a1 = a² - |<g,w>w - g|², a2 = 2(<V0,w><g,w> - <V0,g>) and
    a3 = -|<V0,w>w - V0|², t_f is the positive root of a1 t² + a2 t + a3 = 0.
    """
    v0, w, g = (np.asarray(vec, dtype=float) for vec in (v0, w, g))
    ensure_finite((*v0, *w, *g, a, p0), "OCP0 input")
    if abs(float(np.linalg.norm(w)) - 1.0) > UNIT_NORM_TOL:
        raise InvalidInputError(f"Target direction must be unit norm, got {w}")
    if not a > 0:
        raise InvalidInputError(f"Thrust acceleration must be positive, got {a}")

    v0_w, g_w = float(np.dot(v0, w)), float(np.dot(g, w))
    a1 = a**2 - float(np.sum((g_w * w - g) ** 2))
    a2 = 2.0 * (v0_w * g_w - float(np.dot(v0, g)))
    a3 = -float(np.sum((v0_w * w - v0) ** 2))
    if a1 <= 0:
        raise InfeasibleOcp0Error(
            f"Thrust cannot compensate the gravity component normal to w (a1={a1})"
        )
    discriminant = a2**2 - 4.0 * a1 * a3
    if discriminant < 0:
        raise InfeasibleOcp0Error(f"Negative discriminant {discriminant}")
    numerator = -a2 + math.sqrt(discriminant)
    assert numerator >= -_ZERO_TIME_TOL * max(1.0, abs(a2)), numerator

    t_f = numerator / (2.0 * a1)
    if t_f <= _ZERO_TIME_TOL:
        _LOGGER.info("[ocp0] Velocity already aligned with target axis")
        theta, psi, principal = _angles_from_direction(w)
        return Ocp0Solution(
            v0=v0,
            w=w,
            e_star=w.copy(),
            t_f=0.0,
            p_v=np.zeros(3),
            theta_star=theta,
            psi_star=psi,
            k=v0_w,
            p0=p0,
            zero_time=True,
            principal_branch=principal,
        )

    k = v0_w + g_w * t_f
    e_star = ((k * w - v0) / t_f - g) / a
    denominator = a + float(np.dot(e_star, g))
    if abs(denominator) < UNIT_NORM_TOL:
        raise InfeasibleOcp0Error("Thrust exactly balances gravity along e*")
    p_v = -p0 * e_star / denominator
    theta, psi, principal = _angles_from_direction(e_star)
    if not principal:
        _LOGGER.warning(
            "[ocp0] theta*=%.2f deg outside (-90, 90) deg (e3*=%.4f < 0)",
            math.degrees(theta),
            e_star[2],
        )
    return Ocp0Solution(
        v0=v0,
        w=w,
        e_star=e_star,
        t_f=t_f,
        p_v=p_v,
        theta_star=theta,
        psi_star=psi,
        k=k,
        p0=p0,
        principal_branch=principal,
    )


def embed_extremal(
    sol: Ocp0Solution, phi_star: float, params: RocketParams
) -> ExtremalPoint:
    """Lift an OCP0 solution to a point of the singular surface S."""
    check_euler_singularity(sol.psi_star)
    x = np.zeros(STATE_DIM)
    x[SLICE_V] = sol.v0
    x[SLICE_ANGLES] = (sol.theta_star, sol.psi_star, phi_star)
    p = np.zeros(STATE_DIM)
    p[SLICE_V] = sol.p_v
    z = ExtremalPoint(x=x, p=p, p0=sol.p0)

    distance = singular_distance(z)
    reference = singular_surface_point(
        sol.theta_star, sol.psi_star, phi_star, sol.v0, params, sol.p0
    )
    mismatch = float(np.max(np.abs(reference.p - p)))
    if distance > _EMBED_TOL * max(1.0, float(np.linalg.norm(p))) or mismatch > 1e-9:
        raise NumericError(
            f"OCP0 embedding off the singular surface (distance={distance:.2e}, "
            f"costate mismatch={mismatch:.2e})"
        )
    return z
