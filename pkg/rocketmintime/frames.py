"""
Elementary rotations between the launch frame S_R and the body frame S_b.

The body frame is reached from the launch frame by the ordered rotations
R_y(theta), R_x(psi), R_z(phi), so L_bR = R_z(phi) R_x(psi) R_y(theta) and
L_Rb = L_bR^T. All angles are radians.
"""

from __future__ import annotations

import math

import numpy as np

from rocketmintime.const import Axis, EULER_SINGULARITY_TOL
from rocketmintime.exceptions import EulerSingularityError, InvalidInputError


def check_euler_singularity(psi: float | np.ndarray) -> None:
    """Raise `EulerSingularityError` when psi is within tolerance of ±pi/2."""
    if np.any(np.abs(np.cos(psi)) < EULER_SINGULARITY_TOL):
        raise EulerSingularityError(f"Yaw angle at Euler singularity: psi={psi}")


def rot_axis(axis: Axis, sigma: float) -> np.ndarray:
    """Unit single-axis rotation R_axis(sigma)."""
    if not math.isfinite(sigma):
        raise InvalidInputError(f"Non-finite rotation angle: {sigma}")
    c, s = math.cos(sigma), math.sin(sigma)
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    if axis == "y":
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    if axis == "z":
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    raise InvalidInputError(f"Unknown rotation axis '{axis}'")


def body_from_launch(theta: float, psi: float, phi: float) -> np.ndarray:
    """Transformation matrix L_bR from the launch frame to the body frame."""
    check_euler_singularity(psi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    cf, sf = math.cos(phi), math.sin(phi)
    return np.array(
        [
            [ct * cf + st * sp * sf, cp * sf, -st * cf + ct * sp * sf],
            [-ct * sf + st * sp * cf, cp * cf, st * sf + ct * sp * cf],
            [st * cp, -sp, ct * cp],
        ]
    )


def launch_from_body(theta: float, psi: float, phi: float) -> np.ndarray:
    """Transformation matrix L_Rb = L_bR^T."""
    return body_from_launch(theta, psi, phi).T


def thrust_axis(theta: float, psi: float) -> np.ndarray:
    """Body longitudinal axis z_b expressed in the launch frame (last row of L_bR)."""
    cp = math.cos(psi)
    return np.array([math.sin(theta) * cp, -math.sin(psi), math.cos(theta) * cp])


def is_rotation(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    """Check orthogonality and positive unit determinant."""
    return bool(
        np.allclose(matrix @ matrix.T, np.eye(3), rtol=0.0, atol=tol)
        and abs(np.linalg.det(matrix) - 1.0) <= tol
    )
