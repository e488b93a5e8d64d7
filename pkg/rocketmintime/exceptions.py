"""Minimum-time attitude and orbit maneuvers of a rocket. Errors."""

from __future__ import annotations

from typing import Any


class RocketMinTimeError(Exception):
    """Base class for all solver errors."""

    pass  # noqa PIE790


class InvalidInputError(RocketMinTimeError, ValueError):
    """Bad user input (non-finite values, out-of-range settings, unknown names)."""

    pass  # noqa PIE790


class EulerSingularityError(RocketMinTimeError):
    """Yaw angle psi too close to ±pi/2, where the Euler kinematics blow up."""

    pass  # noqa PIE790


class NumericError(RocketMinTimeError):
    """Non-finite intermediate value in a numeric routine."""

    pass  # noqa PIE790


class OnSwitchingSurfaceError(RocketMinTimeError):
    """Switching function too small to define the min-time control."""

    pass  # noqa PIE790


class SingularDenominatorError(RocketMinTimeError):
    """Vanishing denominator in a regularized or blended control law."""

    pass  # noqa PIE790


class SingularConstructionError(RocketMinTimeError):
    """Singular-surface point undefined for the given attitude and gravity."""

    pass  # noqa PIE790


class DegenerateTargetError(RocketMinTimeError):
    """Target attitude with psi_f = 0, where p_vy cannot be eliminated."""

    pass  # noqa PIE790


class InfeasibleOcp0Error(RocketMinTimeError):
    """Problem of order zero without solution (thrust cannot beat gravity)."""

    pass  # noqa PIE790


class AngleExtractionError(RocketMinTimeError):
    """Euler angles undefined for the given thrust direction."""

    pass  # noqa PIE790


class IntegrationError(RocketMinTimeError):
    """Extremal integration failed before reaching the final time."""

    def __init__(self, message: str, t_failure: float):
        super().__init__(message)
        self.t_failure = t_failure


class ChatteringSuspectedError(IntegrationError):
    """Step-size underflow, switching times accumulating near `t_accumulation`."""

    def __init__(self, message: str, t_failure: float, t_accumulation: float):
        super().__init__(message, t_failure)
        self.t_accumulation = t_accumulation


class ShootingError(RocketMinTimeError):
    """Failure while evaluating a shooting residual, tagged with stage and lambda."""

    def __init__(self, message: str, stage: int, lam: float):
        super().__init__(f"[stage {stage} λ={lam:.6f}] {message}")
        self.stage = stage
        self.lam = lam


class ContinuationStallError(RocketMinTimeError):
    """Continuation step fell below its floor; carries the stall record."""

    def __init__(self, message: str, stall: Any = None):
        super().__init__(message)
        self.stall = stall
