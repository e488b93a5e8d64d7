"""Minimum-time attitude and orbit maneuvers of a rocket. Constants and schemas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from rocketmintime.exceptions import InvalidInputError

# State and costate layout: (v_x, v_y, v_z, theta, psi, phi, omega_x, omega_y)
IX_VX, IX_VY, IX_VZ, IX_THETA, IX_PSI, IX_PHI, IX_OMEGA_X, IX_OMEGA_Y = range(8)
STATE_DIM = 8
STATE_KEYS = ("v_x", "v_y", "v_z", "theta", "psi", "phi", "omega_x", "omega_y")
COSTATE_KEYS = (
    "p_vx",
    "p_vy",
    "p_vz",
    "p_theta",
    "p_psi",
    "p_phi",
    "p_omega_x",
    "p_omega_y",
)
SLICE_V = slice(IX_VX, IX_VZ + 1)
SLICE_ANGLES = slice(IX_THETA, IX_PHI + 1)
SLICE_OMEGA = slice(IX_OMEGA_X, IX_OMEGA_Y + 1)

# Physical defaults
STANDARD_GRAVITY = 9.8
DEFAULT_THRUST_ACC = 12.0  # a = T_tot / m, m/s²
DEFAULT_B_BAR = 0.02  # 1/s²
DEFAULT_GRAVITY = (-STANDARD_GRAVITY, 0.0, 0.0)

# Published launcher data, used to rebuild b_bar
VEHICLE_MASS = 8.0e5  # kg
VEHICLE_LENGTH = 50.0  # m
VEHICLE_RADIUS = 2.5  # m
VEHICLE_THRUST_ATTITUDE = 1.4e6  # N
VEHICLE_MU_MAX = math.radians(6.0)

# Numeric guards
EULER_SINGULARITY_TOL = 1e-9
EPS_PHI = 1e-10
DENOMINATOR_TOL = 1e-14
RANK_RTOL = 1e-8
UNRESOLVED_TOL = 1e-9
UNIT_NORM_TOL = 1e-12

# Indirect pipeline defaults
DEFAULT_P0 = -1.0
DEFAULT_GAMMA = 50.0
TF_SCALE = 10.0

# CLI
DEFAULT_BATCH_TIMEOUT = 1800.0  # s per scenario
DEFAULT_OUTPUT_DIR = "results"
EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_STALL = 3
EXIT_NUMERIC_FAILURE = 4

Axis = Literal["x", "y", "z"]
ControlMode = Literal["min_time", "regularized", "blended"]
SolveStatus = Literal["converged", "stalled", "max_iter", "nan_encountered"]
Stage = Literal[1, 2, 3]
SolverKind = Literal["indirect", "direct"]
Command = Literal["solve-indirect", "solve-direct", "analyze", "ocp0", "batch"]
TerminalConstraint = Literal[
    "vel_yaw", "vel_pitch", "theta", "psi", "phi", "omega_x", "omega_y"
]
BracketId = Literal[
    "g1",
    "g2",
    "adf_g1",
    "adf_g2",
    "ad2f_g1",
    "ad2f_g2",
    "ad3f_g1",
    "ad3f_g2",
    "ad4f_g1",
    "ad4f_g2",
    "g1_adf_g1",
    "g1_adf_g2",
    "g2_adf_g1",
    "g2_adf_g2",
    "g1_ad2f_g1",
    "g2_ad2f_g2",
    "g1_ad2f_g2",
    "g2_ad2f_g1",
    "g1_ad3f_g1",
    "g1_ad3f_g2",
    "g2_ad3f_g1",
    "g2_ad3f_g2",
    "g1_g2",
]
ZERO_BRACKETS: tuple[BracketId, ...] = (
    "g1_g2",
    "g1_adf_g1",
    "g1_adf_g2",
    "g2_adf_g1",
    "g2_adf_g2",
    "g1_ad2f_g1",
    "g2_ad2f_g2",
)

# Order of the residual components returned by `dynamics.terminal_residuals`
TERMINAL_CONSTRAINTS: tuple[TerminalConstraint, ...] = (
    "vel_yaw",
    "vel_pitch",
    "theta",
    "psi",
    "phi",
    "omega_x",
    "omega_y",
)


@dataclass(frozen=True)
class RocketParams:
    """Physical constants of the plant."""

    a: float = DEFAULT_THRUST_ACC
    b_bar: float = DEFAULT_B_BAR
    gravity: tuple[float, float, float] = DEFAULT_GRAVITY

    def __post_init__(self):
        if not (self.a > 0 and self.b_bar > 0):
            raise InvalidInputError(
                f"Thrust and torque gains must be positive (a={self.a}, "
                f"b_bar={self.b_bar})"
            )
        if len(self.gravity) != 3 or not all(map(math.isfinite, self.gravity)):
            raise InvalidInputError(f"Bad gravity vector: {self.gravity}")

    @property
    def g(self) -> np.ndarray:
        """Gravity as numpy 3-vector."""
        return np.asarray(self.gravity, dtype=float)


@dataclass(frozen=True)
class TerminalSpec:
    """
    Initial state and terminal targets of a maneuver.

    The final velocity direction is not stored as a vector: it is enforced by
    the two scalar conditions of `dynamics.terminal_residuals`.
    """

    initial_state: tuple[float, ...]
    theta_f: float
    psi_f: float
    phi_f: float = 0.0
    omega_xf: float = 0.0
    omega_yf: float = 0.0

    def __post_init__(self):
        if len(self.initial_state) != STATE_DIM:
            raise InvalidInputError(
                f"Initial state needs {STATE_DIM} components, "
                f"got {len(self.initial_state)}"
            )
        values = (*self.initial_state, *self.targets)
        if not all(map(math.isfinite, values)):
            raise InvalidInputError(f"Non-finite terminal spec: {values}")

    @property
    def x0(self) -> np.ndarray:
        """Initial state as numpy 8-vector."""
        return np.asarray(self.initial_state, dtype=float)

    @property
    def targets(self) -> tuple[float, float, float, float, float]:
        """Attitude targets (theta_f, psi_f, phi_f, omega_xf, omega_yf)."""
        return self.theta_f, self.psi_f, self.phi_f, self.omega_xf, self.omega_yf


@dataclass
class ExtremalPoint:
    """State-costate pair z = (x, p), with the scalar p0 of the Hamiltonian."""

    x: np.ndarray
    p: np.ndarray
    p0: float = DEFAULT_P0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        assert self.x.shape == (STATE_DIM,), self.x.shape
        assert self.p.shape == (STATE_DIM,), self.p.shape

    @property
    def z(self) -> np.ndarray:
        """Packed 16-vector (x, p)."""
        return np.concatenate((self.x, self.p))

    @classmethod
    def from_vector(cls, z: np.ndarray, p0: float = DEFAULT_P0) -> ExtremalPoint:
        """Unpack a 16-vector."""
        z = np.asarray(z, dtype=float)
        return cls(x=z[:STATE_DIM].copy(), p=z[STATE_DIM:].copy(), p0=p0)


@dataclass(frozen=True)
class ControlLaw:
    """Control feedback used along extremals."""

    mode: ControlMode = "min_time"
    gamma: float = DEFAULT_GAMMA
    lambda3: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidInputError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 <= self.lambda3 <= 1.0:
            raise InvalidInputError(f"lambda3 must be in [0, 1], got {self.lambda3}")

    @classmethod
    def min_time(cls) -> ControlLaw:
        return cls("min_time")

    @classmethod
    def regularized(cls, gamma: float = DEFAULT_GAMMA) -> ControlLaw:
        return cls("regularized", gamma=gamma)

    @classmethod
    def blended(cls, gamma: float = DEFAULT_GAMMA, lambda3: float = 0.0) -> ControlLaw:
        return cls("blended", gamma=gamma, lambda3=lambda3)

    @property
    def energy_weight(self) -> float:
        """Weight of the quadratic control term in the cost (0 for min-time)."""
        if self.mode == "min_time":
            return 0.0
        if self.mode == "regularized":
            return self.gamma
        return self.gamma * (1.0 - self.lambda3)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances of the extremal integrator and of the switching-event logic."""

    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_steps: int = 1_000_000
    event_tol: float = 1e-9
    min_step: float = 1e-13
    eps_phi: float = EPS_PHI
    switch_rel_tol: float = 1e-2
    jump_probe: float = 1e-3

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not 1e-14 <= value <= 1e-3:
                raise InvalidInputError(f"{name}={value} outside [1e-14, 1e-3]")
        if self.max_steps < 1 or self.event_tol <= 0 or self.jump_probe <= 0:
            raise InvalidInputError(f"Bad integrator limits: {self}")


@dataclass(frozen=True)
class ContinuationConfig:
    """Predictor-corrector settings shared by the three homotopy stages."""

    gamma: float = DEFAULT_GAMMA
    initial_step: float = 0.1
    step_min: float = 1e-4
    step_max: float = 0.5
    step_grow: float = 1.5
    step_shrink: float = 0.5
    tol: float = 1e-10
    max_iter: int = 60
    history: int = 4
    solver_restarts: int = 1
    newton_steps: int = 5
    fd_rel_step: float = 1e-7
    workers: int = 1
    tf_scale: float = TF_SCALE
    output_cadence: float = 0.1
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if not 0 < self.step_min <= self.initial_step <= self.step_max <= 1.0:
            raise InvalidInputError(
                "Continuation steps must satisfy 0 < step_min <= initial_step "
                f"<= step_max <= 1 ({self.step_min}, {self.initial_step}, "
                f"{self.step_max})"
            )
        if (
            self.gamma <= 0
            or self.tol <= 0
            or self.history < 1
            or self.solver_restarts < 0
            or self.newton_steps < 0
        ):
            raise InvalidInputError(f"Bad continuation settings: {self}")


@dataclass(frozen=True)
class DirectConfig:
    """Direct transcription and augmented-Lagrangian settings."""

    n_segments: int = 200
    substeps: int = 2
    max_outer: int = 25
    inner_maxiter: int = 400
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    constraint_tol: float = 1e-6
    tf_guess: float | None = None
    tf_max: float = 500.0
    initial_control: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n_segments < 20:
            raise InvalidInputError(f"N must be >= 20, got {self.n_segments}")
        if self.substeps < 1 or self.max_outer < 1 or self.tf_max <= 0:
            raise InvalidInputError(f"Bad direct settings: {self}")
