"""
Maneuver scenarios: the three reference terminal-condition sets and flat
KEY=value scenario files.

Angles are in degrees and rates in deg/s here only; everything handed to the
solvers is in radians.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values

from rocketmintime.const import (
    ContinuationConfig,
    DirectConfig,
    IntegratorConfig,
    RocketParams,
    SolverKind,
    TerminalSpec,
)
from rocketmintime.dynamics import velocity_from_flightpath
from rocketmintime.exceptions import InvalidInputError
from rocketmintime.utils import deg2rad, rad2deg

_LOGGER = logging.getLogger(__name__)

PresetName = Literal["tc1", "tc2", "tc3"]

# Initial and final pitch (deg) of the reference cases; psi0 = 0.5 deg,
# psi_f = 5 deg and zero roll and rates everywhere
_PRESET_PITCH: dict[str, tuple[float, float]] = {
    "tc1": (75.0, 85.0),
    "tc2": (70.0, 85.0),
    "tc3": (85.0, 75.0),
}
PRESETS: tuple[PresetName, ...] = ("tc1", "tc2", "tc3")


def _config_fields() -> dict[str, type]:
    owners: dict[str, type] = {}
    for owner in (RocketParams, IntegratorConfig, ContinuationConfig, DirectConfig):
        for item in fields(owner):
            if item.name not in ("integrator", "gravity", "initial_control"):
                owners[item.name] = owner
    return owners


CONFIG_OVERRIDES = _config_fields()


@dataclass(frozen=True)
class Scenario:
    """
    A maneuver: initial velocity and attitude, attitude targets, plant and
    solver settings.

    The initial velocity is v0 along the flight-path angles (theta_v0, psi_v0),
    which default to the initial attitude.
    """

    name: str
    v0: float
    theta0: float
    psi0: float
    theta_f: float
    psi_f: float
    phi0: float = 0.0
    omega_x0: float = 0.0
    omega_y0: float = 0.0
    phi_f: float = 0.0
    omega_xf: float = 0.0
    omega_yf: float = 0.0
    theta_v0: float | None = None
    psi_v0: float | None = None
    solver: SolverKind = "indirect"
    gravity: tuple[float, float, float] | None = None
    overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.v0 >= 0:
            raise InvalidInputError(f"v0 must be non-negative, got {self.v0}")
        if self.solver not in ("indirect", "direct"):
            raise InvalidInputError(f"Unknown solver '{self.solver}'")
        unknown = set(self.overrides) - set(CONFIG_OVERRIDES)
        if unknown:
            raise InvalidInputError(f"Unknown settings: {sorted(unknown)}")

    def to_terminal_spec(self) -> TerminalSpec:
        theta_v = self.theta0 if self.theta_v0 is None else self.theta_v0
        psi_v = self.psi0 if self.psi_v0 is None else self.psi_v0
        velocity = velocity_from_flightpath(self.v0, *deg2rad((theta_v, psi_v)))
        attitude = deg2rad(
            (self.theta0, self.psi0, self.phi0, self.omega_x0, self.omega_y0)
        )
        theta_f, psi_f, phi_f, omega_xf, omega_yf = deg2rad(
            (self.theta_f, self.psi_f, self.phi_f, self.omega_xf, self.omega_yf)
        )
        return TerminalSpec(
            initial_state=(*map(float, velocity), *attitude),
            theta_f=theta_f,
            psi_f=psi_f,
            phi_f=phi_f,
            omega_xf=omega_xf,
            omega_yf=omega_yf,
        )

    @classmethod
    def from_terminal_spec(cls, spec: TerminalSpec, name: str = "custom") -> Scenario:
        vx, vy, vz, *attitude = spec.initial_state
        v0 = math.sqrt(vx**2 + vy**2 + vz**2)
        theta_v = math.degrees(math.atan2(vx, vz)) if v0 else None
        psi_v = math.degrees(-math.asin(vy / v0)) if v0 else None
        theta0, psi0, phi0, omega_x0, omega_y0 = rad2deg(attitude)
        theta_f, psi_f, phi_f, omega_xf, omega_yf = rad2deg(
            (spec.theta_f, spec.psi_f, spec.phi_f, spec.omega_xf, spec.omega_yf)
        )
        return cls(
            name=name,
            v0=v0,
            theta0=theta0,
            psi0=psi0,
            phi0=phi0,
            omega_x0=omega_x0,
            omega_y0=omega_y0,
            theta_f=theta_f,
            psi_f=psi_f,
            phi_f=phi_f,
            omega_xf=omega_xf,
            omega_yf=omega_yf,
            theta_v0=theta_v,
            psi_v0=psi_v,
        )

    def _settings_for(self, owner: type) -> dict[str, Any]:
        return {
            key: value
            for key, value in self.overrides.items()
            if CONFIG_OVERRIDES[key] is owner
        }

    def params(self) -> RocketParams:
        settings = self._settings_for(RocketParams)
        if self.gravity is not None:
            settings["gravity"] = self.gravity
        return RocketParams(**settings)

    def integrator_config(self) -> IntegratorConfig:
        settings = self._settings_for(IntegratorConfig)
        if "max_steps" in settings:
            settings["max_steps"] = int(settings["max_steps"])
        return IntegratorConfig(**settings)

    def continuation_config(self) -> ContinuationConfig:
        settings = self._settings_for(ContinuationConfig)
        counts = ("max_iter", "history", "workers", "solver_restarts", "newton_steps")
        for key in counts:
            if key in settings:
                settings[key] = int(settings[key])
        return ContinuationConfig(integrator=self.integrator_config(), **settings)

    def direct_config(self) -> DirectConfig:
        settings = self._settings_for(DirectConfig)
        for key in ("n_segments", "substeps", "max_outer", "inner_maxiter"):
            if key in settings:
                settings[key] = int(settings[key])
        return DirectConfig(**settings)

    def with_overrides(self, **overrides: float) -> Scenario:
        return replace(self, overrides={**self.overrides, **overrides})

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def preset(name: str, v0: float) -> Scenario:
    """Reference terminal conditions `tc1`, `tc2` or `tc3` at initial speed v0."""
    key = name.lower()
    if key not in _PRESET_PITCH:
        raise InvalidInputError(f"Unknown preset '{name}', expected one of {PRESETS}")
    theta0, theta_f = _PRESET_PITCH[key]
    return Scenario(
        name=f"{key}-{v0:g}",
        v0=float(v0),
        theta0=theta0,
        psi0=0.5,
        theta_f=theta_f,
        psi_f=5.0,
    )


_SCENARIO_KEYS = {
    item.name
    for item in fields(Scenario)
    if item.name not in ("overrides", "name", "gravity")
}


def _parse_float(key: str, raw: str | None) -> float:
    if raw is None:
        raise InvalidInputError(f"Missing value for {key}")
    try:
        value = float(raw)
    except ValueError:
        raise InvalidInputError(f"Bad value for {key}: {raw!r}")
    if not math.isfinite(value):
        raise InvalidInputError(f"Non-finite value for {key}: {raw!r}")
    return value


def scenario_from_mapping(
    values: dict[str, str | None], default_name: str = "scenario"
) -> Scenario:
    """Build a scenario from flat key/value settings (case-insensitive keys)."""
    settings = {key.lower(): value for key, value in values.items()}
    name = settings.pop("name", None) or default_name
    preset_name = settings.pop("preset", None)
    if preset_name is not None:
        if "v0" not in settings:
            raise InvalidInputError("PRESET needs V0")
        base = preset(preset_name, _parse_float("v0", settings.pop("v0")))
    else:
        missing = {"v0", "theta0", "psi0", "theta_f", "psi_f"} - set(settings)
        if missing:
            raise InvalidInputError(f"Missing scenario keys: {sorted(missing)}")
        base = Scenario(
            name=name,
            **{
                key: _parse_float(key, settings.pop(key))
                for key in ("v0", "theta0", "psi0", "theta_f", "psi_f")
            },
        )

    changes: dict[str, Any] = {}
    overrides: dict[str, float] = {}
    for key, raw in settings.items():
        if key == "solver":
            changes["solver"] = (raw or "").strip().lower()
        elif key == "gravity":
            parts = (raw or "").split(",")
            if len(parts) != 3:
                raise InvalidInputError(f"GRAVITY needs 3 components, got {raw!r}")
            changes["gravity"] = tuple(_parse_float(key, p) for p in parts)
        elif key in _SCENARIO_KEYS:
            changes[key] = _parse_float(key, raw)
        elif key in CONFIG_OVERRIDES:
            overrides[key] = _parse_float(key, raw)
        else:
            raise InvalidInputError(f"Unknown scenario key '{key.upper()}'")
    if preset_name is None or "name" in {k.lower() for k in values}:
        changes["name"] = name
    return replace(base, overrides=overrides, **changes)


def load_scenario(path: str | Path) -> Scenario:
    """Read a KEY=value scenario file (dotenv syntax)."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"Scenario file not found: {path}")
    values = dotenv_values(path)
    _LOGGER.debug("[%s] %d scenario settings loaded", path.stem, len(values))
    return scenario_from_mapping(values, default_name=path.stem)
