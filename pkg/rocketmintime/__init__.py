"""Minimum-time attitude and orbit maneuvers of a rocket, indirect and direct."""

from .const import (
    ContinuationConfig,
    ControlLaw,
    DirectConfig,
    ExtremalPoint,
    IntegratorConfig,
    RocketParams,
    TerminalSpec,
)
from .continuation import PipelineResult, run_pipeline
from .direct import DirectResult, find_singular_window, solve_direct
from .exceptions import ContinuationStallError, InvalidInputError, RocketMinTimeError
from .ocp0 import solve_ocp0
from .scenarios import load_scenario, preset, Scenario

__all__ = (
    "ContinuationConfig",
    "ContinuationStallError",
    "ControlLaw",
    "DirectConfig",
    "DirectResult",
    "ExtremalPoint",
    "IntegratorConfig",
    "InvalidInputError",
    "PipelineResult",
    "RocketMinTimeError",
    "RocketParams",
    "Scenario",
    "TerminalSpec",
    "find_singular_window",
    "load_scenario",
    "preset",
    "run_pipeline",
    "solve_direct",
    "solve_ocp0",
)
