"""
Result files: trajectory.csv, events.csv, summary.json, error.json and the
progress.jsonl stream.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from rocketmintime.const import COSTATE_KEYS, STATE_DIM, STATE_KEYS
from rocketmintime.exceptions import InvalidInputError
from rocketmintime.odeint import SwitchEvent, TrajectorySamples

_LOGGER = logging.getLogger(__name__)

TRAJECTORY_FILE = "trajectory.csv"
EVENTS_FILE = "events.csv"
SUMMARY_FILE = "summary.json"
ERROR_FILE = "error.json"
PROGRESS_FILE = "progress.jsonl"
ANALYSIS_FILE = "analysis.json"

TRAJECTORY_COLUMNS = (
    "t",
    *STATE_KEYS,
    *COSTATE_KEYS,
    "u1",
    "u2",
    "phi_norm",
    "hamiltonian",
)
EVENT_COLUMNS = ("t", "order", "control_jump_rad", "phi_norm")
SUMMARY_KEYS = (
    "scenario",
    "solver",
    "t_f",
    "cost",
    "lambda3_star",
    "switch_times",
    "chattering_flag",
    "residual_norm",
    "wall_time_s",
)
_FMT = "%.17g"


def write_trajectory_csv(path: str | Path, samples: TrajectorySamples) -> Path:
    """One row per sample, full precision, header row first."""
    path = Path(path)
    data = np.column_stack(
        (
            samples.t,
            samples.x,
            samples.p,
            samples.u,
            samples.phi_norm,
            samples.hamiltonian,
        )
    )
    assert data.shape[1] == len(TRAJECTORY_COLUMNS), data.shape
    np.savetxt(
        path,
        data,
        fmt=_FMT,
        delimiter=",",
        header=",".join(TRAJECTORY_COLUMNS),
        comments="",
    )
    return path


def read_trajectory_csv(path: str | Path) -> TrajectorySamples:
    """Inverse of `write_trajectory_csv`."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"Trajectory file not found: {path}")
    with path.open() as handle:
        header = tuple(handle.readline().strip().split(","))
    if header != TRAJECTORY_COLUMNS:
        raise InvalidInputError(f"Unexpected trajectory columns in {path}: {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x_end = 1 + STATE_DIM
    p_end = x_end + STATE_DIM
    return TrajectorySamples(
        t=data[:, 0],
        x=data[:, 1:x_end],
        p=data[:, x_end:p_end],
        u=data[:, p_end : p_end + 2],
        phi_norm=data[:, p_end + 2],
        hamiltonian=data[:, p_end + 3],
    )


def event_rows(events: Sequence[SwitchEvent]) -> list[tuple[float, int, float, float]]:
    """(t, order, control jump, |Phi|) per event, order -1 when unresolved."""
    return [
        (
            event.t,
            -1 if event.order is None else event.order,
            event.control_jump,
            event.phi_norm,
        )
        for event in events
    ]


def write_events_csv(path: str | Path, events: Sequence[SwitchEvent]) -> Path:
    path = Path(path)
    lines = [",".join(EVENT_COLUMNS)]
    lines += [
        f"{t:.17g},{order:d},{jump:.17g},{phi:.17g}"
        for t, order, jump, phi in event_rows(events)
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_events_csv(path: str | Path) -> list[tuple[float, int, float, float]]:
    path = Path(path)
    rows = path.read_text().strip().splitlines()
    if not rows or tuple(rows[0].split(",")) != EVENT_COLUMNS:
        raise InvalidInputError(f"Unexpected events header in {path}")
    parsed = []
    for row in rows[1:]:
        t, order, jump, phi = row.split(",")
        parsed.append((float(t), int(order), float(jump), float(phi)))
    return parsed


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, list | tuple | np.ndarray):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.integer | np.bool_):
        return value.item()
    if isinstance(value, float | np.floating):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def build_summary(
    scenario: str,
    solver: str,
    t_f: float,
    cost: float,
    lambda3_star: float | None,
    switch_times: Sequence[float],
    chattering_flag: bool,
    residual_norm: float,
    wall_time_s: float,
    **extra: Any,
) -> dict[str, Any]:
    """summary.json content, the fixed keys first."""
    summary = {
        "scenario": scenario,
        "solver": solver,
        "t_f": t_f,
        "cost": cost,
        "lambda3_star": lambda3_star,
        "switch_times": list(switch_times),
        "chattering_flag": bool(chattering_flag),
        "residual_norm": residual_norm,
        "wall_time_s": wall_time_s,
    }
    summary.update(extra)
    return _jsonable(summary)


def to_json(content: dict[str, Any]) -> str:
    """Indented JSON with numpy values converted and non-finite floats as null."""
    return json.dumps(_jsonable(content), indent=2)


def write_json(path: str | Path, content: dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(to_json(content) + "\n")
    return path


def write_error(
    output_dir: Path, exit_code: int, error: BaseException, **extra: Any
) -> Path:
    """Machine-readable failure report."""
    content = {
        "exit_code": exit_code,
        "error": type(error).__name__,
        "message": str(error),
        **extra,
    }
    return write_json(output_dir / ERROR_FILE, content)


class ProgressWriter:
    """Continuation progress records appended as JSON lines."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.write_text("")
        self.count = 0

    def __call__(self, record: dict[str, Any]) -> None:
        with self.path.open("a") as handle:
            handle.write(json.dumps(_jsonable(record)) + "\n")
        self.count += 1
        _LOGGER.debug("[progress] %s", record)
