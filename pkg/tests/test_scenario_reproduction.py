"""
Full solves of the reference scenarios against published reference values.

Deselected by default, run with `pytest -m scenario_reproduction`.
"""

import json
import math

import pytest

from rocketmintime.cli import run
from rocketmintime.const import DirectConfig
from rocketmintime.continuation import reevaluate_residual, run_pipeline
from rocketmintime.direct import find_singular_window, solve_direct
from rocketmintime.scenarios import preset

pytestmark = pytest.mark.scenario_reproduction


def _pipeline(name, v0):
    scenario = preset(name, v0)
    return run_pipeline(
        scenario.to_terminal_spec(),
        scenario.params(),
        scenario.continuation_config(),
    )


@pytest.mark.timeout(240)
def test_tc1_1000_two_switches():
    result = _pipeline("tc1", 1000.0)
    assert result.reached_min_time
    assert result.lambda3_star is None

    events = result.trajectory.events
    assert [event.order for event in events] == [1, 1]
    for event, expected in zip(events, (8.8, 25.8)):
        assert event.t == pytest.approx(expected, abs=0.4)
        assert event.control_jump == pytest.approx(math.pi, abs=0.05)
    assert result.trajectory.max_abs_hamiltonian() <= 1e-8
    assert not result.chattering.flagged

    # stored roots reproduce their residual
    cfg = preset("tc1", 1000.0).continuation_config()
    for stage in (1, 2, 3):
        last = result.run.last(stage)
        residual = reevaluate_residual(last, result.run, result.params, cfg)
        assert residual <= 10.0 * cfg.tol


@pytest.mark.timeout(480)
def test_tc1_1500_four_switches_and_tc3_shorter():
    tc1 = _pipeline("tc1", 1500.0)
    assert tc1.reached_min_time
    assert [event.order for event in tc1.trajectory.events] == [1, 1, 1, 1]

    tc3 = _pipeline("tc3", 1500.0)
    assert tc3.reached_min_time
    assert tc3.t_f < tc1.t_f


@pytest.mark.timeout(600)
def test_tc2_2000_suboptimal(tmp_path):
    code = run("solve-indirect", preset("tc2", 2000.0), tmp_path)
    assert code == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    error = json.loads((tmp_path / "error.json").read_text())
    assert error["stall"]["stage"] == 3
    assert (tmp_path / "trajectory.csv").exists()

    lam_star = summary["lambda3_star"]
    assert 0.95 <= lam_star < 1.0
    assert lam_star == pytest.approx(0.98, abs=0.02)
    assert summary["cost"] == pytest.approx(69.3, rel=0.03)
    assert summary["t_f"] == pytest.approx(66.0, rel=0.03)
    # no bang-type jump between adjacent control samples
    assert summary["max_control_jump"] < 0.5


@pytest.mark.timeout(1800)
def test_tc2_2000_direct():
    scenario = preset("tc2", 2000.0)
    result = solve_direct(
        scenario.to_terminal_spec(),
        scenario.params(),
        cfg=DirectConfig(n_segments=200),
    )
    assert result.converged, result.message
    assert result.max_violation <= 1e-6
    assert result.t_f == pytest.approx(65.4, rel=0.05)

    window = find_singular_window(result, min_duration=10.0)
    assert window is not None
    assert window.t_start > 0.0
    assert window.t_end < result.t_f
    assert window.max_singular_distance < 0.1 * window.initial_singular_distance

    indirect = _pipeline("tc2", 2000.0)
    assert result.t_f <= 1.02 * indirect.t_f


@pytest.mark.timeout(900)
def test_pipeline_determinism(tmp_path):
    scenario = preset("tc1", 1000.0)
    grids = [_pipeline("tc1", 1000.0).run.lambdas(3) for _ in range(2)]
    assert grids[0] == grids[1]

    summaries = []
    for folder in ("first", "second"):
        assert run("solve-indirect", scenario, tmp_path / folder) == 0
        summary = json.loads((tmp_path / folder / "summary.json").read_text())
        summary.pop("wall_time_s")
        summaries.append(summary)
    assert summaries[0] == summaries[1]
    assert (tmp_path / "first" / "trajectory.csv").read_bytes() == (
        tmp_path / "second" / "trajectory.csv"
    ).read_bytes()
