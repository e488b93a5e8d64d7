"""Tests for the reference scenarios and KEY=value scenario files."""

import math

import numpy as np
import pytest

from rocketmintime.exceptions import InvalidInputError
from rocketmintime.frames import thrust_axis
from rocketmintime.scenarios import Scenario, load_scenario, preset


@pytest.mark.parametrize(
    "name, theta0, theta_f",
    (("tc1", 75.0, 85.0), ("tc2", 70.0, 85.0), ("TC3", 85.0, 75.0)),
)
def test_presets(name, theta0, theta_f):
    scenario = preset(name, 1500.0)
    assert scenario.name == f"{name.lower()}-1500"
    assert (scenario.theta0, scenario.psi0) == (theta0, 0.5)
    assert (scenario.theta_f, scenario.psi_f) == (theta_f, 5.0)

    spec = scenario.to_terminal_spec()
    assert spec.theta_f == pytest.approx(math.radians(theta_f))
    assert np.linalg.norm(spec.x0[:3]) == pytest.approx(1500.0)
    # initial velocity along the initial body axis
    axis = thrust_axis(math.radians(theta0), math.radians(0.5))
    assert np.allclose(spec.x0[:3], 1500.0 * axis)
    assert not np.any(spec.x0[5:])

    back = Scenario.from_terminal_spec(spec, name=scenario.name)
    assert back.theta0 == pytest.approx(theta0)
    assert back.theta_v0 == pytest.approx(theta0)
    assert back.psi_v0 == pytest.approx(0.5)
    assert back.to_terminal_spec().x0 == pytest.approx(spec.x0)


def test_unknown_preset():
    with pytest.raises(InvalidInputError):
        preset("tc4", 1000.0)
    with pytest.raises(InvalidInputError):
        Scenario("bad", -1.0, 75.0, 0.5, 85.0, 5.0)
    with pytest.raises(InvalidInputError):
        Scenario("bad", 1000.0, 75.0, 0.5, 85.0, 5.0, solver="shooting")


def test_load_preset_file(tmp_path):
    path = tmp_path / "tc2.env"
    path.write_text(
        "# reference case 2\n"
        "PRESET=tc2\n"
        "V0=2000\n"
        "SOLVER=direct\n"
        "REL_TOL=1e-10\n"
        "N_SEGMENTS=100\n"
        "GAMMA=40\n"
    )
    scenario = load_scenario(path)
    assert scenario.name == "tc2-2000"
    assert scenario.solver == "direct"
    assert scenario.integrator_config().rel_tol == 1e-10
    assert scenario.continuation_config().integrator.rel_tol == 1e-10
    assert scenario.continuation_config().gamma == 40.0
    direct = scenario.direct_config()
    assert direct.n_segments == 100
    assert isinstance(direct.n_segments, int)


def test_load_custom_file(tmp_path):
    path = tmp_path / "custom.env"
    path.write_text(
        "V0=800\nTHETA0=60\nPSI0=1\nTHETA_F=80\nPSI_F=3\nPHI_F=10\n"
        "GRAVITY=-9.81,0,0\nA=15\n"
    )
    scenario = load_scenario(path)
    assert scenario.name == "custom"
    assert scenario.phi_f == 10.0
    params = scenario.params()
    assert params.gravity == (-9.81, 0.0, 0.0)
    assert params.a == 15.0
    assert scenario.to_terminal_spec().phi_f == pytest.approx(math.radians(10.0))


@pytest.mark.parametrize(
    "content",
    (
        "PRESET=tc1\n",
        "PRESET=tc1\nV0=1000\nALTITUDE=3\n",
        "PRESET=tc1\nV0=fast\n",
        "PRESET=tc1\nV0=1000\nGRAVITY=1,2\n",
        "V0=1000\nTHETA0=75\n",
        "PRESET=tc1\nV0=1000\nREL_TOL=1\n",
    ),
)
def test_bad_files(tmp_path, content):
    path = tmp_path / "bad.env"
    path.write_text(content)
    with pytest.raises(InvalidInputError):
        scenario = load_scenario(path)
        # settings are validated when the configs are built
        scenario.integrator_config()


def test_missing_file(tmp_path):
    with pytest.raises(InvalidInputError):
        load_scenario(tmp_path / "missing.env")


def test_overrides():
    scenario = preset("tc1", 1000.0).with_overrides(step_min=1e-3, workers=2)
    cfg = scenario.continuation_config()
    assert cfg.step_min == 1e-3
    assert cfg.workers == 2
    with pytest.raises(InvalidInputError):
        scenario.with_overrides(altitude=1.0)
