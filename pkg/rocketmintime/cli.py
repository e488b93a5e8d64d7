"""
Command-line front-end.

    rocketmintime solve-indirect --preset tc1 --v0 1000 --out results/tc1
    rocketmintime solve-direct --config tc2.env --set n_segments=200
    rocketmintime analyze --trajectory results/tc1/trajectory.csv
    rocketmintime ocp0 --preset tc1 --v0 1000
    rocketmintime batch tc1.env tc2.env tc3.env --out results --timeout 600

Exit codes: 0 success, 2 invalid input, 3 continuation stall (a sub-optimal
solution is still written when the stall happens in the last stage),
4 numeric failure or timeout. Every failure leaves an `error.json`.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any

import async_timeout
import numpy as np

from rocketmintime.const import (
    Command,
    ControlLaw,
    DEFAULT_BATCH_TIMEOUT,
    DEFAULT_OUTPUT_DIR,
    EXIT_INVALID_INPUT,
    EXIT_NUMERIC_FAILURE,
    EXIT_OK,
    EXIT_STALL,
    RocketParams,
    SLICE_ANGLES,
    SLICE_OMEGA,
    SLICE_V,
    SolverKind,
)
from rocketmintime.continuation import run_pipeline
from rocketmintime.direct import find_singular_window, solve_direct
from rocketmintime.exceptions import (
    ContinuationStallError,
    InvalidInputError,
    NumericError,
    RocketMinTimeError,
)
from rocketmintime.frames import thrust_axis
from rocketmintime.ocp0 import embed_extremal, solve_ocp0
from rocketmintime.odeint import (
    detect_chattering,
    events_from_samples,
    integrate_extremal,
    SwitchEvent,
)
from rocketmintime.scenarios import (
    CONFIG_OVERRIDES,
    load_scenario,
    preset,
    PRESETS,
    Scenario,
)
from rocketmintime.serialization import (
    ANALYSIS_FILE,
    build_summary,
    event_rows,
    EVENTS_FILE,
    PROGRESS_FILE,
    ProgressWriter,
    read_trajectory_csv,
    SUMMARY_FILE,
    to_json,
    TRAJECTORY_FILE,
    write_error,
    write_events_csv,
    write_json,
    write_trajectory_csv,
)

_LOGGER = logging.getLogger(__name__)

COMMANDS: tuple[Command, ...] = (
    "solve-indirect",
    "solve-direct",
    "analyze",
    "ocp0",
    "batch",
)
_LOG_FORMAT = "%(asctime)s %(levelname)s (%(processName)s) [%(name)s] %(message)s"

# identity checks of the closed-form OCP0 solution
_OCP0_UNIT_TOL = 1e-10
_OCP0_TANGENCY_TOL = 1e-9
_OCP0_PARALLEL_TOL = 1e-8
_OCP0_ATTITUDE_TOL = 1e-10


def ocp0_report(scenario: Scenario) -> dict[str, Any]:
    """Closed-form OCP0 solution of a scenario, with its identity checks."""
    spec, params = scenario.to_terminal_spec(), scenario.params()
    w = thrust_axis(spec.theta_f, spec.psi_f)
    sol = solve_ocp0(spec.x0[SLICE_V], w, params.a, params.g)
    v_f = sol.v0 + (params.a * sol.e_star + params.g) * sol.t_f
    checks = {
        "unit_norm": abs(float(np.linalg.norm(sol.e_star)) - 1.0),
        "tangency": abs(float(np.dot(sol.e_star, w))),
        "parallel": float(np.linalg.norm(np.cross(v_f, w)))
        / max(1.0, float(np.linalg.norm(v_f))),
    }
    tolerances = {
        "unit_norm": _OCP0_UNIT_TOL,
        "tangency": _OCP0_TANGENCY_TOL,
        "parallel": _OCP0_PARALLEL_TOL,
    }
    if sol.zero_time:
        checks["tangency"] = 0.0
    else:
        z0 = embed_extremal(sol, 0.0, params)
        traj = integrate_extremal(
            z0,
            ControlLaw.min_time(),
            params,
            scenario.integrator_config(),
            (0.0, sol.t_f),
            forced_control=(0.0, 0.0),
            detect_events=False,
        )
        x_f = traj.final.x
        drift = np.concatenate(
            (x_f[SLICE_ANGLES] - z0.x[SLICE_ANGLES], x_f[SLICE_OMEGA])
        )
        checks["attitude_hold"] = float(np.max(np.abs(drift)))
        tolerances["attitude_hold"] = _OCP0_ATTITUDE_TOL
    passed = all(checks[key] <= tolerances[key] for key in checks)
    return {
        "scenario": scenario.name,
        "e_star": sol.e_star,
        "t_f": sol.t_f,
        "theta_star_deg": math.degrees(sol.theta_star),
        "psi_star_deg": math.degrees(sol.psi_star),
        "p_v": sol.p_v,
        "k": sol.k,
        "zero_time": sol.zero_time,
        "principal_branch": sol.principal_branch,
        "checks": checks,
        "tolerances": tolerances,
        "checks_passed": passed,
    }


def _event_records(events: Sequence[SwitchEvent]) -> list[dict[str, Any]]:
    records = []
    for (t, order, jump, phi_norm), event in zip(event_rows(events), events):
        info = event.classification
        records.append(
            {
                "t": t,
                "order": order,
                "control_jump_rad": jump,
                "phi_norm": phi_norm,
                "a": info.a,
                "alpha": info.alpha,
                "b": info.b,
                "c": info.c,
                "beta_minus": info.beta_minus,
                "beta_plus": info.beta_plus,
                "chattering_branch": info.chattering_branch,
                "alpha_candidates": info.alpha_candidates,
            }
        )
    return records


def _solve_indirect(scenario: Scenario, output_dir: Path, started: float) -> int:
    spec, params = scenario.to_terminal_spec(), scenario.params()
    cfg = scenario.continuation_config()
    progress = ProgressWriter(output_dir / PROGRESS_FILE)
    result = run_pipeline(spec, params, cfg, progress=progress)
    traj = result.trajectory
    samples = traj.sample(traj.sample_grid(cfg.output_cadence))
    write_trajectory_csv(output_dir / TRAJECTORY_FILE, samples)
    write_events_csv(output_dir / EVENTS_FILE, traj.events)
    extra: dict[str, Any] = {
        "max_abs_hamiltonian": traj.max_abs_hamiltonian(),
        "event_orders": [event.order for event in traj.events],
        "t_accumulation": result.chattering.t_accumulation,
    }
    if result.suboptimal is not None:
        extra["stall"] = result.run.stall.as_dict()
        extra["max_control_jump"] = result.suboptimal.max_control_jump
        extra["control_lipschitz_estimate"] = result.suboptimal.lipschitz_estimate
    summary = build_summary(
        scenario=scenario.name,
        solver="indirect",
        t_f=result.t_f,
        cost=result.cost,
        lambda3_star=result.lambda3_star,
        switch_times=traj.switch_times,
        chattering_flag=result.chattering.flagged,
        residual_norm=result.residual_norm,
        wall_time_s=time.perf_counter() - started,
        **extra,
    )
    write_json(output_dir / SUMMARY_FILE, summary)
    if result.reached_min_time:
        return EXIT_OK
    stall = ContinuationStallError(
        f"Sub-optimal solution kept at λ3*={result.lambda3_star:.4f}",
        stall=result.run.stall,
    )
    write_error(output_dir, EXIT_STALL, stall, stall=result.run.stall.as_dict())
    return EXIT_STALL


def _solve_direct(scenario: Scenario, output_dir: Path, started: float) -> int:
    spec, params = scenario.to_terminal_spec(), scenario.params()
    result = solve_direct(spec, params, cfg=scenario.direct_config())
    events = events_from_samples(
        result.samples,
        params,
        scenario.integrator_config().switch_rel_tol,
    )
    write_trajectory_csv(output_dir / TRAJECTORY_FILE, result.samples)
    write_events_csv(output_dir / EVENTS_FILE, events)
    chattering = detect_chattering([event.t for event in events])
    window = find_singular_window(result)
    summary = build_summary(
        scenario=scenario.name,
        solver="direct",
        t_f=result.t_f,
        cost=result.cost,
        lambda3_star=None,
        switch_times=[event.t for event in events],
        chattering_flag=chattering.flagged,
        residual_norm=result.max_violation,
        wall_time_s=time.perf_counter() - started,
        constraint_violation=result.constraint_violation,
        converged=result.converged,
        message=result.message,
        singular_window=None
        if window is None
        else {
            "t_start": window.t_start,
            "t_end": window.t_end,
            "max_control_norm": window.max_control_norm,
            "max_singular_distance": window.max_singular_distance,
            "initial_singular_distance": window.initial_singular_distance,
        },
    )
    write_json(output_dir / SUMMARY_FILE, summary)
    if result.converged:
        return EXIT_OK
    error = NumericError(f"Direct method did not converge: {result.message}")
    write_error(
        output_dir, EXIT_NUMERIC_FAILURE, error, max_violation=result.max_violation
    )
    return EXIT_NUMERIC_FAILURE


def _analyze(
    params: RocketParams,
    switch_rel_tol: float,
    trajectory: Path,
    output_dir: Path,
) -> int:
    samples = read_trajectory_csv(trajectory)
    events = events_from_samples(samples, params, switch_rel_tol)
    chattering = detect_chattering([event.t for event in events])
    analysis = {
        "trajectory": str(trajectory),
        "n_samples": len(samples),
        "events": _event_records(events),
        "chattering": {
            "flagged": chattering.flagged,
            "event_times": chattering.event_times,
            "ratios": chattering.ratios,
            "t_accumulation": chattering.t_accumulation,
        },
        "max_abs_hamiltonian": float(np.max(np.abs(samples.hamiltonian)))
        if len(samples)
        else 0.0,
    }
    write_json(output_dir / ANALYSIS_FILE, analysis)
    _LOGGER.info(
        "[analyze] %d switching events in %s, chattering %s",
        len(events),
        trajectory,
        "flagged" if chattering.flagged else "not flagged",
    )
    return EXIT_OK


def run(
    command: Command,
    scenario: Scenario | None,
    output_dir: str | Path,
    trajectory: str | Path | None = None,
) -> int:
    """
    Run one command for one scenario, writing artifacts to `output_dir`.

    Returns the process exit code. Solver exceptions never escape: they are
    logged and written to `error.json`.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    tag = scenario.name if scenario is not None else command
    try:
        if command == "analyze":
            params = scenario.params() if scenario else RocketParams()
            rel_tol = scenario.integrator_config().switch_rel_tol if scenario else 1e-2
            source = Path(trajectory) if trajectory else output_dir / TRAJECTORY_FILE
            return _analyze(params, rel_tol, source, output_dir)
        if scenario is None:
            raise InvalidInputError(f"Command '{command}' needs --preset or --config")
        if command == "ocp0":
            report = ocp0_report(scenario)
            write_json(output_dir / "ocp0.json", report)
            print(to_json(report))
            return EXIT_OK if report["checks_passed"] else EXIT_NUMERIC_FAILURE
        if command == "solve-indirect":
            code = _solve_indirect(scenario, output_dir, started)
        elif command == "solve-direct":
            code = _solve_direct(scenario, output_dir, started)
        else:
            raise InvalidInputError(f"Unknown command '{command}'")
    except InvalidInputError as exc:
        _LOGGER.error("[%s] Invalid input: %s", tag, exc)
        write_error(output_dir, EXIT_INVALID_INPUT, exc)
        return EXIT_INVALID_INPUT
    except ContinuationStallError as exc:
        _LOGGER.error("[%s] %s", tag, exc)
        write_error(output_dir, EXIT_STALL, exc, stall=exc.stall.as_dict())
        return EXIT_STALL
    except (RocketMinTimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _LOGGER.error("[%s] Numeric failure: %s", tag, exc)
        write_error(output_dir, EXIT_NUMERIC_FAILURE, exc)
        return EXIT_NUMERIC_FAILURE
    _LOGGER.info(
        "[%s] %s finished with code %d in %.1f s",
        tag,
        command,
        code,
        time.perf_counter() - started,
    )
    return code


def setup_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=_LOG_FORMAT, force=True)


def solve_command(solver: SolverKind) -> Command:
    return "solve-direct" if solver == "direct" else "solve-indirect"


def _batch_job(
    config: str, solver: SolverKind | None, output_dir: str, log_level: str
) -> int:
    """Worker-process entry: one scenario, one output directory."""
    setup_logging(log_level)
    try:
        scenario = load_scenario(config)
    except InvalidInputError as exc:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        write_error(Path(output_dir), EXIT_INVALID_INPUT, exc)
        return EXIT_INVALID_INPUT
    if solver is not None:
        scenario = replace(scenario, solver=solver)
    return run(solve_command(scenario.solver), scenario, output_dir)


async def run_batch(
    configs: Sequence[str | Path],
    output_root: str | Path,
    solver: SolverKind | None = None,
    timeout: float = DEFAULT_BATCH_TIMEOUT,
    workers: int | None = None,
    log_level: str = "INFO",
) -> dict[str, int]:
    """
    Solve several scenario files concurrently, one worker process per solve.

    Each scenario writes to `output_root/<config stem>` with the solver named
    in its file, unless `solver` forces one. A job exceeding `timeout` seconds
    is reported with exit code 4.
    """
    output_root = Path(output_root)
    loop = asyncio.get_running_loop()
    executor = ProcessPoolExecutor(max_workers=workers)

    async def _run_job(config: Path) -> int:
        output_dir = output_root / config.stem
        try:
            async with async_timeout.timeout(timeout):
                return await loop.run_in_executor(
                    executor,
                    _batch_job,
                    str(config),
                    solver,
                    str(output_dir),
                    log_level,
                )
        except asyncio.TimeoutError:
            _LOGGER.warning(
                "[%s] Timeout after %.0f s solving '%s'", config.stem, timeout, config
            )
            output_dir.mkdir(parents=True, exist_ok=True)
            write_error(
                output_dir,
                EXIT_NUMERIC_FAILURE,
                TimeoutError(f"No result after {timeout:.0f} s"),
            )
            return EXIT_NUMERIC_FAILURE

    paths = [Path(config) for config in configs]
    try:
        codes = await asyncio.gather(*(_run_job(path) for path in paths))
    finally:
        executor.shutdown(wait=False, cancel_futures=True)
    results = {path.stem: code for path, code in zip(paths, codes)}
    write_json(output_root / "batch.json", results)
    return results


def _parse_settings(items: Sequence[str]) -> dict[str, float]:
    settings = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip().lower()
        if not sep or key not in CONFIG_OVERRIDES:
            raise InvalidInputError(f"Bad setting '{item}', expected KEY=value")
        try:
            settings[key] = float(raw)
        except ValueError:
            raise InvalidInputError(f"Bad value in setting '{item}'")
    return settings


def scenario_from_args(args: argparse.Namespace) -> Scenario | None:
    """Scenario from --config or --preset/--v0, with --set overrides applied."""
    if args.config:
        scenario = load_scenario(args.config)
    elif args.preset:
        if args.v0 is None:
            raise InvalidInputError("--preset needs --v0")
        scenario = preset(args.preset, args.v0)
    else:
        return None
    if args.solver:
        scenario = replace(scenario, solver=args.solver)
    settings = _parse_settings(args.set or ())
    return scenario.with_overrides(**settings) if settings else scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rocketmintime",
        description="Minimum-time attitude and orbit maneuvers of a rocket",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument(
        "configs", nargs="*", help="scenario files (KEY=value) for 'batch'"
    )
    parser.add_argument("--preset", choices=PRESETS, help="reference terminal set")
    parser.add_argument("--v0", type=float, help="initial speed (m/s)")
    parser.add_argument("--config", help="scenario file (KEY=value)")
    parser.add_argument(
        "--solver",
        choices=("indirect", "direct"),
        help="solver for 'batch' (default: taken from the scenario)",
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a tolerance or parameter (repeatable)",
    )
    parser.add_argument("--out", default=DEFAULT_OUTPUT_DIR, help="output directory")
    parser.add_argument("--trajectory", help="trajectory.csv for 'analyze'")
    parser.add_argument(
        "--timeout",
        type=float,
        default=DEFAULT_BATCH_TIMEOUT,
        help="seconds per scenario in 'batch'",
    )
    parser.add_argument("--workers", type=int, help="worker processes in 'batch'")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.command == "batch":
        if not args.configs:
            _LOGGER.error("[batch] No scenario files given")
            return EXIT_INVALID_INPUT
        results = asyncio.run(
            run_batch(
                args.configs,
                args.out,
                solver=args.solver,
                timeout=args.timeout,
                workers=args.workers,
                log_level=args.log_level,
            )
        )
        return max(results.values(), default=EXIT_OK)

    try:
        scenario = scenario_from_args(args)
    except InvalidInputError as exc:
        _LOGGER.error("[%s] Invalid input: %s", args.command, exc)
        output_dir = Path(args.out)
        output_dir.mkdir(parents=True, exist_ok=True)
        write_error(output_dir, EXIT_INVALID_INPUT, exc)
        return EXIT_INVALID_INPUT
    if scenario is not None and args.command in ("solve-indirect", "solve-direct"):
        solver: SolverKind = "direct" if args.command == "solve-direct" else "indirect"
        scenario = replace(scenario, solver=solver)
    return run(args.command, scenario, args.out, trajectory=args.trajectory)
