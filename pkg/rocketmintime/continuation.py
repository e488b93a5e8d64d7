"""
Predictor-corrector continuation from the order-zero problem to the
minimum-time problem.

Stage 1 continues on the initial attitude (lambda1), stage 2 on the final
attitude (lambda2) and stage 3 on the control law (lambda3). Predictions are
Lagrange polynomials through the last converged roots, corrections are
`nlsolve.solve` runs on the shooting residual. A stage-3 stall keeps the
last converged solution as a sub-optimal answer.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import BarycentricInterpolator

from rocketmintime.const import (
    ContinuationConfig,
    ControlLaw,
    RocketParams,
    SLICE_ANGLES,
    SLICE_OMEGA,
    SLICE_V,
    Stage,
    TerminalSpec,
)
from rocketmintime.exceptions import (
    ChatteringSuspectedError,
    ContinuationStallError,
    InvalidInputError,
    RocketMinTimeError,
    ShootingError,
)
from rocketmintime.frames import thrust_axis
from rocketmintime.liealgebra import singular_distance
from rocketmintime.nlsolve import SolveReport, solve
from rocketmintime.ocp0 import Ocp0Solution, embed_extremal, solve_ocp0
from rocketmintime.odeint import (
    ChatteringReport,
    ExtremalTrajectory,
    detect_chattering,
)
from rocketmintime.shooting import (
    EndpointValues,
    ShootingUnknowns,
    StageContext,
    initial_state_lambda1,
    integrate_unknowns,
    shooting_residual,
    unknowns_from_ocp0,
)

_LOGGER = logging.getLogger(__name__)

_TRIVIAL_TOL = 1e-12
_COST_GRID = 4001

ProgressCallback = Callable[[dict[str, Any]], None]


@dataclass
class ContinuationStep:
    """A converged root of the shooting equations at (stage, lambda)."""

    stage: Stage
    lam: float
    unknowns: ShootingUnknowns
    report: SolveReport


@dataclass
class StallInfo:
    """Where and why the continuation stopped short of lambda = 1."""

    stage: Stage
    lam_star: float
    step: float
    reason: str
    t_accumulation: float | None = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "lambda_star": self.lam_star,
            "step": self.step,
            "reason": self.reason,
            "t_accumulation": self.t_accumulation,
        }


@dataclass
class StepDecision:
    """Next continuation step, or a stall when the floor is crossed."""

    step: float
    stall: bool = False


@dataclass
class ContinuationRun:
    """Converged roots of every stage, plus the stall record if any."""

    sol0: Ocp0Solution | None = None
    contexts: dict[int, StageContext] = field(default_factory=dict)
    steps: dict[int, list[ContinuationStep]] = field(
        default_factory=lambda: {1: [], 2: [], 3: []}
    )
    endpoint: EndpointValues | None = None
    stall: StallInfo | None = None

    def last(self, stage: Stage) -> ContinuationStep | None:
        return self.steps[stage][-1] if self.steps[stage] else None

    def lambdas(self, stage: Stage) -> list[float]:
        return [step.lam for step in self.steps[stage]]


@dataclass
class SuboptimalSolution:
    """Solution kept at lambda3* < 1 and its control regularity figures."""

    trajectory: ExtremalTrajectory
    lambda3_star: float
    t_f: float
    cost: float
    max_control_jump: float
    lipschitz_estimate: float
    sample_step: float


@dataclass
class PipelineResult:
    """Outcome of the three-stage continuation."""

    spec: TerminalSpec
    params: RocketParams
    run: ContinuationRun
    trajectory: ExtremalTrajectory
    unknowns: ShootingUnknowns
    law: ControlLaw
    t_f: float
    cost: float
    residual_norm: float
    lambda3_star: float | None
    chattering: ChatteringReport
    suboptimal: SuboptimalSolution | None = None

    @property
    def reached_min_time(self) -> bool:
        return self.lambda3_star is None


def predict(
    history: Sequence[tuple[float, ShootingUnknowns]], lam_next: float
) -> ShootingUnknowns:
    """Lagrange extrapolation of degree min(3, len - 1) of the last roots."""
    assert history, "prediction needs at least one converged root"
    degree = min(3, len(history) - 1)
    points = history[-(degree + 1) :]
    if degree == 0:
        return points[0][1]
    lams = np.array([lam for lam, _ in points])
    values = np.array([unknowns.to_vector(1.0) for _, unknowns in points])
    predicted = BarycentricInterpolator(lams, values)(lam_next)
    return ShootingUnknowns.from_vector(np.asarray(predicted).ravel(), 1.0)


def adapt_step(success: bool, step: float, cfg: ContinuationConfig) -> StepDecision:
    """Grow the step after a success, halve it after a failure."""
    if success:
        return StepDecision(step=min(step * cfg.step_grow, cfg.step_max))
    shrunk = step * cfg.step_shrink
    return StepDecision(step=shrunk, stall=shrunk < cfg.step_min)


class _StageStalled(Exception):
    """A stage could not progress below the minimum step."""

    def __init__(self, stall: StallInfo):
        super().__init__(stall.reason)
        self.stall = stall


class _Corrector:
    """Shooting residual at a fixed context, NaN on integration failures."""

    def __init__(
        self,
        ctx: StageContext,
        params: RocketParams,
        cfg: ContinuationConfig,
    ):
        self.ctx = ctx
        self.params = params
        self.cfg = cfg
        self.last_error: ShootingError | None = None

    def __call__(self, vector: np.ndarray) -> np.ndarray:
        unknowns = ShootingUnknowns.from_vector(vector, self.cfg.tf_scale)
        try:
            return shooting_residual(
                unknowns, self.ctx, self.params, self.cfg.integrator
            )
        except ShootingError as exc:
            self.last_error = exc
            return np.full(len(vector), np.nan)

    def solve(self, guess: ShootingUnknowns) -> tuple[ShootingUnknowns, SolveReport]:
        report = solve(
            self,
            guess.to_vector(self.cfg.tf_scale),
            tol=self.cfg.tol,
            max_iter=self.cfg.max_iter,
            workers=self.cfg.workers,
            rel_step=self.cfg.fd_rel_step,
            restarts=self.cfg.solver_restarts,
            newton_steps=self.cfg.newton_steps,
        )
        return ShootingUnknowns.from_vector(report.root, self.cfg.tf_scale), report

    @property
    def t_accumulation(self) -> float | None:
        cause = self.last_error.__cause__ if self.last_error else None
        if isinstance(cause, ChatteringSuspectedError):
            return cause.t_accumulation
        return None


def _emit(progress: ProgressCallback | None, record: dict[str, Any]) -> None:
    if progress is not None:
        progress(record)


def _run_stage(
    ctx: StageContext,
    seed: ShootingUnknowns,
    params: RocketParams,
    cfg: ContinuationConfig,
    progress: ProgressCallback | None,
    trivial: bool = False,
) -> list[ContinuationStep]:
    steps: list[ContinuationStep] = []
    tag = f"stage {ctx.stage}"
    t_accumulation: float | None = None

    def attempt(lam: float, guess: ShootingUnknowns, step: float) -> bool:
        nonlocal t_accumulation
        corrector = _Corrector(ctx.at(lam), params, cfg)
        unknowns, report = corrector.solve(guess)
        accepted = report.converged and unknowns.t_f > 0
        _emit(
            progress,
            {
                "stage": ctx.stage,
                "lambda": lam,
                "step": step,
                "iterations": report.iterations,
                "residual_norm": report.residual_norm,
                "status": report.status,
                "accepted": accepted,
                "t_f": unknowns.t_f,
            },
        )
        if accepted:
            steps.append(ContinuationStep(ctx.stage, lam, unknowns, report))
            _LOGGER.info(
                "[%s λ=%.4f] t_f=%.4f s after %d evaluations, |F|=%.2e",
                tag,
                lam,
                unknowns.t_f,
                report.iterations,
                report.residual_norm,
            )
        else:
            t_accumulation = corrector.t_accumulation
            _LOGGER.warning(
                "[%s λ=%.4f] corrector %s (|F|=%.2e), step %.2e rejected",
                tag,
                lam,
                report.status,
                report.residual_norm,
                step,
            )
        return accepted

    if trivial:
        _LOGGER.info("[%s] start and end data coincide, single step", tag)
        if not attempt(1.0, seed, 1.0):
            raise _StageStalled(
                StallInfo(ctx.stage, 0.0, 1.0, "corrector failed on trivial stage")
            )
        return steps

    if not attempt(0.0, seed, 0.0):
        raise _StageStalled(
            StallInfo(
                ctx.stage,
                0.0,
                0.0,
                "corrector failed at lambda = 0",
                t_accumulation,
            )
        )
    lam, step = 0.0, cfg.initial_step
    while lam < 1.0:
        lam_next = min(1.0, lam + step)
        history = [(s.lam, s.unknowns) for s in steps[-cfg.history :]]
        if attempt(lam_next, predict(history, lam_next), step):
            lam = lam_next
            step = adapt_step(True, step, cfg).step
            continue
        decision = adapt_step(False, step, cfg)
        if decision.stall:
            raise _StageStalled(
                StallInfo(
                    ctx.stage,
                    lam,
                    step,
                    f"step {decision.step:.2e} below floor {cfg.step_min:.1e}",
                    t_accumulation,
                )
            )
        step = decision.step
    return steps


def _trajectory_cost(traj: ExtremalTrajectory) -> float:
    """t_f + energy weight times the integral of |u|²."""
    t_f = traj.t1 - traj.t0
    weight = traj.law.energy_weight
    if not weight:
        return t_f
    times = np.union1d(np.linspace(traj.t0, traj.t1, _COST_GRID), traj.step_times)
    samples = traj.sample(times)
    return t_f + weight * float(trapezoid(np.sum(samples.u**2, axis=1), samples.t))


def control_regularity(
    traj: ExtremalTrajectory, cadence: float
) -> tuple[float, float, float]:
    """Max jump between adjacent control samples, jump/dt and the sample step."""
    samples = traj.sample(traj.sample_grid(cadence, include_events=False))
    jumps = np.linalg.norm(np.diff(samples.u, axis=0), axis=1)
    steps = np.diff(samples.t)
    if not len(jumps):
        return 0.0, 0.0, 0.0
    return (
        float(np.max(jumps)),
        float(np.max(jumps / steps)),
        float(np.max(steps)),
    )


def extract_suboptimal(
    run: ContinuationRun, params: RocketParams, cfg: ContinuationConfig
) -> SuboptimalSolution:
    """Last converged stage-3 solution, with cost and control continuity figures."""
    assert run.stall is not None and run.stall.stage == 3, run.stall
    ctx = run.contexts[3]
    last = run.last(3)
    if last is None:
        source = run.last(2)
        assert source is not None
        lam_star, unknowns = 0.0, source.unknowns
    else:
        lam_star, unknowns = last.lam, last.unknowns
    traj = integrate_unknowns(
        unknowns, ctx.at(lam_star), params, cfg.integrator, detect_events=True
    )
    max_jump, lipschitz, sample_step = control_regularity(traj, cfg.output_cadence)
    cost = _trajectory_cost(traj)
    _LOGGER.info(
        "[stage 3] sub-optimal solution at λ3*=%.4f: t_f=%.4f s, cost=%.4f, "
        "max control jump %.3e over %.3f s",
        lam_star,
        unknowns.t_f,
        cost,
        max_jump,
        sample_step,
    )
    return SuboptimalSolution(
        trajectory=traj,
        lambda3_star=lam_star,
        t_f=unknowns.t_f,
        cost=cost,
        max_control_jump=max_jump,
        lipschitz_estimate=lipschitz,
        sample_step=sample_step,
    )


def _attitude(x: np.ndarray) -> np.ndarray:
    return np.concatenate((x[SLICE_ANGLES], x[SLICE_OMEGA]))


def solve_seed(spec: TerminalSpec, params: RocketParams) -> Ocp0Solution:
    """OCP0 solution steering the initial velocity onto the final body axis."""
    w = thrust_axis(spec.theta_f, spec.psi_f)
    sol0 = solve_ocp0(spec.x0[SLICE_V], w, params.a, params.g)
    if sol0.zero_time:
        raise InvalidInputError(
            "Initial velocity already along the final body axis: zero-time seed"
        )
    embed_extremal(sol0, 0.0, params)
    return sol0


def run_pipeline(
    spec: TerminalSpec,
    params: RocketParams,
    cfg: ContinuationConfig | None = None,
    progress: ProgressCallback | None = None,
) -> PipelineResult:
    """
    Chain OCP0 -> lambda1 -> lambda2 -> lambda3.

    Stalls of stages 1 and 2 raise `ContinuationStallError`. A stage-3 stall
    returns the sub-optimal solution at lambda3* with `lambda3_star` set.
    """
    cfg = cfg or ContinuationConfig()
    run = ContinuationRun()
    run.sol0 = sol0 = solve_seed(spec, params)
    _LOGGER.info(
        "[ocp0] t_f=%.4f s, theta*=%.3f deg, psi*=%.3f deg",
        sol0.t_f,
        math.degrees(sol0.theta_star),
        math.degrees(sol0.psi_star),
    )

    try:
        ctx1 = StageContext(1, 0.0, cfg.gamma, spec, sol0=sol0)
        run.contexts[1] = ctx1
        trivial1 = np.allclose(
            _attitude(initial_state_lambda1(0.0, sol0, spec)),
            _attitude(spec.x0),
            rtol=0.0,
            atol=_TRIVIAL_TOL,
        )
        run.steps[1] = _run_stage(
            ctx1, unknowns_from_ocp0(sol0, spec), params, cfg, progress, trivial1
        )
        root1 = run.steps[1][-1]
        end1 = integrate_unknowns(
            root1.unknowns, ctx1.at(1.0), params, cfg.integrator
        )
        run.endpoint = EndpointValues.from_state(end1.final.x)

        ctx2 = StageContext(2, 0.0, cfg.gamma, spec, endpoint=run.endpoint)
        run.contexts[2] = ctx2
        trivial2 = np.allclose(
            run.endpoint.as_tuple(), spec.targets, rtol=0.0, atol=_TRIVIAL_TOL
        )
        run.steps[2] = _run_stage(
            ctx2, root1.unknowns, params, cfg, progress, trivial2
        )
    except _StageStalled as exc:
        run.stall = exc.stall
        raise ContinuationStallError(
            f"Continuation stalled in stage {exc.stall.stage} at "
            f"λ={exc.stall.lam_star:.6f}: {exc.stall.reason}",
            stall=exc.stall,
        )

    ctx3 = StageContext(3, 0.0, cfg.gamma, spec, endpoint=run.endpoint)
    run.contexts[3] = ctx3
    try:
        run.steps[3] = _run_stage(
            ctx3, run.steps[2][-1].unknowns, params, cfg, progress
        )
    except _StageStalled as exc:
        run.stall = exc.stall
        _LOGGER.warning(
            "[stage 3] stalled at λ3*=%.4f (%s)", exc.stall.lam_star, exc.stall.reason
        )
        sub = extract_suboptimal(run, params, cfg)
        last = run.last(3) or run.last(2)
        return PipelineResult(
            spec=spec,
            params=params,
            run=run,
            trajectory=sub.trajectory,
            unknowns=last.unknowns,
            law=sub.trajectory.law,
            t_f=sub.t_f,
            cost=sub.cost,
            residual_norm=last.report.residual_norm,
            lambda3_star=sub.lambda3_star,
            chattering=detect_chattering(sub.trajectory),
            suboptimal=sub,
        )

    final = run.steps[3][-1]
    law = ControlLaw.min_time()
    try:
        traj = integrate_unknowns(
            final.unknowns,
            ctx3.at(1.0),
            params,
            cfg.integrator,
            detect_events=True,
            law=law,
        )
    except ShootingError as exc:
        _LOGGER.warning(
            "[stage 3] min-time law integration failed (%s), keeping blended law", exc
        )
        law = ctx3.at(1.0).law
        traj = integrate_unknowns(
            final.unknowns, ctx3.at(1.0), params, cfg.integrator, detect_events=True
        )
    chattering = detect_chattering(traj)
    if chattering.flagged:
        _LOGGER.warning(
            "[stage 3] switching times accumulate near t=%.4f s",
            chattering.t_accumulation,
        )
    _LOGGER.info(
        "[stage 3] min-time solution: t_f=%.4f s, %d switches, singular distance "
        "at t_f %.2e",
        final.unknowns.t_f,
        len(traj.events),
        singular_distance(traj.final),
    )
    return PipelineResult(
        spec=spec,
        params=params,
        run=run,
        trajectory=traj,
        unknowns=final.unknowns,
        law=law,
        t_f=final.unknowns.t_f,
        cost=final.unknowns.t_f,
        residual_norm=final.report.residual_norm,
        lambda3_star=None,
        chattering=chattering,
    )


def reevaluate_residual(
    step: ContinuationStep,
    run: ContinuationRun,
    params: RocketParams,
    cfg: ContinuationConfig,
) -> float:
    """Sup norm of the shooting residual recomputed at a stored root."""
    ctx = run.contexts[step.stage].at(step.lam)
    try:
        residual = shooting_residual(step.unknowns, ctx, params, cfg.integrator)
    except RocketMinTimeError:
        return math.inf
    return float(np.max(np.abs(residual)))
