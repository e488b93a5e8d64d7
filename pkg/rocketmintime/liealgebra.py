"""
Lie brackets of the drift with the normalized control fields.

Brackets use the convention [A, B](x) = DB(x)·A(x) - DA(x)·B(x) and are given
for g1~ = d/d(omega_y) and g2~ = d/d(omega_x). The physical fields are
g1 = b_bar g1~ and g2 = -b_bar g2~; brackets are linear in each argument.

The closed forms are derived from the vector fields and checked against a
central-difference oracle. The literature versions of four of them differ
from the derivation; they are kept in `PRINTED_FORMS` for comparison.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from typing import cast

import numpy as np

from rocketmintime.const import (
    BracketId,
    DENOMINATOR_TOL,
    DEFAULT_P0,
    ExtremalPoint,
    IX_OMEGA_X,
    IX_OMEGA_Y,
    IX_PHI,
    IX_PSI,
    IX_THETA,
    RANK_RTOL,
    RocketParams,
    SLICE_ANGLES,
    SLICE_OMEGA,
    SLICE_V,
    STATE_DIM,
    ZERO_BRACKETS,
)
from rocketmintime.dynamics import field_f
from rocketmintime.exceptions import (
    InvalidInputError,
    NumericError,
    SingularConstructionError,
)
from rocketmintime.frames import check_euler_singularity, thrust_axis

_LOGGER = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]
_ClosedForm = Callable[[np.ndarray, float], np.ndarray]

SPAN_BRACKETS: tuple[BracketId, ...] = (
    "g1",
    "g2",
    "adf_g1",
    "adf_g2",
    "ad2f_g1",
    "ad2f_g2",
)
# Brackets whose pairing with p vanishes on the singular surface
SINGULAR_SURFACE_BRACKETS = SPAN_BRACKETS


class _Trig:
    """Trigonometric terms shared by the closed forms."""

    def __init__(self, x: np.ndarray):
        theta, psi, phi = x[IX_THETA], x[IX_PSI], x[IX_PHI]
        check_euler_singularity(psi)
        self.st, self.ct = math.sin(theta), math.cos(theta)
        self.sp, self.cp, self.tp = math.sin(psi), math.cos(psi), math.tan(psi)
        self.sf, self.cf = math.sin(phi), math.cos(phi)
        self.wx, self.wy = x[IX_OMEGA_X], x[IX_OMEGA_Y]
        self.omega_1 = self.wx * self.cf - self.wy * self.sf
        self.omega_2 = self.wx * self.sf + self.wy * self.cf
        self.w2 = self.wx**2 + self.wy**2

    @property
    def r1(self) -> np.ndarray:
        """First row of L_bR."""
        return np.array(
            [
                self.ct * self.cf + self.st * self.sp * self.sf,
                self.cp * self.sf,
                -self.st * self.cf + self.ct * self.sp * self.sf,
            ]
        )

    @property
    def r2(self) -> np.ndarray:
        """Second row of L_bR."""
        return np.array(
            [
                -self.ct * self.sf + self.st * self.sp * self.cf,
                self.cp * self.cf,
                self.st * self.sf + self.ct * self.sp * self.cf,
            ]
        )

    @property
    def r3(self) -> np.ndarray:
        """Third row of L_bR (thrust axis)."""
        return np.array([self.st * self.cp, -self.sp, self.ct * self.cp])


def _field(
    v: np.ndarray | None = None,
    angles: tuple[float, float, float] | None = None,
    omega: tuple[float, float] | None = None,
) -> np.ndarray:
    out = np.zeros(STATE_DIM)
    if v is not None:
        out[SLICE_V] = v
    if angles is not None:
        out[SLICE_ANGLES] = angles
    if omega is not None:
        out[SLICE_OMEGA] = omega
    return out


def _zero(x: np.ndarray, a: float) -> np.ndarray:
    return np.zeros(STATE_DIM)


def _g1(x: np.ndarray, a: float) -> np.ndarray:
    return _field(omega=(0.0, 1.0))


def _g2(x: np.ndarray, a: float) -> np.ndarray:
    return _field(omega=(1.0, 0.0))


def _adf_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(angles=(-t.cf / t.cp, t.sf, -t.tp * t.cf))


def _adf_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(angles=(-t.sf / t.cp, -t.cf, -t.tp * t.sf))


def _ad2f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(v=a * t.r1, angles=(0.0, 0.0, -t.wx))


def _ad2f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(v=-a * t.r2, angles=(0.0, 0.0, t.wy))


def _ad3f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=-a * t.wy * t.r3,
        angles=(
            t.wx * t.omega_1 / t.cp,
            -t.wx * t.omega_2,
            t.wx * t.tp * t.omega_1,
        ),
    )


def _ad3f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=-a * t.wx * t.r3,
        angles=(
            -t.wy * t.omega_1 / t.cp,
            t.wy * t.omega_2,
            -t.wy * t.tp * t.omega_1,
        ),
    )


def _ad4f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(v=-a * t.w2 * t.r1, angles=(0.0, 0.0, t.wx * t.w2))


def _ad4f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(v=a * t.w2 * t.r2, angles=(0.0, 0.0, -t.wy * t.w2))


def _g1_ad2f_g2(x: np.ndarray, a: float) -> np.ndarray:
    return _field(angles=(0.0, 0.0, 1.0))


def _g2_ad2f_g1(x: np.ndarray, a: float) -> np.ndarray:
    return _field(angles=(0.0, 0.0, -1.0))


def _g1_ad3f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=-a * t.r3,
        angles=(-t.wx * t.sf / t.cp, -t.wx * t.cf, -t.wx * t.sf * t.tp),
    )


def _g2_ad3f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=-a * t.r3,
        angles=(-t.wy * t.cf / t.cp, t.wy * t.sf, -t.wy * t.cf * t.tp),
    )


def _g1_ad3f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    inner = t.omega_1 - t.wy * t.sf
    return _field(angles=(-inner / t.cp, t.omega_2 + t.wy * t.cf, -t.tp * inner))


def _g2_ad3f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    inner = t.omega_1 + t.wx * t.cf
    return _field(angles=(inner / t.cp, -(t.omega_2 + t.wx * t.sf), t.tp * inner))


def _printed_ad2f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    r1 = t.r1
    r1[1] = 0.0
    return _field(v=a * r1, angles=(0.0, 0.0, -t.wx))


def _printed_ad3f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=-a * t.wx * t.r3,
        angles=(
            -t.wy * t.omega_1 / t.cp,
            t.wx * t.omega_2,
            -t.wx * t.tp * t.omega_1,
        ),
    )


def _printed_g1_ad3f_g2(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=2.0 * a * t.wy * t.r2,
        angles=(0.0, 0.0, -(t.wx**2) - 3.0 * t.wy**2),
    )


def _printed_g2_ad3f_g1(x: np.ndarray, a: float) -> np.ndarray:
    t = _Trig(x)
    return _field(
        v=-2.0 * a * t.wx * t.r1,
        angles=(0.0, 0.0, 3.0 * t.wx**2 + t.wy**2),
    )


CLOSED_FORMS: dict[BracketId, _ClosedForm] = {
    "g1": _g1,
    "g2": _g2,
    "adf_g1": _adf_g1,
    "adf_g2": _adf_g2,
    "ad2f_g1": _ad2f_g1,
    "ad2f_g2": _ad2f_g2,
    "ad3f_g1": _ad3f_g1,
    "ad3f_g2": _ad3f_g2,
    "ad4f_g1": _ad4f_g1,
    "ad4f_g2": _ad4f_g2,
    "g1_ad2f_g2": _g1_ad2f_g2,
    "g2_ad2f_g1": _g2_ad2f_g1,
    "g1_ad3f_g1": _g1_ad3f_g1,
    "g1_ad3f_g2": _g1_ad3f_g2,
    "g2_ad3f_g1": _g2_ad3f_g1,
    "g2_ad3f_g2": _g2_ad3f_g2,
    **{bracket_id: _zero for bracket_id in ZERO_BRACKETS},
}
PRINTED_FORMS: dict[BracketId, _ClosedForm] = {
    **CLOSED_FORMS,
    "ad2f_g1": _printed_ad2f_g1,
    "ad3f_g2": _printed_ad3f_g2,
    "g1_ad3f_g2": _printed_g1_ad3f_g2,
    "g2_ad3f_g1": _printed_g2_ad3f_g1,
}
PRINTED_FORM_DEVIATIONS = frozenset(
    bracket_id
    for bracket_id, form in PRINTED_FORMS.items()
    if form is not CLOSED_FORMS[bracket_id]
)


def bracket(
    bracket_id: BracketId,
    x: np.ndarray,
    params: RocketParams,
    *,
    printed: bool = False,
) -> np.ndarray:
    """Evaluate a closed-form bracket of the normalized fields at state x."""
    forms = PRINTED_FORMS if printed else CLOSED_FORMS
    try:
        form = forms[bracket_id]
    except KeyError:
        raise InvalidInputError(f"Unknown bracket id '{bracket_id}'")
    return form(np.asarray(x, dtype=float), params.a)


def bracket_field(
    bracket_id: BracketId, params: RocketParams, *, printed: bool = False
) -> VectorField:
    """Vector-field handle x -> bracket(bracket_id, x)."""
    return lambda x: bracket(bracket_id, x, params, printed=printed)


def bracket_fd(
    vf_a: VectorField, vf_b: VectorField, x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """
    Finite-difference oracle for [A, B](x) = DB(x)·A(x) - DA(x)·B(x).

    Each Jacobian-vector product is a central difference along the other field.
    """
    if not 1e-7 <= h <= 1e-3:
        raise InvalidInputError(f"Finite-difference step {h} outside [1e-7, 1e-3]")
    x = np.asarray(x, dtype=float)
    a_x, b_x = vf_a(x), vf_b(x)
    db_a = (vf_b(x + h * a_x) - vf_b(x - h * a_x)) / (2.0 * h)
    da_b = (vf_a(x + h * b_x) - vf_a(x - h * b_x)) / (2.0 * h)
    result = db_a - da_b
    if not np.all(np.isfinite(result)):
        raise NumericError(f"Non-finite bracket estimate at x={x}")
    return result


def numerical_rank(vectors: Sequence[np.ndarray], rtol: float = RANK_RTOL) -> int:
    """Rank from singular values above rtol times the largest one."""
    singular_values = np.linalg.svd(np.asarray(vectors, dtype=float), compute_uv=False)
    if not singular_values.size or singular_values[0] == 0.0:
        return 0
    return int(np.sum(singular_values > rtol * singular_values[0]))


def span_rank_6(x: np.ndarray, params: RocketParams) -> int:
    """Dimension of span(g1~, g2~, ad f.g1~, ad f.g2~, ad² f.g1~, ad² f.g2~)."""
    return numerical_rank([bracket(b_id, x, params) for b_id in SPAN_BRACKETS])


def glcc_margin(x: np.ndarray, params: RocketParams) -> float:
    """a + <g, thrust axis>: positive where singular arcs satisfy the GLCC."""
    return params.a + float(np.dot(params.g, thrust_axis(x[IX_THETA], x[IX_PSI])))


def singular_surface_point(
    theta: float,
    psi: float,
    phi: float,
    v: np.ndarray,
    params: RocketParams,
    p0: float = DEFAULT_P0,
) -> ExtremalPoint:
    """
    Point of the singular surface S at the given attitude and velocity.

    Rates and attitude costates vanish and p_v is aligned with the thrust axis,
    p_v = -p0 / (a + <g, thrust axis>) · thrust axis, so that H = 0 with u = 0.
    """
    if not p0 < 0:
        raise InvalidInputError(f"Singular surface needs p0 < 0, got {p0}")
    check_euler_singularity(psi)
    x = np.zeros(STATE_DIM)
    x[SLICE_V] = v
    x[SLICE_ANGLES] = (theta, psi, phi)
    denominator = glcc_margin(x, params)
    if abs(denominator) < DENOMINATOR_TOL:
        raise SingularConstructionError(
            f"Thrust exactly balances gravity along the body axis at "
            f"theta={theta}, psi={psi}"
        )
    p = np.zeros(STATE_DIM)
    p[SLICE_V] = -p0 / denominator * thrust_axis(theta, psi)
    return ExtremalPoint(x=x, p=p, p0=p0)


def singular_distance(z: ExtremalPoint) -> float:
    """Euclidean distance-like measure of z to the singular surface S."""
    x, p = z.x, z.p
    theta, psi = x[IX_THETA], x[IX_PSI]
    p_vx, p_vy, p_vz = p[SLICE_V]
    return float(
        np.linalg.norm(
            (
                *x[SLICE_OMEGA],
                *p[SLICE_ANGLES],
                *p[SLICE_OMEGA],
                p_vx - math.tan(theta) * p_vz,
                p_vy + math.tan(psi) / math.cos(theta) * p_vz,
            )
        )
    )


def pairing(bracket_id: BracketId, z: ExtremalPoint, params: RocketParams) -> float:
    """<p, bracket(x)>."""
    return float(np.dot(z.p, bracket(bracket_id, z.x, params)))


def singular_constraints(z: ExtremalPoint, params: RocketParams) -> np.ndarray:
    """The six pairings vanishing along singular arcs (they define S)."""
    return np.array([pairing(b_id, z, params) for b_id in SINGULAR_SURFACE_BRACKETS])


def printed_form_mismatches(
    states: Sequence[np.ndarray], params: RocketParams, tol: float = 1e-5
) -> dict[BracketId, float]:
    """
    Compare every printed closed form with the finite-difference oracle.

    Returns the max-norm discrepancy of the printed forms that disagree.
    """
    mismatches: dict[BracketId, float] = {}
    for bracket_id in PRINTED_FORMS:
        oracle = _oracle_for(bracket_id, params)
        if oracle is None:
            continue
        worst = max(
            float(
                np.max(
                    np.abs(bracket(bracket_id, x, params, printed=True) - oracle(x))
                )
            )
            for x in states
        )
        if worst > tol:
            mismatches[bracket_id] = worst
    if mismatches:
        _LOGGER.warning(
            "[brackets] Printed forms disagreeing with the oracle: %s",
            ", ".join(f"{key} ({value:.2e})" for key, value in mismatches.items()),
        )
    return mismatches


def drift_field(params: RocketParams) -> VectorField:
    """Vector-field handle of the drift f."""
    return lambda x: field_f(x, params)


def bracket_operands(
    bracket_id: BracketId, params: RocketParams
) -> tuple[VectorField, VectorField] | None:
    """
    Operands (A, B) with bracket_id = [A, B], built from the derived forms.

    Returns None for the constant fields g1 and g2.
    """
    if bracket_id in ("g1", "g2"):
        return None
    head, _, tail = bracket_id.partition("_")
    if head == "adf":
        return drift_field(params), bracket_field(cast(BracketId, tail), params)
    if head.startswith("ad"):
        order = int(head[2])
        inner = f"adf_{tail}" if order == 2 else f"ad{order - 1}f_{tail}"
        return drift_field(params), bracket_field(cast(BracketId, inner), params)
    return (
        bracket_field(cast(BracketId, head), params),
        bracket_field(cast(BracketId, tail), params),
    )


def _oracle_for(bracket_id: BracketId, params: RocketParams) -> VectorField | None:
    operands = bracket_operands(bracket_id, params)
    if operands is None:
        return None
    vf_a, vf_b = operands
    return lambda x: bracket_fd(vf_a, vf_b, x)
