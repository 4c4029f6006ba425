"""Numerical check of the viscosity sub- and supersolution inequalities.

At a grid node the candidate jet (b, p, A) comes from a forward time difference
and central space differences. It is kept as a superjet (resp. subjet) when the
field lies below (resp. above) the quadratic on the discrete neighbourhood, up to
η(|s| + y²). The residual b + Lf is then evaluated on a test function equal to the
quadratic near the base and to the field itself away from it.
"""

import logging
import math
import sys
from collections.abc import Callable, Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import VerificationError
from .models import FloatArray, ModelParams
from .pide_solver import BoundaryData, Grid, SolutionField, jump_integral

logger = logging.getLogger(__name__)

EPS = sys.float_info.epsilon
U_REACH = 2


class JetSide(str, Enum):
    """Which jet set a candidate is tested against."""

    SUPER = "super"
    SUB = "sub"


class Jet(BaseModel):
    """Parabolic jet (b, p, A) at the base point (t, u)."""

    model_config = ConfigDict(frozen=True)

    t: float
    u: float
    b: float
    p: float
    A: float

    @field_validator("t", "u", "b", "p", "A")
    @classmethod
    def check_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"jet entries must be finite, got {v}")
        return v

    def quadratic(self, value: float, t: FloatArray | float, u: FloatArray | float) -> FloatArray:
        """value + b(t − t₀) + p(u − u₀) + ½A(u − u₀)²."""
        dt = np.asarray(t, dtype=float) - self.t
        du = np.asarray(u, dtype=float) - self.u
        return np.asarray(value + self.b * dt + self.p * du + 0.5 * self.A * du * du)


def _cutoff(d: FloatArray, r: float, r_outer: float) -> FloatArray:
    """Smooth function equal to 1 for d <= r and 0 for d >= r_outer."""
    s = np.clip((d - r) / (r_outer - r), 0.0, 1.0)

    def g(x: FloatArray) -> FloatArray:
        with np.errstate(divide="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = g(1.0 - s), g(s)
    return np.asarray(a / (a + b))


class TestFunction(BaseModel):
    """Quadratic of the jet glued into the field between radii r and r_outer."""

    __test__ = False
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    jet: Jet
    r: float
    r_outer: float
    field: SolutionField

    @field_validator("r")
    @classmethod
    def check_radius(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"glue radius must be > 0, got {v}")
        return v

    @property
    def base_value(self) -> float:
        return float(self.field.interpolate(self.jet.t, self.jet.u))

    def value(self, t: FloatArray | float, u: FloatArray | float) -> FloatArray:
        tt, uu = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
        outer = self.field.interpolate(tt, uu)
        d = np.hypot(tt - self.jet.t, uu - self.jet.u)
        chi = _cutoff(d, self.r, self.r_outer)
        inner = self.jet.quadratic(self.base_value, tt, uu)
        return np.asarray(outer + chi * (inner - outer))


class PointCheck(BaseModel):
    """Outcome at one sampled node."""

    t: float
    u: float
    residual: float | None = None
    has_superjet: bool = False
    has_subjet: bool = False
    passed: bool = True

    @property
    def empty(self) -> bool:
        return not (self.has_superjet or self.has_subjet)


class VerificationReport(BaseModel):
    """Counts, worst cases and the tolerances used."""

    n_points: int
    n_checked: int
    n_empty: int
    n_passed: int
    n_failed: int
    tolerance: float
    residual_c: float
    eta: float | None
    max_residual: float
    worst_super: PointCheck | None = None
    worst_sub: PointCheck | None = None
    checks: list[PointCheck]

    @property
    def pass_fraction(self) -> float:
        return self.n_passed / self.n_checked if self.n_checked else 1.0

    @property
    def failures(self) -> list[PointCheck]:
        return [c for c in self.checks if not c.passed]


def _node(nodes: FloatArray, x: float) -> int:
    return int(np.abs(nodes - x).argmin())


def _check_interior(grid: Grid, i: int, j: int) -> None:
    if not (1 <= i <= grid.nt - 1 and U_REACH <= j <= grid.nu - U_REACH):
        raise VerificationError(
            f"node (t={grid.t_nodes[i]:.6g}, u={grid.u_nodes[j]:.6g}) lacks a full "
            "finite-difference neighbourhood"
        )


def _candidate(field: SolutionField, i: int, j: int) -> tuple[float, float, float]:
    g, v = field.grid, field.values
    hm = g.u_nodes[j] - g.u_nodes[j - 1]
    hp = g.u_nodes[j + 1] - g.u_nodes[j]
    vm, v0, vp = v[i, j - 1], v[i, j], v[i, j + 1]
    b = (v[i + 1, j] - v0) / (g.t_nodes[i + 1] - g.t_nodes[i])
    p = (hm * hm * vp - hp * hp * vm + (hp * hp - hm * hm) * v0) / (hm * hp * (hm + hp))
    A = 2.0 * ((vp - v0) / hp - (v0 - vm) / hm) / (hm + hp)
    return float(b), float(p), float(A)


def default_eta(field: SolutionField, i: int, j: int, b: float, A: float) -> float:
    """
    Grid-scaled jet tolerance (Δu + Δt)(1 + |A| + |b|), floored at the rounding
    level of the neighbourhood values.
    """
    g = field.grid
    lo, hi = j - U_REACH, j + U_REACH + 1
    h_min = float(np.diff(g.u_nodes[lo:hi]).min())
    du = float(g.u_nodes[j + 1] - g.u_nodes[j - 1]) / 2.0
    scale = float(np.abs(field.values[i : i + 2, lo:hi]).max())
    rounding = 10.0 * EPS * (1.0 + abs(A) + scale / (h_min * h_min))
    return rounding + (du + g.dt) * (1.0 + abs(A) + abs(b))


def fit_jet(
    field: SolutionField, t: float, u: float, side: JetSide, eta: float | None = None
) -> Jet | None:
    """
    Fit a jet at the grid node nearest to (t, u).

    The discrete neighbourhood is the nodes up to two steps away in u at the same
    time, plus the next time node at the same u (jets are one-sided in time).

    Args:
        field: Candidate field
        t: Time of the point
        u: Capital of the point
        side: SUPER tests field ≤ quadratic, SUB tests field ≥ quadratic
        eta: Tolerance factor (default: default_eta)

    Returns:
        The jet, or None when the inequality fails somewhere on the neighbourhood

    Raises:
        VerificationError: If the node is too close to the boundary
    """
    g = field.grid
    i, j = _node(g.t_nodes, t), _node(g.u_nodes, u)
    _check_interior(g, i, j)
    b, p, A = _candidate(field, i, j)
    if not all(math.isfinite(x) for x in (b, p, A)):
        return None
    eta_ = default_eta(field, i, j, b, A) if eta is None else eta

    v0 = field.values[i, j]
    cols = np.arange(j - U_REACH, j + U_REACH + 1)
    y = g.u_nodes[cols] - g.u_nodes[j]
    gap = field.values[i, cols] - (v0 + p * y + 0.5 * A * y * y)
    slack = eta_ * y * y
    s = g.t_nodes[i + 1] - g.t_nodes[i]
    gap = np.append(gap, field.values[i + 1, j] - (v0 + b * s))
    slack = np.append(slack, eta_ * s)

    ok = bool(np.all(gap <= slack)) if side == JetSide.SUPER else bool(np.all(gap >= -slack))
    if not ok:
        return None
    return Jet(t=float(g.t_nodes[i]), u=float(g.u_nodes[j]), b=b, p=p, A=A)


def evaluate_operator_on_test(
    field: SolutionField,
    jet: Jet,
    params: ModelParams,
    r: float | None = None,
    r_outer: float | None = None,
    n_quad: int = 32,
) -> float:
    """
    Residual b + Lf(base) for the test function built from jet and field.

    Drift and diffusion act on (p, A) exactly; the jump terms integrate the
    test function, whose targets at or below 0 take the ruin-side value.

    Args:
        field: Candidate field (the outer part of the test function)
        jet: Jet at the base point
        params: Model parameters
        r: Glue radius (default: twice the local u spacing)
        r_outer: Outer radius (default 2r)
        n_quad: Quadrature nodes per continuous size law
    """
    g = field.grid
    j = _node(g.u_nodes, jet.u)
    if r is None:
        r = float(g.u_nodes[min(j + 1, g.nu)] - g.u_nodes[max(j - 1, 0)])
    test = TestFunction(jet=jet, r=r, r_outer=2.0 * r if r_outer is None else r_outer, field=field)

    R, P = params.R, params.P
    u = jet.u
    diffusion = 0.5 * R.variance * u * u + 0.5 * P.variance
    drift = R.effective_drift * u + P.effective_drift
    local = diffusion * jet.A + drift * jet.p

    ruin_value = field.boundary.ruin_value

    def f(y: FloatArray) -> FloatArray:
        y = np.asarray(y, dtype=float)
        inside = test.value(np.full(y.shape, jet.t), y)
        ruined = y <= 0
        if np.any(ruined):
            return np.where(ruined, ruin_value(np.where(ruined, -y, 0.0)), inside)
        return inside

    jumps = jump_integral(f, u, R, "R", n_quad=n_quad) + jump_integral(f, u, P, "P", n_quad=n_quad)
    return float(jet.b + local + jumps)


def _sample_nodes(
    grid: Grid,
    samples: int,
    seed: int,
    t_range: tuple[float, float] | None,
    u_range: tuple[float, float] | None,
) -> list[tuple[int, int]]:
    rows = np.arange(1, grid.nt)
    cols = np.arange(U_REACH, grid.nu - U_REACH + 1)
    if t_range is not None:
        rows = rows[(grid.t_nodes[rows] >= t_range[0]) & (grid.t_nodes[rows] <= t_range[1])]
    if u_range is not None:
        cols = cols[(grid.u_nodes[cols] >= u_range[0]) & (grid.u_nodes[cols] <= u_range[1])]
    total = rows.size * cols.size
    if total == 0:
        return []
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(samples, total), replace=False)
    return [(int(rows[k // cols.size]), int(cols[k % cols.size])) for k in np.sort(picks)]


def verify_field(
    field: SolutionField,
    params: ModelParams,
    samples: int = 1000,
    tol: float | None = None,
    seed: int = 0,
    residual_c: float = 5.0,
    eta: float | None = None,
    points: Sequence[tuple[float, float]] | None = None,
    t_range: tuple[float, float] | None = None,
    u_range: tuple[float, float] | None = None,
) -> VerificationReport:
    """
    Check the sub/supersolution inequalities at sampled interior nodes.

    A fitted superjet requires residual >= −tol, a fitted subjet residual <= tol.
    Nodes where neither jet fits are counted as empty.

    Args:
        field: Candidate solution
        params: Model parameters
        samples: Number of interior nodes sampled (ignored when points are given)
        tol: Residual tolerance (default residual_c·(Δu_max + Δt))
        seed: Sampling seed
        residual_c: Constant C of the default tolerance
        eta: Jet-fit tolerance factor (default: per-node default_eta)
        points: Explicit (t, u) points, snapped to the nearest node
        t_range: Restrict sampled nodes to this time window
        u_range: Restrict sampled nodes to this capital window

    Returns:
        VerificationReport
    """
    g = field.grid
    tol_ = residual_c * (g.du_max + g.dt) if tol is None else tol
    if points is not None:
        nodes = [(_node(g.t_nodes, t), _node(g.u_nodes, u)) for t, u in points]
    else:
        nodes = _sample_nodes(g, samples, seed, t_range, u_range)

    checks: list[PointCheck] = []
    for i, j in nodes:
        t, u = float(g.t_nodes[i]), float(g.u_nodes[j])
        sup = fit_jet(field, t, u, JetSide.SUPER, eta)
        sub = fit_jet(field, t, u, JetSide.SUB, eta)
        jet = sup or sub
        if jet is None:
            checks.append(PointCheck(t=t, u=u))
            continue
        res = evaluate_operator_on_test(field, jet, params)
        passed = (sup is None or res >= -tol_) and (sub is None or res <= tol_)
        checks.append(
            PointCheck(
                t=t,
                u=u,
                residual=res,
                has_superjet=sup is not None,
                has_subjet=sub is not None,
                passed=passed,
            )
        )

    tested = [c for c in checks if not c.empty]
    supers = [c for c in tested if c.has_superjet]
    subs = [c for c in tested if c.has_subjet]
    n_passed = sum(c.passed for c in tested)
    report = VerificationReport(
        n_points=len(checks),
        n_checked=len(tested),
        n_empty=len(checks) - len(tested),
        n_passed=n_passed,
        n_failed=len(tested) - n_passed,
        tolerance=tol_,
        residual_c=residual_c,
        eta=eta,
        max_residual=max((abs(c.residual or 0.0) for c in tested), default=0.0),
        worst_super=min(supers, key=lambda c: c.residual or 0.0, default=None),
        worst_sub=max(subs, key=lambda c: c.residual or 0.0, default=None),
        checks=checks,
    )
    logger.debug(
        "verified %d nodes: %d passed, %d failed, %d empty",
        report.n_points, report.n_passed, report.n_failed, report.n_empty,
    )
    return report


def analytic_field(
    grid: Grid,
    f: Callable[[FloatArray, FloatArray], FloatArray],
    params: ModelParams,
    ruin_value: Callable[[FloatArray], FloatArray] | None = None,
) -> SolutionField:
    """Wrap a closed form f(t, u) as a SolutionField on grid."""
    tt, uu = np.meshgrid(grid.t_nodes, grid.u_nodes, indexing="ij")
    values = np.asarray(f(tt, uu), dtype=float)
    boundary = BoundaryData(
        terminal=values[-1].copy(),
        lower=values[:, 0].copy(),
        upper=values[:, -1].copy(),
        ruin_value=ruin_value if ruin_value is not None else params.payoff.value_at_ruin,
    )
    return SolutionField(grid=grid, values=values, boundary=boundary, params=params)


def strict_supersolution(field: SolutionField, delta: float) -> SolutionField:
    """
    The field ψ + δ/t; the row t = 0 becomes +inf and is never sampled.

    Raises:
        VerificationError: If delta <= 0
    """
    if delta <= 0:
        raise VerificationError(f"δ must be > 0, got {delta}")
    t = field.grid.t_nodes[:, None]
    with np.errstate(divide="ignore"):
        bump = np.where(t > 0, delta / np.where(t > 0, t, 1.0), np.inf)
    return field.model_copy(update={"values": field.values + bump})
