"""Monotone IMEX finite-difference solver for Ψ_t + LΨ = 0 on [0,T] × [0,U].

The local part (drift and diffusion of both drivers) is treated implicitly with a
tridiagonal matrix; the jump integrals are applied explicitly through a sparse
linear-interpolation matrix. Time is stored as h = T − t and marched forward in h.
"""

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import sparse
from scipy.linalg import solve_banded

from .errors import CFLError, GridError, SolverError, StencilError
from .models import FloatArray, LevyTriplet, ModelParams, PayoffSpec

logger = logging.getLogger(__name__)

RANGE_TOL = 1e-10
MAX_SUBSTEPS = 1000

RuinValue = Callable[[FloatArray], FloatArray]


class Grid(BaseModel):
    """Rectangular (t, u) grid; u_nodes[0] = 0, u_nodes[-1] = U."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u_nodes: FloatArray
    t_nodes: FloatArray
    stretch: float = 0.0
    refinement: int = 0

    @model_validator(mode="after")
    def check_nodes(self) -> "Grid":
        u, t = self.u_nodes, self.t_nodes
        if u.ndim != 1 or u.size < 5:
            raise ValueError(f"need at least 3 interior u nodes, got {max(u.size - 2, 0)}")
        if u[0] != 0.0:
            raise ValueError(f"u grid must start at 0, got {u[0]}")
        if np.any(np.diff(u) <= 0):
            raise ValueError("u nodes must be strictly increasing")
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
            raise ValueError("t grid must start at 0 and have at least one step")
        dt = np.diff(t)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("t nodes must be uniformly spaced with Δt > 0")
        return self

    @classmethod
    def build(
        cls, T: float, nu: int, nt: int, umax: float, stretch: float = 0.0, refinement: int = 0
    ) -> "Grid":
        """
        Build a grid with nu u-intervals and nt t-intervals.

        With stretch > 0 the u nodes are u_j = U·sinh(s·j/nu)/sinh(s), which
        concentrates them towards 0 where the investment diffusion degenerates.

        Raises:
            GridError: On non-positive sizes or too few interior nodes
        """
        if T <= 0 or umax <= 0:
            raise GridError(f"need T > 0 and umax > 0, got T={T}, umax={umax}")
        if nu < 4 or nt < 1:
            raise GridError(f"need nu >= 4 and nt >= 1, got nu={nu}, nt={nt}")
        xi = np.arange(nu + 1) / nu
        if stretch > 0:
            u = umax * np.sinh(stretch * xi) / math.sinh(stretch)
        else:
            u = umax * xi
        u[0], u[-1] = 0.0, umax
        t = np.arange(nt + 1) * (T / nt)
        t[-1] = T
        try:
            return cls(u_nodes=u, t_nodes=t, stretch=stretch, refinement=refinement)
        except ValueError as e:
            raise GridError(str(e)) from e

    def refined(self) -> "Grid":
        """The next grid of a nested sequence: 2× in u and in t."""
        return Grid.build(
            self.T, 2 * self.nu, 2 * self.nt, self.umax, self.stretch, self.refinement + 1
        )

    @property
    def nu(self) -> int:
        return self.u_nodes.size - 1

    @property
    def nt(self) -> int:
        return self.t_nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def umax(self) -> float:
        return float(self.u_nodes[-1])

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def du_max(self) -> float:
        return float(np.diff(self.u_nodes).max())

    def check_truncation(self, u_interest: float) -> None:
        """Raise GridError unless U > 10 · u_interest."""
        if self.umax <= 10.0 * u_interest:
            raise GridError(
                f"umax={self.umax:g} too small for u={u_interest:g}; need umax > {10 * u_interest:g}"
            )


class BoundaryData(BaseModel):
    """Terminal row, lateral columns and the value used for jumps landing at or below 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    terminal: FloatArray
    lower: FloatArray
    upper: FloatArray
    ruin_value: RuinValue

    @classmethod
    def for_payoff(cls, grid: Grid, payoff: PayoffSpec) -> "BoundaryData":
        """
        Data of the penalty functional: Ψ(T,·) = 0, Ψ(t,0) = V at zero overshoot,
        Ψ(t,U) = 0 and V(overshoot) for jump targets ≤ 0.
        """
        at_zero = float(payoff.value_at_ruin(0.0))
        return cls(
            terminal=np.zeros(grid.nu + 1),
            lower=np.full(grid.nt + 1, at_zero),
            upper=np.zeros(grid.nt + 1),
            ruin_value=payoff.value_at_ruin,
        )

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "BoundaryData":
        return cls(
            terminal=np.full(grid.nu + 1, c),
            lower=np.full(grid.nt + 1, c),
            upper=np.full(grid.nt + 1, c),
            ruin_value=lambda y: np.full(np.shape(y), c),
        )

    def check_shape(self, grid: Grid) -> None:
        if self.terminal.shape != (grid.nu + 1,):
            raise GridError(f"terminal data has shape {self.terminal.shape}, grid needs {grid.nu + 1}")
        if self.lower.shape != (grid.nt + 1,) or self.upper.shape != (grid.nt + 1,):
            raise GridError(f"boundary columns must have {grid.nt + 1} entries")


class OperatorStencil(BaseModel):
    """Discrete L at the interior nodes of one grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: FloatArray
    diag: FloatArray
    upper: FloatArray
    jump_matrix: sparse.csr_matrix
    ruin_rows: np.ndarray
    ruin_overshoot: FloatArray
    ruin_weight: FloatArray
    rate: float

    def ruin_source(self, ruin_value: RuinValue, n_interior: int) -> FloatArray:
        """Σ λ p V(overshoot) per interior row over the targets at or below 0."""
        src = np.zeros(n_interior)
        if self.ruin_rows.size:
            contrib = self.ruin_weight * np.asarray(ruin_value(self.ruin_overshoot), dtype=float)
            np.add.at(src, self.ruin_rows, contrib)
        return src


class SolutionField(BaseModel):
    """Ψ on the grid; values[i, j] is the value at (t_nodes[i], u_nodes[j])."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid
    values: FloatArray
    boundary: BoundaryData
    params: ModelParams
    substeps: int = 1

    def interpolate(self, t: FloatArray | float, u: FloatArray | float) -> FloatArray:
        """
        Bilinear interpolation at arbitrary (t, u).

        u < 0 gives the ruin-side value at overshoot −u, u >= U the far-field column.
        """
        tt, uu = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(u, dtype=float)
        )
        g = self.grid
        tc = np.clip(tt, 0.0, g.T)
        i = np.clip(np.searchsorted(g.t_nodes, tc, side="right") - 1, 0, g.nt - 1)
        a = (tc - g.t_nodes[i]) / (g.t_nodes[i + 1] - g.t_nodes[i])

        uc = np.clip(uu, 0.0, g.umax)
        j = np.clip(np.searchsorted(g.u_nodes, uc, side="right") - 1, 0, g.nu - 1)
        b = (uc - g.u_nodes[j]) / (g.u_nodes[j + 1] - g.u_nodes[j])

        v = self.values
        out = (
            (1 - a) * (1 - b) * v[i, j]
            + (1 - a) * b * v[i, j + 1]
            + a * (1 - b) * v[i + 1, j]
            + a * b * v[i + 1, j + 1]
        )
        below = uu < 0
        if np.any(below):
            out = np.where(below, self.boundary.ruin_value(np.where(below, -uu, 0.0)), out)
        return np.asarray(out, dtype=float)

    def row(self, t: float) -> FloatArray:
        """Values on the u nodes at time t (interpolated between time rows)."""
        return self.interpolate(np.full(self.grid.nu + 1, t), self.grid.u_nodes)


class ConvergenceTable(BaseModel):
    """Differences between successive nested grids."""

    levels: list[tuple[int, int]]
    differences: list[float]
    orders: list[float | None]
    reference_errors: list[float] | None = None
    reference_orders: list[float | None] | None = None

    @property
    def decreasing(self) -> bool:
        d = self.differences
        return all(b <= a for a, b in zip(d, d[1:], strict=False))


def _order(coarse: float, fine: float) -> float | None:
    if coarse <= 0 or fine <= 0:
        return None
    return math.log2(coarse / fine)


def _local_coefficients(
    u: FloatArray, R: LevyTriplet, P: LevyTriplet
) -> tuple[FloatArray, FloatArray, FloatArray]:
    ui = u[1:-1]
    h_minus = ui - u[:-2]
    h_plus = u[2:] - ui
    diffusion = 0.5 * R.variance * ui * ui + 0.5 * P.variance
    drift = R.effective_drift * ui + P.effective_drift

    span = h_minus + h_plus
    lower = 2.0 * diffusion / (h_minus * span) + np.maximum(-drift, 0.0) / h_minus
    upper = 2.0 * diffusion / (h_plus * span) + np.maximum(drift, 0.0) / h_plus
    return lower, -(lower + upper), upper


def _jump_targets(
    grid: Grid, targets: FloatArray, weights: FloatArray
) -> tuple[list[np.ndarray], list[np.ndarray], list[FloatArray], FloatArray]:
    """Split (rows × atoms) targets into interpolation entries and ruin entries."""
    u = grid.u_nodes
    n_int = grid.nu - 1
    rows = np.broadcast_to(np.arange(n_int)[:, None], targets.shape).ravel()
    y = targets.ravel()
    w = np.broadcast_to(weights, targets.shape).ravel()

    ruin = y <= 0.0
    far = y >= grid.umax
    inside = ~ruin & ~far

    yi = y[inside]
    k = np.clip(np.searchsorted(u, yi, side="right") - 1, 0, grid.nu - 1)
    theta = (yi - u[k]) / (u[k + 1] - u[k])
    r_in, w_in = rows[inside], w[inside]

    row_idx = [r_in, r_in, rows[far]]
    col_idx = [k, k + 1, np.full(int(far.sum()), grid.nu)]
    data = [w_in * (1.0 - theta), w_in * theta, w[far]]
    ruin_entries = np.stack([rows[ruin].astype(float), -y[ruin], w[ruin]])
    return row_idx, col_idx, data, ruin_entries


def build_stencil(grid: Grid, params: ModelParams, n_quad: int = 32) -> OperatorStencil:
    """
    Discretise L at the interior nodes.

    Central second differences for the diffusion ½(σ²+s_R)u² + ½(σ_P²+s_P);
    first-order upwind for the effective drift, which already carries the
    compensator terms of both jump integrals. Each jump atom z with rate λp
    contributes λp(Ψ(target) − Ψ(u)), targets u(1+z) for R and u+z for P.

    Args:
        grid: Computational grid
        params: Model parameters
        n_quad: Quadrature nodes per continuous size law

    Returns:
        OperatorStencil of the interior rows

    Raises:
        StencilError: If an off-diagonal or jump weight is negative
    """
    R, P = params.R, params.P
    lower, diag, upper = _local_coefficients(grid.u_nodes, R, P)
    n_int = grid.nu - 1
    ui = grid.u_nodes[1:-1]

    row_idx: list[np.ndarray] = []
    col_idx: list[np.ndarray] = []
    data: list[FloatArray] = []
    ruin_parts: list[FloatArray] = []
    rate = 0.0
    for triplet, multiplicative in ((R, True), (P, False)):
        if not triplet.jumps.active:
            continue
        z, p = triplet.jumps.size_law.atoms(n_quad)
        lam = triplet.jumps.intensity
        rate += lam * float(p.sum())
        targets = ui[:, None] * (1.0 + z[None, :]) if multiplicative else ui[:, None] + z[None, :]
        r, c, d, ruin = _jump_targets(grid, targets, lam * p[None, :])
        row_idx += r
        col_idx += c
        data += d
        ruin_parts.append(ruin)

    if row_idx:
        jump_matrix = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(row_idx), np.concatenate(col_idx))),
            shape=(n_int, grid.nu + 1),
        ).tocsr()
    else:
        jump_matrix = sparse.csr_matrix((n_int, grid.nu + 1))
    ruin = np.concatenate(ruin_parts, axis=1) if ruin_parts else np.empty((3, 0))

    if np.any(lower < 0) or np.any(upper < 0):
        raise StencilError("negative off-diagonal in the local operator after upwinding")
    if np.any(jump_matrix.data < 0) or np.any(ruin[2] < 0):
        raise StencilError("negative jump quadrature weight")

    logger.debug(
        "stencil: %d interior rows, %d jump entries, %d ruin entries, rate %.4g",
        n_int, jump_matrix.nnz, ruin.shape[1], rate,
    )
    return OperatorStencil(
        lower=lower,
        diag=diag,
        upper=upper,
        jump_matrix=jump_matrix,
        ruin_rows=ruin[0].astype(np.int64),
        ruin_overshoot=ruin[1],
        ruin_weight=ruin[2],
        rate=rate,
    )


def apply_operator(
    stencil: OperatorStencil, values: FloatArray, ruin_value: RuinValue
) -> FloatArray:
    """
    Discrete LΨ at the interior nodes for one row of node values (boundaries included).
    """
    v = np.asarray(values, dtype=float)
    vi = v[1:-1]
    local = stencil.lower * v[:-2] + stencil.diag * vi + stencil.upper * v[2:]
    nonlocal_ = stencil.jump_matrix @ v - stencil.rate * vi
    return np.asarray(local + nonlocal_ + stencil.ruin_source(ruin_value, vi.size))


def jump_integral(
    f: Callable[[FloatArray], FloatArray],
    u: float,
    triplet: LevyTriplet,
    kind: str,
    fprime: Callable[[float], float] | None = None,
    n_quad: int = 32,
) -> float:
    """
    Jump integral of a function evaluated on the quadrature atoms.

    kind "R": λ Σ p [f(u(1+z)) − f(u) − f'(u)·u·z·1{|z|≤1}]
    kind "P": λ Σ p [f(u+z) − f(u) − f'(u)·z·1{|z|≤1}]
    The compensator term is dropped when fprime is None.

    Raises:
        ValueError: On an unknown kind
    """
    if kind not in ("R", "P"):
        raise ValueError(f"kind must be 'R' or 'P', got {kind!r}")
    if not triplet.jumps.active:
        return 0.0
    z, p = triplet.jumps.size_law.atoms(n_quad)
    step = u * z if kind == "R" else z
    integrand = np.asarray(f(u + step), dtype=float) - float(np.asarray(f(np.array([u])))[0])
    if fprime is not None:
        integrand = integrand - fprime(u) * step * (np.abs(z) <= 1.0)
    return triplet.jumps.intensity * math.fsum((p * integrand).tolist())


def _check_range(values: FloatArray, boundary: BoundaryData, stencil: OperatorStencil) -> None:
    ruin_samples = (
        np.asarray(boundary.ruin_value(stencil.ruin_overshoot))
        if stencil.ruin_overshoot.size
        else np.empty(0)
    )
    data = np.concatenate([boundary.terminal, boundary.lower, boundary.upper, ruin_samples])
    if data.min() < 0.0 or data.max() > 1.0:
        return
    lo, hi = float(values.min()), float(values.max())
    if lo < -RANGE_TOL or hi > 1.0 + RANGE_TOL:
        raise SolverError(f"field left [0,1]: range [{lo:.3e}, {hi:.3e}]")


def solve_backward(
    grid: Grid,
    params: ModelParams,
    boundary: BoundaryData,
    n_quad: int = 32,
    max_substeps: int = MAX_SUBSTEPS,
) -> SolutionField:
    """
    March Ψ_t + LΨ = 0 from t = T down to t = 0.

    Each sub-step solves (I − Δ L_local) Ψ_new = Ψ_old + Δ L_nonlocal Ψ_old with a
    banded solver. Steps are split so that Δ (λ_R + λ_P) <= 1.

    Args:
        grid: Grid whose horizon must equal params.T
        params: Model parameters
        boundary: Terminal, lateral and ruin-side data
        n_quad: Quadrature nodes per continuous size law
        max_substeps: Cap on sub-steps per time step

    Returns:
        SolutionField whose boundary rows equal the data exactly

    Raises:
        GridError: If the grid does not match the horizon or the data shapes
        CFLError: If more than max_substeps sub-steps would be needed
        SolverError: If the banded solve fails or the range check fails
    """
    if not math.isclose(grid.T, params.T, rel_tol=1e-12):
        raise GridError(f"grid horizon {grid.T} differs from model horizon {params.T}")
    boundary.check_shape(grid)
    stencil = build_stencil(grid, params, n_quad)

    substeps = max(1, math.ceil(grid.dt * stencil.rate - 1e-12))
    if substeps > max_substeps:
        raise CFLError(
            f"Δt·(λ_R+λ_P) = {grid.dt * stencil.rate:.3g} needs {substeps} sub-steps "
            f"(max {max_substeps}); refine the time grid"
        )
    delta = grid.dt / substeps
    logger.debug("solving %d×%d grid with %d sub-steps per step", grid.nt, grid.nu, substeps)

    n_int = grid.nu - 1
    ab = np.zeros((3, n_int))
    ab[0, 1:] = -delta * stencil.upper[:-1]
    ab[1, :] = 1.0 - delta * stencil.diag
    ab[2, :-1] = -delta * stencil.lower[1:]
    src = stencil.ruin_source(boundary.ruin_value, n_int)

    nt = grid.nt
    values = np.empty((nt + 1, grid.nu + 1))
    current = boundary.terminal.astype(float).copy()
    current[0], current[-1] = boundary.lower[nt], boundary.upper[nt]
    values[nt] = current

    for i in range(nt - 1, -1, -1):
        lo_b, hi_b = float(boundary.lower[i]), float(boundary.upper[i])
        for _ in range(substeps):
            ci = current[1:-1]
            rhs = ci + delta * (stencil.jump_matrix @ current - stencil.rate * ci + src)
            rhs[0] += delta * stencil.lower[0] * lo_b
            rhs[-1] += delta * stencil.upper[-1] * hi_b
            try:
                interior = solve_banded((1, 1), ab, rhs)
            except (np.linalg.LinAlgError, ValueError) as e:
                raise SolverError(f"banded solve failed at t={grid.t_nodes[i]:.6g}") from e
            current = np.concatenate([[lo_b], interior, [hi_b]])
        values[i] = current

    _check_range(values, boundary, stencil)
    return SolutionField(
        grid=grid, values=values, boundary=boundary, params=params, substeps=substeps
    )


def refine_and_compare(
    params: ModelParams,
    grids: Sequence[Grid],
    boundary_factory: Callable[[Grid], BoundaryData],
    reference: Callable[[FloatArray, FloatArray], FloatArray] | None = None,
    time_fraction: float = 0.5,
    u_window: tuple[float, float] | None = None,
) -> ConvergenceTable:
    """
    Solve on nested grids and measure the differences at shared nodes.

    Differences are sup-norms over the shared nodes with t <= time_fraction·T
    (and u inside u_window when given), which keeps the corner (T, 0), where the
    data are discontinuous, out of the comparison.

    Args:
        params: Model parameters
        grids: At least 3 grids, each refining the previous one 2× in u and t
        boundary_factory: Builds the data for a grid
        reference: Optional closed form ref(t, u); errors are then reported too
        time_fraction: Portion of [0, T] compared
        u_window: Optional (lo, hi) restricting the compared u nodes

    Raises:
        GridError: If fewer than 3 grids are given or they do not nest
    """
    if len(grids) < 3:
        raise GridError(f"need at least 3 nested grids, got {len(grids)}")
    for coarse, fine in zip(grids, grids[1:], strict=False):
        if (
            fine.nu != 2 * coarse.nu
            or fine.nt != 2 * coarse.nt
            or not np.allclose(fine.u_nodes[::2], coarse.u_nodes, rtol=0.0, atol=1e-12)
        ):
            raise GridError("grids must refine 2× in u and t on shared nodes")

    def mask(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        rows = grid.t_nodes <= time_fraction * grid.T + 1e-12
        cols = np.ones(grid.nu + 1, dtype=bool)
        if u_window is not None:
            cols = (grid.u_nodes >= u_window[0]) & (grid.u_nodes <= u_window[1])
        return rows, cols

    fields = [solve_backward(g, params, boundary_factory(g)) for g in grids]
    differences: list[float] = []
    for coarse, fine in zip(fields, fields[1:], strict=False):
        rows, cols = mask(coarse.grid)
        shared = fine.values[::2, ::2]
        diff = np.abs(shared - coarse.values)[np.ix_(rows, cols)]
        differences.append(float(diff.max()) if diff.size else 0.0)
    orders = [_order(a, b) for a, b in zip(differences, differences[1:], strict=False)]

    ref_errors: list[float] | None = None
    ref_orders: list[float | None] | None = None
    if reference is not None:
        ref_errors = []
        for f in fields:
            rows, cols = mask(f.grid)
            tt, uu = np.meshgrid(f.grid.t_nodes[rows], f.grid.u_nodes[cols], indexing="ij")
            err = np.abs(f.values[np.ix_(rows, cols)] - reference(tt, uu))
            ref_errors.append(float(err.max()) if err.size else 0.0)
        ref_orders = [_order(a, b) for a, b in zip(ref_errors, ref_errors[1:], strict=False)]

    return ConvergenceTable(
        levels=[(g.nt, g.nu) for g in grids],
        differences=differences,
        orders=orders,
        reference_errors=ref_errors,
        reference_orders=ref_orders,
    )


def field_rows(field: SolutionField) -> list[tuple[float, float, float]]:
    """(t, u, psi) rows in t-major order for CSV output."""
    g = field.grid
    return [
        (float(t), float(u), float(field.values[i, j]))
        for i, t in enumerate(g.t_nodes)
        for j, u in enumerate(g.u_nodes)
    ]


def field_from_rows(
    rows: Sequence[tuple[float, float, float]],
    params: ModelParams,
    boundary: Callable[[Grid], BoundaryData] | None = None,
) -> SolutionField:
    """
    Rebuild a SolutionField from (t, u, psi) rows as written by field_rows.

    Raises:
        GridError: If the rows do not form a full rectangular grid
    """
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GridError("field rows must have three columns t, u, psi")
    t_nodes = np.unique(arr[:, 0])
    u_nodes = np.unique(arr[:, 1])
    if t_nodes.size * u_nodes.size != arr.shape[0]:
        raise GridError(
            f"{arr.shape[0]} rows do not fill a {t_nodes.size}×{u_nodes.size} grid"
        )
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    values = arr[order, 2].reshape(t_nodes.size, u_nodes.size)
    try:
        grid = Grid(u_nodes=u_nodes, t_nodes=t_nodes)
    except ValueError as e:
        raise GridError(str(e)) from e
    data = (
        boundary(grid)
        if boundary is not None
        else BoundaryData(
            terminal=values[-1].copy(),
            lower=values[:, 0].copy(),
            upper=values[:, -1].copy(),
            ruin_value=params.payoff.value_at_ruin,
        )
    )
    return SolutionField(grid=grid, values=values, boundary=data, params=params)

