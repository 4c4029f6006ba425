"""PIDE against Monte Carlo on a shared set of initial capitals.

Both methods approximate the same Ψ, so every row must agree to within three
standard errors plus the configured scheme tolerance.
"""

import logging

from pydantic import BaseModel, ConfigDict

from .mc_estimator import estimate_psi
from .models import RunConfig
from .pide_solver import BoundaryData, Grid, SolutionField, solve_backward

logger = logging.getLogger(__name__)

CSV_HEADER = ["u", "psi_pide", "psi_mc", "se", "abs_diff", "pass"]


class CompareRow(BaseModel):
    """One initial capital of a comparison."""

    u: float
    psi_pide: float
    psi_mc: float
    se: float
    abs_diff: float
    passed: bool

    def as_csv(self) -> tuple[float, float, float, float, float, str]:
        return (
            self.u,
            self.psi_pide,
            self.psi_mc,
            self.se,
            self.abs_diff,
            "pass" if self.passed else "fail",
        )


class CompareResult(BaseModel):
    """All rows plus the solved field."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float
    scheme_tol: float
    rows: list[CompareRow]
    field: SolutionField

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def n_passed(self) -> int:
        return sum(r.passed for r in self.rows)


def grid_for(config: RunConfig) -> Grid:
    """The PIDE grid described by a config."""
    g = config.grid
    return Grid.build(config.model.T, g.nu, g.nt, g.umax, g.stretch)


def solve_config(config: RunConfig, grid: Grid | None = None) -> SolutionField:
    """Solve the penalty functional of a config on its grid."""
    grid = grid if grid is not None else grid_for(config)
    return solve_backward(grid, config.model, BoundaryData.for_payoff(grid, config.model.payoff))


def run_compare(config: RunConfig) -> CompareResult:
    """
    Solve the PIDE and run Monte Carlo at every capital in config.u_test.

    Args:
        config: Validated run configuration

    Returns:
        CompareResult; a row passes when |Ψ_pide − Ψ_mc| <= 3·SE + scheme_tol

    Raises:
        GridError: If umax is too small for the largest test capital
        RuinPideError: From the solver or the estimator
    """
    grid = grid_for(config)
    grid.check_truncation(max(config.u_test))
    field = solve_config(config, grid)
    tol = config.tolerances.scheme_tol

    rows = []
    for u in config.u_test:
        pide = float(field.interpolate(config.t0, u))
        est = estimate_psi(
            config.t0, u, config.model, config.n_paths, config.scheme, config.seed, config.workers
        )
        diff = abs(pide - est.mean)
        rows.append(
            CompareRow(
                u=u,
                psi_pide=pide,
                psi_mc=est.mean,
                se=est.std_error,
                abs_diff=diff,
                passed=diff <= 3.0 * est.std_error + tol,
            )
        )
        logger.debug("u=%g: pide %.6f mc %.6f ± %.2e", u, pide, est.mean, est.std_error)

    return CompareResult(t=config.t0, scheme_tol=tol, rows=rows, field=field)
