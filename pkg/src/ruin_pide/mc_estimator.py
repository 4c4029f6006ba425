"""Monte-Carlo estimation of Ψ(t,u) = E V(X_τ) 1{τ<T}.

Paths are simulated in fixed-size blocks. Block b always draws from
spawn_streams(seed, b), and the per-block sums are combined with math.fsum, so the
result does not depend on how many workers ran the blocks.
"""

import logging
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np
from pydantic import BaseModel

from .errors import SimulationError
from .levy_model import spawn_streams
from .models import FloatArray, ModelParams, RuinEstimate, SimScheme
from .pide_solver import SolutionField
from .reserve_sim import BatchOutcome, simulate_batch

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
Z95 = 1.959963984540054
THREADS_ENV = "RUIN_PIDE_THREADS"

_T = TypeVar("_T")


class DynkinReport(BaseModel):
    """Ψ(t,u) against the mean of Ψ at the exit of a small box."""

    psi_start: float
    psi_stopped_mean: float
    discrepancy: float
    std_error: float
    epsilon: float
    h: float
    n_paths: int
    exit_fraction: float


def resolve_workers(requested: int | None) -> int:
    """Worker count: requested (default: CPU count), capped by RUIN_PIDE_THREADS."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, int(cap))
        except ValueError:
            logger.warning("ignoring %s=%r (not an integer)", THREADS_ENV, cap)
    return max(1, workers)


def _block_sizes(n_paths: int) -> list[int]:
    full, rest = divmod(n_paths, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _run_blocks(
    n_paths: int, workers: int | None, job: Callable[[int, int], _T]
) -> list[_T]:
    sizes = _block_sizes(n_paths)
    n_workers = min(resolve_workers(workers), len(sizes))
    logger.debug("%d paths in %d blocks on %d workers", n_paths, len(sizes), n_workers)
    if n_workers == 1:
        return [job(b, n) for b, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(job, range(len(sizes)), sizes))


def _payoff(params: ModelParams, out: BatchOutcome, T: float) -> FloatArray:
    counted = out.ruined & (out.tau < T)
    values = np.asarray(params.payoff.value_at_ruin(out.overshoot), dtype=float)
    return np.where(counted, values, 0.0)


def _wilson(p: float, n: int) -> tuple[float, float]:
    z2n = Z95 * Z95 / n
    centre = (p + z2n / 2) / (1 + z2n)
    half = Z95 / (1 + z2n) * math.sqrt(p * (1 - p) / n + z2n / (4 * n))
    return max(0.0, centre - half), min(1.0, centre + half)


def _estimate(
    sums: Sequence[tuple[float, float]], n_paths: int, scheme: SimScheme
) -> RuinEstimate:
    total = math.fsum(s for s, _ in sums)
    total_sq = math.fsum(q for _, q in sums)
    mean = min(1.0, max(0.0, total / n_paths))
    if n_paths > 1:
        var = max(0.0, (total_sq - n_paths * mean * mean) / (n_paths - 1))
    else:
        var = 0.0
    se = math.sqrt(var / n_paths)
    if mean in (0.0, 1.0):
        lo, hi = _wilson(mean, n_paths)
    else:
        lo, hi = max(0.0, mean - Z95 * se), min(1.0, mean + Z95 * se)
    return RuinEstimate(
        mean=mean,
        std_error=se,
        n_paths=n_paths,
        ci95=(min(lo, mean), max(hi, mean)),
        scheme=scheme.kind,
        dt_max=scheme.dt_max,
    )


def estimate_psi(
    t: float,
    u: float,
    params: ModelParams,
    n_paths: int,
    scheme: SimScheme,
    seed: int,
    workers: int | None = None,
) -> RuinEstimate:
    """
    Estimate Ψ(t,u) with n_paths independent paths.

    Args:
        t: Start time (< T)
        u: Initial capital (> 0)
        params: Model parameters
        n_paths: Number of paths (>= 1)
        scheme: Stepping scheme
        seed: Master seed
        workers: Worker threads (default: CPU count, capped by RUIN_PIDE_THREADS)

    Returns:
        RuinEstimate with a normal 95% CI, Wilson interval when the mean is 0 or 1

    Raises:
        SimulationError: If n_paths < 1 or the start point is invalid
    """
    return estimate_psi_profile(t, u, params, [params.T], n_paths, scheme, seed, workers)[0]


def estimate_psi_profile(
    t: float,
    u: float,
    params: ModelParams,
    horizons: Sequence[float],
    n_paths: int,
    scheme: SimScheme,
    seed: int,
    workers: int | None = None,
) -> list[RuinEstimate]:
    """
    Estimate Ψ(t,u) for several horizons from one set of paths.

    Paths run to the longest horizon; a path counts for horizon T_k when τ < T_k,
    so the estimates are non-decreasing in the horizon for the ruin indicator.

    Raises:
        SimulationError: If n_paths < 1, a horizon is <= t, or no horizon is given
    """
    if n_paths < 1:
        raise SimulationError(f"need at least one path, got n_paths={n_paths}")
    if not horizons:
        raise SimulationError("need at least one horizon")
    if min(horizons) <= t:
        raise SimulationError(f"every horizon must exceed t={t}, got {list(horizons)}")
    longest = max(horizons)
    model = params.with_horizon(longest) if longest != params.T else params

    def job(block: int, n: int) -> list[tuple[float, float]]:
        out = simulate_batch(t, u, model, scheme, spawn_streams(seed, block), n)
        sums = []
        for T in horizons:
            v = _payoff(model, out, T)
            sums.append((math.fsum(v.tolist()), math.fsum((v * v).tolist())))
        return sums

    per_block = _run_blocks(n_paths, workers, job)
    return [
        _estimate([blk[k] for blk in per_block], n_paths, scheme) for k in range(len(horizons))
    ]


def dynkin_check(
    t: float,
    u: float,
    params: ModelParams,
    field: SolutionField,
    h: float,
    n_paths: int,
    seed: int,
    epsilon: float | None = None,
    scheme: SimScheme | None = None,
    workers: int | None = None,
) -> DynkinReport:
    """
    Compare Ψ_field(t,u) with the mean of Ψ_field(τ_h, X_{τ_h}).

    τ_h is the first exit of X from [u−ε, u+ε] or t+h, whichever comes first. A
    jump landing at or below 0 is ruin and is valued with the payoff at ruin.

    Args:
        t: Start time
        u: Start capital (> 0)
        params: Model parameters
        field: Candidate solution
        h: Time window (> 0, t + h < T)
        n_paths: Number of paths
        seed: Master seed
        epsilon: Half-width of the box (default u/2, must be < u)
        scheme: Stepping scheme (default exact-between-jumps, dt 1e-3)
        workers: Worker threads

    Raises:
        SimulationError: On an invalid window or box
    """
    if h <= 0 or t + h >= params.T:
        raise SimulationError(f"need h > 0 and t + h < T, got t={t}, h={h}, T={params.T}")
    if n_paths < 1:
        raise SimulationError(f"need at least one path, got n_paths={n_paths}")
    eps = 0.5 * u if epsilon is None else epsilon
    if not 0 < eps < u:
        raise SimulationError(f"box half-width must lie in ]0, u[, got ε={eps}, u={u}")
    sim = scheme if scheme is not None else SimScheme(dt_max=1e-3)
    stop = t + h

    def job(block: int, n: int) -> tuple[float, float, int]:
        out = simulate_batch(
            t, u, params, sim, spawn_streams(seed, block), n, horizon=stop, band=(u - eps, u + eps)
        )
        when = np.where(out.stopped, out.tau, stop)
        v = field.interpolate(when, out.terminal)
        v = np.where(out.ruined, params.payoff.value_at_ruin(out.overshoot), v)
        return math.fsum(v.tolist()), math.fsum((v * v).tolist()), int(out.stopped.sum())

    per_block = _run_blocks(n_paths, workers, job)
    total = math.fsum(s for s, _, _ in per_block)
    total_sq = math.fsum(q for _, q, _ in per_block)
    exits = sum(e for _, _, e in per_block)

    mean = total / n_paths
    var = max(0.0, (total_sq - n_paths * mean * mean) / (n_paths - 1)) if n_paths > 1 else 0.0
    psi_start = float(field.interpolate(t, u))
    return DynkinReport(
        psi_start=psi_start,
        psi_stopped_mean=mean,
        discrepancy=abs(psi_start - mean),
        std_error=math.sqrt(var / n_paths),
        epsilon=eps,
        h=h,
        n_paths=n_paths,
        exit_fraction=exits / n_paths,
    )
