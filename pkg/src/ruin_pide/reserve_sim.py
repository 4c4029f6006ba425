"""Reserve process X^{t,u}: dX = X_- dR + dP, and its ruin time.

All paths of a batch share one time grid; each step is split at the jump times of
both drivers so jumps are applied atomically in merged time order. The Brownian
parts are pinned at the grid by the driver's own stream and filled in at jump
times by bridge draws, so the price path S at grid times never depends on P.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict

from .errors import SimulationError
from .levy_model import Streams, ensure_valid_triplet, sample_increments, spawn_streams
from .models import FloatArray, ModelParams, SchemeKind, SimScheme

logger = logging.getLogger(__name__)

KIND_R = 0
KIND_P = 1
KIND_NONE = -1


class EventType(str, Enum):
    """Row types of a recorded path."""

    GRID = "grid"
    JUMP_R = "jumpR"
    JUMP_P = "jumpP"
    RUIN = "ruin"


class SamplePath(BaseModel):
    """One discretised trajectory of X^{t,u}, stopped at min(τ, T)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: FloatArray
    values: FloatArray
    prices: FloatArray
    events: list[EventType]
    jump_times: list[float]
    tau: float | None
    overshoot: float | None

    @property
    def ruined(self) -> bool:
        return self.tau is not None


@dataclass
class BatchOutcome:
    """Per-path results of simulate_batch."""

    ruined: np.ndarray
    stopped: np.ndarray
    tau: FloatArray
    overshoot: FloatArray
    terminal: FloatArray
    horizon: float


@dataclass
class _Recorder:
    """Collects rows of path 0 when a single trajectory is requested."""

    times: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    prices: list[float] = field(default_factory=list)
    events: list[EventType] = field(default_factory=list)
    jump_times: list[float] = field(default_factory=list)

    def add(self, time: float, value: float, price: float, event: EventType) -> None:
        self.times.append(time)
        self.values.append(value)
        self.prices.append(price)
        self.events.append(event)


def time_grid(t: float, T: float, dt_max: float) -> FloatArray:
    """Uniform grid on [t, T] with steps no longer than dt_max."""
    n_steps = max(1, math.ceil((T - t) / dt_max - 1e-9))
    return np.linspace(t, T, n_steps + 1)


def _continuous_factor(continuous: ArrayLike, variance_dt: ArrayLike) -> np.ndarray:
    """Factor of S = E(R) across a continuous piece: exp(dR_c − ½ d[R]_c)."""
    return np.exp(np.asarray(continuous) - 0.5 * np.asarray(variance_dt))


def _jump_factor(kind: np.ndarray, size: np.ndarray) -> np.ndarray:
    factor = np.where(kind == KIND_R, 1.0 + size, 1.0)
    if np.any(factor <= 0):
        raise SimulationError(
            "price jump with 1+z <= 0 reached the simulator; R must satisfy Π(]−∞,−1]) = 0"
        )
    return factor


def doleans_path(
    continuous: ArrayLike,
    variance_dt: ArrayLike,
    jumps: ArrayLike | None = None,
) -> FloatArray:
    """
    Stochastic exponential S = E(R) along a grid.

    Across step k, S is multiplied by exp(continuous[k] - variance_dt[k]/2) and then
    by (1 + jumps[k]) for the jump closing the step (0 means no jump).

    Args:
        continuous: Continuous increments of R per step
        variance_dt: Quadratic variation of the continuous part per step
        jumps: Jump size at the end of each step (optional)

    Returns:
        S at the grid points, S[0] = 1

    Raises:
        SimulationError: If any factor 1 + z is <= 0
    """
    c = np.asarray(continuous, dtype=float)
    v = np.broadcast_to(np.asarray(variance_dt, dtype=float), c.shape)
    z = np.zeros_like(c) if jumps is None else np.asarray(jumps, dtype=float)
    factor = _jump_factor(np.full(c.shape, KIND_R), z)
    steps = _continuous_factor(c, v) * factor
    return np.concatenate([[1.0], np.cumprod(steps)])


def _bridge(
    w_prev: FloatArray,
    s_prev: FloatArray,
    s: FloatArray,
    w_end: FloatArray,
    dt: float,
    xi: FloatArray | None,
) -> FloatArray:
    """Brownian bridge value at s given W(s_prev) = w_prev and W(dt) = w_end."""
    span = dt - s_prev
    at_end = (s >= dt) | (span <= 0)
    safe = np.where(at_end, 1.0, span)
    frac = (s - s_prev) / safe
    w = w_prev + frac * (w_end - w_prev)
    if xi is not None:
        var = np.clip((s - s_prev) * (dt - s) / safe, 0.0, None)
        w = w + np.sqrt(var) * xi
    return np.where(at_end, w_end, w)


def _merge_events(
    n: int,
    dt: float,
    r_jumps: tuple[np.ndarray, np.ndarray, np.ndarray],
    p_jumps: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> tuple[FloatArray, FloatArray, np.ndarray]:
    """Pad both drivers' jumps into (n, k_max) matrices sorted by time per path."""
    cr, off_r, size_r = r_jumps
    cp, off_p, size_p = p_jumps
    counts = cr + cp
    k_max = int(counts.max()) if n else 0
    offsets = np.full((n, k_max), dt)
    sizes = np.zeros((n, k_max))
    kinds = np.full((n, k_max), KIND_NONE, dtype=np.int64)
    if k_max == 0:
        return offsets, sizes, kinds

    path = np.concatenate([np.repeat(np.arange(n), cr), np.repeat(np.arange(n), cp)])
    off = np.concatenate([off_r, off_p])
    size = np.concatenate([size_r, size_p])
    kind = np.concatenate(
        [np.full(off_r.size, KIND_R, dtype=np.int64), np.full(off_p.size, KIND_P, dtype=np.int64)]
    )
    order = np.lexsort((off, path))
    path, off, size, kind = path[order], off[order], size[order], kind[order]
    rank = np.arange(path.size) - np.searchsorted(path, path, side="left")
    offsets[path, rank] = off
    sizes[path, rank] = size
    kinds[path, rank] = kind
    return offsets, sizes, kinds


def simulate_batch(
    t: float,
    u: float,
    params: ModelParams,
    scheme: SimScheme,
    streams: Streams,
    n: int,
    horizon: float | None = None,
    band: tuple[float, float] | None = None,
    _recorder: _Recorder | None = None,
) -> BatchOutcome:
    """
    Simulate n independent reserve paths from X_t = u up to min(τ, horizon).

    Args:
        t: Start time
        u: Initial capital (> 0)
        params: Model parameters (horizon defaults to params.T)
        scheme: Stepping scheme
        streams: Generators for R, P and bridge draws
        n: Number of paths
        horizon: Optional end time overriding params.T
        band: Optional (lower, upper) exit interval replacing the ruin barrier 0

    Returns:
        BatchOutcome with ruin flags, stopping times, overshoots and final values
    """
    T = params.T if horizon is None else horizon
    if u <= 0:
        raise SimulationError(f"initial capital must be > 0, got u={u}")
    if t >= T:
        raise SimulationError(f"start time t={t} must be < horizon T={T}")
    if n < 1:
        raise SimulationError(f"need at least one path, got n={n}")
    lower, upper = (0.0, math.inf) if band is None else band
    if not lower < u < upper:
        raise SimulationError(f"initial capital u={u} must lie inside the band ]{lower}, {upper}[")
    ensure_valid_triplet(params.R, is_price_driver=True)

    R, P = params.R, params.P
    mu_r, var_r = R.effective_drift, R.variance
    mu_p, var_p = P.effective_drift, P.variance
    sd_r, sd_p = math.sqrt(var_r), math.sqrt(var_p)
    euler = scheme.kind == SchemeKind.EULER
    grid = time_grid(t, T, scheme.dt_max)
    logger.debug("simulating %d paths on %d steps (%s)", n, grid.size - 1, scheme.kind.value)

    x = np.full(n, float(u))
    s_path = np.ones(n)
    alive = np.ones(n, dtype=bool)
    tau = np.full(n, np.nan)
    overshoot = np.zeros(n)
    zeros = np.zeros(n)

    rec = _recorder
    if rec is not None:
        rec.add(t, float(u), 1.0, EventType.GRID)

    for t0, t1 in zip(grid[:-1], grid[1:], strict=True):
        if not alive.any():
            break
        dt = float(t1 - t0)
        inc_r = sample_increments(R, dt, streams.r, n)
        inc_p = sample_increments(P, dt, streams.p, n)
        w_r_end, w_p_end = inc_r.brownian, inc_p.brownian
        offsets, sizes, kinds = _merge_events(n, dt, inc_r.jumps, inc_p.jumps)
        k_max = offsets.shape[1]

        s_start = s_path.copy()
        jump_prod = np.ones(n)
        s_prev = np.zeros(n)
        w_r, w_p = zeros, zeros

        for j in range(k_max + 1):
            s_cur = offsets[:, j] if j < k_max else np.full(n, dt)
            last = j == k_max
            xi_r = streams.bridge.standard_normal(n) if var_r > 0 and not last else None
            xi_p = streams.bridge.standard_normal(n) if var_p > 0 and not last else None
            w_r_new = _bridge(w_r, s_prev, s_cur, w_r_end, dt, xi_r)
            w_p_new = _bridge(w_p, s_prev, s_cur, w_p_end, dt, xi_p)
            delta = s_cur - s_prev
            d_r = mu_r * delta + sd_r * (w_r_new - w_r)
            d_bp = sd_p * (w_p_new - w_p)

            if euler:
                x_pre = x + x * d_r + mu_p * delta + d_bp
            else:
                kappa = d_r - 0.5 * var_r * delta
                growth = np.exp(kappa)
                small = np.abs(kappa) < 1e-12
                phi = np.where(small, 1.0, np.expm1(kappa) / np.where(small, 1.0, kappa))
                x_pre = growth * x + mu_p * delta * phi + np.sqrt(growth) * d_bp

            # continuous exit inside the piece: located by linear interpolation
            below = alive & (x_pre <= lower)
            above = alive & ~below & (x_pre >= upper)
            if below.any():
                frac = (x[below] - lower) / (x[below] - x_pre[below])
                tau[below] = t0 + s_prev[below] + frac * delta[below]
            if above.any():
                frac = (upper - x[above]) / (x_pre[above] - x[above])
                tau[above] = t0 + s_prev[above] + frac * delta[above]
            hit = np.zeros(n, dtype=bool)
            if scheme.bridge_correction:
                u_draw = streams.bridge.uniform(size=n)
                # variance frozen at the barrier level; the investment noise σX vanishes at 0
                local_var = var_r * lower * lower + var_p
                cand = alive & ~below & ~above & (delta > 0) & (local_var > 0)
                if cand.any():
                    gap, gap_pre = x - lower, x_pre - lower
                    with np.errstate(divide="ignore", over="ignore"):
                        p_hit = np.exp(-2.0 * gap * gap_pre / (local_var * np.where(cand, delta, 1.0)))
                    hit = cand & (u_draw < p_hit)
                    tau[hit] = t0 + s_prev[hit] + 0.5 * delta[hit]
            died = below | hit | above
            overshoot[died] = 0.0
            x = np.where(below | hit, lower, np.where(above, upper, np.where(alive, x_pre, x)))
            alive &= ~died

            s_cont = (
                s_start * _continuous_factor(mu_r * s_cur + sd_r * w_r_new, var_r * s_cur) * jump_prod
            )
            if rec is not None and died[0]:
                rec.add(float(tau[0]), 0.0, float(s_cont[0]), EventType.RUIN)

            if last:
                s_end = s_start * _continuous_factor(inc_r.continuous, var_r * dt) * jump_prod
                s_path = np.where(alive, s_end, s_path)
                if rec is not None and alive[0]:
                    rec.add(float(t1), float(x[0]), float(s_path[0]), EventType.GRID)
                break

            kind, size = kinds[:, j], sizes[:, j]
            factor = _jump_factor(kind, size)
            jump_prod = jump_prod * factor
            x_post = np.where(kind == KIND_R, x * (1.0 + size), np.where(kind == KIND_P, x + size, x))
            jumped = alive & (kind != KIND_NONE)
            ruined_now = jumped & ((x_post <= lower) | (x_post >= upper))
            tau[ruined_now] = t0 + s_cur[ruined_now]
            # deficit below 0, not below the band edge
            overshoot[ruined_now] = np.maximum(-x_post[ruined_now], 0.0)
            x = np.where(alive, x_post, x)
            alive &= ~ruined_now

            if rec is not None and jumped[0]:
                when = float(t0 + s_cur[0])
                rec.jump_times.append(when)
                if ruined_now[0]:
                    ev = EventType.RUIN
                else:
                    ev = EventType.JUMP_R if kind[0] == KIND_R else EventType.JUMP_P
                rec.add(when, float(x[0]), float(s_cont[0] * factor[0]), ev)

            s_prev = s_cur
            w_r, w_p = w_r_new, w_p_new

    stopped = ~np.isnan(tau)
    return BatchOutcome(
        ruined=stopped & (x <= 0), stopped=stopped, tau=tau, overshoot=overshoot, terminal=x, horizon=T
    )


def simulate_path(
    t: float,
    u: float,
    params: ModelParams,
    scheme: SimScheme,
    streams: Streams | None = None,
    seed: int = 0,
) -> SamplePath:
    """
    Simulate one reserve path and record every grid, jump and ruin time.

    Args:
        t: Start time (< T)
        u: Initial capital (> 0)
        params: Model parameters
        scheme: Stepping scheme
        streams: Generators to use (default: spawn_streams(seed, 0))
        seed: Seed used when streams is not given

    Returns:
        SamplePath stopped at min(τ, T)
    """
    streams = streams if streams is not None else spawn_streams(seed, 0)
    rec = _Recorder()
    out = simulate_batch(t, u, params, scheme, streams, 1, _recorder=rec)
    tau = None if math.isnan(out.tau[0]) else float(out.tau[0])
    return SamplePath(
        times=np.array(rec.times),
        values=np.array(rec.values),
        prices=np.array(rec.prices),
        events=rec.events,
        jump_times=rec.jump_times,
        tau=tau,
        overshoot=float(out.overshoot[0]) if tau is not None else None,
    )


def write_path_csv(path: SamplePath, file: str | Path) -> None:
    """Dump a path as CSV with columns time, X, S, event_type."""
    from .templates import write_csv

    rows: Sequence[Sequence[object]] = [
        (tm, x, s, ev.value)
        for tm, x, s, ev in zip(path.times, path.values, path.prices, path.events, strict=True)
    ]
    write_csv(file, ["time", "X", "S", "event_type"], rows)
