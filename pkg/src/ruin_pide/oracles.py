"""Reference answers: closed forms and a brute-force fine-step Monte Carlo.

fine_mc shares no stepping or seeding code with reserve_sim or mc_estimator.
"""

import math

import numpy as np
from scipy.stats import norm

from .errors import OracleError
from .models import JumpSpec, ModelParams, OracleResult

CLOSED_FORM_BOUND = 1e-12
CHUNK = 8192


def brownian_first_passage(u: float, a_p: float, sigma_p: float, h: float) -> OracleResult:
    """
    P(u + a_P s + σ_P W_s hits 0 before h), by the reflection principle.

    Φ((−u − a_P h)/(σ_P√h)) + exp(−2 a_P u/σ_P²) Φ((−u + a_P h)/(σ_P√h))

    Raises:
        OracleError: If σ_P <= 0, h <= 0 or u < 0
    """
    if sigma_p <= 0:
        raise OracleError(f"σ_P must be > 0 (σ_P={sigma_p}); the σ_P = 0 case is pure transport")
    if h <= 0:
        raise OracleError(f"time to horizon must be > 0, got h={h}")
    if u < 0:
        raise OracleError(f"initial capital must be >= 0, got u={u}")
    if u == 0:
        return OracleResult(value=1.0, error_bound=0.0, provenance="closed_form")

    s = sigma_p * math.sqrt(h)
    first = norm.cdf((-u - a_p * h) / s)
    # reflected term in log space
    log_second = -2.0 * a_p * u / sigma_p**2 + norm.logcdf((-u + a_p * h) / s)
    value = float(first + math.exp(min(log_second, 0.0)))
    return OracleResult(
        value=min(1.0, max(0.0, value)), error_bound=CLOSED_FORM_BOUND, provenance="closed_form"
    )


def cramer_lundberg_ultimate(u: float, c: float, lam: float, mu: float) -> OracleResult:
    """
    Ultimate ruin probability with premium rate c and Exp claims of mean μ.

    (λμ/c) exp(−(c − λμ) u / (cμ)); 1 when the net profit condition c > λμ fails.

    Raises:
        OracleError: On u < 0, c <= 0, λ < 0 or μ <= 0
    """
    if u < 0 or c <= 0 or lam < 0 or mu <= 0:
        raise OracleError(f"need u >= 0, c > 0, λ >= 0, μ > 0; got u={u}, c={c}, λ={lam}, μ={mu}")
    load = lam * mu
    if c <= load:
        return OracleResult(value=1.0, error_bound=0.0, provenance="closed_form")
    value = (load / c) * math.exp(-(c - load) * u / (c * mu))
    return OracleResult(value=value, error_bound=CLOSED_FORM_BOUND, provenance="closed_form")


def _compound_sums(jumps: JumpSpec, dt: float, rng: np.random.Generator, n: int) -> np.ndarray:
    if not jumps.active:
        return np.zeros(n)
    counts = rng.poisson(jumps.intensity * dt, n)
    sizes = jumps.size_law.sample(rng, int(counts.sum()))
    return np.bincount(np.repeat(np.arange(n), counts), weights=sizes, minlength=n)


def fine_mc(
    t: float, u: float, params: ModelParams, dt_fine: float, n_paths: int, seed: int
) -> OracleResult:
    """
    Plain Euler estimate of Ψ(t,u) on a uniform grid of step dt_fine.

    Jumps are summed per step and ruin is only detected at grid times. The
    error bound is the standard error of the mean.

    Raises:
        OracleError: On invalid arguments
    """
    if u <= 0 or t >= params.T or dt_fine <= 0 or n_paths < 1:
        raise OracleError(
            f"need u > 0, t < T, dt_fine > 0, n_paths >= 1; got u={u}, t={t}, "
            f"dt_fine={dt_fine}, n_paths={n_paths}"
        )
    R, P = params.R, params.P
    n_steps = max(1, math.ceil((params.T - t) / dt_fine - 1e-9))
    dt = (params.T - t) / n_steps
    sq = math.sqrt(dt)
    sd_r, sd_p = math.sqrt(R.variance), math.sqrt(P.variance)

    total = total_sq = 0.0
    chunks = -(-n_paths // CHUNK)
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(chunks)):
        rng = np.random.Generator(np.random.PCG64(child))
        n = min(CHUNK, n_paths - k * CHUNK)
        x = np.full(n, float(u))
        alive = np.ones(n, dtype=bool)
        payoff = np.zeros(n)
        for _ in range(n_steps):
            d_r = R.effective_drift * dt + sd_r * sq * rng.standard_normal(n)
            d_r += _compound_sums(R.jumps, dt, rng, n)
            d_p = P.effective_drift * dt + sd_p * sq * rng.standard_normal(n)
            d_p += _compound_sums(P.jumps, dt, rng, n)
            x = np.where(alive, x + x * d_r + d_p, x)
            ruined = alive & (x <= 0)
            if ruined.any():
                payoff[ruined] = params.payoff.value_at_ruin(-x[ruined])
                alive &= ~ruined
            if not alive.any():
                break
        total += math.fsum(payoff.tolist())
        total_sq += math.fsum((payoff * payoff).tolist())

    mean = total / n_paths
    var = max(0.0, (total_sq - n_paths * mean * mean) / (n_paths - 1)) if n_paths > 1 else 0.0
    return OracleResult(
        value=min(1.0, max(0.0, mean)), error_bound=math.sqrt(var / n_paths), provenance="fine_mc"
    )
