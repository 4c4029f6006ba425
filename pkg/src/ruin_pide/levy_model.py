"""Lévy triplet validation and increment sampling. No I/O, no shared state."""

import math
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, Field

from .errors import SimulationError, TripletError
from .models import EmpiricalLaw, JumpSpec, LevyTriplet

# Substream roles; each role of each block gets its own counter-based generator.
STREAM_R = 0
STREAM_P = 1
STREAM_BRIDGE = 2


class TripletValidation(BaseModel):
    """Outcome of validate_triplet."""

    valid: bool
    violations: list[str] = Field(default_factory=list)


class Streams(NamedTuple):
    """Independent generators for the R driver, the P driver and bridge draws."""

    r: np.random.Generator
    p: np.random.Generator
    bridge: np.random.Generator


def validate_triplet(t: LevyTriplet, is_price_driver: bool) -> TripletValidation:
    """
    Check the positivity condition Π(]−∞,−1]) = 0 for a price driver.

    Args:
        t: Triplet to check
        is_price_driver: True for R, whose Doléans exponential must stay positive

    Returns:
        TripletValidation listing every atom or region with mass at z ≤ −1
    """
    if not is_price_driver or not t.jumps.active:
        return TripletValidation(valid=True)

    lam = t.jumps.intensity
    law = t.jumps.size_law
    violations: list[str] = []

    if isinstance(law, EmpiricalLaw):
        for z, p in law.points:
            if z <= -1.0 and p > 0:
                violations.append(f"atom z={z:g} carries mass {lam * p:g} at z ≤ −1")
    else:
        mass = law.mass_at_or_below(-1.0)
        if mass > 0:
            violations.append(f"mass {lam * mass:g} at z ≤ −1 ({law.kind} law)")

    return TripletValidation(valid=not violations, violations=violations)


def ensure_valid_triplet(t: LevyTriplet, is_price_driver: bool) -> None:
    """Raise TripletError if validate_triplet reports violations."""
    result = validate_triplet(t, is_price_driver)
    if not result.valid:
        raise TripletError(result.violations)


def spawn_streams(seed: int, block: int) -> Streams:
    """
    Derive the generators for one block of paths.

    Each generator is a pure function of (seed, block, role), so a block draws the
    same numbers no matter which worker runs it.
    """
    def make(role: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block, role])))

    return Streams(r=make(STREAM_R), p=make(STREAM_P), bridge=make(STREAM_BRIDGE))


def sample_jumps(
    jumps: JumpSpec, dt: float, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sample compound-Poisson jumps for n independent copies of one step.

    Returns:
        (counts per copy, offsets in [0, dt), sizes), offsets/sizes grouped by copy
    """
    if not jumps.active or dt == 0:
        return np.zeros(n, dtype=np.int64), np.empty(0), np.empty(0)
    counts = rng.poisson(jumps.intensity * dt, n)
    total = int(counts.sum())
    offsets = rng.uniform(0.0, dt, total)
    sizes = jumps.size_law.sample(rng, total)
    return counts, offsets, sizes


class Increments(NamedTuple):
    """One step of n independent copies of a driver.

    brownian holds the standard Brownian increments W_dt (variance dt); the
    continuous increment is drift·dt + scale·W_dt.
    """

    dt: float
    drift: float
    scale: float
    brownian: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray
    sizes: np.ndarray

    @property
    def continuous(self) -> np.ndarray:
        return self.drift * self.dt + self.scale * self.brownian

    @property
    def jumps(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.counts, self.offsets, self.sizes


def sample_increments(t: LevyTriplet, dt: float, rng: np.random.Generator, n: int) -> Increments:
    """
    Sample one step of the Lévy process for n independent copies.

    The Gaussian draws come first, then the jumps, so a triplet without
    noise leaves the stream where sample_jumps alone would.

    Raises:
        SimulationError: If dt < 0
    """
    if dt < 0:
        raise SimulationError(f"time step must be >= 0, got dt={dt}")
    scale = math.sqrt(t.variance)
    if scale > 0 and dt > 0:
        brownian = math.sqrt(dt) * rng.standard_normal(n)
    else:
        brownian = np.zeros(n)
    counts, offsets, sizes = sample_jumps(t.jumps, dt, rng, n)
    return Increments(dt, t.effective_drift, scale, brownian, counts, offsets, sizes)


def sample_increment(
    t: LevyTriplet, dt: float, rng: np.random.Generator
) -> tuple[float, list[tuple[float, float]]]:
    """
    Sample one increment of the Lévy process over a step of length dt.

    The continuous part carries the drift a minus the compensator λ·E[z 1{|z|≤1}],
    plus Gaussian noise with variance (σ² + small_jump_diffusion)·dt. Jumps with
    |z| > 1 are added uncompensated.

    Args:
        t: Lévy triplet
        dt: Step length (>= 0)
        rng: Random stream

    Returns:
        (continuous increment, [(time offset, size), ...] sorted by offset)

    Raises:
        SimulationError: If dt < 0
    """
    if dt == 0:
        return 0.0, []
    inc = sample_increments(t, dt, rng, 1)
    jumps = sorted(zip(inc.offsets.tolist(), inc.sizes.tolist(), strict=True))
    return float(inc.continuous[0]), jumps
