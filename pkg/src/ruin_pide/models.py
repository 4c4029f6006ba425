"""Pydantic models for ruin-pide: Lévy characteristics, payoffs, schemes and run config."""

import math
from enum import Enum
from typing import Annotated, Literal

import numpy as np
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import CONFIG_SCHEMA_VERSION

FloatArray = NDArray[np.float64]


def _legendre_on(lo: float, hi: float, n: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre nodes and weights mapped to [lo, hi]."""
    x, w = leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


# === JUMP SIZE LAWS ===


class PointMass(BaseModel):
    """All jumps have the same size z0."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["point"] = "point"
    z0: float

    def mean_truncated(self) -> float:
        return self.z0 if abs(self.z0) <= 1.0 else 0.0

    def mass_at_or_below(self, x: float) -> float:
        return 1.0 if self.z0 <= x else 0.0

    def atoms(self, n_quad: int = 32) -> tuple[FloatArray, FloatArray]:
        return np.array([self.z0]), np.array([1.0])

    def sample(self, rng: np.random.Generator, n: int) -> FloatArray:
        return np.full(n, self.z0)


class ExponentialLaw(BaseModel):
    """Jump magnitude ~ Exp(rate), carried with a fixed sign."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["exponential"] = "exponential"
    rate: float = Field(gt=0)
    sign: Literal[1, -1] = 1

    @property
    def mean(self) -> float:
        return self.sign / self.rate

    def mean_truncated(self) -> float:
        r = self.rate
        return self.sign * (1.0 - math.exp(-r) - r * math.exp(-r)) / r

    def mass_at_or_below(self, x: float) -> float:
        if self.sign > 0:
            return 0.0 if x < 0 else 1.0 - math.exp(-self.rate * x)
        return 1.0 if x >= 0 else math.exp(self.rate * x)

    def atoms(self, n_quad: int = 32) -> tuple[FloatArray, FloatArray]:
        """Legendre on magnitudes [0, 1], shifted Laguerre on ]1, ∞[."""
        y_in, w_in = _legendre_on(0.0, 1.0, n_quad)
        p_in = w_in * self.rate * np.exp(-self.rate * y_in)
        xi, omega = laggauss(n_quad)
        y_out = 1.0 + xi / self.rate
        p_out = omega * math.exp(-self.rate)
        values = self.sign * np.concatenate([y_in, y_out])
        probs = np.concatenate([p_in, p_out])
        return values, probs / probs.sum()

    def sample(self, rng: np.random.Generator, n: int) -> FloatArray:
        return self.sign * rng.exponential(1.0 / self.rate, n)


class UniformLaw(BaseModel):
    """Jump size uniform on [lo, hi]."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform"] = "uniform"
    lo: float
    hi: float

    @model_validator(mode="after")
    def check_bounds(self) -> "UniformLaw":
        if not self.hi > self.lo:
            raise ValueError(f"uniform law needs lo < hi, got lo={self.lo}, hi={self.hi}")
        return self

    def mean_truncated(self) -> float:
        a, b = max(self.lo, -1.0), min(self.hi, 1.0)
        if b <= a:
            return 0.0
        return (b * b - a * a) / (2.0 * (self.hi - self.lo))

    def mass_at_or_below(self, x: float) -> float:
        return min(1.0, max(0.0, (x - self.lo) / (self.hi - self.lo)))

    def atoms(self, n_quad: int = 32) -> tuple[FloatArray, FloatArray]:
        """Legendre pieces split at ±1 so the compensator cut is integrated exactly."""
        cuts = sorted({self.lo, self.hi, *(c for c in (-1.0, 1.0) if self.lo < c < self.hi)})
        values, probs = [], []
        for a, b in zip(cuts[:-1], cuts[1:], strict=True):
            z, w = _legendre_on(a, b, n_quad)
            values.append(z)
            probs.append(w / (self.hi - self.lo))
        p = np.concatenate(probs)
        return np.concatenate(values), p / p.sum()

    def sample(self, rng: np.random.Generator, n: int) -> FloatArray:
        return rng.uniform(self.lo, self.hi, n)


class EmpiricalLaw(BaseModel):
    """Finite list of (value, probability) atoms."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["empirical"] = "empirical"
    points: list[tuple[float, float]]

    @field_validator("points")
    @classmethod
    def check_probabilities(cls, v: list[tuple[float, float]]) -> list[tuple[float, float]]:
        if not v:
            raise ValueError("empirical law needs at least one atom")
        if any(p < 0 for _, p in v):
            raise ValueError("empirical probabilities must be non-negative")
        total = math.fsum(p for _, p in v)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"empirical probabilities sum to {total!r}, expected 1 within 1e-12")
        return v

    @property
    def values(self) -> FloatArray:
        return np.array([z for z, _ in self.points])

    @property
    def probabilities(self) -> FloatArray:
        return np.array([p for _, p in self.points])

    def mean_truncated(self) -> float:
        return math.fsum(z * p for z, p in self.points if abs(z) <= 1.0)

    def mass_at_or_below(self, x: float) -> float:
        return math.fsum(p for z, p in self.points if z <= x)

    def atoms(self, n_quad: int = 32) -> tuple[FloatArray, FloatArray]:
        return self.values, self.probabilities

    def sample(self, rng: np.random.Generator, n: int) -> FloatArray:
        p = self.probabilities
        return rng.choice(self.values, size=n, p=p / p.sum())


SizeLaw = Annotated[
    PointMass | ExponentialLaw | UniformLaw | EmpiricalLaw,
    Field(discriminator="kind"),
]


# === LÉVY CHARACTERISTICS ===


class JumpSpec(BaseModel):
    """Finite-activity Lévy measure Π(dz) = intensity · size_law(dz)."""

    model_config = ConfigDict(frozen=True)

    intensity: float = Field(default=0.0, ge=0)
    size_law: SizeLaw = Field(default_factory=lambda: PointMass(z0=0.0))

    @property
    def active(self) -> bool:
        return self.intensity > 0

    def compensator(self) -> float:
        """λ·E[z 1{|z|≤1}], the drift removed by compensating small jumps."""
        return self.intensity * self.size_law.mean_truncated() if self.active else 0.0


class LevyTriplet(BaseModel):
    """Characteristics (a, σ², Π) of one driving Lévy process.

    ``drift`` is the canonical ``a``: jumps with |z| ≤ 1 enter compensated, so their
    mean must NOT be added to the drift in config files.
    """

    model_config = ConfigDict(frozen=True)

    drift: float = 0.0
    sigma: float = Field(default=0.0, ge=0)
    jumps: JumpSpec = Field(default_factory=JumpSpec)
    small_jump_diffusion: float = Field(default=0.0, ge=0)

    @classmethod
    def from_net_drift(
        cls,
        net_drift: float,
        sigma: float = 0.0,
        jumps: JumpSpec | None = None,
        small_jump_diffusion: float = 0.0,
    ) -> "LevyTriplet":
        """Triplet whose continuous part drifts at net_drift, e.g. a premium rate c."""
        jumps = jumps if jumps is not None else JumpSpec()
        return cls(
            drift=net_drift + jumps.compensator(),
            sigma=sigma,
            jumps=jumps,
            small_jump_diffusion=small_jump_diffusion,
        )

    @property
    def variance(self) -> float:
        """Gaussian variance rate including the small-jump surrogate."""
        return self.sigma**2 + self.small_jump_diffusion

    @property
    def effective_drift(self) -> float:
        """Drift of the continuous part once small jumps are compensated."""
        return self.drift - self.jumps.compensator()

    @property
    def is_zero(self) -> bool:
        return self.drift == 0 and self.variance == 0 and not self.jumps.active


class PayoffKind(str, Enum):
    """How the penalty V is applied at ruin."""

    RUIN_INDICATOR = "ruin_indicator"
    DEFICIT_PENALTY = "deficit_penalty"
    POSITIVE_PART = "positive_part"  # literal V = I_{]0,∞[}: zero at every ruin


class PayoffSpec(BaseModel):
    """Penalty V applied at the ruin time (only when τ < T)."""

    model_config = ConfigDict(frozen=True)

    kind: PayoffKind = PayoffKind.RUIN_INDICATOR
    # (overshoot, weight) knots for deficit_penalty, linear in between
    penalty: list[tuple[float, float]] | None = None

    @model_validator(mode="after")
    def check_penalty(self) -> "PayoffSpec":
        if self.kind != PayoffKind.DEFICIT_PENALTY:
            return self
        if not self.penalty:
            raise ValueError("deficit_penalty needs a non-empty penalty table")
        xs = [x for x, _ in self.penalty]
        if any(x < 0 for x in xs) or any(b <= a for a, b in zip(xs, xs[1:], strict=False)):
            raise ValueError("penalty overshoots must be >= 0 and strictly increasing")
        if any(not 0.0 <= w <= 1.0 for _, w in self.penalty):
            raise ValueError("penalty weights must lie in [0, 1]")
        return self

    def value_at_ruin(self, overshoot: FloatArray | float) -> FloatArray:
        """V(X_τ) as a function of the overshoot |X_τ| >= 0."""
        y = np.abs(np.asarray(overshoot, dtype=float))
        if self.kind == PayoffKind.RUIN_INDICATOR:
            return np.ones_like(y)
        if self.kind == PayoffKind.POSITIVE_PART:
            return np.zeros_like(y)
        assert self.penalty is not None
        xs = np.array([x for x, _ in self.penalty])
        ws = np.array([w for _, w in self.penalty])
        return np.interp(y, xs, ws)


class ModelParams(BaseModel):
    """The two drivers R (investment) and P (business), horizon and payoff."""

    model_config = ConfigDict(frozen=True)

    R: LevyTriplet = Field(default_factory=LevyTriplet)
    P: LevyTriplet = Field(default_factory=LevyTriplet)
    T: float = Field(gt=0)
    payoff: PayoffSpec = Field(default_factory=PayoffSpec)

    # field-level: runs even when T or payoff fail
    @field_validator("R")
    @classmethod
    def check_price_driver(cls, R: LevyTriplet) -> LevyTriplet:
        from .levy_model import validate_triplet

        result = validate_triplet(R, is_price_driver=True)
        if not result.valid:
            raise ValueError(
                "R violates the positivity condition Π(]−∞,−1]) = 0: "
                + "; ".join(result.violations)
            )
        return R

    @property
    def total_jump_intensity(self) -> float:
        return self.R.jumps.intensity + self.P.jumps.intensity

    def with_horizon(self, T: float) -> "ModelParams":
        return self.model_copy(update={"T": T})


# === NUMERICAL SETTINGS ===


class SchemeKind(str, Enum):
    """Path stepping scheme."""

    EULER = "euler"
    EXACT_BETWEEN_JUMPS = "exact_between_jumps"


class SimScheme(BaseModel):
    """How reserve paths are discretised."""

    model_config = ConfigDict(frozen=True)

    kind: SchemeKind = SchemeKind.EXACT_BETWEEN_JUMPS
    dt_max: float = Field(default=1e-2, gt=0)
    # in-step barrier crossing test between grid points
    bridge_correction: bool = False


class GridSpec(BaseModel):
    """PIDE grid sizes: nu u-intervals on [0, umax], nt time steps."""

    model_config = ConfigDict(frozen=True)

    nu: int = Field(default=400, ge=4)
    nt: int = Field(default=400, ge=1)
    umax: float = Field(default=60.0, gt=0)
    stretch: float = Field(default=0.0, ge=0)


class ToleranceSpec(BaseModel):
    """Explicit tolerances; every one is echoed in reports."""

    model_config = ConfigDict(frozen=True)

    scheme_tol: float = Field(default=1e-2, ge=0)
    jet_eta: float | None = Field(default=None, ge=0)
    residual_c: float = Field(default=5.0, ge=0)
    verify_samples: int = Field(default=1000, ge=1)
    dynkin_h: float = Field(default=0.05, gt=0)


class RunConfig(BaseModel):
    """Everything a CLI run needs, as loaded from a JSON config file."""

    model_config = ConfigDict(frozen=True)

    schema_version: str = CONFIG_SCHEMA_VERSION
    model: ModelParams
    scheme: SimScheme = Field(default_factory=SimScheme)
    grid: GridSpec = Field(default_factory=GridSpec)
    tolerances: ToleranceSpec = Field(default_factory=ToleranceSpec)
    seed: int = Field(default=0, ge=0)
    n_paths: int = Field(default=10_000, ge=1)
    t0: float = Field(default=0.0, ge=0)
    u_test: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    workers: int | None = Field(default=None, ge=1)

    @field_validator("u_test")
    @classmethod
    def check_u_test(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("u_test needs at least one capital")
        if any(u <= 0 for u in v):
            raise ValueError("test capitals must be > 0")
        return v

    @model_validator(mode="after")
    def check_start(self) -> "RunConfig":
        if self.t0 >= self.model.T:
            raise ValueError(f"t0={self.t0} must be < T={self.model.T}")
        return self


# === RESULTS ===


class RuinEstimate(BaseModel):
    """Monte Carlo estimate of Ψ(t,u)."""

    model_config = ConfigDict(frozen=True)

    mean: float = Field(ge=0, le=1)
    std_error: float = Field(ge=0)
    n_paths: int = Field(ge=1)
    ci95: tuple[float, float]
    scheme: SchemeKind
    dt_max: float

    @model_validator(mode="after")
    def check_interval(self) -> "RuinEstimate":
        lo, hi = self.ci95
        if not (0.0 <= lo <= self.mean <= hi <= 1.0):
            raise ValueError(f"ci95 {self.ci95} does not bracket mean {self.mean}")
        return self


class OracleResult(BaseModel):
    """Reference answer with its provenance."""

    model_config = ConfigDict(frozen=True)

    value: float
    error_bound: float = Field(ge=0)
    provenance: Literal["closed_form", "fine_mc"]
