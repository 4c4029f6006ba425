"""Shared test fixtures for ruin-pide tests."""

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from ruin_pide.models import (
    ExponentialLaw,
    JumpSpec,
    LevyTriplet,
    ModelParams,
    PointMass,
)

CONFIGS_DIR = Path(__file__).parent.parent / "configs"


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add CLI flag for the desk-scale acceptance suite."""
    parser.addoption(
        "--acceptance",
        action="store_true",
        default=False,
        help="Run acceptance tests (10^5-10^6 paths, fine grids; minutes, not seconds)",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--acceptance"):
        return
    skip = pytest.mark.skip(reason="needs --acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def journal_path(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point the run journal at a temp file so tests never touch ~/.ruin_pide."""
    path = tmp_path / "journal" / "runs.jsonl"
    monkeypatch.setenv("RUIN_PIDE_LOG_PATH", str(path))
    monkeypatch.delenv("RUIN_PIDE_THREADS", raising=False)
    return path


@pytest.fixture
def configs_dir() -> Path:
    """Directory of the shipped example configs."""
    return CONFIGS_DIR


@pytest.fixture
def zero_params() -> ModelParams:
    """Both drivers identically zero: X stays at u forever."""
    return ModelParams(T=1.0)


@pytest.fixture
def transport_params() -> ModelParams:
    """Pure transport dX = −dt; ruin exactly at t + u."""
    return ModelParams(P=LevyTriplet(drift=-1.0), T=1.0)


@pytest.fixture
def brownian_params() -> ModelParams:
    """P a standard Brownian motion, no investment."""
    return ModelParams(P=LevyTriplet(sigma=1.0), T=1.0)


@pytest.fixture
def reference_params() -> ModelParams:
    """Jump-diffusion investment plus compound-Poisson claims."""
    return ModelParams(
        R=LevyTriplet(
            drift=0.05,
            sigma=0.2,
            jumps=JumpSpec(intensity=0.5, size_law=PointMass(z0=-0.1)),
        ),
        P=LevyTriplet(
            drift=1.0,
            jumps=JumpSpec(intensity=1.0, size_law=ExponentialLaw(rate=2.0, sign=-1)),
        ),
        T=1.0,
    )


@pytest.fixture
def brownian_psi() -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Closed form 2Φ(−u/√(T−t)) for the standard Brownian case with T = 1."""

    def psi(t: np.ndarray, u: np.ndarray) -> np.ndarray:
        t, u = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
        h = 1.0 - t
        safe = np.where(h > 0, h, 1.0)
        inside = 2.0 * norm.cdf(-u / np.sqrt(safe))
        at_end = np.where(u <= 0, 1.0, 0.0)
        return np.asarray(np.where(h > 0, inside, at_end))

    return psi
