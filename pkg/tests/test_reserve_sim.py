"""Tests for reserve path simulation."""

import math
from pathlib import Path

import numpy as np
import pytest

from ruin_pide.errors import SimulationError
from ruin_pide.levy_model import spawn_streams
from ruin_pide.models import (
    JumpSpec,
    LevyTriplet,
    ModelParams,
    PointMass,
    SchemeKind,
    UniformLaw,
    SimScheme,
)
from ruin_pide.reserve_sim import (
    EventType,
    doleans_path,
    simulate_batch,
    simulate_path,
    time_grid,
    write_path_csv,
)
from ruin_pide.templates import read_csv


class TestDoleansPath:
    """Tests for the stochastic exponential."""

    def test_starts_at_one_and_stays_positive(self) -> None:
        """Jumps above −1 keep S > 0."""
        s = doleans_path([0.1, 0.2, -0.3], [0.0, 0.01, 0.0], [0.5, -0.9, 0.0])
        assert s[0] == 1.0
        assert np.all(s > 0)
        assert s[1] == pytest.approx(math.exp(0.1) * 1.5)

    def test_ito_correction(self) -> None:
        """exp(c − v/2) per step without jumps."""
        s = doleans_path([0.0, 0.0], [0.2, 0.2])
        assert s[-1] == pytest.approx(math.exp(-0.2))

    def test_pure_drift_is_exponential(self) -> None:
        """R_t = t over two unit steps: S_2 = e²."""
        s = doleans_path([1.0, 1.0], [0.0, 0.0])
        assert s[-1] == pytest.approx(math.exp(2.0), rel=1e-14)
        assert s[-1] == pytest.approx(7.389, abs=1e-3)

    def test_single_jump_halves_price(self) -> None:
        """A jump of −0.5 and nothing else leaves S = 0.5."""
        assert doleans_path([0.0], [0.0], [-0.5])[-1] == 0.5

    def test_jump_to_zero_rejected(self) -> None:
        """A factor 1 + z <= 0 means the triplet check was bypassed."""
        with pytest.raises(SimulationError, match="1\\+z"):
            doleans_path([0.0], [0.0], [-1.0])


class TestTimeGrid:
    """Tests for time_grid."""

    def test_steps_no_longer_than_dt_max(self) -> None:
        """[0, 1] with dt_max 0.3 needs 4 steps."""
        grid = time_grid(0.0, 1.0, 0.3)
        assert grid.size == 5
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_exact_division(self) -> None:
        """No spurious extra step when dt_max divides the span."""
        assert time_grid(0.0, 1.0, 0.01).size == 101


class TestSimulateBatch:
    """Tests for simulate_batch."""

    def test_zero_model_never_ruins(self, zero_params: ModelParams) -> None:
        """With R ≡ P ≡ 0 the reserve stays at u."""
        out = simulate_batch(0.0, 1.0, zero_params, SimScheme(), spawn_streams(0, 0), 100)
        assert not out.ruined.any()
        assert np.all(out.terminal == 1.0)
        assert np.all(np.isnan(out.tau))

    def test_positive_reserve_without_business_never_ruins(self) -> None:
        """P ≡ 0: X = u·S stays positive whatever R does."""
        params = ModelParams(
            R=LevyTriplet(
                drift=-0.5,
                sigma=0.8,
                jumps=JumpSpec(intensity=3.0, size_law=PointMass(z0=-0.5)),
            ),
            T=1.0,
        )
        for kind in SchemeKind:
            out = simulate_batch(
                0.0, 0.1, params, SimScheme(kind=kind), spawn_streams(1, 0), 500
            )
            assert not out.ruined.any()
            assert np.all(out.terminal > 0)

    def test_transport_ruins_at_u(self, transport_params: ModelParams) -> None:
        """dX = −dt from u = 0.5 hits 0 at τ = 0.5 with no overshoot."""
        out = simulate_batch(0.0, 0.5, transport_params, SimScheme(), spawn_streams(0, 0), 10)
        assert out.ruined.all()
        assert out.tau == pytest.approx(np.full(10, 0.5), abs=1e-9)
        assert np.all(out.overshoot == 0.0)

    def test_exact_scheme_reproduces_growth(self) -> None:
        """Pure investment drift: X_T = u·e^{aT} without discretisation error."""
        params = ModelParams(R=LevyTriplet(drift=0.1), T=1.0)
        out = simulate_batch(0.0, 2.0, params, SimScheme(dt_max=0.1), spawn_streams(0, 0), 3)
        assert out.terminal == pytest.approx(np.full(3, 2.0 * math.exp(0.1)), rel=1e-12)

    def test_claim_overshoot(self) -> None:
        """A claim of 2 against capital 1 ruins with overshoot 1."""
        params = ModelParams(
            P=LevyTriplet(jumps=JumpSpec(intensity=50.0, size_law=PointMass(z0=-2.0))), T=1.0
        )
        out = simulate_batch(0.0, 1.0, params, SimScheme(), spawn_streams(3, 0), 200)
        assert out.ruined.all()
        assert out.overshoot == pytest.approx(np.ones(200))
        assert np.all((out.tau > 0.0) & (out.tau < 1.0))

    def test_band_exit_at_lower_edge(self, transport_params: ModelParams) -> None:
        """Leaving [0.5, 2] from u = 1 stops at the edge, which is not ruin."""
        out = simulate_batch(
            0.0, 1.0, transport_params, SimScheme(), spawn_streams(0, 0), 5, band=(0.5, 2.0)
        )
        assert out.stopped.all()
        assert not out.ruined.any()
        assert out.terminal == pytest.approx(np.full(5, 0.5))
        assert out.tau == pytest.approx(np.full(5, 0.5), abs=1e-9)

    def test_horizon_before_exit(self, transport_params: ModelParams) -> None:
        """A shorter horizon stops the paths inside the band."""
        out = simulate_batch(
            0.0, 1.0, transport_params, SimScheme(), spawn_streams(0, 0), 5,
            horizon=0.3, band=(0.5, 2.0),
        )
        assert not out.stopped.any()
        assert out.horizon == 0.3
        assert out.terminal == pytest.approx(np.full(5, 0.7))

    def test_invalid_inputs(self, zero_params: ModelParams) -> None:
        """Capital, start time, path count and band are validated."""
        streams = spawn_streams(0, 0)
        with pytest.raises(SimulationError, match="u=0"):
            simulate_batch(0.0, 0.0, zero_params, SimScheme(), streams, 1)
        with pytest.raises(SimulationError, match="must be < horizon"):
            simulate_batch(1.0, 1.0, zero_params, SimScheme(), streams, 1)
        with pytest.raises(SimulationError, match="at least one path"):
            simulate_batch(0.0, 1.0, zero_params, SimScheme(), streams, 0)
        with pytest.raises(SimulationError, match="inside the band"):
            simulate_batch(0.0, 1.0, zero_params, SimScheme(), streams, 1, band=(1.0, 2.0))

    def test_same_streams_same_paths(self, reference_params: ModelParams) -> None:
        """Identical generators give identical batches."""
        a = simulate_batch(0.0, 1.0, reference_params, SimScheme(), spawn_streams(9, 0), 300)
        b = simulate_batch(0.0, 1.0, reference_params, SimScheme(), spawn_streams(9, 0), 300)
        assert np.array_equal(a.ruined, b.ruined)
        assert np.array_equal(a.terminal, b.terminal)


class TestSimulatePath:
    """Tests for single recorded paths."""

    def test_price_path_does_not_depend_on_business(self) -> None:
        """S at the grid times is the same whatever P does."""
        R = LevyTriplet(
            drift=0.05, sigma=0.2, jumps=JumpSpec(intensity=2.0, size_law=PointMass(z0=0.05))
        )
        quiet = ModelParams(R=R, T=1.0)
        busy = ModelParams(
            R=R,
            P=LevyTriplet(
                drift=0.3, sigma=0.5, jumps=JumpSpec(intensity=5.0, size_law=PointMass(z0=-0.1))
            ),
            T=1.0,
        )
        a = simulate_path(0.0, 100.0, quiet, SimScheme(dt_max=0.05), seed=11)
        b = simulate_path(0.0, 100.0, busy, SimScheme(dt_max=0.05), seed=11)
        grid_a = [s for s, e in zip(a.prices, a.events, strict=True) if e == EventType.GRID]
        grid_b = [s for s, e in zip(b.prices, b.events, strict=True) if e == EventType.GRID]
        assert not a.ruined and not b.ruined
        assert len(grid_a) == len(grid_b) == 21
        assert grid_a == pytest.approx(grid_b, rel=1e-12)

    def test_ruined_path_ends_with_ruin_row(self, transport_params: ModelParams) -> None:
        """The last recorded row is the ruin event."""
        path = simulate_path(0.0, 0.5, transport_params, SimScheme(dt_max=0.1))
        assert path.ruined
        assert path.tau == pytest.approx(0.5, abs=1e-9)
        assert path.overshoot == 0.0
        assert path.events[-1] == EventType.RUIN
        assert path.events[0] == EventType.GRID

    def test_jump_times_recorded(self) -> None:
        """Every applied jump appears as a row and in jump_times."""
        params = ModelParams(
            P=LevyTriplet(
                drift=1.0, jumps=JumpSpec(intensity=20.0, size_law=PointMass(z0=-0.01))
            ),
            T=1.0,
        )
        path = simulate_path(0.0, 1.0, params, SimScheme(), seed=2)
        n_jump_rows = sum(e == EventType.JUMP_P for e in path.events)
        assert n_jump_rows == len(path.jump_times) > 0
        assert list(path.times) == sorted(path.times)

    def test_write_csv(self, transport_params: ModelParams, tmp_path: Path) -> None:
        """CSV columns time, X, S, event_type."""
        path = simulate_path(0.0, 0.5, transport_params, SimScheme(dt_max=0.25))
        out = tmp_path / "paths" / "one.csv"
        write_path_csv(path, out)
        header, rows = read_csv(out)
        assert header == ["time", "X", "S", "event_type"]
        assert len(rows) == len(path.times)
        assert rows[0] == ["0.0", "0.5", "1.0", "grid"]
        assert rows[-1][3] == "ruin"


class TestInvestmentOnly:
    """With P ≡ 0 the reserve is u·S."""

    def test_driftless_price_is_a_martingale(self) -> None:
        """σ = 0.2: mean of S_1 over 10⁵ paths is 1 within 3 SE."""
        params = ModelParams(R=LevyTriplet(sigma=0.2), T=1.0)
        out = simulate_batch(
            0.0, 1.0, params, SimScheme(dt_max=0.25), spawn_streams(17, 0), 100_000
        )
        se = out.terminal.std(ddof=1) / math.sqrt(out.terminal.size)
        assert abs(out.terminal.mean() - 1.0) <= 3 * se

    def test_scale_equivariance(self, reference_params: ModelParams) -> None:
        """X^{t,cu} = c·X^{t,u} pathwise when P ≡ 0."""
        params = ModelParams(R=reference_params.R, T=1.0)
        for kind in SchemeKind:
            scheme = SimScheme(kind=kind, dt_max=0.05)
            one = simulate_path(0.0, 1.5, params, scheme, seed=8)
            three = simulate_path(0.0, 4.5, params, scheme, seed=8)
            assert np.array_equal(one.times, three.times)
            assert three.values == pytest.approx(3.0 * one.values, rel=1e-12)
            assert np.array_equal(one.prices, three.prices)

    def test_random_models_never_ruin(self) -> None:
        """200 random price drivers, bridge test on or off: no path reaches 0."""
        rng = np.random.default_rng(99)
        for i in range(200):
            lo = rng.uniform(-0.99, 0.0)
            size_law = (
                PointMass(z0=rng.uniform(-0.99, 2.0))
                if i % 2
                else UniformLaw(lo=lo, hi=lo + rng.uniform(0.01, 2.0))
            )
            params = ModelParams(
                R=LevyTriplet(
                    drift=rng.uniform(-2.0, 2.0),
                    sigma=rng.uniform(0.0, 1.5),
                    jumps=JumpSpec(intensity=rng.uniform(0.0, 5.0), size_law=size_law),
                    small_jump_diffusion=rng.uniform(0.0, 0.2),
                ),
                T=1.0,
            )
            scheme = SimScheme(
                dt_max=rng.uniform(0.01, 0.5), bridge_correction=bool(rng.integers(2))
            )
            u = rng.uniform(0.01, 5.0)
            out = simulate_batch(0.0, u, params, scheme, spawn_streams(i, 0), 20)
            assert not out.stopped.any(), params
            assert np.all(out.terminal > 0)


class TestSchemesAgree:
    """Euler and exact stepping on inputs without noise in R."""

    def test_deterministic_inputs_identical(self, transport_params: ModelParams) -> None:
        """Same ruin times and values for dX = −dt."""
        outs = [
            simulate_batch(0.0, 0.75, transport_params, SimScheme(kind=k, dt_max=0.1),
                           spawn_streams(0, 0), 4)
            for k in SchemeKind
        ]
        assert np.array_equal(outs[0].tau, outs[1].tau)
        assert np.array_equal(outs[0].terminal, outs[1].terminal)

    def test_business_only_identical(self) -> None:
        """With R ≡ 0 both schemes apply the same increments."""
        params = ModelParams(
            P=LevyTriplet(
                drift=0.5, sigma=0.7, jumps=JumpSpec(intensity=3.0, size_law=PointMass(z0=-0.4))
            ),
            T=1.0,
        )
        outs = [
            simulate_batch(0.0, 1.0, params, SimScheme(kind=k, dt_max=0.05), spawn_streams(4, 0), 300)
            for k in SchemeKind
        ]
        assert np.array_equal(outs[0].ruined, outs[1].ruined)
        assert outs[0].terminal == pytest.approx(outs[1].terminal, abs=1e-12)
