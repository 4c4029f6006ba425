"""Tests for ruin-pide CLI."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from ruin_pide.cli import cli
from ruin_pide.journal import read_journal
from ruin_pide.templates import read_csv


@pytest.fixture
def runner() -> CliRunner:
    """Create a CLI test runner."""
    return CliRunner()


def _write(tmp_path: Path, name: str, doc: dict) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


@pytest.fixture
def zero_config(tmp_path: Path) -> str:
    """Config of the zero model; every method gives Ψ = 0."""
    return _write(
        tmp_path,
        "zero.json",
        {
            "model": {"T": 1.0},
            "grid": {"nu": 60, "nt": 20, "umax": 30.0},
            "n_paths": 200,
            "u_test": [1.0, 2.0],
        },
    )


@pytest.fixture
def transport_config(tmp_path: Path) -> str:
    """Config of dX = −dt on a coarse grid."""
    return _write(
        tmp_path,
        "transport.json",
        {
            "model": {"P": {"drift": -1.0}, "T": 1.0},
            "scheme": {"dt_max": 0.1},
            "grid": {"nu": 40, "nt": 40, "umax": 20.0},
            "n_paths": 100,
            "u_test": [0.5],
        },
    )


class TestCLI:
    """Tests for CLI basics."""

    def test_version(self, runner: CliRunner) -> None:
        """Test --version flag shows the config schema."""
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "0.1.0" in result.output
        assert "config schema 1" in result.output

    def test_help(self, runner: CliRunner) -> None:
        """Test help command."""
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        assert "Finite-horizon ruin" in result.output
        for command in ("simulate", "solve", "verify", "compare", "oracle", "path", "journal"):
            assert command in result.output

    def test_missing_config(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test that an unreadable config exits 1 with ❌."""
        result = runner.invoke(cli, ["solve", "--config", str(tmp_path / "none.json")])
        assert result.exit_code == 1
        assert "❌" in result.output
        assert "cannot read" in result.output

    def test_invalid_config_lists_problems(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test that every config problem is printed."""
        path = _write(tmp_path, "bad.json", {"model": {"T": -1.0}, "n_paths": 0})
        result = runner.invoke(cli, ["simulate", "--config", path])
        assert result.exit_code == 1
        assert "❌ Invalid configuration" in result.output
        assert "model.T" in result.output
        assert "n_paths" in result.output
        assert read_journal()[-1].status == "error"


class TestSimulateCommand:
    """Tests for simulate CLI command."""

    def test_simulate_zero_model(self, runner: CliRunner, zero_config: str, tmp_path: Path) -> None:
        """Test estimates, CSV output and the journal entry."""
        out = tmp_path / "mc.csv"
        result = runner.invoke(
            cli, ["simulate", "--config", zero_config, "--u0", "1.5", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "by Monte Carlo (200 paths, seed 0)" in result.output
        assert "0.000000 ± 0.00e+00" in result.output

        header, rows = read_csv(out)
        assert header == ["u", "t", "mean", "se", "ci_lo", "ci_hi", "n_paths"]
        assert rows[0][:4] == ["1.5", "0.0", "0.0", "0.0"]
        assert rows[0][-1] == "200"

        entry = read_journal()[-1]
        assert entry.command == "simulate"
        assert entry.status == "ok"
        assert entry.seed == 0

    def test_simulate_start_time(
        self, runner: CliRunner, transport_config: str, tmp_path: Path
    ) -> None:
        """Test that --t0 shortens the remaining horizon."""
        out = tmp_path / "mc.csv"
        result = runner.invoke(
            cli,
            ["simulate", "--config", transport_config, "--t0", "0.75", "--u0", "0.5",
             "--paths", "20", "--seed", "3", "--dt-max", "0.05", "--scheme", "euler",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "Ψ(t=0.75, ·)" in result.output
        header, rows = read_csv(out)
        assert header == ["u", "t", "mean", "se", "ci_lo", "ci_hi", "n_paths"]
        assert rows == [["0.5", "0.75", "0.0", "0.0", rows[0][4], rows[0][5], "20"]]

    def test_simulate_horizons(self, runner: CliRunner, transport_config: str) -> None:
        """Test one row per (u, T) pair, told apart by a trailing T column."""
        result = runner.invoke(
            cli,
            ["simulate", "--config", transport_config, "--u0", "1.0",
             "--horizon", "0.5", "--horizon", "2.0", "--out", "-"],
        )
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert "u,t,mean,se,ci_lo,ci_hi,n_paths,T" in lines
        csv_lines = [line.split(",") for line in lines if line.startswith("1.0,0.0,")]
        assert [(r[2], r[-1]) for r in csv_lines] == [("0.0", "0.5"), ("1.0", "2.0")]

    def test_simulate_start_after_horizon(self, runner: CliRunner, zero_config: str) -> None:
        """Test that t0 ≥ T exits 1."""
        result = runner.invoke(cli, ["simulate", "--config", zero_config, "--t0", "1.0"])
        assert result.exit_code == 1
        assert "❌" in result.output

    def test_simulate_bad_override(self, runner: CliRunner, zero_config: str) -> None:
        """Test that an invalid scheme override exits 1."""
        result = runner.invoke(cli, ["simulate", "--config", zero_config, "--dt-max", "-1"])
        assert result.exit_code == 1
        assert "❌" in result.output


class TestSolveAndVerify:
    """Tests for solve and verify CLI commands."""

    def test_solve_writes_field(self, runner: CliRunner, zero_config: str, tmp_path: Path) -> None:
        """Test the solve summary and t,u,psi CSV."""
        out = tmp_path / "field.csv"
        result = runner.invoke(cli, ["solve", "--config", zero_config, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "Solved on 20×60 grid" in result.output
        assert "Ψ(t=0) = 0.000000" in result.output
        header, rows = read_csv(out)
        assert header == ["t", "u", "psi"]
        assert len(rows) == 21 * 61

    def test_verify_solved_field(self, runner: CliRunner, zero_config: str, tmp_path: Path) -> None:
        """Test verification of a field read back from CSV."""
        field = tmp_path / "field.csv"
        report = tmp_path / "report.csv"
        runner.invoke(cli, ["solve", "--config", zero_config, "--out", str(field)])
        result = runner.invoke(
            cli,
            ["verify", "--config", zero_config, "--field", str(field),
             "--samples", "40", "--report", str(report)],
        )
        assert result.exit_code == 0, result.output
        assert "✅ Viscosity check passed" in result.output
        header, rows = read_csv(report)
        assert header == ["t", "u", "residual", "superjet", "subjet", "pass"]
        assert len(rows) == 40
        assert read_journal()[-1].status == "ok"

    def test_verify_field_with_wrong_columns(
        self, runner: CliRunner, zero_config: str, tmp_path: Path
    ) -> None:
        """Test that a malformed field file exits 1."""
        field = tmp_path / "field.csv"
        field.write_text("a,b,c\n0,0,0\n", encoding="utf-8")
        result = runner.invoke(cli, ["verify", "--config", zero_config, "--field", str(field)])
        assert result.exit_code == 1
        assert "expected columns t,u,psi" in result.output

    def test_verify_with_dynkin(self, runner: CliRunner, zero_config: str) -> None:
        """Test the Dynkin rows on the zero model."""
        result = runner.invoke(
            cli, ["verify", "--config", zero_config, "--samples", "10", "--dynkin"]
        )
        assert result.exit_code == 0, result.output
        assert "Dynkin at u=1: field 0.000000 vs MC 0.000000" in result.output


class TestCompareCommand:
    """Tests for compare CLI command."""

    def test_compare_agrees(self, runner: CliRunner, zero_config: str, tmp_path: Path) -> None:
        """Test a passing comparison with CSV output."""
        out = tmp_path / "cmp.csv"
        result = runner.invoke(cli, ["compare", "--config", zero_config, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "2/2 points within 3·SE" in result.output
        header, rows = read_csv(out)
        assert header == ["u", "psi_pide", "psi_mc", "se", "abs_diff", "pass"]
        assert [r[-1] for r in rows] == ["pass", "pass"]

    def test_compare_disagrees(self, runner: CliRunner, transport_config: str) -> None:
        """Test that disagreement exits 1 and is journalled as a failure."""
        result = runner.invoke(cli, ["compare", "--config", transport_config])
        assert result.exit_code == 1
        assert "❌ disagree" in result.output
        assert read_journal()[-1].status == "fail"


class TestOracleCommands:
    """Tests for oracle CLI commands."""

    def test_brownian(self, runner: CliRunner) -> None:
        """Test 2Φ(−1)."""
        result = runner.invoke(
            cli, ["oracle", "brownian", "--u", "1", "--sigma-p", "1", "--h", "1"]
        )
        assert result.exit_code == 0, result.output
        assert "0.317311" in result.output
        assert "closed_form" in result.output

    def test_brownian_domain_error(self, runner: CliRunner) -> None:
        """Test that σ_P = 0 exits 1."""
        result = runner.invoke(
            cli, ["oracle", "brownian", "--u", "1", "--sigma-p", "0", "--h", "1"]
        )
        assert result.exit_code == 1
        assert "❌" in result.output

    def test_cramer_lundberg(self, runner: CliRunner) -> None:
        """Test ½e^{−2}."""
        result = runner.invoke(
            cli,
            ["oracle", "cramer-lundberg", "--u", "2", "--c", "1", "--lam", "1", "--mu", "0.5"],
        )
        assert result.exit_code == 0, result.output
        assert "0.067668" in result.output

    def test_fine_mc(self, runner: CliRunner, zero_config: str) -> None:
        """Test the brute-force estimate on the zero model."""
        result = runner.invoke(
            cli,
            ["oracle", "fine-mc", "--config", zero_config, "--u", "1",
             "--dt-fine", "0.01", "--paths", "20"],
        )
        assert result.exit_code == 0, result.output
        assert "0.000000" in result.output
        assert "fine_mc" in result.output


class TestPathCommand:
    """Tests for path CLI command."""

    def test_path_to_stdout(self, runner: CliRunner, transport_config: str) -> None:
        """Test CSV rows on stdout ending in ruin."""
        result = runner.invoke(cli, ["path", "--config", transport_config, "--u", "0.5"])
        assert result.exit_code == 0, result.output
        lines = result.output.strip().splitlines()
        assert lines[0] == "time,X,S,event_type"
        assert lines[-1].endswith(",ruin")

    def test_path_to_file(self, runner: CliRunner, transport_config: str, tmp_path: Path) -> None:
        """Test the summary line when writing a file."""
        out = tmp_path / "path.csv"
        result = runner.invoke(
            cli, ["path", "--config", transport_config, "--u", "5", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "survived to T" in result.output
        assert out.exists()


class TestJournalCommand:
    """Tests for journal CLI command."""

    def test_empty_journal(self, runner: CliRunner) -> None:
        """Test the message before any run."""
        result = runner.invoke(cli, ["journal"])
        assert result.exit_code == 0
        assert "No runs recorded yet" in result.output

    def test_lists_runs(self, runner: CliRunner) -> None:
        """Test that recent runs are listed."""
        runner.invoke(cli, ["oracle", "brownian", "--u", "1", "--sigma-p", "1", "--h", "1"])
        result = runner.invoke(cli, ["journal", "--limit", "5"])
        assert result.exit_code == 0
        assert "oracle" in result.output
        assert "brownian at 1 capitals" in result.output

    def test_unwritable_journal_does_not_fail_run(self, runner: CliRunner, mocker) -> None:
        """Test that a journal write error only logs a warning."""
        mocker.patch("ruin_pide.cli.record_run", side_effect=OSError("read-only"))
        result = runner.invoke(
            cli, ["oracle", "cramer-lundberg", "--u", "0", "--c", "1", "--lam", "1", "--mu", "0.5"]
        )
        assert result.exit_code == 0
        assert "0.500000" in result.output

    def test_filter_by_command_and_status(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test that --command and --status narrow the listing."""
        runner.invoke(cli, ["oracle", "brownian", "--u", "1", "--sigma-p", "1", "--h", "1"])
        runner.invoke(cli, ["solve", "--config", str(tmp_path / "none.json")])
        result = runner.invoke(cli, ["journal", "--status", "error"])
        assert result.exit_code == 0
        assert "solve" in result.output
        assert "oracle" not in result.output
        assert "cannot read" in result.output
        result = runner.invoke(cli, ["journal", "--command", "simulate"])
        assert "No runs recorded yet" in result.output
