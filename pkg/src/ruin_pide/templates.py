"""Output templates - all user-facing text and CSV layouts live here.

Templates are designed to be:
1. Readable in a terminal without post-processing
2. Stable, so scripts can grep the summary lines
3. Separate from the numerics, which never print
"""

import csv
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, TextIO

from .models import OracleResult, RuinEstimate


def format_float(value: float) -> str:
    """Shortest text that round-trips the float exactly."""
    return repr(float(value))


def format_estimate(est: RuinEstimate) -> str:
    """One-line summary of a Monte-Carlo estimate."""
    lo, hi = est.ci95
    return (
        f"{est.mean:.6f} ± {est.std_error:.2e} "
        f"(95% CI [{lo:.6f}, {hi:.6f}], n={est.n_paths}, {est.scheme.value}, dt={est.dt_max:g})"
    )


def format_oracle(result: OracleResult) -> str:
    """One-line summary of an oracle value."""
    return f"{result.value:.6f} (± {result.error_bound:.1e}, {result.provenance})"


def format_problems(problems: Sequence[str]) -> str:
    """Bullet list of configuration or verification problems."""
    return "\n".join(f"  • {p}" for p in problems)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_csv(
    file: str | Path | TextIO, header: Sequence[str], rows: Sequence[Sequence[Any]]
) -> None:
    """
    Write rows as CSV with a header line.

    Floats are written with repr so values survive a round trip bit for bit.

    Args:
        file: Destination path, "-" for stdout, or an open text stream
        header: Column names
        rows: Row values
    """
    if isinstance(file, (str, Path)) and str(file) != "-":
        path = Path(file)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            _write_rows(fh, header, rows)
        return
    _write_rows(sys.stdout if isinstance(file, (str, Path)) else file, header, rows)


def _write_rows(fh: TextIO, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])


def read_csv(file: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV written by write_csv; returns (header, rows) as text."""
    with Path(file).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        return header, [row for row in reader]


# === COMMAND OUTPUT ===

SIMULATE_HEADER = "🎲 Ψ(t={t:g}, ·) by Monte Carlo ({n_paths} paths, seed {seed})"
SIMULATE_ROW = "  u={u:<8g} T={T:<6g} {estimate}"

SOLVE_DONE = (
    "🧮 Solved on {nt}×{nu} grid (umax={umax:g}, {substeps} explicit sub-steps)\n"
    "   Ψ range [{vmin:.6f}, {vmax:.6f}]"
)
SOLVE_ROW = "  u={u:<8g} Ψ(t={t:g}) = {value:.6f}"

VERIFY_PASS = "✅ Viscosity check passed: {n_points} points, max residual {max_residual:.2e}"
VERIFY_FAIL = "⚠️ Viscosity check failed at {n_failed}/{n_points} points (max residual {max_residual:.2e})"
VERIFY_ROW = "  (t={t:.4f}, u={u:.4f}) {side}: residual {residual:+.3e} outside ±{tolerance:.3e}"
DYNKIN_ROW = "  Dynkin at u={u:g}: field {field:.6f} vs MC {mc:.6f} ± {std_error:.1e}"

COMPARE_HEADER = "📊 PIDE vs Monte Carlo at t={t:g}"
COMPARE_ROW = "  u={u:<8g} pide {pide:.6f}  mc {mc:.6f} ± {std_error:.1e}  {verdict}"
COMPARE_AGREE = "✅ agree"
COMPARE_DISAGREE = "❌ disagree"
COMPARE_SUMMARY = "{n_agree}/{n_total} points within 3·SE + scheme tolerance ({scheme_tol:g})"

ORACLE_ROW = "  u={u:<8g} {result}"
ORACLE_HEADER = "🔮 {name} oracle (T={T:g}, t={t:g})"

PATH_WRITTEN = "🛤️ Path written to {file} ({n_rows} rows, {status})"
PATH_STATUS_RUINED = "ruined at τ={tau:.6f}, overshoot {overshoot:.6f}"
PATH_STATUS_SURVIVED = "survived to T"

JOURNAL_EMPTY = "📓 No runs recorded yet."
JOURNAL_ROW = "  {ts}  {command:<8} {status:<6} seed={seed} {summary}"

# === ERRORS ===

ERROR = "❌ {message}"
ERROR_CONFIG = "❌ Invalid configuration ({n} problems):\n{problems}"
