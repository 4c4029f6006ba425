"""Click CLI entrypoint for ruin-pide."""

import logging
import sys
from typing import NoReturn

import click

from . import CONFIG_SCHEMA_VERSION, __version__, templates
from .compare import CSV_HEADER, run_compare, solve_config
from .config import load_config_text, parse_config_text
from .errors import ConfigError, RuinPideError
from .journal import RunStatus, config_digest, read_journal, record_run
from .mc_estimator import dynkin_check, estimate_psi_profile
from .models import ModelParams, RunConfig, SchemeKind, SimScheme
from .oracles import brownian_first_passage, cramer_lundberg_ultimate, fine_mc
from .pide_solver import Grid, SolutionField, field_from_rows, field_rows
from .reserve_sim import simulate_path, write_path_csv
from .templates import read_csv, write_csv
from .viscosity_verifier import verify_field

logger = logging.getLogger(__name__)


def _journal(
    command: str,
    status: RunStatus,
    summary: str,
    digest: str | None = None,
    seed: int | None = None,
    error_msg: str | None = None,
) -> None:
    try:
        record_run(command, status, summary, digest, seed, error_msg)
    except OSError as e:
        logger.warning("could not write run journal: %s", e)


def _fail(command: str, err: Exception, digest: str | None = None, seed: int | None = None) -> NoReturn:
    _journal(command, "error", "", digest, seed, error_msg=str(err))
    if isinstance(err, ConfigError):
        message = templates.ERROR_CONFIG.format(
            n=len(err.problems), problems=templates.format_problems(err.problems)
        )
    else:
        message = templates.ERROR.format(message=err)
    click.echo(message, err=True)
    sys.exit(1)


def _load(command: str, path: str) -> tuple[RunConfig, str]:
    try:
        text = load_config_text(path)
        digest = config_digest(text)
    except ConfigError as e:
        _fail(command, e)
    try:
        return parse_config_text(text, source=path), digest
    except ConfigError as e:
        _fail(command, e, digest)


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(dir_okay=False),
    help="Run config (JSON)",
)


@click.group()
@click.version_option(
    version=__version__,
    message=f"%(prog)s %(version)s (config schema {CONFIG_SCHEMA_VERSION})",
)
@click.option(
    "--log-level",
    default="WARNING",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Logging level for library diagnostics",
)
def cli(log_level: str) -> None:
    """ruin-pide - Finite-horizon ruin probabilities by PIDE and Monte Carlo."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s")


SIMULATE_COLUMNS = ["u", "t", "mean", "se", "ci_lo", "ci_hi", "n_paths"]


@cli.command()
@config_option
@click.option("--t0", type=float, default=None, help="Start time t (default: config t0)")
@click.option("--u0", "capitals", type=float, multiple=True, help="Initial capital (default: u_test)")
@click.option("--horizon", "horizons", type=float, multiple=True, help="Horizon T (default: config T)")
@click.option("--paths", type=int, default=None, help="Number of paths (default: n_paths)")
@click.option("--seed", type=int, default=None, help="Master seed (default: config seed)")
@click.option(
    "--scheme", type=click.Choice([k.value for k in SchemeKind]), default=None, help="Stepping scheme"
)
@click.option("--dt-max", "dt_max", type=float, default=None, help="Largest time step")
@click.option("--bridge/--no-bridge", default=None, help="In-step crossing correction")
@click.option("--workers", type=int, default=None, help="Worker threads")
@click.option("--out", default=None, help="CSV output (default: none, '-' for stdout)")
def simulate(
    config_path: str,
    t0: float | None,
    capitals: tuple[float, ...],
    horizons: tuple[float, ...],
    paths: int | None,
    seed: int | None,
    scheme: str | None,
    dt_max: float | None,
    bridge: bool | None,
    workers: int | None,
    out: str | None,
) -> None:
    """Estimate Ψ(t0, u0) by Monte Carlo.

    CSV rows are u, t, mean, se, ci_lo, ci_hi, n_paths. When several
    horizons are given a trailing T column tells them apart.
    """
    config, digest = _load("simulate", config_path)
    seed_ = config.seed if seed is None else seed
    n_paths = config.n_paths if paths is None else paths
    start = config.t0 if t0 is None else t0
    update: dict[str, object] = {}
    if dt_max is not None:
        update["dt_max"] = dt_max
    if scheme is not None:
        update["kind"] = SchemeKind(scheme)
    if bridge is not None:
        update["bridge_correction"] = bridge
    try:
        sim = SimScheme.model_validate({**config.scheme.model_dump(), **update})
    except ValueError as e:
        _fail("simulate", e, digest, seed_)
    us = list(capitals) or config.u_test
    Ts = list(horizons) or [config.model.T]
    several = len(Ts) > 1

    rows = []
    try:
        click.echo(templates.SIMULATE_HEADER.format(t=start, n_paths=n_paths, seed=seed_))
        for u in us:
            ests = estimate_psi_profile(
                start, u, config.model, Ts, n_paths, sim, seed_, workers or config.workers
            )
            for T, est in zip(Ts, ests, strict=True):
                click.echo(
                    templates.SIMULATE_ROW.format(u=u, T=T, estimate=templates.format_estimate(est))
                )
                row = (u, start, est.mean, est.std_error, *est.ci95, est.n_paths)
                rows.append((*row, T) if several else row)
        if out:
            write_csv(out, SIMULATE_COLUMNS + (["T"] if several else []), rows)
    except (RuinPideError, OSError) as e:
        _fail("simulate", e, digest, seed_)
    _journal("simulate", "ok", f"{len(rows)} estimates", digest, seed_)


@cli.command()
@config_option
@click.option("--nu", type=int, default=None, help="u intervals (default: config grid)")
@click.option("--nt", type=int, default=None, help="t intervals (default: config grid)")
@click.option("--umax", type=float, default=None, help="Truncation U (default: config grid)")
@click.option("--stretch", type=float, default=None, help="sinh stretching towards 0")
@click.option("--out", default=None, help="CSV of t,u,psi ('-' for stdout)")
def solve(
    config_path: str,
    nu: int | None,
    nt: int | None,
    umax: float | None,
    stretch: float | None,
    out: str | None,
) -> None:
    """Solve the PIDE backward from T."""
    config, digest = _load("solve", config_path)
    g = config.grid
    try:
        grid = Grid.build(
            config.model.T,
            g.nu if nu is None else nu,
            g.nt if nt is None else nt,
            g.umax if umax is None else umax,
            g.stretch if stretch is None else stretch,
        )
        field = solve_config(config, grid)
        if out:
            write_csv(out, ["t", "u", "psi"], field_rows(field))
    except (RuinPideError, OSError) as e:
        _fail("solve", e, digest)

    v = field.values
    click.echo(
        templates.SOLVE_DONE.format(
            nt=grid.nt, nu=grid.nu, umax=grid.umax, substeps=field.substeps,
            vmin=float(v.min()), vmax=float(v.max()),
        )
    )
    for u in config.u_test:
        value = float(field.interpolate(config.t0, u))
        click.echo(templates.SOLVE_ROW.format(u=u, t=config.t0, value=value))
    _journal("solve", "ok", f"{grid.nt}x{grid.nu} grid", digest)


def _read_field(path: str, params: ModelParams) -> SolutionField:
    header, rows = read_csv(path)
    if header[:3] != ["t", "u", "psi"]:
        raise ConfigError([f"{path}: expected columns t,u,psi, got {','.join(header)}"])
    try:
        data = [(float(r[0]), float(r[1]), float(r[2])) for r in rows]
    except (ValueError, IndexError) as e:
        raise ConfigError([f"{path}: malformed row ({e})"]) from e
    field = field_from_rows(data, params)
    if field.grid.T != params.T:
        raise ConfigError([f"{path}: field horizon {field.grid.T} differs from T={params.T}"])
    return field


@cli.command()
@config_option
@click.option("--field", "field_path", default=None, help="Field CSV (t,u,psi); solved if omitted")
@click.option("--samples", type=int, default=None, help="Sampled nodes (default: tolerances)")
@click.option("--tol", type=float, default=None, help="Residual tolerance (default C·(Δu+Δt))")
@click.option("--seed", type=int, default=None, help="Sampling seed")
@click.option("--min-pass", type=float, default=0.99, help="Required pass fraction")
@click.option("--dynkin/--no-dynkin", default=False, help="Also run the Dynkin check at u_test")
@click.option("--report", default=None, help="Per-point CSV report")
def verify(
    config_path: str,
    field_path: str | None,
    samples: int | None,
    tol: float | None,
    seed: int | None,
    min_pass: float,
    dynkin: bool,
    report: str | None,
) -> None:
    """Check the viscosity inequalities on a field."""
    config, digest = _load("verify", config_path)
    seed_ = config.seed if seed is None else seed
    tols = config.tolerances
    try:
        field = (
            _read_field(field_path, config.model) if field_path else solve_config(config)
        )
        rep = verify_field(
            field,
            config.model,
            samples=tols.verify_samples if samples is None else samples,
            tol=tol,
            seed=seed_,
            residual_c=tols.residual_c,
            eta=tols.jet_eta,
        )
        if report:
            write_csv(
                report,
                ["t", "u", "residual", "superjet", "subjet", "pass"],
                [
                    (c.t, c.u, "" if c.residual is None else c.residual,
                     int(c.has_superjet), int(c.has_subjet), int(c.passed))
                    for c in rep.checks
                ],
            )
        dynkin_reports = []
        if dynkin:
            for u in config.u_test:
                dynkin_reports.append(
                    dynkin_check(
                        config.t0, u, config.model, field, tols.dynkin_h,
                        config.n_paths, seed_, scheme=config.scheme, workers=config.workers,
                    )
                )
    except (RuinPideError, OSError) as e:
        _fail("verify", e, digest, seed_)

    ok = rep.pass_fraction >= min_pass
    template = templates.VERIFY_PASS if ok else templates.VERIFY_FAIL
    click.echo(
        template.format(
            n_points=rep.n_checked, n_failed=rep.n_failed, max_residual=rep.max_residual
        )
    )
    for c in rep.failures[:10]:
        side = "superjet" if c.has_superjet else "subjet"
        click.echo(
            templates.VERIFY_ROW.format(
                t=c.t, u=c.u, side=side, residual=c.residual or 0.0, tolerance=rep.tolerance
            )
        )
    for u, d in zip(config.u_test, dynkin_reports, strict=False):
        click.echo(
            templates.DYNKIN_ROW.format(
                u=u, field=d.psi_start, mc=d.psi_stopped_mean, std_error=d.std_error
            )
        )
    summary = f"{rep.n_passed}/{rep.n_checked} passed, {rep.n_empty} empty"
    _journal("verify", "ok" if ok else "fail", summary, digest, seed_)
    if not ok:
        sys.exit(1)


@cli.command()
@config_option
@click.option("--out", default=None, help="Joint CSV ('-' for stdout)")
def compare(config_path: str, out: str | None) -> None:
    """Run the PIDE and Monte Carlo side by side; exit 1 on disagreement."""
    config, digest = _load("compare", config_path)
    try:
        result = run_compare(config)
        if out:
            write_csv(out, CSV_HEADER, [r.as_csv() for r in result.rows])
    except (RuinPideError, OSError) as e:
        _fail("compare", e, digest, config.seed)

    click.echo(templates.COMPARE_HEADER.format(t=result.t))
    for r in result.rows:
        verdict = templates.COMPARE_AGREE if r.passed else templates.COMPARE_DISAGREE
        click.echo(
            templates.COMPARE_ROW.format(
                u=r.u, pide=r.psi_pide, mc=r.psi_mc, std_error=r.se, verdict=verdict
            )
        )
    summary = templates.COMPARE_SUMMARY.format(
        n_agree=result.n_passed, n_total=len(result.rows), scheme_tol=result.scheme_tol
    )
    click.echo(summary)
    _journal("compare", "ok" if result.all_pass else "fail", summary, digest, config.seed)
    if not result.all_pass:
        sys.exit(1)


@cli.group()
def oracle() -> None:
    """Reference answers (closed forms and fine-step Monte Carlo)."""
    pass


@oracle.command("brownian")
@click.option("--u", "capitals", type=float, multiple=True, required=True, help="Initial capital")
@click.option("--a-p", type=float, default=0.0, help="Drift of P")
@click.option("--sigma-p", type=float, required=True, help="Volatility of P")
@click.option("--h", type=float, required=True, help="Time to horizon T − t")
def oracle_brownian(capitals: tuple[float, ...], a_p: float, sigma_p: float, h: float) -> None:
    """First passage of a Brownian motion with drift."""
    click.echo(templates.ORACLE_HEADER.format(name="Brownian", T=h, t=0.0))
    try:
        for u in capitals:
            res = brownian_first_passage(u, a_p, sigma_p, h)
            click.echo(templates.ORACLE_ROW.format(u=u, result=templates.format_oracle(res)))
    except RuinPideError as e:
        _fail("oracle", e)
    _journal("oracle", "ok", f"brownian at {len(capitals)} capitals")


@oracle.command("cramer-lundberg")
@click.option("--u", "capitals", type=float, multiple=True, required=True, help="Initial capital")
@click.option("--c", "premium", type=float, required=True, help="Premium rate")
@click.option("--lam", type=float, required=True, help="Claim intensity")
@click.option("--mu", type=float, required=True, help="Mean claim size")
def oracle_cramer_lundberg(
    capitals: tuple[float, ...], premium: float, lam: float, mu: float
) -> None:
    """Ultimate ruin probability with exponential claims."""
    click.echo(templates.ORACLE_HEADER.format(name="Cramér–Lundberg", T=float("inf"), t=0.0))
    try:
        for u in capitals:
            res = cramer_lundberg_ultimate(u, premium, lam, mu)
            click.echo(templates.ORACLE_ROW.format(u=u, result=templates.format_oracle(res)))
    except RuinPideError as e:
        _fail("oracle", e)
    _journal("oracle", "ok", f"cramer-lundberg at {len(capitals)} capitals")


@oracle.command("fine-mc")
@config_option
@click.option("--u", "capitals", type=float, multiple=True, help="Initial capital (default: u_test)")
@click.option("--dt-fine", type=float, default=1e-4, help="Euler step")
@click.option("--paths", type=int, default=None, help="Number of paths (default: n_paths)")
@click.option("--seed", type=int, default=None, help="Seed (default: config seed)")
def oracle_fine_mc(
    config_path: str,
    capitals: tuple[float, ...],
    dt_fine: float,
    paths: int | None,
    seed: int | None,
) -> None:
    """Brute-force Euler Monte Carlo with an independent code path."""
    config, digest = _load("oracle", config_path)
    seed_ = config.seed if seed is None else seed
    click.echo(templates.ORACLE_HEADER.format(name="fine-step MC", T=config.model.T, t=config.t0))
    try:
        for u in capitals or config.u_test:
            res = fine_mc(
                config.t0, u, config.model, dt_fine,
                config.n_paths if paths is None else paths, seed_,
            )
            click.echo(templates.ORACLE_ROW.format(u=u, result=templates.format_oracle(res)))
    except RuinPideError as e:
        _fail("oracle", e, digest, seed_)
    _journal("oracle", "ok", "fine-mc", digest, seed_)


@cli.command()
@config_option
@click.option("--u", type=float, required=True, help="Initial capital")
@click.option("--seed", type=int, default=None, help="Seed (default: config seed)")
@click.option("--out", default="-", help="CSV of time,X,S,event_type ('-' for stdout)")
def path(config_path: str, u: float, seed: int | None, out: str) -> None:
    """Dump one simulated reserve path."""
    config, digest = _load("path", config_path)
    seed_ = config.seed if seed is None else seed
    try:
        sample = simulate_path(config.t0, u, config.model, config.scheme, seed=seed_)
        write_path_csv(sample, out)
    except (RuinPideError, OSError) as e:
        _fail("path", e, digest, seed_)

    if sample.tau is not None:
        status = templates.PATH_STATUS_RUINED.format(tau=sample.tau, overshoot=sample.overshoot)
    else:
        status = templates.PATH_STATUS_SURVIVED
    if out != "-":
        click.echo(templates.PATH_WRITTEN.format(file=out, n_rows=len(sample.times), status=status))
    _journal("path", "ok", status, digest, seed_)


@cli.command()
@click.option("--limit", type=int, default=10, help="Number of runs to show")
@click.option("--command", "command_name", default=None, help="Only runs of this subcommand")
@click.option(
    "--status", type=click.Choice(["ok", "fail", "error"]), default=None, help="Only runs with this status"
)
def journal(limit: int, command_name: str | None, status: RunStatus | None) -> None:
    """Show the most recent runs."""
    entries = read_journal(limit=limit, command=command_name, status=status)
    if not entries:
        click.echo(templates.JOURNAL_EMPTY)
        return
    for e in entries:
        click.echo(
            templates.JOURNAL_ROW.format(
                ts=e.ts.isoformat(timespec="seconds"), command=e.command, status=e.status,
                seed=e.seed, summary=e.headline,
            )
        )


def main() -> None:
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
