"""Command-line entry point: solve, simulate, compare, check.

Usage:
    manova-spectra solve config/runs/marchenko_pastur.json --grid 0 3 3001 --out outputs/mp.csv
    manova-spectra simulate config/runs/oneway_figure.json --reps 3 --out outputs/eigs
    manova-spectra compare --density outputs/density.csv --eigs outputs/eigs/eigs_rep0000.csv --out outputs/report.json
    manova-spectra check config/runs/oneway_figure.json --samples 20
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable
import argparse
import logging
import time

from rich.table import Table

from src.artifacts import (
    RunManifest,
    config_hash,
    eigs_filename,
    read_density_csv,
    read_eigs_csv,
    write_density_csv,
    write_eigs_csv,
    write_json,
    write_manifest,
)
from src.config import AppConfig, load_config, load_run_config
from src.errors import ConfigError, NoConvergence, RangeMismatch, SpectraError
from src.logging_utils import console, log_event, setup_logging
from src.pipeline import build_target_model, density_for_run, simulate_run
from src.spectra import total_mass
from src.validate import compare, invariant_suite, sample_z

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_RANGE = 4


@dataclass
class CommandOutcome:
    code: int
    config_hash: str = ""
    seed: int | None = None
    outputs: list[str] = field(default_factory=list)
    detail: dict = field(default_factory=dict)


def cmd_solve(args: argparse.Namespace, app: AppConfig) -> CommandOutcome:
    started = time.time()
    setup = load_run_config(args.config)
    cfg = setup.solver_config(app.solver)
    grid = None if args.grid is None else (args.grid[0], args.grid[1], int(args.grid[2]))
    if grid is not None and grid[2] < 1:
        raise ConfigError(f"--grid count must be >= 1, got {grid[2]}")

    result = density_for_run(setup, app, grid=grid, epsilon=args.eps)
    out = Path(args.out) if args.out else app.outputs_dir / "density.csv"
    write_density_csv(out, result.density)

    density = result.density
    failed = ~density.converged
    convergence = {
        "points": int(density.grid.size),
        "failed": result.failed_points,
        "failed_x": [float(x) for x in density.grid[failed]],
        "max_iters": int(density.iterations.max()),
        "epsilon": density.epsilon,
        "closed_form": result.model.closed_form.kind if result.model.closed_form else None,
    }
    digest = config_hash(args.config)
    manifest = write_manifest(
        out,
        RunManifest(
            command="solve", config_hash=digest, seed=setup.seed, started=started, finished=time.time(),
            solver=asdict(cfg), convergence=convergence, outputs=[str(out)],
        ),
    )

    table = Table(title="solve")
    table.add_column("grid")
    table.add_column("points", justify="right")
    table.add_column("non-converged", justify="right")
    table.add_column("mass", justify="right")
    mass = total_mass(density)
    table.add_row(f"[{density.grid[0]:.4g}, {density.grid[-1]:.4g}]", str(density.grid.size), str(convergence["failed"]), f"{mass:.4f}")
    console.print(table)

    code = EXIT_NO_CONVERGENCE if convergence["failed"] else EXIT_OK
    return CommandOutcome(code, digest, setup.seed, [str(out), str(manifest)], {"failed": convergence["failed"]})


def cmd_simulate(args: argparse.Namespace, app: AppConfig) -> CommandOutcome:
    started = time.time()
    setup = load_run_config(args.config)
    seed = args.seed if args.seed is not None else (setup.seed if setup.seed is not None else app.seed)
    if args.reps < 1:
        raise ConfigError(f"--reps must be >= 1, got {args.reps}")
    target = args.target if args.target is not None else setup.target
    if not 1 <= target <= setup.design.k:
        raise ConfigError(f"--target {target} outside 1..{setup.design.k}")

    spectra = simulate_run(setup, app, seed=seed, reps=args.reps, target=target)
    out_dir = Path(args.out) if args.out else app.outputs_dir / "eigs"
    paths = [write_eigs_csv(out_dir / eigs_filename(s.replicate), s) for s in spectra]

    digest = config_hash(args.config)
    manifest = write_manifest(
        out_dir,
        RunManifest(
            command="simulate", config_hash=digest, seed=seed, started=started, finished=time.time(),
            convergence={"replicates": len(spectra), "target": target, "p": setup.components.p},
            outputs=[str(p) for p in paths],
        ),
    )

    table = Table(title=f"simulate {setup.design.label}, target {target}")
    table.add_column("rep", justify="right")
    table.add_column("min", justify="right")
    table.add_column("max", justify="right")
    table.add_column("mean", justify="right")
    for s in spectra:
        table.add_row(str(s.replicate), f"{s.eigenvalues[0]:.4g}", f"{s.eigenvalues[-1]:.4g}", f"{s.eigenvalues.mean():.4g}")
    console.print(table)
    return CommandOutcome(EXIT_OK, digest, seed, [str(p) for p in paths] + [str(manifest)])


def cmd_compare(args: argparse.Namespace, app: AppConfig) -> CommandOutcome:
    started = time.time()
    density = read_density_csv(args.density)
    spectrum = read_eigs_csv(args.eigs, rep=args.rep)
    if args.trim < 0:
        raise ConfigError(f"--trim must be >= 0, got {args.trim}")
    report = compare(
        spectrum, density, trim=args.trim, ks_threshold=app.ks_threshold,
        moment_orders=app.moment_orders, mass_warning=app.mass_warning,
    )
    out = Path(args.out) if args.out else app.outputs_dir / "report.json"
    write_json(out, report.to_dict())

    digest = config_hash(args.density, args.eigs)
    manifest = write_manifest(
        out,
        RunManifest(
            command="compare", config_hash=digest, seed=None, started=started, finished=time.time(),
            convergence={"ks": report.ks, "passed": report.passed}, outputs=[str(out)],
        ),
    )
    console.print(
        f"KS = {report.ks:.4f} (threshold {report.ks_threshold}, trimmed {report.trimmed}); "
        f"moment gaps {', '.join(f'{g:.3g}' for g in report.moment_gaps)}; mass {report.mass:.4f}"
    )
    return CommandOutcome(EXIT_OK, digest, None, [str(out), str(manifest)], {"ks": report.ks})


def cmd_check(args: argparse.Namespace, app: AppConfig) -> CommandOutcome:
    started = time.time()
    setup = load_run_config(args.config)
    if args.samples < 0:
        raise ConfigError(f"--samples must be >= 0, got {args.samples}")
    cfg = setup.solver_config(app.solver)
    seed = setup.seed if setup.seed is not None else app.seed

    model = build_target_model(setup.design, setup.components, setup.target)
    ledger = invariant_suite(model, sample_z(model, args.samples, seed=seed), cfg)
    out = Path(args.out) if args.out else app.outputs_dir / "check.json"
    write_json(out, ledger.to_dict())

    digest = config_hash(args.config)
    manifest = write_manifest(
        out,
        RunManifest(
            command="check", config_hash=digest, seed=seed, started=started, finished=time.time(),
            solver=asdict(cfg), convergence={"entries": len(ledger.entries), "failed": len(ledger.failures())},
            outputs=[str(out)],
        ),
    )

    table = Table(title=f"check {setup.design.label}")
    table.add_column("check")
    table.add_column("passed", justify="right")
    table.add_column("failed", justify="right")
    for name in dict.fromkeys(e.check for e in ledger.entries):
        entries = [e for e in ledger.entries if e.check == name]
        bad = sum(not e.passed for e in entries)
        table.add_row(name, str(len(entries) - bad), str(bad))
    console.print(table)

    code = EXIT_OK if ledger.passed else EXIT_CHECK_FAILED
    return CommandOutcome(code, digest, seed, [str(out), str(manifest)], {"failed": len(ledger.failures())})


COMMANDS: dict[str, Callable[[argparse.Namespace, AppConfig], CommandOutcome]] = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manova-spectra", description="Spectral laws of MANOVA variance-component estimators")
    parser.add_argument("--app-config", default="config/app.yaml", help="YAML defaults (paths, solver, density)")
    parser.add_argument("--logs-dir", type=Path, default=None, help="where events.jsonl is appended")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="theoretical density on a grid")
    solve.add_argument("config")
    solve.add_argument("--grid", nargs=3, type=float, metavar=("XMIN", "XMAX", "COUNT"))
    solve.add_argument("--eps", type=float, default=None)
    solve.add_argument("--out")

    simulate = sub.add_parser("simulate", help="Monte Carlo eigenvalues of the estimator")
    simulate.add_argument("config")
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--reps", type=int, default=1)
    simulate.add_argument("--target", type=int, default=None)
    simulate.add_argument("--out")

    comp = sub.add_parser("compare", help="KS and moment comparison of a density and a spectrum")
    comp.add_argument("--density", required=True)
    comp.add_argument("--eigs", required=True)
    comp.add_argument("--trim", type=int, default=0)
    comp.add_argument("--rep", type=int, default=None)
    comp.add_argument("--out")

    check = sub.add_parser("check", help="solver invariant suite")
    check.add_argument("config")
    check.add_argument("--samples", type=int, default=20)
    check.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    try:
        app = load_config(args.app_config)
    except ConfigError as exc:
        console.print(f"[red]config error:[/red] {exc}")
        return EXIT_CONFIG
    logs_dir = args.logs_dir or app.logs_dir
    logger.debug("running %s with %s", args.command, args.app_config)

    try:
        outcome = COMMANDS[args.command](args, app)
    except RangeMismatch as exc:
        console.print(f"[red]range mismatch:[/red] {exc}")
        outcome = CommandOutcome(EXIT_RANGE, detail={"error": str(exc)})
    except NoConvergence as exc:
        console.print(f"[red]no convergence:[/red] {exc}")
        outcome = CommandOutcome(EXIT_NO_CONVERGENCE, detail={"error": str(exc)})
    except SpectraError as exc:
        console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
        outcome = CommandOutcome(EXIT_CONFIG, detail={"error": str(exc)})

    log_event(
        logs_dir,
        {
            "command": args.command,
            "config_hash": outcome.config_hash,
            "seed": outcome.seed,
            "exit_code": outcome.code,
            "outputs": outcome.outputs,
            **outcome.detail,
        },
    )
    return outcome.code


if __name__ == "__main__":
    raise SystemExit(main())
