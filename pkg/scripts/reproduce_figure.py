"""Balanced one-way experiment: theoretical vs simulated spectrum of the between-group estimate.

Four panels at p = 500, Sigma_2 = Id:
    tl  400 groups of 4, Sigma_1 = 0
    tr  100 groups of 8, Sigma_1 = 0
    bl  400 groups of 4, Sigma_1 with eigenvalues equally spaced in [0, 0.3]
    br  100 groups of 8, Sigma_1 with eigenvalues equally spaced in [0, 0.3]
Each scale multiplies p and the group count; KS distances are averaged over seeds.

Usage:
    uv run python scripts/reproduce_figure.py --panels bl --scales 0.6 1.2 --seeds 5
    uv run python scripts/reproduce_figure.py --panels tl tr bl br --scales 0.3
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
import argparse
import logging

import numpy as np
from rich.table import Table

from src.artifacts import write_density_csv, write_json
from src.config import AppConfig, load_config
from src.fp_solver import solve_grid
from src.logging_utils import console, log_event, setup_logging
from src.model_core import OneWay, VarianceComponents
from src.pipeline import auto_request, build_target_model
from src.simulator import SimConfig, simulate
from src.validate import compare

logger = logging.getLogger(__name__)

FULL_P = 500


@dataclass(frozen=True)
class Panel:
    groups: int
    group_size: int
    spaced_sigma1: bool


PANELS = {
    "tl": Panel(groups=400, group_size=4, spaced_sigma1=False),
    "tr": Panel(groups=100, group_size=8, spaced_sigma1=False),
    "bl": Panel(groups=400, group_size=4, spaced_sigma1=True),
    "br": Panel(groups=100, group_size=8, spaced_sigma1=True),
}


@dataclass
class ScaleResult:
    panel: str
    scale: float
    p: int
    groups: int
    group_size: int
    ks: list[float]
    mean_ks: float
    mass: float


def panel_setup(panel: Panel, scale: float) -> tuple[OneWay, VarianceComponents]:
    p = max(2, round(FULL_P * scale))
    groups = max(2, round(panel.groups * scale))
    sigma1 = np.linspace(0.0, 0.3, p) if panel.spaced_sigma1 else np.zeros(p)
    return OneWay((panel.group_size,) * groups), VarianceComponents.from_spectra([sigma1, np.ones(p)])


def run_panel(
    app: AppConfig, name: str, scale: float, seeds: int, epsilon: float, threads: int, out_dir: Path
) -> ScaleResult:
    panel = PANELS[name]
    design, comps = panel_setup(panel, scale)

    model = build_target_model(design, comps, target=1)
    request = auto_request(model, app.solver, epsilon, app.grid_count, app.support_threshold, app.support_pad, threads)
    density = solve_grid(request, model, app.solver, threads=threads)
    write_density_csv(out_dir / f"density_{name}_scale{scale:g}.csv", density)
    if not density.all_converged:
        logger.warning(
            "panel %s scale %g: %d grid points did not converge", name, scale, int(np.count_nonzero(~density.converged))
        )

    ks = []
    for seed in range(seeds):
        spectrum = simulate(SimConfig(design, comps, seed=seed), threads=threads)[0]
        report = compare(spectrum, density, ks_threshold=app.ks_threshold)
        ks.append(report.ks)
    return ScaleResult(name, scale, comps.p, design.I, panel.group_size, ks, float(np.mean(ks)), report.mass)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--panels", nargs="+", choices=sorted(PANELS), default=["bl"])
    parser.add_argument("--scales", type=float, nargs="+", default=[0.6, 1.2])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--eps", type=float, default=5e-4)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("outputs/figure"))
    args = parser.parse_args()
    if any(s <= 0 for s in args.scales):
        parser.error("--scales must be positive")
    setup_logging()
    app = load_config()

    args.out.mkdir(parents=True, exist_ok=True)
    results = [
        run_panel(app, name, s, args.seeds, args.eps, args.threads, args.out) for name in args.panels for s in args.scales
    ]

    table = Table(title="KS distance, between-group estimate")
    for col in ("panel", "scale", "p", "groups", "size", "mean KS", "min", "max", "mass"):
        table.add_column(col, justify="right")
    for r in results:
        table.add_row(
            r.panel, f"{r.scale:g}", str(r.p), str(r.groups), str(r.group_size),
            f"{r.mean_ks:.4f}", f"{min(r.ks):.4f}", f"{max(r.ks):.4f}", f"{r.mass:.4f}",
        )
    console.print(table)

    output_path = write_json(args.out / "ks_table.json", {"results": [asdict(r) for r in results]})
    log_event(app.logs_dir, {"command": "reproduce_figure", "outputs": [str(output_path)]})
    console.print(f"Results saved to {output_path}")


if __name__ == "__main__":
    main()
