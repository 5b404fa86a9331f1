from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from src.closed_form import recognize
from src.config import AppConfig, RunSetup
from src.design_builder import build_oneway, estimator_matrix
from src.fp_solver import DensityRequest, solve_grid, spectral_bound
from src.model_core import DesignSpec, GeneralModel, OneWay, SolverConfig, VarianceComponents, to_general_model
from src.simulator import SimConfig, simulate
from src.spectra import EmpiricalSpectrum, SpectralDensity, detect_support

logger = logging.getLogger(__name__)

COARSE_POINTS = 801


@dataclass(frozen=True, eq=False)
class DensityResult:
    model: GeneralModel
    request: DensityRequest
    density: SpectralDensity

    @property
    def failed_points(self) -> int:
        return int(np.count_nonzero(~self.density.converged)) if self.density.converged is not None else 0


def build_target_model(design: DesignSpec, components: VarianceComponents, target: int) -> GeneralModel:
    """Solver model for the law of Sigma_hat_target, with its closed-form b-update when one exists.

    The one-way between-group target uses K^-1(I^-1(pi0 + pi1) - (n-I)^-1 pi2), which differs
    from the usual estimator by a rank-one term and has the same limiting law.
    """
    if isinstance(design, OneWay) and target == 1:
        B = build_oneway(design.group_sizes).B1_check
    else:
        B = estimator_matrix(design, target)
    model = to_general_model(design, components, B)
    return model.with_closed_form(recognize(design, target))


def auto_request(
    model: GeneralModel,
    cfg: SolverConfig,
    epsilon: float,
    count: int,
    threshold: float = 1e-6,
    pad: float = 0.05,
    threads: int = 1,
) -> DensityRequest:
    """Coarse sweep over the support radius, then a fine grid over the detected support +- 100 eps."""
    bound = spectral_bound(model) or 1.0
    coarse = DensityRequest.linspace(-bound, bound, COARSE_POINTS, epsilon=2.0 * bound / (COARSE_POINTS - 1))
    lo, hi = detect_support(solve_grid(coarse, model, cfg, threads=threads), threshold=threshold, pad=pad)
    logger.debug("support estimate [%.6g, %.6g] from radius %.6g", lo, hi, bound)
    return DensityRequest.linspace(lo - 100 * epsilon, hi + 100 * epsilon, count, epsilon=epsilon)


def density_for_run(
    setup: RunSetup,
    app: AppConfig,
    grid: tuple[float, float, int] | None = None,
    epsilon: float | None = None,
) -> DensityResult:
    cfg = setup.solver_config(app.solver)
    eps = app.epsilon if epsilon is None else epsilon
    model = build_target_model(setup.design, setup.components, setup.target)

    if grid is None:
        request = auto_request(
            model, cfg, eps, app.grid_count, app.support_threshold, app.support_pad, threads=app.threads
        )
    else:
        request = DensityRequest.linspace(grid[0], grid[1], int(grid[2]), epsilon=eps)

    density = solve_grid(request, model, cfg, threads=app.threads)
    return DensityResult(model=model, request=request, density=density)


def simulate_run(
    setup: RunSetup,
    app: AppConfig,
    seed: int | None = None,
    reps: int = 1,
    target: int | None = None,
) -> list[EmpiricalSpectrum]:
    if seed is None:
        seed = setup.seed if setup.seed is not None else app.seed
    cfg = SimConfig(
        design=setup.design,
        components=setup.components,
        seed=seed,
        replicates=reps,
        target=setup.target if target is None else target,
    )
    return simulate(cfg, threads=app.threads)
