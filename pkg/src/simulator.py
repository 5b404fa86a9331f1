"""Monte Carlo sampling of the Gaussian random-effects model and MANOVA spectra.

Y = sum_r U_r G_r Sigma_r^{1/2} with G_r standard normal. Fixed effects are left
out: every estimator matrix annihilates them, so they never reach Sigma_hat.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from src.design_builder import estimator_matrix, incidence_matrices
from src.errors import ConfigError, DimensionMismatch, EigenFailure
from src.model_core import DesignSpec, OneWay, VarianceComponents
from src.spectra import EmpiricalSpectrum


@dataclass(frozen=True, eq=False)
class SimConfig:
    design: DesignSpec
    components: VarianceComponents
    seed: int
    replicates: int = 1
    target: int = 1

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 1 <= self.target <= self.design.k:
            raise ConfigError(f"target {self.target} outside 1..{self.design.k}")
        if self.components.k != self.design.k:
            raise DimensionMismatch(f"design has {self.design.k} effects, got {self.components.k} components")

    @cached_property
    def incidence(self) -> list[np.ndarray]:
        return incidence_matrices(self.design)

    @cached_property
    def groups(self) -> list[np.ndarray | None]:
        return [_group_index(U) for U in self.incidence]

    @cached_property
    def roots(self) -> list[np.ndarray]:
        return [psd_sqrt(s) for s in self.components.sigmas]

    @cached_property
    def estimator(self) -> np.ndarray:
        return estimator_matrix(self.design, self.target)


def psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    """Symmetric square root; rounding-negative eigenvalues are clipped to 0."""
    diag = np.diagonal(sigma)
    if np.count_nonzero(sigma - np.diag(diag)) == 0:
        return np.diag(np.sqrt(np.clip(diag, 0.0, None)))
    w, v = linalg.eigh(sigma)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _generator(seed: int, rep: int, effect: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(rep, effect))))


def _group_index(U: np.ndarray) -> np.ndarray | None:
    """Row -> group map when U is a 0/1 matrix with a single 1 per row."""
    if not np.all((U == 0) | (U == 1)) or not np.all(U.sum(axis=1) == 1):
        return None
    return np.argmax(U, axis=1)


def sample_Y(cfg: SimConfig, rep: int) -> np.ndarray:
    n, p = cfg.design.n, cfg.components.p
    Y = np.zeros((n, p))
    for r, (U, root, groups) in enumerate(zip(cfg.incidence, cfg.roots, cfg.groups), start=1):
        effect = _generator(cfg.seed, rep, r).standard_normal((U.shape[1], p)) @ root
        Y += effect[groups] if groups is not None else U @ effect
    return Y


def oneway_sums_of_squares(Y: np.ndarray, group_sizes: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Between-group (SS1) and within-group (SS2) scatter matrices."""
    sizes = np.asarray(group_sizes)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    means = np.add.reduceat(Y, starts, axis=0) / sizes[:, None]
    grand = Y.mean(axis=0)
    between = (means - grand) * np.sqrt(sizes)[:, None]
    within = Y - np.repeat(means, sizes, axis=0)
    return between.T @ between, within.T @ within


def manova_estimate(Y: np.ndarray, design: DesignSpec, target: int, B: np.ndarray | None = None) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != design.n:
        raise DimensionMismatch(f"Y has shape {Y.shape}, design has n={design.n}")

    if B is None and isinstance(design, OneWay):
        I, n, K = design.I, design.n, design.K  # noqa: E741
        ss1, ss2 = oneway_sums_of_squares(Y, design.group_sizes)
        ms1, ms2 = ss1 / (I - 1), ss2 / (n - I)
        est = (ms1 - ms2) / K if target == 1 else ms2
    else:
        B = estimator_matrix(design, target) if B is None else B
        est = Y.T @ B @ Y
    return (est + est.T) / 2


def empirical_spectrum(est: np.ndarray, **meta) -> EmpiricalSpectrum:
    est = np.asarray(est, dtype=float)
    try:
        eigs = linalg.eigh((est + est.T) / 2, eigvals_only=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(f"eigendecomposition failed: {exc}") from exc
    return EmpiricalSpectrum(eigenvalues=eigs, p=est.shape[0], **meta)


def simulate_replicate(cfg: SimConfig, rep: int) -> EmpiricalSpectrum:
    Y = sample_Y(cfg, rep)
    B = None if isinstance(cfg.design, OneWay) else cfg.estimator
    est = manova_estimate(Y, cfg.design, cfg.target, B=B)
    return empirical_spectrum(est, design_id=cfg.design.label, seed=int(cfg.seed), replicate=rep, target=cfg.target)


def simulate(cfg: SimConfig, threads: int = 1) -> list[EmpiricalSpectrum]:
    """All replicates in order; substreams make the result independent of `threads`."""
    reps = range(cfg.replicates)
    if threads <= 1 or cfg.replicates == 1:
        return [simulate_replicate(cfg, rep) for rep in reps]
    # build the cached matrices once, before workers share them
    _ = cfg.incidence, cfg.groups, cfg.roots
    if not isinstance(cfg.design, OneWay):
        _ = cfg.estimator
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda rep: simulate_replicate(cfg, rep), reps))
