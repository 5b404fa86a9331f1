"""Densities, CDFs, moments and support estimates for spectral laws."""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np
from scipy import integrate

from src.errors import DimensionMismatch, MassDeficitWarning


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    grid: np.ndarray
    values: np.ndarray
    epsilon: float | None = None
    converged: np.ndarray | None = None  # per-point convergence flags
    iterations: np.ndarray | None = None
    stieltjes: np.ndarray | None = None  # m0(x + i*epsilon)

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise DimensionMismatch("density grid must be a non-empty vector")
        if values.shape != grid.shape:
            raise DimensionMismatch(f"{values.size} density values for {grid.size} grid points")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise DimensionMismatch("density grid must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("density values must be non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def all_converged(self) -> bool:
        return self.converged is None or bool(np.all(self.converged))


@dataclass(frozen=True, eq=False)
class EmpiricalSpectrum:
    eigenvalues: np.ndarray
    p: int
    design_id: str = ""
    seed: int | None = None
    replicate: int = 0
    target: int | None = None

    def __post_init__(self) -> None:
        eigs = np.sort(np.asarray(self.eigenvalues, dtype=float))
        if eigs.ndim != 1 or eigs.size == 0:
            raise DimensionMismatch("spectrum needs at least one eigenvalue")
        if eigs.size != self.p:
            raise DimensionMismatch(f"spectrum has {eigs.size} eigenvalues, p={self.p}")
        object.__setattr__(self, "eigenvalues", eigs)

    def moments(self, l_max: int) -> np.ndarray:
        return np.array([np.mean(self.eigenvalues**l) for l in range(1, l_max + 1)])


@dataclass(frozen=True, eq=False)
class CDFTable:
    grid: np.ndarray
    cdf: np.ndarray
    total_mass: float

    def __call__(self, x: float | np.ndarray) -> np.ndarray:
        return np.interp(x, self.grid, self.cdf, left=0.0, right=1.0)


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Right-continuous empirical CDF: F(x) = #{lambda_i <= x} / p."""

    eigenvalues: np.ndarray

    def __post_init__(self) -> None:
        eigs = np.sort(np.asarray(self.eigenvalues, dtype=float))
        if eigs.size == 0:
            raise DimensionMismatch("step CDF needs at least one point")
        object.__setattr__(self, "eigenvalues", eigs)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    def __call__(self, x: float | np.ndarray) -> np.ndarray:
        return np.searchsorted(self.eigenvalues, x, side="right") / self.size

    def left(self, x: float | np.ndarray) -> np.ndarray:
        """Left limit F(x-)."""
        return np.searchsorted(self.eigenvalues, x, side="left") / self.size


def cdf_from_density(d: SpectralDensity, mass_warning: float = 0.95) -> CDFTable:
    cumulative = integrate.cumulative_trapezoid(d.values, d.grid, initial=0.0)
    total = float(cumulative[-1])
    if total < mass_warning:
        warnings.warn(
            f"density integrates to {total:.4f} on [{d.grid[0]:g}, {d.grid[-1]:g}]; grid too narrow for the law",
            MassDeficitWarning,
            stacklevel=2,
        )
    return CDFTable(grid=d.grid, cdf=np.clip(cumulative, 0.0, 1.0), total_mass=total)


def total_mass(d: SpectralDensity) -> float:
    return float(integrate.trapezoid(d.values, d.grid))


def density_moments(d: SpectralDensity, l_max: int, mass_warning: float = 0.95) -> np.ndarray:
    """Trapezoidal moments int x^l f(x) dx for l = 1..l_max."""
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    mass = total_mass(d)
    if mass < mass_warning:
        warnings.warn(f"density integrates to {mass:.4f}; moments are truncated", MassDeficitWarning, stacklevel=2)
    return np.array([integrate.trapezoid(d.grid**l * d.values, d.grid) for l in range(1, l_max + 1)])


def empirical_cdf(s: EmpiricalSpectrum) -> StepCDF:
    return StepCDF(s.eigenvalues)


def detect_support(d: SpectralDensity, threshold: float = 1e-6, pad: float = 0.05) -> tuple[float, float]:
    """Interval where f > threshold * max f, widened by `pad` of its length on each side."""
    peak = float(np.max(d.values))
    if peak <= 0.0:
        return float(d.grid[0]), float(d.grid[-1])
    above = np.flatnonzero(d.values > threshold * peak)
    lo, hi = float(d.grid[above[0]]), float(d.grid[above[-1]])
    width = max(hi - lo, float(np.min(np.diff(d.grid))) if d.grid.size > 1 else 0.0)
    return lo - pad * width, hi + pad * width
