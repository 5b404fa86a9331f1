"""Agreement between theoretical and empirical spectra, and solver invariant checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import logging

import numpy as np
from scipy import stats

from src.errors import ConfigError, RangeMismatch, SpectraError
from src.fp_solver import FixedPoint, a_update, b_update, solve_at_z, spectral_bound
from src.model_core import GeneralModel, SolverConfig
from src.spectra import (
    CDFTable,
    EmpiricalSpectrum,
    SpectralDensity,
    StepCDF,
    cdf_from_density,
    density_moments,
    empirical_cdf,
)

logger = logging.getLogger(__name__)

STIELTJES_FAR_Z = 1e4
WARM_COLD_TOL = 1e-10
CLOSED_FORM_TOL = 1e-10


@dataclass(frozen=True)
class ComparisonReport:
    ks: float
    moment_gaps: tuple[float, ...]
    mass: float
    trimmed: int
    ks_threshold: float
    passed: bool
    p: int

    def to_dict(self) -> dict:
        return asdict(self)


def ks_distance(emp: StepCDF, theory: CDFTable | StepCDF) -> float:
    """sup |F_emp - F_theory|, with the step function taken at both one-sided limits."""
    if isinstance(theory, StepCDF):
        return float(stats.ks_2samp(emp.eigenvalues, theory.eigenvalues).statistic)

    eigs = emp.eigenvalues
    lo, hi = theory.grid[0], theory.grid[-1]
    if not np.any((eigs >= lo) & (eigs <= hi)):
        raise RangeMismatch(f"no eigenvalue inside the theory grid [{lo:g}, {hi:g}] (eigenvalues span [{eigs[0]:g}, {eigs[-1]:g}])")

    at_eigs = theory(eigs)
    at_grid = theory.cdf
    gaps = (
        np.abs(emp(eigs) - at_eigs),
        np.abs(emp.left(eigs) - at_eigs),
        np.abs(emp(theory.grid) - at_grid),
        np.abs(emp.left(theory.grid) - at_grid),
    )
    return float(min(1.0, max(g.max() for g in gaps)))


def trim_extremes(eigenvalues: np.ndarray, trim: int) -> np.ndarray:
    """Drop the `trim` eigenvalues farthest from the median."""
    if trim < 0:
        raise ConfigError(f"trim must be >= 0, got {trim}")
    if trim == 0:
        return eigenvalues
    if trim >= eigenvalues.size:
        raise ConfigError(f"cannot trim {trim} of {eigenvalues.size} eigenvalues")
    order = np.argsort(np.abs(eigenvalues - np.median(eigenvalues)), kind="stable")
    return np.sort(eigenvalues[order[: eigenvalues.size - trim]])


def compare(
    spectrum: EmpiricalSpectrum,
    density: SpectralDensity,
    trim: int = 0,
    ks_threshold: float = 0.05,
    moment_orders: int = 3,
    mass_warning: float = 0.95,
) -> ComparisonReport:
    eigs = trim_extremes(spectrum.eigenvalues, trim)
    kept = replace(spectrum, eigenvalues=eigs, p=eigs.size)
    table = cdf_from_density(density, mass_warning=mass_warning)
    ks = ks_distance(empirical_cdf(kept), table)

    theory = density_moments(density, moment_orders, mass_warning=0.0)
    empirical = kept.moments(moment_orders)
    return ComparisonReport(
        ks=ks,
        moment_gaps=tuple(float(g) for g in np.abs(empirical - theory)),
        mass=table.total_mass,
        trimmed=trim,
        ks_threshold=ks_threshold,
        passed=ks < ks_threshold,
        p=spectrum.p,
    )


# --- invariant suite ---------------------------------------------------------------

@dataclass(frozen=True)
class LedgerEntry:
    z: complex
    check: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class InvariantLedger:
    entries: list[LedgerEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[LedgerEntry]:
        return [e for e in self.entries if not e.passed]

    def record(self, z: complex, check: str, passed: bool, value: float, detail: str = "") -> None:
        self.entries.append(LedgerEntry(complex(z), check, bool(passed), float(value), detail))
        if not passed:
            logger.info("check %s failed at z=%s: %s (value %.3e)", check, z, detail, value)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "entries": [
                {"z": [e.z.real, e.z.imag], "check": e.check, "passed": e.passed, "value": e.value, "detail": e.detail}
                for e in self.entries
            ],
        }


def sample_z(model: GeneralModel, count: int, seed: int = 0) -> list[complex]:
    """z samples spread over the support radius, Im z log-uniform in [1e-3, 1]."""
    rng = np.random.default_rng(seed)
    bound = spectral_bound(model) or 1.0
    re = rng.uniform(-bound, bound, size=count)
    im = 10.0 ** rng.uniform(-3.0, 0.0, size=count)
    return [complex(x, y) for x, y in zip(re, im)]


def _domain_entry(ledger: InvariantLedger, fp: FixedPoint) -> None:
    lowest = min(float(np.min(fp.a.imag)), float(np.min(fp.b.imag)))
    ok = lowest >= 0.0 and fp.m0.imag > 0.0
    ledger.record(fp.z, "domain", ok, min(lowest, fp.m0.imag), "" if ok else "iterate left the upper half-plane")


def invariant_suite(model: GeneralModel, z_samples: list[complex], cfg: SolverConfig | None = None) -> InvariantLedger:
    cfg = cfg or SolverConfig()
    ledger = InvariantLedger()

    far = complex(0.0, STIELTJES_FAR_Z)
    try:
        fp = solve_at_z(far, model, cfg)
        gap = abs(far * fp.m0 + 1.0)
        ledger.record(far, "stieltjes_asymptotic", gap < 0.01, gap, "|z m0(z) + 1|")
    except SpectraError as exc:
        ledger.record(far, "stieltjes_asymptotic", False, np.nan, f"{type(exc).__name__}: {exc}")

    for z in z_samples:
        z = complex(z)
        if not z.imag > 0:
            ledger.record(z, "domain", False, z.imag, "Im z must be positive")
            continue
        try:
            fp = solve_at_z(z, model, cfg)
        except SpectraError as exc:
            ledger.record(z, "solve", False, np.nan, f"{type(exc).__name__}: {exc}")
            continue

        _domain_entry(ledger, fp)

        a_gap = float(np.max(np.abs(a_update(z, fp.b, model) - fp.a), initial=0.0))
        worst = max(fp.residual, a_gap)
        ledger.record(z, "residual", worst <= cfg.tol, worst, "fixed-point residual")

        try:
            neighbour = solve_at_z(z + 0.05, model, cfg)
            warm = solve_at_z(z, model, cfg, b0=neighbour.b)
            diff = abs(warm.m0 - fp.m0)
            ledger.record(z, "warm_start", diff < WARM_COLD_TOL, diff, "|m0 warm - m0 cold|")
        except SpectraError as exc:
            ledger.record(z, "warm_start", False, np.nan, f"{type(exc).__name__}: {exc}")

        if model.closed_form is not None:
            closed = model.closed_form(fp.a)
            general = b_update(fp.a, model)
            diff = float(np.max(np.abs(closed - general) / np.maximum(1.0, np.abs(general))))
            ledger.record(z, "closed_form", diff < CLOSED_FORM_TOL, diff, "closed-form vs block-trace b")

    return ledger
