"""Domain types: designs, variance components and the solver's general model.

The solver works on the `(F, {H_r*H_r})` form: a Hermitian block matrix F with
block sizes (n_1..n_k) and the Gram matrices Sigma_r. Classification designs are
described declaratively by the `DesignSpec` variants and turned into that form by
`to_general_model`, which uses F = U^T B U with U = (sqrt(I_1) U_1 | ... | sqrt(I_k) U_k).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Literal, Sequence, Union
import math

import numpy as np
from scipy import linalg

from src.errors import AsymmetryTooLarge, ConfigError, DegenerateDesign, DimensionMismatch, NotPSD

if TYPE_CHECKING:
    from src.closed_form import ClosedFormUpdate

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-8


def _symmetrize_upper(S: np.ndarray) -> np.ndarray:
    # Mirror the upper triangle; keeps entries that are already symmetric bit-exact.
    return np.triu(S) + np.triu(S, 1).T


def _relative_asymmetry(S: np.ndarray) -> float:
    scale = float(np.max(np.abs(S))) if S.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(S - S.conj().T))) / scale


def _is_diagonal(S: np.ndarray) -> bool:
    return np.count_nonzero(S - np.diag(np.diagonal(S))) == 0


@dataclass(frozen=True, eq=False)
class VarianceComponents:
    sigmas: tuple[np.ndarray, ...]
    p: int
    corrections: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return len(self.sigmas)

    @property
    def is_diagonal(self) -> bool:
        return all(_is_diagonal(s) for s in self.sigmas)

    @classmethod
    def from_spectra(cls, spectra: Sequence[Sequence[float]]) -> VarianceComponents:
        """Declared-diagonal components, one eigenvalue vector per effect."""
        return validate_components([np.diag(np.asarray(s, dtype=float)) for s in spectra])


def validate_components(raw: Sequence[np.ndarray]) -> VarianceComponents:
    if len(raw) == 0:
        raise DimensionMismatch("at least one variance component is required")

    mats = [np.array(m, dtype=float) for m in raw]
    for r, m in enumerate(mats, start=1):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"Sigma_{r} is not square: shape {m.shape}")
    p = mats[0].shape[0]
    if any(m.shape[0] != p for m in mats):
        raise DimensionMismatch(f"components differ in size: {[m.shape[0] for m in mats]}")

    out: list[np.ndarray] = []
    corrections: list[str] = []
    for r, m in enumerate(mats, start=1):
        asym = _relative_asymmetry(m)
        if asym > SYMMETRY_RTOL:
            raise AsymmetryTooLarge(f"Sigma_{r}: relative asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:g}")
        if asym > 0.0:
            m = _symmetrize_upper(m)
            corrections.append(f"Sigma_{r}: symmetrized")

        if _is_diagonal(m):
            w = np.diagonal(m).copy()
            vecs = None
        else:
            w, vecs = linalg.eigh(m)
        norm = float(np.max(np.abs(w))) if w.size else 0.0
        lowest = float(np.min(w)) if w.size else 0.0
        if lowest < -PSD_RTOL * norm:
            raise NotPSD(f"Sigma_{r}: eigenvalue {lowest:.3e} below -{PSD_RTOL:g}*||Sigma||")
        if lowest < 0.0:
            w = np.clip(w, 0.0, None)
            m = np.diag(w) if vecs is None else _symmetrize_upper((vecs * w) @ vecs.T)
            corrections.append(f"Sigma_{r}: clipped eigenvalue {lowest:.3e} to 0")
        out.append(m)

    return VarianceComponents(sigmas=tuple(out), p=p, corrections=tuple(corrections))


# --- designs -----------------------------------------------------------------

@dataclass(frozen=True)
class OneWay:
    group_sizes: tuple[int, ...]
    kind: Literal["one_way"] = field(default="one_way", init=False)

    def __post_init__(self) -> None:
        sizes = tuple(int(j) for j in self.group_sizes)
        object.__setattr__(self, "group_sizes", sizes)
        if len(sizes) < 2:
            raise DegenerateDesign(f"one-way design needs I >= 2 groups, got {len(sizes)}")
        if min(sizes) < 1:
            raise DegenerateDesign("group sizes must be positive")

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.group_sizes)

    @property
    def n(self) -> int:
        return sum(self.group_sizes)

    @property
    def k(self) -> int:
        return 2

    @property
    def K(self) -> float:
        """(n - n^-1 sum J_i^2) / (I - 1); the common group size when balanced."""
        n = self.n
        return (n - sum(j * j for j in self.group_sizes) / n) / (self.I - 1)

    @property
    def label(self) -> str:
        return f"one_way(I={self.I},n={self.n})"


@dataclass(frozen=True)
class NestedBalanced:
    levels: tuple[int, ...]
    kind: Literal["nested"] = field(default="nested", init=False)

    def __post_init__(self) -> None:
        levels = tuple(int(j) for j in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise DegenerateDesign("nested design needs at least one level")
        if min(levels) < 2:
            raise DegenerateDesign(f"nested levels must all be >= 2, got {levels}")

    @property
    def n(self) -> int:
        return math.prod(self.levels)

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def label(self) -> str:
        return "nested(" + "x".join(str(j) for j in self.levels) + ")"


@dataclass(frozen=True)
class CrossedTwoWay:
    I: int
    J: int
    K: int
    L: int
    kind: Literal["crossed"] = field(default="crossed", init=False)

    def __post_init__(self) -> None:
        for name in ("I", "J", "K", "L"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.I < 1:
            raise DegenerateDesign("crossed design needs I >= 1")
        if min(self.J, self.K, self.L) < 2:
            raise DegenerateDesign(f"crossed design needs J, K, L >= 2, got {(self.J, self.K, self.L)}")

    @property
    def n(self) -> int:
        return self.I * self.J * self.K * self.L

    @property
    def k(self) -> int:
        return 5

    @property
    def label(self) -> str:
        return f"crossed(I={self.I},J={self.J},K={self.K},L={self.L})"


@dataclass(frozen=True, eq=False)
class Explicit:
    """Arbitrary estimator B with incidence matrices U_r.

    B X = 0 for the fixed-effect design X is the caller's responsibility; X never
    enters the spectral equations so it is not checked here.
    """

    B: np.ndarray
    U: tuple[np.ndarray, ...]
    kind: Literal["explicit"] = field(default="explicit", init=False)

    def __post_init__(self) -> None:
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionMismatch(f"B must be square, got shape {B.shape}")
        asym = _relative_asymmetry(B)
        if asym > SYMMETRY_RTOL:
            raise AsymmetryTooLarge(f"B: relative asymmetry {asym:.3e}")
        B = _symmetrize_upper(B)
        U = tuple(np.array(u, dtype=float) for u in self.U)
        if not U:
            raise DimensionMismatch("explicit design needs at least one incidence matrix")
        for r, u in enumerate(U, start=1):
            if u.ndim != 2 or u.shape[0] != B.shape[0]:
                raise DimensionMismatch(f"U_{r} must have {B.shape[0]} rows, got shape {u.shape}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return len(self.U)

    @property
    def label(self) -> str:
        return f"explicit(n={self.n},k={self.k})"


@dataclass(frozen=True)
class SampleCovariance:
    """k=1, U_1 = Id_n, B = Id_n / n: the plain sample covariance."""

    n: int
    kind: Literal["sample_covariance"] = field(default="sample_covariance", init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", int(self.n))
        if self.n < 1:
            raise DegenerateDesign("sample covariance needs n >= 1")

    @property
    def k(self) -> int:
        return 1

    @property
    def label(self) -> str:
        return f"sample_covariance(n={self.n})"


DesignSpec = Union[OneWay, NestedBalanced, CrossedTwoWay, Explicit, SampleCovariance]


# --- solver model --------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iters: int = 5000
    damping: float = 1.0
    auto_damp: bool = True
    newton: bool = True
    strategy: Literal["auto", "general", "closed_form"] = "auto"
    stall_window: int = 50
    min_damping: float = 1.0 / 16.0

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if self.strategy not in ("auto", "general", "closed_form"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True, eq=False)
class GeneralModel:
    F: np.ndarray
    block_sizes: tuple[int, ...]
    grams: tuple[np.ndarray, ...]
    diag_spectra: np.ndarray | None = None
    closed_form: ClosedFormUpdate | None = None

    def __post_init__(self) -> None:
        F = np.asarray(self.F)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise DimensionMismatch(f"F must be square, got shape {F.shape}")
        sizes = tuple(int(s) for s in self.block_sizes)
        if not sizes or min(sizes) < 1:
            raise DimensionMismatch(f"block sizes must be positive, got {sizes}")
        if sum(sizes) != F.shape[0]:
            raise DimensionMismatch(f"block sizes sum to {sum(sizes)}, F has dimension {F.shape[0]}")

        scale = max(1.0, float(np.max(np.abs(F)))) if F.size else 1.0
        if F.size and float(np.max(np.abs(F - F.conj().T))) > SYMMETRY_RTOL * scale:
            raise AsymmetryTooLarge("F is not Hermitian within 1e-10")
        F = (F + F.conj().T) / 2

        grams = tuple(np.asarray(g, dtype=float) for g in self.grams)
        if len(grams) != len(sizes):
            raise DimensionMismatch(f"{len(grams)} grams for {len(sizes)} blocks")
        p = grams[0].shape[0]
        for r, g in enumerate(grams, start=1):
            if g.shape != (p, p):
                raise DimensionMismatch(f"gram {r} has shape {g.shape}, expected {(p, p)}")
            if _relative_asymmetry(g) > SYMMETRY_RTOL:
                raise AsymmetryTooLarge(f"gram {r} is not symmetric")
            w = np.diagonal(g) if _is_diagonal(g) else linalg.eigvalsh(g)
            if w.size and float(np.min(w)) < -PSD_RTOL * max(float(np.max(np.abs(w))), 0.0):
                raise NotPSD(f"gram {r} is not positive semidefinite")

        spectra = self.diag_spectra
        if spectra is None and all(_is_diagonal(g) for g in grams):
            spectra = np.stack([np.diagonal(g).copy() for g in grams])
        if spectra is not None:
            spectra = np.asarray(spectra, dtype=float)
            if spectra.shape != (len(sizes), p):
                raise DimensionMismatch(f"diag spectra shape {spectra.shape}, expected {(len(sizes), p)}")

        object.__setattr__(self, "F", F)
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "grams", grams)
        object.__setattr__(self, "diag_spectra", spectra)

    @property
    def k(self) -> int:
        return len(self.block_sizes)

    @property
    def p(self) -> int:
        return self.grams[0].shape[0]

    @property
    def n_plus(self) -> int:
        return self.F.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.block_sizes)[:-1]]).astype(int)

    @property
    def diag_fast_path(self) -> bool:
        return self.diag_spectra is not None

    def with_closed_form(self, update: ClosedFormUpdate | None) -> GeneralModel:
        return replace(self, closed_form=update)


def to_general_model(design: DesignSpec, components: VarianceComponents, B: np.ndarray) -> GeneralModel:
    from src.design_builder import incidence_matrices

    U = incidence_matrices(design)
    B = np.asarray(B, dtype=float)
    n = design.n
    if B.shape != (n, n):
        raise DimensionMismatch(f"B has shape {B.shape}, design has n={n}")
    if len(U) != components.k:
        raise DimensionMismatch(f"design has {len(U)} effects, got {components.k} components")

    sizes = tuple(u.shape[1] for u in U)
    stacked = np.hstack([math.sqrt(size) * u for size, u in zip(sizes, U)])
    F = stacked.T @ B @ stacked
    return GeneralModel(F=F, block_sizes=sizes, grams=components.sigmas)
