"""Fixed-point solver for the coupled (a, b) equations and the Stieltjes transform m0.

For z in the upper half-plane the deterministic equivalent is determined by

    a_r = -n_r^-1 Tr((z Id + sum_s b_s Sigma_s)^-1 Sigma_r)
    b_r = -n_r^-1 Tr_r([Id + F D(a)]^-1 F)
    m0  = -p^-1 Tr((z Id + sum_s b_s Sigma_s)^-1)

`solve_at_z` iterates b -> g(f(b)) from b = 0 (or a warm start). Each step may
take a safeguarded Newton proposal on that holomorphic map; the proposal is only
kept when it stays in the domain and lowers the residual, otherwise the damped
plain step is used.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable
import logging
import math
import warnings

import numpy as np
from scipy import linalg

from src.errors import (
    ConfigError,
    DomainViolation,
    NoConvergence,
    SingularResolvent,
    SingularSystem,
    SpectraError,
    UnsupportedDesign,
)
from src.model_core import GeneralModel, SolverConfig
from src.spectra import SpectralDensity

logger = logging.getLogger(__name__)

DOMAIN_TOL = 1e-10
_FD_STEP = 1e-7


@dataclass(frozen=True, eq=False)
class FixedPoint:
    z: complex
    a: np.ndarray
    b: np.ndarray
    m0: complex
    iters: int
    residual: float
    converged: bool = True
    damping: float = 1.0
    history: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class DensityRequest:
    x_grid: np.ndarray
    epsilon: float = 1e-4

    def __post_init__(self) -> None:
        grid = np.asarray(self.x_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ConfigError("density grid must be a non-empty vector")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ConfigError("density grid must be strictly increasing")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "x_grid", grid)

    @classmethod
    def linspace(cls, xmin: float, xmax: float, count: int, epsilon: float = 1e-4) -> DensityRequest:
        if count < 1 or (count > 1 and not xmax > xmin):
            raise ConfigError(f"invalid grid [{xmin}, {xmax}] with {count} points")
        return cls(np.linspace(xmin, xmax, count), epsilon)


# --- the two half-updates -------------------------------------------------------

def _resolvent(z: complex, b: np.ndarray, model: GeneralModel) -> tuple[np.ndarray, complex]:
    """Tr(R Sigma_r) for each r and Tr(R), with R = (z Id + sum_s b_s Sigma_s)^-1."""
    if model.diag_fast_path:
        denom = z + b @ model.diag_spectra
        if np.any(np.abs(denom) < np.finfo(float).tiny):
            raise SingularResolvent(f"resolvent singular at z={z}")
        inv = 1.0 / denom
        return model.diag_spectra @ inv, complex(inv.sum())

    p = model.p
    A = z * np.eye(p, dtype=complex) + np.tensordot(b, np.stack(model.grams), axes=1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            lu = linalg.lu_factor(A)
    except (ValueError, linalg.LinAlgError, linalg.LinAlgWarning) as exc:
        raise SingularResolvent(f"resolvent factorization failed at z={z}: {exc}") from exc
    R = linalg.lu_solve(lu, np.eye(p, dtype=complex))
    traces = np.einsum("ij,rji->r", R, np.stack(model.grams))
    return traces, complex(np.trace(R))


def a_update(z: complex, b: np.ndarray, model: GeneralModel) -> np.ndarray:
    if not complex(z).imag > 0:
        raise DomainViolation(f"a_update needs Im z > 0, got z={z}")
    traces, _ = _resolvent(complex(z), np.asarray(b, dtype=complex), model)
    return -traces / np.asarray(model.block_sizes, dtype=float)


def b_update(a: np.ndarray, model: GeneralModel) -> np.ndarray:
    """General block-trace update; one factorization of Id + F D(a) serves every block."""
    a = np.asarray(a, dtype=complex)
    sizes = np.asarray(model.block_sizes)
    d = np.repeat(a, sizes)
    M = np.eye(model.n_plus, dtype=complex) + model.F * d[None, :]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            lu = linalg.lu_factor(M)
    except (ValueError, linalg.LinAlgError, linalg.LinAlgWarning) as exc:
        raise SingularSystem(f"Id + F D(a) not invertible: {exc}") from exc
    X = linalg.lu_solve(lu, model.F.astype(complex))
    traces = np.add.reduceat(np.diagonal(X), model.offsets)
    return -traces / sizes


def m0_of(z: complex, b: np.ndarray, model: GeneralModel) -> complex:
    _, trace = _resolvent(complex(z), np.asarray(b, dtype=complex), model)
    return -trace / model.p


def _b_map(model: GeneralModel, cfg: SolverConfig) -> Callable[[np.ndarray], np.ndarray]:
    if cfg.strategy == "general":
        return lambda a: b_update(a, model)
    if cfg.strategy == "closed_form":
        if model.closed_form is None:
            raise UnsupportedDesign("closed_form strategy requested but the model has no closed form")
        return model.closed_form
    if model.closed_form is not None:
        return model.closed_form
    return lambda a: b_update(a, model)


# --- iteration ----------------------------------------------------------------------

def _check_half_plane(v: np.ndarray, name: str, z: complex) -> np.ndarray:
    lowest = float(np.min(v.imag)) if v.size else 0.0
    if lowest < -DOMAIN_TOL:
        raise DomainViolation(f"Im {name} = {lowest:.3e} left the upper half-plane at z={z}")
    if lowest < 0:
        v = v.real + 1j * np.maximum(v.imag, 0.0)
    return v


def _relative_gap(new: np.ndarray, old: np.ndarray) -> float:
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old) / np.maximum(1.0, np.abs(new))))


class _State:
    __slots__ = ("b", "a", "g", "residual")

    def __init__(self, b: np.ndarray, a: np.ndarray, g: np.ndarray):
        self.b, self.a, self.g = b, a, g
        self.residual = _relative_gap(g, b)


def _evaluate(z: complex, b: np.ndarray, model: GeneralModel, bmap: Callable) -> _State:
    a = _check_half_plane(a_update(z, b, model), "a", z)
    g = _check_half_plane(np.asarray(bmap(a), dtype=complex), "b", z)
    return _State(b, a, g)


def _newton_proposal(z: complex, state: _State, model: GeneralModel, bmap: Callable) -> _State | None:
    k = state.b.size
    jac = np.empty((k, k), dtype=complex)
    for s in range(k):
        h = _FD_STEP * max(1.0, abs(state.b[s]))
        shifted = state.b.copy()
        shifted[s] += h
        jac[:, s] = (bmap(a_update(z, shifted, model)) - state.g) / h
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            step = linalg.solve(jac - np.eye(k), -(state.g - state.b))
    except (ValueError, linalg.LinAlgError, linalg.LinAlgWarning):
        return None

    candidate = state.b + step
    if float(np.min(candidate.imag)) < -DOMAIN_TOL:
        return None
    candidate = candidate.real + 1j * np.maximum(candidate.imag, 0.0)
    try:
        return _evaluate(z, candidate, model, bmap)
    except SpectraError:
        return None


def solve_at_z(
    z: complex,
    model: GeneralModel,
    cfg: SolverConfig | None = None,
    b0: np.ndarray | None = None,
) -> FixedPoint:
    cfg = cfg or SolverConfig()
    z = complex(z)
    if not z.imag > 0:
        raise DomainViolation(f"solve_at_z needs Im z > 0, got z={z}")
    bmap = _b_map(model, cfg)

    start = np.zeros(model.k, dtype=complex) if b0 is None else np.array(b0, dtype=complex)
    state = _evaluate(z, _check_half_plane(start, "b", z), model, bmap)

    theta = cfg.damping
    best = math.inf
    since_best = 0
    history: list[float] = []

    for it in range(cfg.max_iters + 1):
        history.append(state.residual)
        plain = state.b + theta * (state.g - state.b)

        if state.residual <= cfg.tol:
            a_next = a_update(z, plain, model)
            if _relative_gap(a_next, state.a) <= cfg.tol:
                return FixedPoint(
                    z=z, a=state.a, b=state.b, m0=m0_of(z, state.b, model), iters=it,
                    residual=state.residual, converged=True, damping=theta, history=tuple(history),
                )
        if it == cfg.max_iters:
            break

        if state.residual < best:
            best, since_best = state.residual, 0
        else:
            since_best += 1
            if cfg.auto_damp and since_best >= cfg.stall_window and theta > cfg.min_damping:
                theta = max(theta / 2.0, cfg.min_damping)
                since_best = 0
                logger.debug("z=%s: residual stalled at %.3e, damping -> %g", z, best, theta)
                plain = state.b + theta * (state.g - state.b)

        if cfg.newton:
            proposal = _newton_proposal(z, state, model, bmap)
            if proposal is not None and proposal.residual < state.residual:
                state = proposal
                continue
            logger.debug("z=%s iter %d: Newton proposal rejected", z, it)
        state = _evaluate(z, plain, model, bmap)

    last = FixedPoint(
        z=z, a=state.a, b=state.b, m0=m0_of(z, state.b, model), iters=cfg.max_iters,
        residual=state.residual, converged=False, damping=theta, history=tuple(history),
    )
    raise NoConvergence(
        f"no convergence at z={z} after {cfg.max_iters} iterations (residual {state.residual:.3e})",
        fixed_point=last,
        history=tuple(history),
    )


# --- grids --------------------------------------------------------------------------

def _sweep(zs: np.ndarray, model: GeneralModel, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m0 = np.empty(zs.size, dtype=complex)
    converged = np.ones(zs.size, dtype=bool)
    iters = np.zeros(zs.size, dtype=int)
    warm = None
    for i, z in enumerate(zs):
        try:
            fp = solve_at_z(z, model, cfg, b0=warm)
        except NoConvergence as exc:
            fp = exc.fixed_point
            converged[i] = False
            logger.warning("grid point x=%.6g did not converge (residual %.3e)", z.real, fp.residual)
        m0[i] = fp.m0
        iters[i] = fp.iters
        warm = fp.b
    return m0, converged, iters


def solve_grid(
    request: DensityRequest,
    model: GeneralModel,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> SpectralDensity:
    """Density f(x) = Im m0(x + i*eps) / pi over the request grid.

    Contiguous chunks are swept concurrently when threads > 1; each chunk is
    warm-started along its own points. Non-converged points are flagged, not fatal.
    """
    cfg = cfg or SolverConfig()
    zs = request.x_grid + 1j * request.epsilon
    chunks = [c for c in np.array_split(np.arange(zs.size), max(1, min(threads, zs.size))) if c.size]

    if len(chunks) == 1:
        parts = [_sweep(zs, model, cfg)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda idx: _sweep(zs[idx], model, cfg), chunks))

    m0 = np.concatenate([p[0] for p in parts])
    converged = np.concatenate([p[1] for p in parts])
    iters = np.concatenate([p[2] for p in parts])
    return SpectralDensity(
        grid=request.x_grid,
        values=np.maximum(m0.imag, 0.0) / np.pi,
        epsilon=request.epsilon,
        converged=converged,
        iterations=iters,
        stieltjes=m0,
    )


def spectral_bound(model: GeneralModel) -> float:
    """Radius ||F|| * sum_r ||Sigma_r|| (1 + sqrt(p/n_r))^2 enclosing the support."""
    f_norm = float(np.max(np.abs(linalg.eigvalsh(model.F)))) if model.n_plus else 0.0
    total = 0.0
    for size, gram in zip(model.block_sizes, model.grams):
        g_norm = float(np.max(np.abs(np.diagonal(gram)))) if model.diag_fast_path else float(
            np.max(np.abs(linalg.eigvalsh(gram)))
        )
        total += g_norm * (1.0 + math.sqrt(model.p / size)) ** 2
    return f_norm * total
