"""Closed-form b-updates for recognized designs, and the Marcenko-Pastur oracle.

Each update maps a complex k-vector a to the k-vector b that the general block
trace b_r = -n_r^-1 Tr_r([Id + F D(a)]^-1 F) would produce for the design's F,
without forming F. Components outside the active set get b_r = 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.design_builder import BalancedLattice, crossed_lattice
from src.errors import DimensionMismatch, UnsupportedDesign, ZeroDenominator
from src.model_core import CrossedTwoWay, DesignSpec, NestedBalanced, OneWay, SampleCovariance

_TINY = np.finfo(float).tiny


def _guard(den: np.ndarray | complex, where: str) -> None:
    if np.any(np.abs(den) < _TINY):
        raise ZeroDenominator(f"zero denominator in {where}")


def _as_complex(a: Sequence[complex] | np.ndarray, k: int) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (k,):
        raise DimensionMismatch(f"expected {k} values of a, got shape {a.shape}")
    return a


def sample_covariance_b(a: Sequence[complex] | np.ndarray) -> np.ndarray:
    (a1,) = _as_complex(a, 1)
    den = 1.0 + a1
    _guard(den, "sample_covariance_b")
    return np.array([-1.0 / den])


def oneway_b(a: Sequence[complex] | np.ndarray, group_sizes: Sequence[int], target: int) -> np.ndarray:
    a1, a2 = _as_complex(a, 2)
    design = OneWay(tuple(group_sizes))
    I, n, K = design.I, design.n, design.K  # noqa: E741

    if target == 2:
        den = n - I + n * a2
        _guard(den, "oneway_b")
        return np.array([0.0, -(n - I) / den])
    if target != 1:
        raise DimensionMismatch(f"one-way target must be 1 or 2, got {target}")

    J = np.asarray(design.group_sizes, dtype=float)
    den = K * I + I * J * a1 + n * a2
    tail = K * (n - I) - n * a2
    _guard(den, "oneway_b")
    _guard(tail, "oneway_b")
    b1 = -np.sum(J / den)
    b2 = (n - I) / tail - np.sum(1.0 / den)
    return np.array([b1, b2])


def nested_b(a: Sequence[complex] | np.ndarray, levels: Sequence[int], target: int) -> np.ndarray:
    levels = tuple(int(j) for j in levels)
    k = len(levels)
    a = _as_complex(a, k)
    if not 1 <= target <= k:
        raise DimensionMismatch(f"nested target must lie in 1..{k}, got {target}")

    r = target
    q = np.cumsum(a[::-1])[::-1]  # q[s-1] = a_s + ... + a_k
    J_r = levels[r - 1]
    den_r = J_r - 1 + J_r * q[r - 1]
    _guard(den_r, "nested_b")
    head = (J_r - 1) / den_r

    b = np.zeros(k, dtype=complex)
    b[r - 1] = -head
    if r < k:
        J_next = levels[r]
        den_next = J_next - 1 - q[r]
        _guard(den_next, "nested_b")
        bracket = head - (J_next - 1) / den_next
        for s in range(r + 1, k + 1):
            b[s - 1] = -bracket / np.prod(levels[r:s])
    return b


def crossed_b(a: Sequence[complex] | np.ndarray, shape: tuple[int, int, int, int], target: int) -> np.ndarray:
    I, J, K, L = shape  # noqa: E741
    a = _as_complex(a, 5)
    if not 1 <= target <= 5:
        raise DimensionMismatch(f"crossed target must lie in 1..5, got {target}")

    lattice = crossed_lattice(I, J, K, L)
    q = lattice.q(a)
    b = np.zeros(5, dtype=complex)

    if target == 1:
        dens = (I - 1 + I * q[1], J - 1 - q[2], K - 1 - q[3], (J - 1) * (K - 1) + q[4])
        _guard(np.array(dens), "crossed_b")
        g1 = (I - 1) / dens[0]
        g2 = (J - 1) / dens[1]
        g3 = (K - 1) / dens[2]
        g4 = (J - 1) * (K - 1) / dens[3]
        b[0] = -g1
        b[1] = -(g1 - g2) / J
        b[2] = -(g1 - g3) / K
        b[3] = -(g1 - g2 - g3 + g4) / (J * K)
        b[4] = b[3] / L
        return b

    t = target
    I_t, d_t = lattice.sizes[t], lattice.dims[t]
    den = 1.0 + (I_t / d_t) * q[t]
    _guard(den, "crossed_b")
    b[t - 1] = -1.0 / den

    s = lattice.successor(t)
    if s is None:
        return b
    den_s = 1.0 - (I_t / lattice.dims[s]) * q[s]
    _guard(den_s, "crossed_b")
    bracket = 1.0 / den - 1.0 / den_s
    for r in range(1, 6):
        if r != t and lattice.leq(t, r):
            b[r - 1] = -(I_t / lattice.sizes[r]) * bracket
    return b


def balanced_general_b(a: Sequence[complex] | np.ndarray, lattice: BalancedLattice, target: int) -> np.ndarray:
    """b_r = -(I_t/I_r) sum_{u ⪯ r} mu(t,u) / (1 + (I_t/d_u) mu(t,u) q_u)."""
    a = _as_complex(a, lattice.k)
    t = target
    if not 1 <= t <= lattice.k:
        raise DimensionMismatch(f"target must lie in 1..{lattice.k}, got {t}")

    q = lattice.q(a)
    I_t = lattice.sizes[t]
    terms = np.zeros(lattice.k + 1, dtype=complex)
    for u in range(lattice.k + 1):
        mu = lattice.mobius[t, u]
        if mu == 0:
            continue
        den = 1.0 + (I_t / lattice.dims[u]) * mu * q[u]
        _guard(den, "balanced_general_b")
        terms[u] = mu / den

    sums = terms @ lattice.order[:, 1:].astype(float)
    return -(I_t / np.asarray(lattice.sizes[1:], dtype=float)) * sums


def mp_stieltjes(z: complex | np.ndarray, gamma: float) -> complex | np.ndarray:
    """Root with Im m > 0 of gamma*z*m^2 + (z + gamma - 1)*m + 1 = 0."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    z = np.asarray(z, dtype=complex)
    A = gamma * z
    B = z + gamma - 1.0
    root = np.sqrt(B * B - 4.0 * A)
    root = np.where((np.conj(B) * root).real >= 0, root, -root)
    q = -0.5 * (B + root)
    m1 = q / A
    m2 = 1.0 / q
    out = np.where(m1.imag >= m2.imag, m1, m2)
    return complex(out) if out.ndim == 0 else out


def mp_density(x: float | np.ndarray, gamma: float) -> np.ndarray:
    """Absolutely continuous part of the Marcenko-Pastur law with ratio gamma."""
    x = np.asarray(x, dtype=float)
    lo, hi = (1 - np.sqrt(gamma)) ** 2, (1 + np.sqrt(gamma)) ** 2
    inside = (x > lo) & (x < hi) & (x > 0)
    safe = np.where(inside, x, 1.0)
    vals = np.sqrt(np.clip((hi - safe) * (safe - lo), 0.0, None)) / (2 * np.pi * gamma * safe)
    return np.where(inside, vals, 0.0)


@dataclass(frozen=True, eq=False)
class ClosedFormUpdate:
    kind: str
    params: tuple
    target: int
    active: tuple[int, ...]
    k: int

    def __call__(self, a: Sequence[complex] | np.ndarray) -> np.ndarray:
        if self.kind == "sample_covariance":
            return sample_covariance_b(a)
        if self.kind == "one_way":
            return oneway_b(a, self.params, self.target)
        if self.kind == "nested":
            return nested_b(a, self.params, self.target)
        if self.kind == "crossed":
            return crossed_b(a, self.params, self.target)
        raise UnsupportedDesign(f"unknown closed form {self.kind!r}")


_CROSSED_ACTIVE = {1: (1, 2, 3, 4, 5), 2: (2, 4, 5), 3: (3, 4, 5), 4: (4, 5), 5: (5,)}


def recognize(design: DesignSpec, target: int) -> ClosedFormUpdate | None:
    """Closed-form update for (design, target), or None when only the general path applies."""
    if not 1 <= target <= design.k:
        raise DimensionMismatch(f"target {target} outside 1..{design.k}")
    if isinstance(design, SampleCovariance):
        return ClosedFormUpdate("sample_covariance", (design.n,), 1, (1,), 1)
    if isinstance(design, OneWay):
        active = (1, 2) if target == 1 else (2,)
        return ClosedFormUpdate("one_way", design.group_sizes, target, active, 2)
    if isinstance(design, NestedBalanced):
        active = tuple(range(target, design.k + 1))
        return ClosedFormUpdate("nested", design.levels, target, active, design.k)
    if isinstance(design, CrossedTwoWay):
        shape = (design.I, design.J, design.K, design.L)
        return ClosedFormUpdate("crossed", shape, target, _CROSSED_ACTIVE[target], 5)
    return None
