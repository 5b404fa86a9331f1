"""Incidence matrices, projections and MANOVA estimator matrices.

Balanced designs are described by their subspace lattice: indices 0..k where 0 is
the mean subspace and S_t ⊆ S_r whenever t ⪯ r. Everything else (Möbius function,
orthogonal projections pi_t, estimator coefficients beta_tu) follows from the
order, the group counts I_r and the dimensions d_r.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from src.errors import DegenerateDesign, DimensionMismatch, UnsupportedDesign
from src.model_core import (
    CrossedTwoWay,
    DesignSpec,
    Explicit,
    NestedBalanced,
    OneWay,
    SampleCovariance,
)


@dataclass(frozen=True, eq=False)
class BalancedLattice:
    k: int
    order: np.ndarray  # zeta(t, r) = 1{t ⪯ r}, shape (k+1, k+1)
    dims: tuple[int, ...]
    sizes: tuple[int, ...]  # I_0 = 1, ..., I_k = n
    mobius: np.ndarray

    @property
    def n(self) -> int:
        return self.sizes[-1]

    @property
    def coefs(self) -> tuple[float, ...]:
        n = self.n
        return tuple(n / size for size in self.sizes)

    def leq(self, t: int, r: int) -> bool:
        return bool(self.order[t, r])

    def successor(self, t: int) -> int | None:
        """The unique element covering t, or None when there are zero or several."""
        above = [r for r in range(self.k + 1) if r != t and self.order[t, r]]
        covers = [r for r in above if not any(s != r and self.order[s, r] for s in above)]
        return covers[0] if len(covers) == 1 else None

    def q(self, a: np.ndarray) -> np.ndarray:
        """q_u = sum of a_r over components r ⪰ u (r >= 1), for u = 0..k."""
        a = np.asarray(a)
        if a.shape != (self.k,):
            raise DimensionMismatch(f"expected {self.k} values of a, got shape {a.shape}")
        return self.order[:, 1:].astype(float) @ a

    def beta(self, t: int) -> dict[int, float]:
        """Nonzero coefficients beta_tu = mu(t,u) / (c_t d_u) of B_t in the pi basis."""
        c_t = self.coefs[t]
        return {
            u: self.mobius[t, u] / (c_t * self.dims[u])
            for u in range(self.k + 1)
            if self.mobius[t, u] != 0
        }


@dataclass(frozen=True, eq=False)
class EstimatorMatrix:
    target: int
    B: np.ndarray
    as_projections: dict[int, float]


@dataclass(frozen=True, eq=False)
class OneWayBuild:
    U1: np.ndarray
    U2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    K: float
    pi0: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    B1_check: np.ndarray  # K^-1 (I^-1 (pi0 + pi1) - (n-I)^-1 pi2)

    @property
    def projections(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.pi0, self.pi1, self.pi2


@dataclass(frozen=True, eq=False)
class BalancedDesign:
    lattice: BalancedLattice
    U: tuple[np.ndarray, ...]
    projections: tuple[np.ndarray, ...]
    estimators: tuple[EstimatorMatrix, ...]


def _validate_lattice(order: np.ndarray, dims: tuple[int, ...], n: int) -> np.ndarray:
    size = order.shape[0]
    if not np.all(np.diagonal(order)):
        raise DegenerateDesign("subspace order is not reflexive")
    closure = (order.astype(int) @ order.astype(int)) > 0
    if np.any(closure & ~order):
        raise DegenerateDesign("subspace order is not transitive")
    if min(dims) < 1:
        raise DegenerateDesign(f"design has an empty subspace: dims {dims}")
    if sum(dims) != n:
        raise DegenerateDesign(f"subspace dimensions sum to {sum(dims)}, expected n={n}")

    mobius = np.rint(np.linalg.inv(order.astype(float))).astype(int)
    if not np.array_equal(order.astype(int) @ mobius, np.eye(size, dtype=int)):
        raise DegenerateDesign("Möbius inversion failed on the subspace order")
    return mobius


def _lattice(order: np.ndarray, sizes: tuple[int, ...], dims: tuple[int, ...]) -> BalancedLattice:
    order = np.asarray(order, dtype=bool)
    mobius = _validate_lattice(order, dims, sizes[-1])
    return BalancedLattice(k=len(sizes) - 1, order=order, dims=dims, sizes=sizes, mobius=mobius)


def nested_lattice(levels: tuple[int, ...]) -> BalancedLattice:
    levels = NestedBalanced(tuple(levels)).levels
    k = len(levels)
    sizes = (1,) + tuple(math.prod(levels[: r + 1]) for r in range(k))
    dims = (1,) + tuple(sizes[t - 1] * (levels[t - 1] - 1) for t in range(1, k + 1))
    order = np.triu(np.ones((k + 1, k + 1), dtype=bool))
    return _lattice(order, sizes, dims)


def crossed_lattice(I: int, J: int, K: int, L: int) -> BalancedLattice:  # noqa: E741
    if I < 2:
        raise DegenerateDesign("crossed design needs I >= 2")
    design = CrossedTwoWay(I, J, K, L)
    n = design.n
    sizes = (1, I, I * J, I * K, I * J * K, n)
    dims = (1, I - 1, I * (J - 1), I * (K - 1), I * (J - 1) * (K - 1), I * J * K * (L - 1))
    above = {0: (0, 1, 2, 3, 4, 5), 1: (1, 2, 3, 4, 5), 2: (2, 4, 5), 3: (3, 4, 5), 4: (4, 5), 5: (5,)}
    order = np.zeros((6, 6), dtype=bool)
    for t, rs in above.items():
        order[t, list(rs)] = True
    return _lattice(order, sizes, dims)


def incidence_matrices(design: DesignSpec) -> list[np.ndarray]:
    if isinstance(design, OneWay):
        return [np.repeat(np.eye(design.I), design.group_sizes, axis=0), np.eye(design.n)]
    if isinstance(design, NestedBalanced):
        n = design.n
        out = []
        for r in range(1, design.k + 1):
            groups = math.prod(design.levels[:r])
            out.append(np.kron(np.eye(groups), np.ones((n // groups, 1))))
        return out
    if isinstance(design, CrossedTwoWay):
        I, J, K, L = design.I, design.J, design.K, design.L  # noqa: E741
        return [
            np.kron(np.eye(I), np.ones((J * K * L, 1))),
            np.kron(np.eye(I * J), np.ones((K * L, 1))),
            np.kron(np.kron(np.kron(np.eye(I), np.ones((J, 1))), np.eye(K)), np.ones((L, 1))),
            np.kron(np.eye(I * J * K), np.ones((L, 1))),
            np.eye(design.n),
        ]
    if isinstance(design, Explicit):
        return list(design.U)
    if isinstance(design, SampleCovariance):
        return [np.eye(design.n)]
    raise UnsupportedDesign(f"no incidence matrices for {type(design).__name__}")


def _balanced_build(lattice: BalancedLattice, U: list[np.ndarray]) -> BalancedDesign:
    n = lattice.n
    nested_projectors = [np.full((n, n), 1.0 / n)]
    for r, u in enumerate(U, start=1):
        nested_projectors.append((u @ u.T) / lattice.coefs[r])

    projections = []
    for t in range(lattice.k + 1):
        pi = np.zeros((n, n))
        for u in range(lattice.k + 1):
            if lattice.mobius[u, t]:
                pi += lattice.mobius[u, t] * nested_projectors[u]
        projections.append(pi)

    estimators = []
    for t in range(1, lattice.k + 1):
        coefs = lattice.beta(t)
        B = sum(beta * projections[u] for u, beta in coefs.items())
        estimators.append(EstimatorMatrix(target=t, B=B, as_projections=coefs))

    return BalancedDesign(lattice=lattice, U=tuple(U), projections=tuple(projections), estimators=tuple(estimators))


def build_oneway(group_sizes: tuple[int, ...] | list[int]) -> OneWayBuild:
    design = OneWay(tuple(group_sizes))
    I, n = design.I, design.n  # noqa: E741
    if n - I < 1:
        raise DegenerateDesign(f"one-way design needs n > I, got n={n}, I={I}")

    U1, U2 = incidence_matrices(design)
    K = design.K
    pi0 = np.full((n, n), 1.0 / n)
    Pi1 = (U1 / np.asarray(design.group_sizes, dtype=float)) @ U1.T
    pi1 = Pi1 - pi0
    pi2 = np.eye(n) - Pi1

    B1 = (pi1 / (I - 1) - pi2 / (n - I)) / K
    B2 = pi2 / (n - I)
    B1_check = ((pi0 + pi1) / I - pi2 / (n - I)) / K
    return OneWayBuild(U1=U1, U2=U2, B1=B1, B2=B2, K=K, pi0=pi0, pi1=pi1, pi2=pi2, B1_check=B1_check)


def build_nested(levels: tuple[int, ...] | list[int]) -> BalancedDesign:
    design = NestedBalanced(tuple(levels))
    return _balanced_build(nested_lattice(design.levels), incidence_matrices(design))


def build_crossed(I: int, J: int, K: int, L: int) -> BalancedDesign:  # noqa: E741
    lattice = crossed_lattice(I, J, K, L)
    return _balanced_build(lattice, incidence_matrices(CrossedTwoWay(I, J, K, L)))


def projections(design: DesignSpec) -> list[np.ndarray]:
    if isinstance(design, OneWay):
        return list(build_oneway(design.group_sizes).projections)
    if isinstance(design, NestedBalanced):
        return list(build_nested(design.levels).projections)
    if isinstance(design, CrossedTwoWay):
        return list(build_crossed(design.I, design.J, design.K, design.L).projections)
    raise UnsupportedDesign(f"{type(design).__name__} has no orthogonal subspace decomposition")


def estimator_matrix(design: DesignSpec, t: int) -> np.ndarray:
    """B_t of the MANOVA estimator Sigma_t = Y^T B_t Y for the given design."""
    if not 1 <= t <= design.k:
        raise DimensionMismatch(f"target {t} outside 1..{design.k}")
    if isinstance(design, OneWay):
        build = build_oneway(design.group_sizes)
        return build.B1 if t == 1 else build.B2
    if isinstance(design, NestedBalanced):
        return build_nested(design.levels).estimators[t - 1].B
    if isinstance(design, CrossedTwoWay):
        return build_crossed(design.I, design.J, design.K, design.L).estimators[t - 1].B
    if isinstance(design, Explicit):
        return design.B
    if isinstance(design, SampleCovariance):
        return np.eye(design.n) / design.n
    raise UnsupportedDesign(f"no estimator for {type(design).__name__}")
