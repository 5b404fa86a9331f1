"""Unit tests for the fixed-point solver."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import ortho_group

from src.closed_form import mp_density, mp_stieltjes, recognize
from src.errors import DomainViolation, NoConvergence, UnsupportedDesign
from src.fp_solver import (
    DensityRequest,
    a_update,
    b_update,
    solve_at_z,
    solve_grid,
    spectral_bound,
)
from src.model_core import GeneralModel, SampleCovariance, SolverConfig, to_general_model, validate_components


def mp_model(p: int, n: int, sigma: np.ndarray | None = None, closed: bool = True) -> GeneralModel:
    design = SampleCovariance(n)
    comps = validate_components([np.eye(p) if sigma is None else sigma])
    model = to_general_model(design, comps, np.eye(n) / n)
    return model.with_closed_form(recognize(design, 1)) if closed else model


def zero_model(p: int = 3, n: int = 4) -> GeneralModel:
    return GeneralModel(F=np.zeros((n, n)), block_sizes=(n,), grams=(np.eye(p),))


class TestAUpdate:
    """Tests for the resolvent half-step."""

    def test_zero_sigma(self):
        """Sigma = 0 gives a = 0."""
        model = GeneralModel(F=np.eye(2), block_sizes=(2,), grams=(np.zeros((3, 3)),))
        np.testing.assert_array_equal(a_update(1j, np.zeros(1), model), [0])

    def test_scalar_resolvent(self):
        """k = 1, Sigma = Id, b = 0 gives a = -p/(n z)."""
        model = mp_model(p=4, n=8, closed=False)
        z = 0.5 + 2j
        assert a_update(z, np.zeros(1), model)[0] == pytest.approx(-4 / (8 * z), abs=1e-15)

    def test_matches_dense_inverse(self):
        """Diagonal fast path equals the explicit inverse."""
        rng = np.random.default_rng(1)
        s1, s2 = np.diag(rng.uniform(0, 2, 4)), np.diag(rng.uniform(0, 2, 4))
        model = GeneralModel(F=np.eye(5), block_sizes=(2, 3), grams=(s1, s2))
        z, b = 0.7 + 0.3j, np.array([0.2 + 0.1j, -0.4 + 0.6j])
        R = np.linalg.inv(z * np.eye(4) + b[0] * s1 + b[1] * s2)
        expected = [-np.trace(R @ s1) / 2, -np.trace(R @ s2) / 3]
        np.testing.assert_allclose(a_update(z, b, model), expected, atol=1e-13)

    def test_dense_path_agrees_with_diagonal(self):
        """Rotating the grams leaves the traces unchanged."""
        rng = np.random.default_rng(2)
        O = ortho_group.rvs(4, random_state=3)
        d1, d2 = rng.uniform(0, 2, 4), rng.uniform(0, 2, 4)
        diag = GeneralModel(F=np.eye(3), block_sizes=(1, 2), grams=(np.diag(d1), np.diag(d2)))
        dense_grams = validate_components([O @ np.diag(d1) @ O.T, O @ np.diag(d2) @ O.T]).sigmas
        dense = GeneralModel(F=np.eye(3), block_sizes=(1, 2), grams=dense_grams)
        assert not dense.diag_fast_path
        z, b = 1.0 + 0.5j, np.array([0.3 + 0.2j, 0.1 + 0.4j])
        np.testing.assert_allclose(a_update(z, b, dense), a_update(z, b, diag), atol=1e-12)

    def test_real_z_rejected(self):
        """The resolvent is only used on the upper half-plane."""
        with pytest.raises(DomainViolation):
            a_update(1.0 + 0j, np.zeros(1), mp_model(2, 4, closed=False))


class TestBUpdate:
    """Tests for the block-trace half-step."""

    def test_zero_a(self):
        """a = 0 gives -Tr_r F / n_r."""
        rng = np.random.default_rng(4)
        A = rng.standard_normal((5, 5))
        F = A + A.T
        model = GeneralModel(F=F, block_sizes=(2, 3), grams=(np.eye(2), np.eye(2)))
        expected = [-np.trace(F[:2, :2]) / 2, -np.trace(F[2:, 2:]) / 3]
        np.testing.assert_allclose(b_update(np.zeros(2), model), expected, atol=1e-14)

    def test_zero_F(self):
        """F = 0 gives b = 0."""
        np.testing.assert_array_equal(b_update(np.array([0.3 + 0.1j]), zero_model()), [0])

    def test_identity_F(self):
        """F = Id gives b = -1/(1 + a)."""
        a = np.array([0.4 + 0.2j])
        np.testing.assert_allclose(b_update(a, mp_model(2, 6, closed=False)), -1 / (1 + a), atol=1e-14)


class TestSolveAtZ:
    """Tests for single-point solves."""

    def test_zero_F_is_point_mass(self):
        """F = 0 gives b = 0 and m0 = -1/z."""
        z = 0.3 + 0.2j
        fp = solve_at_z(z, zero_model())
        np.testing.assert_array_equal(fp.b, [0])
        assert abs(fp.m0 + 1 / z) < 1e-15
        assert fp.converged

    def test_marcenko_pastur_square(self):
        """p = n recovers the gamma = 1 quadratic."""
        z = 2 + 0.5j
        fp = solve_at_z(z, mp_model(p=40, n=40, closed=False))
        assert abs(fp.m0 - mp_stieltjes(z, 1.0)) < 1e-8

    @pytest.mark.parametrize("im", [1e-3, 1e-1, 1.0, 10.0])
    def test_marcenko_pastur_half(self, im):
        """p/n = 1/2 matches the MP root on a 50-point grid at every height."""
        model = mp_model(200, 400)
        zs = np.linspace(0.0, 3.5, 50) + 1j * im
        gaps = [abs(solve_at_z(z, model).m0 - mp_stieltjes(z, 0.5)) for z in zs]
        assert max(gaps) < 1e-8

    def test_general_and_closed_form_agree(self):
        """Both b strategies give the same m0."""
        z = 1.1 + 0.05j
        general = solve_at_z(z, mp_model(30, 60), SolverConfig(strategy="general"))
        closed = solve_at_z(z, mp_model(30, 60), SolverConfig(strategy="closed_form"))
        assert abs(general.m0 - closed.m0) < 1e-10

    def test_closed_form_strategy_needs_closed_form(self):
        """Forcing closed forms on an unrecognized model fails."""
        with pytest.raises(UnsupportedDesign):
            solve_at_z(1j, mp_model(3, 6, closed=False), SolverConfig(strategy="closed_form"))

    def test_warm_equals_cold(self):
        """Uniqueness: a warm start lands on the same fixed point."""
        model = mp_model(50, 100)
        z = 1.2 + 0.01j
        cold = solve_at_z(z, model)
        warm = solve_at_z(z, model, b0=solve_at_z(z + 0.05, model).b)
        assert abs(warm.m0 - cold.m0) < 1e-10

    def test_residual_certificate(self):
        """Returned (a, b) satisfy both equations."""
        model = mp_model(50, 100)
        fp = solve_at_z(0.8 + 0.02j, model)
        assert fp.residual <= 1e-12
        np.testing.assert_allclose(a_update(fp.z, fp.b, model), fp.a, atol=1e-15)
        assert np.all(fp.a.imag >= 0) and np.all(fp.b.imag >= 0) and fp.m0.imag > 0

    def test_mp_equation_for_diagonal_sigma(self):
        """Eliminating b1 = -1 + g + g z m0 leaves the MP equation satisfied."""
        p, n = 40, 100
        sigma = np.diag(np.linspace(0.5, 2.0, p))
        fp = solve_at_z(1.3 + 0.1j, mp_model(p, n, sigma))
        gamma = p / n
        b1 = -1 + gamma + gamma * fp.z * fp.m0
        rhs = -np.mean(1.0 / (fp.z + b1 * np.diag(sigma)))
        assert abs(fp.m0 - rhs) < 1e-8

    def test_stieltjes_far_field(self):
        """z m0(z) -> -1 at large |z|."""
        z = 1e4j
        fp = solve_at_z(z, mp_model(20, 50))
        assert abs(z * fp.m0 + 1) < 0.01

    def test_plain_iteration_contracts_far_from_axis(self):
        """Without Newton, residuals shrink geometrically for large Im z."""
        fp = solve_at_z(1 + 10j, mp_model(20, 40, closed=False), SolverConfig(newton=False))
        history = [h for h in fp.history if h > 1e-13]
        ratios = np.array(history[2:]) / np.array(history[1:-1])
        assert len(history) > 3
        assert np.all(ratios < 1)

    def test_rejects_real_axis(self):
        """Im z must be positive."""
        with pytest.raises(DomainViolation):
            solve_at_z(1.0, mp_model(3, 6))

    def test_no_convergence_carries_last_iterate(self):
        """Hitting max_iters raises with diagnostics attached."""
        cfg = SolverConfig(max_iters=2, newton=False)
        with pytest.raises(NoConvergence) as info:
            solve_at_z(1.0 + 1e-4j, mp_model(20, 40), cfg)
        assert info.value.fixed_point is not None
        assert not info.value.fixed_point.converged
        assert len(info.value.history) == 3


class TestSolveGrid:
    """Tests for density sweeps."""

    def test_point_mass_cauchy_kernel(self):
        """F = 0 smooths delta_0 into a Cauchy density."""
        eps = 1e-4
        density = solve_grid(DensityRequest(np.array([0.0, 1.0]), eps), zero_model())
        assert density.values[0] == pytest.approx(1 / (np.pi * eps), rel=1e-12)
        assert density.values[1] == pytest.approx(eps / (np.pi * (1 + eps**2)), rel=1e-10)

    def test_marcenko_pastur_bulk(self):
        """gamma = 1/2 density matches the MP law inside the bulk."""
        gamma = 0.5
        model = mp_model(100, 200)
        density = solve_grid(DensityRequest.linspace(0.0, 3.0, 301, epsilon=1e-4), model)
        assert density.all_converged
        lo, hi = (1 - np.sqrt(gamma)) ** 2, (1 + np.sqrt(gamma)) ** 2
        inside = (density.grid > lo + 0.05) & (density.grid < hi - 0.05)
        gap = np.abs(density.values[inside] - mp_density(density.grid[inside], gamma))
        assert gap.max() < 1e-3
        assert np.all(density.values >= 0)

    def test_threads_do_not_change_result(self):
        """Chunked sweeps give the same density."""
        model = mp_model(30, 60)
        request = DensityRequest.linspace(0.0, 3.0, 61, epsilon=1e-3)
        one = solve_grid(request, model)
        three = solve_grid(request, model, threads=3)
        np.testing.assert_allclose(three.values, one.values, rtol=1e-9, atol=1e-12)

    def test_request_validation(self):
        """Epsilon must be positive and the grid increasing."""
        from src.errors import ConfigError

        with pytest.raises(ConfigError):
            DensityRequest(np.array([0.0, 1.0]), epsilon=0.0)
        with pytest.raises(ConfigError):
            DensityRequest(np.array([1.0, 0.0]))


class TestSpectralBound:
    """Tests for the support radius."""

    def test_marcenko_pastur_edge(self):
        """For F = Id the bound is the upper MP edge."""
        assert spectral_bound(mp_model(25, 100)) == pytest.approx((1 + 0.5) ** 2)
