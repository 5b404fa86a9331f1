"""Unit tests for designs, variance components and the general model."""
from __future__ import annotations

import numpy as np
import pytest

from src.design_builder import build_oneway, estimator_matrix, incidence_matrices
from src.errors import AsymmetryTooLarge, DegenerateDesign, DimensionMismatch, NotPSD
from src.model_core import (
    CrossedTwoWay,
    Explicit,
    GeneralModel,
    NestedBalanced,
    OneWay,
    SampleCovariance,
    SolverConfig,
    VarianceComponents,
    to_general_model,
    validate_components,
)


class TestValidateComponents:
    """Tests for covariance ingestion."""

    def test_identity_accepted_unchanged(self):
        """The identity passes through with no corrections."""
        comps = validate_components([np.eye(3)])
        assert comps.p == 3
        assert comps.k == 1
        np.testing.assert_array_equal(comps.sigmas[0], np.eye(3))
        assert comps.corrections == ()

    def test_tiny_asymmetry_symmetrized_exactly(self):
        """Entries off by 1e-12 are replaced by the upper triangle."""
        S = np.eye(2)
        S[0, 1] = 0.5
        S[1, 0] = 0.5 + 1e-12
        comps = validate_components([S])
        assert comps.sigmas[0][0, 1] == 0.5
        assert comps.sigmas[0][1, 0] == 0.5
        assert comps.corrections

    def test_negative_eigenvalue_rejected(self):
        """diag(1, -0.5) is not a covariance."""
        with pytest.raises(NotPSD):
            validate_components([np.diag([1.0, -0.5])])

    def test_rounding_negative_clipped(self):
        """Eigenvalues just below zero are clipped and recorded."""
        comps = validate_components([np.diag([1.0, -1e-12])])
        assert comps.sigmas[0][1, 1] == 0.0
        assert any("clipped" in c for c in comps.corrections)

    def test_large_asymmetry_rejected(self):
        """Relative asymmetry above 1e-10 is an error, not a correction."""
        with pytest.raises(AsymmetryTooLarge):
            validate_components([np.array([[1.0, 0.2], [0.3, 1.0]])])

    def test_size_mismatch(self):
        """All components must share p."""
        with pytest.raises(DimensionMismatch):
            validate_components([np.eye(2), np.eye(3)])

    def test_non_square(self):
        """Rectangular input is rejected."""
        with pytest.raises(DimensionMismatch):
            validate_components([np.ones((2, 3))])

    def test_idempotent(self):
        """Validating validated components changes nothing."""
        rng = np.random.default_rng(0)
        A = rng.standard_normal((4, 4))
        first = validate_components([A @ A.T, np.eye(4)])
        second = validate_components(list(first.sigmas))
        for x, y in zip(first.sigmas, second.sigmas):
            np.testing.assert_array_equal(x, y)

    def test_from_spectra_is_diagonal(self):
        """Declared spectra give diagonal components."""
        comps = VarianceComponents.from_spectra([[1.0, 2.0], [0.0, 0.5]])
        assert comps.is_diagonal
        np.testing.assert_array_equal(comps.sigmas[0], np.diag([1.0, 2.0]))


class TestDesigns:
    """Tests for design variants."""

    def test_oneway_balanced_K_is_group_size(self):
        """K equals the common group size for balanced designs."""
        design = OneWay((5, 5, 5, 5))
        assert design.K == pytest.approx(5.0)
        assert design.n == 20
        assert design.k == 2

    def test_oneway_needs_two_groups(self):
        """A single group has no between-group variation."""
        with pytest.raises(DegenerateDesign):
            OneWay((4,))

    def test_nested_levels(self):
        """n is the product of the levels."""
        design = NestedBalanced((3, 2, 2))
        assert design.n == 12
        assert design.k == 3
        with pytest.raises(DegenerateDesign):
            NestedBalanced((3, 1))

    def test_crossed_sizes(self):
        """n = IJKL and k = 5."""
        design = CrossedTwoWay(2, 2, 3, 2)
        assert design.n == 24
        assert design.k == 5
        with pytest.raises(DegenerateDesign):
            CrossedTwoWay(2, 1, 3, 2)

    def test_explicit_checks_rows(self):
        """Each U must have n rows."""
        with pytest.raises(DimensionMismatch):
            Explicit(np.eye(3), (np.ones((2, 1)),))

    def test_sample_covariance(self):
        """One effect with n observations."""
        design = SampleCovariance(10)
        assert design.k == 1
        assert design.n == 10


class TestGeneralModel:
    """Tests for the (F, grams) model and its construction."""

    def test_sample_covariance_gives_identity_F(self):
        """U = Id and B = Id/n give F = Id."""
        design = SampleCovariance(6)
        comps = validate_components([np.eye(3)])
        model = to_general_model(design, comps, np.eye(6) / 6)
        np.testing.assert_allclose(model.F, np.eye(6), atol=1e-15)
        assert model.block_sizes == (6,)
        assert model.diag_fast_path

    def test_zero_B_gives_zero_F(self):
        """B = 0 gives F = 0."""
        design = OneWay((2, 2))
        comps = validate_components([np.eye(2), np.eye(2)])
        model = to_general_model(design, comps, np.zeros((4, 4)))
        assert np.count_nonzero(model.F) == 0

    def test_oneway_F_matches_entrywise(self):
        """F blocks are sqrt(I_r I_s) U_r^T B U_s."""
        design = OneWay((2, 2))
        build = build_oneway((2, 2))
        comps = validate_components([np.eye(2), np.eye(2)])
        model = to_general_model(design, comps, build.B2)
        U1, U2 = incidence_matrices(design)
        sizes = (2, 4)
        expected = np.zeros((6, 6))
        blocks = [U1, U2]
        offsets = (0, 2)
        for r in range(2):
            for s in range(2):
                block = np.sqrt(sizes[r] * sizes[s]) * blocks[r].T @ build.B2 @ blocks[s]
                expected[offsets[r] : offsets[r] + sizes[r], offsets[s] : offsets[s] + sizes[s]] = block
        np.testing.assert_allclose(model.F, expected, atol=1e-14)

    def test_F_is_hermitian(self):
        """F = U^T B U is symmetric for symmetric B."""
        design = NestedBalanced((3, 2))
        comps = validate_components([np.eye(2), np.eye(2)])
        model = to_general_model(design, comps, estimator_matrix(design, 1))
        np.testing.assert_array_equal(model.F, model.F.T)

    def test_block_size_mismatch(self):
        """Block sizes must add up to the dimension of F."""
        with pytest.raises(DimensionMismatch):
            GeneralModel(F=np.eye(3), block_sizes=(2,), grams=(np.eye(2),))

    def test_non_hermitian_F_rejected(self):
        """F must be Hermitian within 1e-10."""
        F = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(AsymmetryTooLarge):
            GeneralModel(F=F, block_sizes=(2,), grams=(np.eye(2),))

    def test_dense_grams_disable_fast_path(self):
        """A non-diagonal gram keeps the dense path."""
        S = np.array([[1.0, 0.3], [0.3, 1.0]])
        model = GeneralModel(F=np.eye(2), block_sizes=(2,), grams=(S,))
        assert not model.diag_fast_path


class TestSolverConfig:
    """Tests for solver settings validation."""

    def test_defaults(self):
        """Defaults follow the documented values."""
        cfg = SolverConfig()
        assert cfg.tol == 1e-12
        assert cfg.max_iters == 5000
        assert cfg.damping == 1.0
        assert cfg.auto_damp

    def test_rejects_bad_damping(self):
        """Damping must lie in (0, 1]."""
        from src.errors import ConfigError

        with pytest.raises(ConfigError):
            SolverConfig(damping=0.0)
