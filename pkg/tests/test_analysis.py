"""Unit tests for the verification suites."""

import unittest

import numpy as np
from hypothesis import given, settings, seed
from hypothesis import strategies as st

from modules.analysis import (
    BasinDecomposition,
    basin_decomposition,
    check_idempotent,
    check_inheritance,
    check_limit_spectrum,
    compare_up_to_unitary,
    spectrum_contained,
    verify_commutation,
    verify_spectral_mapping,
)
from modules.errors import InvariantViolation, NotStabilized, ShapeMismatch
from modules.spectral_core import HermitianOperator, eig_decompose
from modules.spectral_maps import parse_map
from modules.transfinite_engine import (
    DirectSumIdentity,
    Embedding,
    IterationConfig,
    ScalarMapTransform,
    Stage,
    StageRecord,
    iterate_to_fixed_point,
)
from tests.factories import with_spectrum


def _record(n, values):
    A = HermitianOperator(np.asarray(values, dtype=float))
    return StageRecord(Stage.finite(n), A, Embedding.identity(A.dim), 0.0, n)


class TestSpectralMapping(unittest.TestCase):
    """verify_spectral_mapping."""

    def setUp(self):
        self.square = parse_map("square")
        self.result = iterate_to_fixed_point(ScalarMapTransform(self.square), HermitianOperator.diagonal([0.5, 1.0]))

    def test_diagonal_run_matches_exactly(self):
        """Test a diagonal run reproduces the scalar orbit with zero deviation."""
        report = verify_spectral_mapping(self.result.trace, self.square, 1e-12)
        self.assertTrue(report.overall_pass)
        self.assertEqual(report.max_deviation, 0.0)
        self.assertEqual(len(report.per_stage), len(self.result.trace))
        self.assertEqual(report.per_stage[2].predicted, (0.0625, 1.0))

    def test_random_basis_run(self):
        """Test spectra of a rotated operator follow f^n within tolerance."""
        A, _ = with_spectrum(np.random.default_rng(21), [-0.9, -0.3, 0.2, 0.7, 1.0])
        result = iterate_to_fixed_point(ScalarMapTransform(parse_map("power:3")), A)
        report = verify_spectral_mapping(result.trace, parse_map("power:3"), 1e-6)
        self.assertTrue(report.overall_pass)

    def test_wrong_map_fails(self):
        """Test predictions from a different map are flagged."""
        report = verify_spectral_mapping(self.result.trace, parse_map("power:3"), 1e-8)
        self.assertFalse(report.overall_pass)
        self.assertFalse(report.to_dict()["overall_pass"])

    def test_tolerance_scales_with_depth(self):
        """Test stage n is held to tol * max(n, 1)."""
        report = verify_spectral_mapping(self.result.trace, self.square, 1e-6)
        self.assertEqual([check.tolerance for check in report.per_stage[:3]], [1e-6, 1e-6, 2e-6])

    def test_empty_trace(self):
        """Test an empty trace passes trivially."""
        self.assertTrue(verify_spectral_mapping((), self.square, 1e-8).overall_pass)

    def test_dimension_change_rejected(self):
        """Test a trace whose dimension grows cannot be checked."""
        with self.assertRaises(NotStabilized) as ctx:
            iterate_to_fixed_point(DirectSumIdentity(), HermitianOperator.diagonal([0.5]),
                                   IterationConfig(equivalence_mode="strict", space_budget=8))
        with self.assertRaises(ShapeMismatch):
            verify_spectral_mapping(ctx.exception.trace, self.square, 1e-8)


class TestIdempotence(unittest.TestCase):
    """check_idempotent."""

    def test_projection(self):
        """Test a rank-one projection passes."""
        passed, defect = check_idempotent(HermitianOperator(0.5 * np.ones((2, 2))), 1e-12)
        self.assertTrue(passed)
        self.assertLess(defect, 1e-15)

    def test_non_projection(self):
        """Test diag(0.5) has defect 0.25."""
        passed, defect = check_idempotent(HermitianOperator.diagonal([0.5]), 1e-8)
        self.assertFalse(passed)
        self.assertEqual(defect, 0.25)


class TestBasins(unittest.TestCase):
    """basin_decomposition."""

    def test_square_basins(self):
        """Test eigenvalues below 1 join the basin of 0, 1 is fixed and 2 escapes."""
        D = eig_decompose(HermitianOperator.diagonal([1.0, 0.5, 0.3, 2.0]))
        basins = basin_decomposition(D, parse_map("square"))
        self.assertEqual([dim for _, dim in basins.dims], [2, 1])
        self.assertAlmostEqual(basins.components[0].attractor, 0.0, places=9)
        self.assertEqual(basins.components[1].attractor, 1.0)
        self.assertEqual(basins.escaped_dim, 1)
        self.assertEqual(basins.unresolved, ((2.0, "escaped"),))
        np.testing.assert_allclose(basins.reconstruct(), np.diag([1.0, 0.0, 0.0, 0.0]), atol=1e-9)

    def test_cycling_eigenvalue_is_unresolved(self):
        """Test a cycling orbit is counted outside the resolved basins."""
        D = eig_decompose(HermitianOperator.diagonal([0.0, 0.5]))
        basins = basin_decomposition(D, parse_map("affine:-1,0"))
        self.assertEqual(basins.dims, [(0.0, 1)])
        self.assertEqual(basins.unresolved, ((0.5, "cycling"),))
        self.assertEqual(basins.to_dict()["escaped_dim"], 1)

    def test_rotated_basis_projections(self):
        """Test basin projections of a rotated operator are orthogonal and complete."""
        A, _ = with_spectrum(np.random.default_rng(4), [0.2, 0.6, 1.0, 1.0])
        basins = basin_decomposition(eig_decompose(A), parse_map("square"))
        total = sum(component.projection for component in basins.components)
        np.testing.assert_allclose(total, np.eye(4), atol=1e-10)
        attractor, dim = basins.dims[1]
        self.assertAlmostEqual(attractor, 1.0, places=12)
        self.assertEqual(dim, 2)

    def test_slow_contraction_from_both_sides_is_one_basin(self):
        """Test orbits stopping on either side of a slowly attracting point share one component."""
        D = eig_decompose(HermitianOperator.diagonal([0.2, 0.5, 1.7]))
        basins = basin_decomposition(D, parse_map("affine:0.9,0.1"))
        self.assertEqual(len(basins.components), 1)
        attractor, dim = basins.dims[0]
        self.assertAlmostEqual(attractor, 1.0, places=12)
        self.assertEqual(dim, 3)
        np.testing.assert_allclose(basins.reconstruct(), np.eye(3), atol=1e-12)

    def test_dimension_invariant(self):
        """Test inconsistent dimensions are rejected at construction."""
        with self.assertRaises(InvariantViolation):
            BasinDecomposition((), 0, 2)


class TestComparisons(unittest.TestCase):
    """Unitary equivalence, containment and limit spectra."""

    def test_unitary_equivalence(self):
        """Test diag(1, 0) and the rank-one projection onto (1, 1) are equivalent."""
        P = HermitianOperator(0.5 * np.ones((2, 2)))
        self.assertTrue(compare_up_to_unitary(HermitianOperator.diagonal([1.0, 0.0]), P, 1e-12))
        self.assertFalse(compare_up_to_unitary(HermitianOperator.diagonal([1.0, 1.0]), P, 1e-12))
        self.assertFalse(compare_up_to_unitary(HermitianOperator.identity(1), P, 1e-12))

    @seed(90210)
    @settings(max_examples=40, deadline=None)
    @given(grid=st.lists(st.integers(-20, 20), min_size=1, max_size=5), rng_seed=st.integers(0, 2 ** 32 - 1),
           shift=st.integers(0, 3))
    def test_unitary_equivalence_is_an_equivalence(self, grid, rng_seed, shift):
        """Test reflexivity, symmetry and transitivity with doubled slack on rotated copies."""
        rng = np.random.default_rng(rng_seed)
        tol = 1e-9
        values = [g / 10.0 for g in grid]
        A, _ = with_spectrum(rng, values)
        B, _ = with_spectrum(rng, values)
        C, _ = with_spectrum(rng, values)
        other, _ = with_spectrum(rng, [v + shift for v in values])

        self.assertTrue(compare_up_to_unitary(A, A, tol))
        self.assertEqual(compare_up_to_unitary(A, B, tol), compare_up_to_unitary(B, A, tol))
        self.assertEqual(compare_up_to_unitary(A, other, tol), compare_up_to_unitary(other, A, tol))
        self.assertTrue(compare_up_to_unitary(A, B, tol))
        self.assertTrue(compare_up_to_unitary(B, C, tol))
        self.assertTrue(compare_up_to_unitary(A, C, 2 * tol))
        self.assertEqual(compare_up_to_unitary(A, other, tol), shift == 0)

    def test_spectrum_containment(self):
        """Test containment ignores multiplicity and dimension."""
        outer = HermitianOperator.diagonal([0.0, 0.5, 1.0])
        self.assertTrue(spectrum_contained(HermitianOperator.diagonal([1.0, 1.0, 0.0, 0.0]), outer, 1e-12))
        self.assertFalse(spectrum_contained(HermitianOperator.diagonal([0.3]), outer, 1e-12))

    def test_limit_spectrum(self):
        """Test a limit must consist of fixed points of the map."""
        square = parse_map("square")
        self.assertEqual(check_limit_spectrum(HermitianOperator.diagonal([0.0, 1.0]), square, 1e-8), (True, 0.0))
        self.assertEqual(check_limit_spectrum(HermitianOperator.diagonal([0.5]), square, 1e-8), (False, 0.25))


class TestCommutation(unittest.TestCase):
    """verify_commutation."""

    def test_functional_calculus_iterates_commute(self):
        """Test the limit commutes with every stage of a calculus run."""
        A, _ = with_spectrum(np.random.default_rng(9), [0.1, 0.5, 0.8, 1.0])
        result = iterate_to_fixed_point(ScalarMapTransform(parse_map("square")), A)
        report = verify_commutation(result.trace, result.a_infinity, 1e-8)
        self.assertTrue(report.passed)
        self.assertEqual(len(report.per_stage), len(result.trace))

    def test_growing_trace_is_padded(self):
        """Test stages of different dimension are aligned by zero padding."""
        result = iterate_to_fixed_point(DirectSumIdentity(), HermitianOperator.diagonal([0.5]))
        report = verify_commutation(result.trace, result.a_infinity, 1e-12)
        self.assertEqual(report.max_commutator, 0.0)

    def test_non_commuting_stage(self):
        """Test a stage that does not commute with the limit fails."""
        trace = [_record(0, [[0.0, 1.0], [1.0, 0.0]])]
        report = verify_commutation(trace, HermitianOperator.diagonal([1.0, 0.0]), 1e-8)
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.max_commutator, 1.0, places=12)


class TestInheritance(unittest.TestCase):
    """check_inheritance."""

    def test_psd_is_inherited_under_square(self):
        """Test positivity survives squaring."""
        A, _ = with_spectrum(np.random.default_rng(2), [0.0, 0.4, 1.0])
        result = iterate_to_fixed_point(ScalarMapTransform(parse_map("square")), A)
        for predicate in ("positive_semidefinite", "contraction", "unit_interval_spectrum"):
            with self.subTest(predicate=predicate):
                report = check_inheritance(result.trace, result.a_infinity, predicate)
                self.assertTrue(report.holds_initially)
                self.assertTrue(report.passed)

    def test_property_absent_initially(self):
        """Test the check is vacuous when A_0 lacks the property."""
        report = check_inheritance([_record(0, [[-0.5]])], None, "positive_semidefinite")
        self.assertFalse(report.holds_initially)
        self.assertTrue(report.passed)

    def test_violation_is_reported(self):
        """Test a stage losing the property is named."""
        trace = [_record(0, [[0.5]]), _record(1, [[-0.5]])]
        report = check_inheritance(trace, HermitianOperator.diagonal([-0.5]), "positive_semidefinite")
        self.assertEqual(report.violations, ("1", "limit"))
        self.assertFalse(report.passed)

    def test_unknown_predicate(self):
        """Test unknown predicate names raise KeyError."""
        with self.assertRaises(KeyError):
            check_inheritance([], None, "bounded")


if __name__ == '__main__':
    unittest.main()
