"""Unit tests for the transfinite iteration engine."""

import math
import unittest

import numpy as np
from hypothesis import given, settings, seed
from hypothesis import strategies as st

from modules.errors import AxiomViolation, FormatError, InvariantViolation, NoConvergence, NotStabilized, ShapeMismatch
from modules.spectral_core import HermitianOperator
from modules.spectral_maps import SpectralMap, parse_map
from modules.transfinite_engine import (
    Composite,
    DirectSumIdentity,
    Embedding,
    EquivalenceMode,
    IterationConfig,
    ScalarMapTransform,
    Stage,
    aligned_distance,
    canonical_form_modulo_trivial,
    check_fixed_point,
    iterate_to_fixed_point,
    pad_to,
    parse_transform,
    phi_step,
    stage_residual,
)
from tests.factories import random_projection, with_spectrum


def _slow(x):
    return 0.9 * x + 0.1 * x * x


SLOW = SpectralMap(_slow, "slow")


class TestStage(unittest.TestCase):
    """Ordinal stage labels."""

    def test_rendering(self):
        """Test finite, limit and mixed stages render as ordinals."""
        self.assertEqual(str(Stage.finite(5)), "5")
        self.assertEqual(str(Stage.omega_limit(1)), "ω")
        self.assertEqual(str(Stage(2, 3)), "ω·2+3")
        self.assertEqual(str(Stage(1, 4)), "ω+4")

    def test_ordering(self):
        """Test every finite stage precedes the first limit."""
        self.assertLess(Stage.finite(1000), Stage.omega_limit(1))
        self.assertLess(Stage(1, 7), Stage(2, 0))
        self.assertEqual(Stage.finite(3).successor(), Stage.finite(4))

    def test_is_limit(self):
        """Test only omega*k stages with k > 0 are limits."""
        self.assertTrue(Stage.omega_limit(2).is_limit)
        self.assertFalse(Stage.finite(0).is_limit)
        self.assertFalse(Stage(1, 1).is_limit)


class TestEmbedding(unittest.TestCase):
    """Isometric embeddings between stage spaces."""

    def test_inclusion_isometry(self):
        """Test the inclusion maps onto the leading coordinates."""
        np.testing.assert_array_equal(Embedding.inclusion(1, 3).isometry, [[1.0], [0.0], [0.0]])

    def test_composition_of_inclusions(self):
        """Test composing inclusions stays canonical."""
        composed = Embedding.inclusion(1, 2).then(Embedding.inclusion(2, 4))
        self.assertTrue(composed.is_canonical)
        self.assertEqual((composed.from_dim, composed.to_dim), (1, 4))

    def test_composition_with_explicit_isometry(self):
        """Test explicit isometries are multiplied in order."""
        swap = Embedding(2, 2, np.array([[0.0, 1.0], [1.0, 0.0]]))
        composed = Embedding.inclusion(1, 2).then(swap)
        np.testing.assert_array_equal(composed.isometry, [[0.0], [1.0]])

    def test_mismatched_composition(self):
        """Test composing embeddings with incompatible dimensions fails."""
        with self.assertRaises(ShapeMismatch):
            Embedding.inclusion(1, 2).then(Embedding.inclusion(3, 4))

    def test_shrinking_embedding_rejected(self):
        """Test an embedding cannot decrease dimension."""
        with self.assertRaises(ShapeMismatch):
            Embedding(3, 2)

    def test_non_orthonormal_rejected(self):
        """Test an explicit matrix must have orthonormal columns."""
        with self.assertRaises(InvariantViolation):
            Embedding(1, 2, np.array([[1.0], [1.0]]))


class TestTransforms(unittest.TestCase):
    """Transform construction and single steps."""

    def test_scalar_transform_step(self):
        """Test the square transform squares the spectrum."""
        T = ScalarMapTransform(parse_map("square"))
        image, embedding = phi_step(T, HermitianOperator.diagonal([0.5, 1.0]))
        np.testing.assert_array_equal(image.entries, np.diag([0.25, 1.0]))
        self.assertTrue(embedding.is_canonical)
        self.assertEqual(embedding.to_dim, 2)

    def test_axiom_violation(self):
        """Test maps that move 0 or 1 are rejected unless enforcement is off."""
        with self.assertRaises(AxiomViolation):
            ScalarMapTransform(parse_map("affine:0.5,0"))
        with self.assertRaises(AxiomViolation):
            ScalarMapTransform(parse_map("exp_scale:1"))
        T = ScalarMapTransform(parse_map("affine:0.5,0"), enforce_axioms=False)
        self.assertFalse(T.satisfies_axioms)

    def test_direct_sum_identity_step(self):
        """Test A (+) I doubles the dimension and includes the old space."""
        image, embedding = phi_step(DirectSumIdentity(), HermitianOperator.diagonal([0.5]))
        np.testing.assert_array_equal(image.entries, np.diag([0.5, 1.0]))
        self.assertEqual((embedding.from_dim, embedding.to_dim), (1, 2))

    def test_direct_sum_identity_respects_budget(self):
        """Test the direct sum refuses to grow past the space budget."""
        with self.assertRaises(ValueError):
            phi_step(DirectSumIdentity(), HermitianOperator.identity(3), space_budget=4)

    def test_composite_step(self):
        """Test a composite applies its parts in order and composes embeddings."""
        T = Composite([ScalarMapTransform(parse_map("square")), DirectSumIdentity()])
        image, embedding = phi_step(T, HermitianOperator.diagonal([0.5]))
        np.testing.assert_array_equal(image.entries, np.diag([0.25, 1.0]))
        self.assertEqual((embedding.from_dim, embedding.to_dim), (1, 2))
        self.assertFalse(T.preserves_dimension)
        with self.assertRaises(ShapeMismatch):
            T.spectral_map()


class TestParseTransform(unittest.TestCase):
    """Transform descriptors."""

    def test_map_descriptor(self):
        """Test a bare map descriptor yields a scalar transform."""
        T = parse_transform("power:3")
        self.assertIsInstance(T, ScalarMapTransform)
        self.assertEqual(T.label, "power:3")

    def test_scalar_needs_map(self):
        """Test 'scalar' without a map is rejected."""
        with self.assertRaises(FormatError):
            parse_transform("scalar")
        self.assertEqual(parse_transform("scalar", "square").label, "square")
        self.assertEqual(parse_transform(None, "square").label, "square")

    def test_composite_descriptor(self):
        """Test composite lists compose their scalar maps."""
        T = parse_transform("composite:[square, power:3]")
        self.assertIsInstance(T, Composite)
        self.assertTrue(T.preserves_dimension)
        self.assertEqual(T.spectral_map()(0.5), 0.015625)
        self.assertEqual(T.label, "composite:[square, power:3]")

    def test_list_descriptor(self):
        """Test a YAML list is read as a composite."""
        T = parse_transform(["square", "direct_sum_identity"])
        self.assertEqual(len(T.parts), 2)
        self.assertIsInstance(T.parts[1], DirectSumIdentity)

    def test_bad_composites(self):
        """Test malformed composite descriptors raise FormatError."""
        for descriptor in ("composite:", "composite:[]", "composite:[square", "composite:square"):
            with self.subTest(descriptor=descriptor):
                with self.assertRaises(FormatError):
                    parse_transform(descriptor)
        with self.assertRaises(FormatError):
            parse_transform([])

    def test_escape_bound_of_transform(self):
        """Test the transform's escape bound comes from its maps."""
        self.assertEqual(parse_transform("square", escape_bound=50.0).escape_bound, 50.0)
        self.assertEqual(DirectSumIdentity().escape_bound, math.inf)

    def test_sweep_budget_is_threaded(self):
        """Test the Jacobi sweep budget reaches every scalar part."""
        T = parse_transform("composite:[square, power:3]", max_sweeps=0)
        self.assertEqual([part.max_sweeps for part in T.parts], [0, 0])
        A = HermitianOperator(np.array([[0.5, 0.2], [0.2, 0.3]]))
        with self.assertRaises(NoConvergence):
            phi_step(T, A)
        image, _ = phi_step(T, HermitianOperator.diagonal([0.5, 1.0]))
        np.testing.assert_array_equal(image.entries, np.diag([0.015625, 1.0]))


class TestEquivalence(unittest.TestCase):
    """Residuals, padding and canonical forms."""

    def test_pad_and_aligned_distance(self):
        """Test padding by zero and the distance it induces."""
        small = HermitianOperator.diagonal([0.5])
        np.testing.assert_array_equal(pad_to(small, 2), np.diag([0.5, 0.0]))
        self.assertEqual(aligned_distance(small, HermitianOperator.diagonal([0.5, 1.0])), 1.0)
        with self.assertRaises(ShapeMismatch):
            pad_to(HermitianOperator.identity(2), 1)

    def test_canonical_form_strips_trailing_identity(self):
        """Test a trailing identity block outside the protected block is removed."""
        A = HermitianOperator.diagonal([0.5, 1.0, 1.0])
        np.testing.assert_array_equal(canonical_form_modulo_trivial(A, 1).entries, [[0.5]])
        np.testing.assert_array_equal(canonical_form_modulo_trivial(A, 2).entries, np.diag([0.5, 1.0]))

    def test_canonical_form_keeps_coupled_block(self):
        """Test a unit block coupled to the protected block is kept."""
        A = HermitianOperator(np.array([[0.5, 0.1], [0.1, 1.0]]))
        self.assertIs(canonical_form_modulo_trivial(A, 1), A)

    def test_strict_residual_across_dimensions(self):
        """Test strict mode never compares operators of different dimension."""
        A = HermitianOperator.identity(1)
        image = HermitianOperator.identity(2)
        self.assertEqual(stage_residual(A, image, EquivalenceMode.STRICT), math.inf)
        self.assertEqual(stage_residual(A, image, "modulo_trivial"), 0.0)

    def test_modulo_trivial_needs_unit_eigenvalue(self):
        """Test an adjoined unit block is not trivial when A has no eigenvalue 1."""
        A = HermitianOperator.diagonal([0.5])
        image = HermitianOperator.diagonal([0.5, 1.0])
        self.assertEqual(stage_residual(A, image, EquivalenceMode.MODULO_TRIVIAL), math.inf)

    def test_check_fixed_point(self):
        """Test a projection is a fixed point of squaring."""
        P = HermitianOperator(0.5 * np.ones((2, 2)))
        self.assertLess(check_fixed_point(ScalarMapTransform(parse_map("square")), P), 1e-12)
        self.assertEqual(check_fixed_point(DirectSumIdentity(), P, space_budget=2), math.inf)

    def test_mode_parsing(self):
        """Test equivalence modes parse case-insensitively."""
        self.assertIs(EquivalenceMode.parse("STRICT"), EquivalenceMode.STRICT)
        self.assertIs(IterationConfig(equivalence_mode="strict").equivalence_mode, EquivalenceMode.STRICT)
        with self.assertRaises(FormatError):
            EquivalenceMode.parse("loose")

    def test_config_ranges(self):
        """Test invalid iteration budgets are rejected."""
        for kwargs in ({"epsilon": 0.0}, {"cauchy_tol": -1.0}, {"cauchy_window": 1},
                       {"max_stages": 0}, {"max_omega_limits": -1}, {"space_budget": 0}):
            with self.subTest(**kwargs):
                with self.assertRaises(ValueError):
                    IterationConfig(**kwargs)


class TestIteration(unittest.TestCase):
    """iterate_to_fixed_point."""

    def setUp(self):
        self.square = ScalarMapTransform(parse_map("square"))

    def test_projection_is_stage_zero(self):
        """Test an idempotent stabilizes immediately under squaring."""
        result = iterate_to_fixed_point(self.square, HermitianOperator.diagonal([1.0, 0.0]))
        self.assertEqual(result.stabilization_stage, Stage.finite(0))
        self.assertEqual(result.final_residual, 0.0)
        self.assertEqual(len(result.trace), 1)

    def test_finite_stabilization(self):
        """Test diag(0.5, 1) under squaring stabilizes at the fifth stage."""
        result = iterate_to_fixed_point(self.square, HermitianOperator.diagonal([0.5, 1.0]))
        self.assertEqual(result.stabilization_stage, Stage.finite(5))
        self.assertEqual(result.omega_limits, 0)
        self.assertLessEqual(result.final_residual, 1e-8)
        self.assertEqual([record.depth for record in result.trace], list(range(6)))
        self.assertEqual(result.a_infinity.entries[1, 1], 1.0)
        self.assertLess(result.a_infinity.entries[0, 0], 1e-9)

    def test_slow_convergence_takes_limit_stages(self):
        """Test a slowly converging map passes through omega-limit stages."""
        T = ScalarMapTransform(SLOW)
        result = iterate_to_fixed_point(T, HermitianOperator.diagonal([0.5, 1.0]))
        self.assertEqual(result.omega_limits, 3)
        self.assertGreaterEqual(result.stabilization_stage, Stage.omega_limit(3))
        self.assertLessEqual(result.final_residual, 1e-8)
        limit_stages = [record.stage for record in result.trace if record.stage.is_limit]
        self.assertEqual(limit_stages, [Stage.omega_limit(1), Stage.omega_limit(2), Stage.omega_limit(3)])
        depths = [record.depth for record in result.trace]
        self.assertEqual(depths, list(range(len(depths))))

    def test_limit_budget_controls_limit_count(self):
        """Test max_omega_limits caps the number of limit stages."""
        T = ScalarMapTransform(SLOW)
        A = HermitianOperator.diagonal([0.5, 1.0])
        self.assertEqual(iterate_to_fixed_point(T, A, IterationConfig(max_omega_limits=1)).omega_limits, 1)
        with self.assertRaises(NotStabilized) as ctx:
            iterate_to_fixed_point(T, A, IterationConfig(max_omega_limits=0))
        self.assertEqual(ctx.exception.reason, "stage budget exhausted")

    def test_escape(self):
        """Test an eigenvalue above 1 escapes under squaring."""
        with self.assertRaises(NotStabilized) as ctx:
            iterate_to_fixed_point(self.square, HermitianOperator.diagonal([2.0]))
        error = ctx.exception
        self.assertEqual(error.reason, "escaped")
        self.assertEqual(len(error.trace), 7)
        self.assertEqual(error.trace[-1].residual, math.inf)
        self.assertGreater(error.trace[-1].operator.entries[0, 0], 1e12)

    def test_stage_budget_exhausted(self):
        """Test a 2-cycle exhausts the stage budget and keeps its trace."""
        T = ScalarMapTransform(parse_map("affine:-1,0"), enforce_axioms=False)
        with self.assertRaises(NotStabilized) as ctx:
            iterate_to_fixed_point(T, HermitianOperator.diagonal([0.5]), IterationConfig(max_stages=10))
        self.assertEqual(ctx.exception.reason, "stage budget exhausted")
        self.assertEqual(len(ctx.exception.trace), 11)
        self.assertEqual(ctx.exception.last_residual, 1.0)

    def test_direct_sum_strict_hits_space_budget(self):
        """Test strict equivalence never stabilizes the growing direct sum."""
        cfg = IterationConfig(equivalence_mode="strict", space_budget=64)
        with self.assertRaises(NotStabilized) as ctx:
            iterate_to_fixed_point(DirectSumIdentity(), HermitianOperator.diagonal([0.5]), cfg)
        trace = ctx.exception.trace
        self.assertIn("space budget", ctx.exception.reason)
        self.assertEqual([record.operator.dim for record in trace], [1, 2, 4, 8, 16, 32, 64])
        self.assertTrue(all(record.residual == math.inf for record in trace))

    def test_direct_sum_modulo_trivial_first_stage(self):
        """Test A (+) I is the fixed point modulo trivial summands when A lacks eigenvalue 1."""
        result = iterate_to_fixed_point(DirectSumIdentity(), HermitianOperator.diagonal([0.5]))
        self.assertEqual(result.stabilization_stage, Stage.finite(1))
        self.assertEqual(result.trace[0].residual, math.inf)
        np.testing.assert_array_equal(result.a_infinity.entries, np.diag([0.5, 1.0]))

    def test_direct_sum_modulo_trivial_with_unit_eigenvalue(self):
        """Test modulo-trivial equivalence accepts A (+) I when A already has eigenvalue 1."""
        result = iterate_to_fixed_point(DirectSumIdentity(), HermitianOperator.diagonal([0.5, 1.0]))
        self.assertEqual(result.stabilization_stage, Stage.finite(0))
        self.assertEqual(result.final_residual, 0.0)

    @seed(424242)
    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(1, 6), k=st.integers(0, 6), rng_seed=st.integers(0, 2 ** 32 - 1),
           name=st.sampled_from(["identity", "square", "power:3", "power:5"]))
    def test_projections_are_fixed(self, n, k, rng_seed, name):
        """Test random projections stabilize at stage 0 under idempotent-preserving maps."""
        P = random_projection(np.random.default_rng(rng_seed), n, min(k, n))
        result = iterate_to_fixed_point(ScalarMapTransform(parse_map(name)), P)
        self.assertEqual(result.stabilization_stage, Stage.finite(0))
        self.assertLessEqual(result.final_residual, 1e-10)

    def test_trace_records_are_successive_images(self):
        """Test every recorded operator is phi_step of the one before, through limit stages."""
        T = ScalarMapTransform(SLOW)
        result = iterate_to_fixed_point(T, HermitianOperator.diagonal([0.5, 1.0]))
        self.assertGreater(result.omega_limits, 0)
        for before, after in zip(result.trace, result.trace[1:]):
            image, _ = phi_step(T, before.operator)
            np.testing.assert_array_equal(image.entries, after.operator.entries)

    @seed(515151)
    @settings(max_examples=20, deadline=None)
    @given(grid=st.lists(st.integers(0, 10), min_size=1, max_size=4), rng_seed=st.integers(0, 2 ** 32 - 1))
    def test_random_trace_is_consistent(self, grid, rng_seed):
        """Test the recorded stages of a rotated squaring run chain exactly under phi_step."""
        A, _ = with_spectrum(np.random.default_rng(rng_seed), [g / 10.0 for g in grid])
        result = iterate_to_fixed_point(self.square, A)
        for before, after in zip(result.trace, result.trace[1:]):
            image, _ = phi_step(self.square, before.operator)
            np.testing.assert_array_equal(image.entries, after.operator.entries)


if __name__ == '__main__':
    unittest.main()
