"""
Tests for the QCQP instance model: JSON documents, evaluation and the unitbox generator.

Pure function tests, no solver runs.
"""

import json
import os
import sys
import tempfile
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.services.linalg import DimensionMismatchError
from app.services.qcqp import (
    ConstraintIndexError,
    InstanceFormatError,
    InstanceValueError,
    LiftedPoint,
    evaluate_constraint,
    evaluate_objective,
    gen_unitbox,
    instance_name,
    is_feasible,
    load_instance,
    max_violation,
    parse,
    save_instance,
    serialize,
)


def document(**overrides) -> str:
    doc = {
        "n": 2,
        "m": 1,
        "l": [0, 0],
        "u": [1, 1],
        "objective": {"Q": [[0, 1, -1.0]], "c": [0, 0]},
        "constraints": [{"Q": [[0, 0, 1.0], [1, 1, 1.0]], "c": [0, 0], "b": 1.5}],
    }
    doc.update(overrides)
    return json.dumps(doc)


# ============================================================================
# PARSING
# ============================================================================

class TestParse(unittest.TestCase):
    """Triplet semantics and validation errors."""

    def test_off_diagonal_triplet_is_full_coefficient(self):
        inst = parse(document())
        self.assertEqual(inst.Q[0][0, 1], -0.5)
        self.assertEqual(inst.Q[0][1, 0], -0.5)
        self.assertAlmostEqual(evaluate_objective(inst, np.array([1.0, 1.0])), -1.0)

    def test_diagonal_triplet(self):
        inst = parse(document())
        self.assertEqual(inst.Q[1][0, 0], 1.0)
        self.assertAlmostEqual(evaluate_constraint(inst, 1, np.array([0.5, 1.0])), 1.25)

    def test_serialize_round_trip(self):
        inst = gen_unitbox(5, 3, 0.5, 7)
        self.assertEqual(parse(serialize(inst)), inst)

    def test_inverted_bounds_report_path(self):
        with self.assertRaises(InstanceValueError) as ctx:
            parse(document(l=[0, 1], u=[1, 0.5]))
        self.assertEqual(ctx.exception.path, "u[1]")
        self.assertIn("bounds inverted at index 1", str(ctx.exception))

    def test_negative_lower_bound(self):
        with self.assertRaises(InstanceValueError) as ctx:
            parse(document(l=[-1, 0]))
        self.assertEqual(ctx.exception.path, "l[0]")

    def test_invalid_json(self):
        with self.assertRaises(InstanceFormatError) as ctx:
            parse("{not json")
        self.assertEqual(ctx.exception.path, "$")

    def test_index_out_of_range(self):
        with self.assertRaises(InstanceFormatError):
            parse(document(objective={"Q": [[0, 2, 1.0]], "c": [0, 0]}))

    def test_lower_triangle_triplet_rejected(self):
        with self.assertRaises(InstanceFormatError):
            parse(document(objective={"Q": [[1, 0, 1.0]], "c": [0, 0]}))

    def test_constraint_count_mismatch(self):
        with self.assertRaises(InstanceFormatError):
            parse(document(m=2))

    def test_file_round_trip(self):
        inst = gen_unitbox(3, 2, 0.4, 11)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_instance(inst, os.path.join(tmp, "inst.json"))
            self.assertEqual(load_instance(path), inst)


# ============================================================================
# EVALUATION
# ============================================================================

class TestEvaluation(unittest.TestCase):

    def setUp(self):
        self.inst = parse(document())

    def test_constraint_index_out_of_range(self):
        with self.assertRaises(ConstraintIndexError):
            evaluate_constraint(self.inst, 2, np.zeros(2))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            evaluate_objective(self.inst, np.zeros(3))

    def test_feasibility(self):
        self.assertTrue(is_feasible(self.inst, np.array([0.5, 0.5])))
        self.assertFalse(is_feasible(self.inst, np.array([1.0, 1.0])))
        self.assertAlmostEqual(max_violation(self.inst, np.array([1.0, 1.0])), 0.5)

    def test_box_violation_counts(self):
        self.assertAlmostEqual(max_violation(self.inst, np.array([0.0, 1.2])), 0.2)

    def test_lifted_mismatch_of_rank_one_point(self):
        p = LiftedPoint.from_x(np.array([0.3, 0.7]))
        self.assertLess(float(p.mismatch().max()), 1e-15)


# ============================================================================
# GENERATOR
# ============================================================================

class TestGenerator(unittest.TestCase):

    def test_deterministic(self):
        self.assertEqual(gen_unitbox(6, 4, 0.3, 5), gen_unitbox(6, 4, 0.3, 5))
        self.assertNotEqual(gen_unitbox(6, 4, 0.3, 5), gen_unitbox(6, 4, 0.3, 6))

    def test_feasible_point_recorded(self):
        inst = gen_unitbox(8, 12, 0.25, 1)
        x = inst.feasible_point()
        self.assertIsNotNone(x)
        self.assertTrue(np.all((x >= 0.05) & (x <= 0.95)))
        self.assertEqual(max_violation(inst, x), 0.0)

    def test_name_and_box(self):
        inst = gen_unitbox(8, 12, 0.25, 1)
        self.assertEqual(inst.name, "8_12_1_25")
        self.assertEqual(instance_name(20, 30, 4, 0.5), "20_30_4_50")
        np.testing.assert_array_equal(inst.lower, np.zeros(8))
        np.testing.assert_array_equal(inst.upper, np.ones(8))

    def test_density_is_respected(self):
        inst = gen_unitbox(40, 20, 0.25, 3)
        rows, cols = np.triu_indices(40)
        share = np.mean([np.count_nonzero(q[rows, cols]) / rows.shape[0] for q in inst.Q])
        self.assertAlmostEqual(share, 0.25, delta=0.03)

    def test_off_diagonal_only(self):
        full = gen_unitbox(10, 4, 0.5, 8)
        plain = gen_unitbox(10, 4, 0.5, 8, diagonal=False)
        rows, cols = np.triu_indices(10, 1)
        for q_full, q_plain in zip(full.Q, plain.Q):
            np.testing.assert_array_equal(np.diag(q_plain), np.zeros(10))
            np.testing.assert_array_equal(q_plain[rows, cols], q_full[rows, cols])
        self.assertFalse(plain.meta["diagonal"])
        self.assertEqual(max_violation(plain, plain.feasible_point()), 0.0)

    def test_invalid_arguments(self):
        with self.assertRaises(InstanceValueError):
            gen_unitbox(1, 2, 0.5, 0)
        with self.assertRaises(InstanceValueError):
            gen_unitbox(4, 2, 0.0, 0)


if __name__ == "__main__":
    unittest.main()
