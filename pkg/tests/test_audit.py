"""
Tests for the cut selection sweep.
"""

import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.services.audit import EXPECTED_PADBERG, random_boxes, run_audit


class TestAudit(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.report = run_audit(boxes=4, seed=0)

    def test_selection(self):
        self.assertEqual(len(self.report.rows), 48)
        self.assertEqual(self.report.cutting, 12)
        self.assertEqual(self.report.redundant, 36)
        self.assertEqual(self.report.summary, "48 candidates: 12 cutting, 36 redundant")

    def test_rows_consistent(self):
        for row in self.report.rows:
            self.assertTrue(row.consistent, f"t={row.t}")
            self.assertEqual(row.t, 6 * (row.family - 1) + row.variant)

    def test_witness_and_padberg(self):
        self.assertLessEqual(self.report.witness_error, 1e-9)
        self.assertLessEqual(self.report.witness_mccormick, 1e-9)
        self.assertEqual(self.report.padberg, EXPECTED_PADBERG)
        self.assertTrue(self.report.ok)

    def test_random_boxes(self):
        boxes = random_boxes(20, seed=7)
        self.assertEqual(len(boxes), 20)
        for lower, upper in boxes:
            self.assertTrue(np.all(lower >= 0.0))
            self.assertTrue(np.all(upper - lower >= 0.1 - 1e-12))
            self.assertTrue(np.all(upper <= 10.0))
        first = random_boxes(3, seed=1)
        np.testing.assert_array_equal(first[0][0], random_boxes(3, seed=1)[0][0])


if __name__ == "__main__":
    unittest.main()
