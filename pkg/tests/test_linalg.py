"""
Tests for packed symmetric storage and the Jacobi eigen-decomposition.
"""

import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.services.linalg import (
    DimensionMismatchError,
    EigenNonConvergenceError,
    SymMatrix,
    eig_symmetric,
    is_psd,
    min_eigenvalue,
    packed_index,
    packed_size,
    project_psd,
    quad_form,
    triu_indices,
)


def random_symmetric(n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.uniform(-1.0, 1.0, (n, n))
    return (a + a.T) / 2.0


class TestPackedStorage(unittest.TestCase):

    def test_packed_index_matches_triu_order(self):
        n = 6
        rows, cols = triu_indices(n)
        for pos, (i, j) in enumerate(zip(rows, cols)):
            self.assertEqual(packed_index(n, i, j), pos)
            self.assertEqual(packed_index(n, j, i), pos)
        self.assertEqual(packed_size(n), len(rows))

    def test_dense_round_trip(self):
        a = random_symmetric(5, 1)
        np.testing.assert_array_equal(SymMatrix.from_dense(a).to_dense(), a)

    def test_symmetric_access(self):
        m = SymMatrix(3)
        m[2, 0] = 4.0
        self.assertEqual(m[0, 2], 4.0)

    def test_inner_product(self):
        a, b = random_symmetric(4, 2), random_symmetric(4, 3)
        self.assertAlmostEqual(SymMatrix.from_dense(a).inner(SymMatrix.from_dense(b)), float(np.sum(a * b)))

    def test_arithmetic(self):
        a = SymMatrix.from_dense(random_symmetric(3, 4))
        b = SymMatrix.identity(3)
        np.testing.assert_allclose((a + b * 2.0 - a).to_dense(), 2.0 * np.eye(3))
        np.testing.assert_allclose((-a).to_dense(), -a.to_dense())

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            SymMatrix(2).inner(SymMatrix(3))
        with self.assertRaises(DimensionMismatchError):
            SymMatrix(3, np.zeros(5))

    def test_quad_form(self):
        a = random_symmetric(4, 5)
        x = np.array([0.1, -0.4, 2.0, 0.3])
        self.assertAlmostEqual(quad_form(SymMatrix.from_dense(a), x), float(x @ a @ x))


class TestEigen(unittest.TestCase):

    def test_reconstruction(self):
        for n in (1, 2, 5, 20, 51):
            a = random_symmetric(n, 100 + n)
            values, vectors = eig_symmetric(a)
            residual = np.max(np.abs(vectors @ np.diag(values) @ vectors.T - a))
            self.assertLessEqual(residual, 1e-9, f"order {n}")
            np.testing.assert_allclose(vectors.T @ vectors, np.eye(n), atol=1e-10)
            self.assertTrue(np.all(np.diff(values) >= 0))

    def test_converges_on_random_matrices(self):
        cases = [(6, seed) for seed in range(50)]
        cases += [(n, 7 * n) for n in (2, 3, 4, 8, 13, 25, 50)]
        for n, seed in cases:
            a = random_symmetric(n, seed)
            for factor in (1.0, 1e-6, 1e6):
                values, vectors = eig_symmetric(factor * a)
                residual = np.max(np.abs(vectors @ np.diag(values) @ vectors.T - factor * a))
                self.assertLessEqual(residual, 1e-9 * factor * n, f"order {n} seed {seed} scale {factor}")

    def test_graded_diagonal(self):
        a = np.diag([1e-8, 1.0, 1e8]) + 1e-9 * random_symmetric(3, 31)
        values, _ = eig_symmetric(a)
        np.testing.assert_allclose(values, np.linalg.eigvalsh(a), rtol=1e-6, atol=1e-7)

    def test_known_spectrum(self):
        values, _ = eig_symmetric(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(values, [1.0, 3.0], atol=1e-14)

    def test_identity_and_zero(self):
        values, vectors = eig_symmetric(np.eye(4))
        np.testing.assert_array_equal(values, np.ones(4))
        values, _ = eig_symmetric(np.zeros((3, 3)))
        np.testing.assert_array_equal(values, np.zeros(3))

    def test_sweep_cap(self):
        with self.assertRaises(EigenNonConvergenceError):
            eig_symmetric(random_symmetric(6, 9), max_sweeps=1)

    def test_min_eigenvalue_vector(self):
        a = random_symmetric(6, 12)
        value, vector = min_eigenvalue(a)
        np.testing.assert_allclose(a @ vector, value * vector, atol=1e-10)

    def test_psd_projection(self):
        a = random_symmetric(6, 13)
        self.assertFalse(is_psd(a))
        projected = project_psd(a)
        self.assertTrue(is_psd(projected))
        self.assertTrue(is_psd(SymMatrix.identity(3)))


if __name__ == "__main__":
    unittest.main()
