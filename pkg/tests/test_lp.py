"""
Tests for the bounded-variable revised simplex.

Random small LPs are checked against brute-force vertex enumeration.
"""

import os
import sys
import unittest
from itertools import combinations

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.services.lp import LpError, LpProblem, LpStatus, SimplexSolver, dual_objective, solve_lp


def vertex_minimum(cost, A, b, lower, upper) -> float:
    """min cost^T x over {A x <= b, lower <= x <= upper} by enumerating vertices."""
    n = len(cost)
    planes = [(A[r], b[r]) for r in range(A.shape[0])]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        planes.append((-e, -lower[i]))
        planes.append((e, upper[i]))
    best = np.inf
    for active in combinations(planes, n):
        M = np.array([a for a, _ in active])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([rhs for _, rhs in active]))
        if np.all(A @ x <= b + 1e-9) and np.all(x >= lower - 1e-9) and np.all(x <= upper + 1e-9):
            best = min(best, float(cost @ x))
    return best


# ============================================================================
# HAND EXAMPLES
# ============================================================================

class TestSimplexExamples(unittest.TestCase):

    def test_single_variable(self):
        problem = LpProblem.from_rows([-1.0], [([1.0], 2.0, "<=")], [0.0], [1.0])
        sol = solve_lp(problem)
        self.assertIs(sol.status, LpStatus.OPTIMAL)
        self.assertAlmostEqual(sol.objective, -1.0)
        self.assertAlmostEqual(dual_objective(problem, sol), -1.0)

    def test_infeasible(self):
        problem = LpProblem.from_rows([1.0], [([1.0], -1.0, "<=")], [0.0], [5.0])
        self.assertIs(solve_lp(problem).status, LpStatus.INFEASIBLE)

    def test_empty_row_infeasible(self):
        problem = LpProblem.from_rows([1.0, 1.0], [([0.0, 0.0], -1.0, "<=")], [0.0, 0.0], [1.0, 1.0])
        self.assertIs(solve_lp(problem).status, LpStatus.INFEASIBLE)

    def test_unbounded(self):
        problem = LpProblem.from_rows([-1.0, 0.0], [([1.0, -1.0], 1.0, "<=")], [0.0, 0.0], [np.inf, np.inf])
        self.assertIs(solve_lp(problem).status, LpStatus.UNBOUNDED)

    def test_equality_and_greater_rows(self):
        # min x + 2y  s.t. x + y = 1, x - y >= 0.2
        problem = LpProblem.from_rows(
            [1.0, 2.0],
            [([1.0, 1.0], 1.0, "="), ([1.0, -1.0], 0.2, ">=")],
            [0.0, 0.0],
            [1.0, 1.0],
        )
        sol = solve_lp(problem)
        self.assertIs(sol.status, LpStatus.OPTIMAL)
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-9)
        self.assertAlmostEqual(dual_objective(problem, sol), 1.0)

    def test_stalls_at_iteration_cap(self):
        rows = [([1.0, 1.0, 0.0], 1.5, "<="), ([0.0, 1.0, 1.0], 1.5, "<="), ([1.0, 0.0, 1.0], 1.5, "<=")]
        problem = LpProblem.from_rows([-1.0, -1.0, -1.0], rows, np.zeros(3), np.ones(3))
        self.assertIs(SimplexSolver(problem, max_iter=1).solve().status, LpStatus.STALLED)
        sol = solve_lp(problem)
        self.assertAlmostEqual(sol.objective, -2.25)

    def test_bad_problem(self):
        with self.assertRaises(LpError):
            LpProblem.from_rows([1.0], [([1.0], 1.0, "<")], [0.0], [1.0])
        with self.assertRaises(LpError):
            LpProblem([1.0], np.zeros((1, 1)), [0.0], [False], [1.0], [0.0])


# ============================================================================
# RANDOM LPS
# ============================================================================

class TestSimplexAgainstVertices(unittest.TestCase):

    def test_random_lps(self):
        rng = np.random.Generator(np.random.PCG64(7))
        for trial in range(200):
            n = int(rng.integers(2, 4))
            rows = int(rng.integers(1, 5))
            A = rng.uniform(-1.0, 1.0, (rows, n))
            lower = rng.uniform(-1.0, 0.0, n)
            upper = lower + rng.uniform(0.5, 2.0, n)
            x0 = rng.uniform(lower, upper)
            b = A @ x0 + rng.uniform(0.0, 0.5, rows)
            cost = rng.uniform(-1.0, 1.0, n)

            problem = LpProblem(cost, A, b, np.zeros(rows, dtype=bool), lower, upper)
            sol = solve_lp(problem)
            self.assertIs(sol.status, LpStatus.OPTIMAL, f"trial {trial}")
            expected = vertex_minimum(cost, A, b, lower, upper)
            self.assertAlmostEqual(sol.objective, expected, delta=1e-7, msg=f"trial {trial}")
            self.assertAlmostEqual(dual_objective(problem, sol), expected, delta=1e-7, msg=f"trial {trial}")

    def test_warm_start_matches_cold_solve(self):
        rng = np.random.Generator(np.random.PCG64(8))
        A = rng.uniform(-1.0, 1.0, (6, 4))
        lower, upper = np.zeros(4), np.ones(4)
        b = A @ rng.uniform(lower, upper) + 0.1
        problem = LpProblem(rng.uniform(-1, 1, 4), A, b, np.zeros(6, dtype=bool), lower, upper)
        solver = SimplexSolver(problem)
        self.assertTrue(solver.solve().optimal)
        for _ in range(10):
            cost = rng.uniform(-1.0, 1.0, 4)
            warm = solver.solve(cost)
            cold = solve_lp(problem.with_cost(cost))
            self.assertAlmostEqual(warm.objective, cold.objective, delta=1e-9)


if __name__ == "__main__":
    unittest.main()
