"""
Tests for node relaxations: the linearization LP, Frank-Wolfe on (P*), and cut rounds.
"""

import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.services.cuts import CutKind, CutPool, triangle_cuts
from app.services.dual import DualConfig, run_heuristic
from app.services.linalg import SymMatrix
from app.services.oracle import grid_minimize
from app.services.qcqp import LiftedPoint, QcqpInstance, evaluate_objective, gen_unitbox
from app.services.relax import (
    PerturbationSet,
    RelaxationError,
    RelaxStatus,
    assemble_S0,
    build_linearization,
    cutting_plane_rounds,
    f_perturbed,
    frank_wolfe,
    relaxation_bound,
    y_bounds,
)


def bilinear() -> QcqpInstance:
    """min -x_0 x_1 on [0, 1]^2."""
    return QcqpInstance(Q=[np.array([[0.0, -0.5], [-0.5, 0.0]])], c=[np.zeros(2)], b=np.zeros(0),
                        lower=np.zeros(2), upper=np.ones(2))


def box(inst):
    return inst.lower, inst.upper


class TestLinearization(unittest.TestCase):

    def test_shape(self):
        inst = gen_unitbox(3, 2, 0.5, 0)
        pool = CutPool.mccormick(*box(inst))
        lp = build_linearization(inst, box(inst), pool)
        self.assertEqual(lp.A.shape, (inst.m + len(pool), 3 + 6))
        np.testing.assert_array_equal(lp.var_lower, np.zeros(9))
        np.testing.assert_array_equal(lp.var_upper, np.ones(9))

    def test_y_bounds(self):
        lo, hi = y_bounds(np.array([1.0, 2.0]), np.array([3.0, 5.0]))
        np.testing.assert_array_equal(lo, [1.0, 2.0, 4.0])
        np.testing.assert_array_equal(hi, [9.0, 15.0, 25.0])

    def test_bilinear_bound_is_exact(self):
        inst = bilinear()
        sol = relaxation_bound(inst, box(inst), CutPool.mccormick(*box(inst)))
        self.assertIs(sol.status, RelaxStatus.OPTIMAL)
        self.assertAlmostEqual(sol.bound, -1.0, places=9)
        np.testing.assert_allclose(sol.point.x, [1.0, 1.0], atol=1e-9)

    def test_lp_objective_is_lifted_objective(self):
        inst = gen_unitbox(4, 2, 0.5, 3)
        sol = relaxation_bound(inst, box(inst), CutPool.mccormick(*box(inst)))
        lifted = f_perturbed(inst, 0, SymMatrix(4), sol.point)
        self.assertAlmostEqual(sol.objective, lifted, delta=1e-9)

    def test_bounds_are_valid(self):
        for seed in range(4):
            inst = gen_unitbox(3, 2, 0.6, seed)
            optimum = grid_minimize(inst, 21).value
            sol = relaxation_bound(inst, box(inst), CutPool.mccormick(*box(inst)))
            self.assertLessEqual(sol.bound, optimum + 1e-7)

    def test_infeasible_box(self):
        # x_0^2 <= 0.01 while x_0 >= 0.5
        inst = QcqpInstance(Q=[np.zeros((2, 2)), np.diag([1.0, 0.0])], c=[np.zeros(2), np.zeros(2)],
                            b=np.array([0.01]), lower=np.array([0.5, 0.0]), upper=np.ones(2))
        sol = relaxation_bound(inst, box(inst), CutPool.mccormick(*box(inst)))
        self.assertTrue(sol.infeasible)
        self.assertEqual(sol.bound, np.inf)


class TestPerturbation(unittest.TestCase):

    def test_rejects_indefinite(self):
        with self.assertRaises(RelaxationError):
            PerturbationSet([SymMatrix.from_dense(np.diag([1.0, -1.0]))])

    def test_zero_set(self):
        inst = gen_unitbox(3, 2, 0.5, 0)
        self.assertEqual(len(PerturbationSet.zero(inst).S), 3)

    def test_perturbed_equals_objective_at_rank_one(self):
        rng = np.random.Generator(np.random.PCG64(41))
        inst = gen_unitbox(4, 1, 0.7, 5)
        a = rng.uniform(-1.0, 1.0, (4, 4))
        S = SymMatrix.from_dense(a @ a.T)
        for _ in range(5):
            x = rng.uniform(0.0, 1.0, 4)
            self.assertAlmostEqual(f_perturbed(inst, 0, S, LiftedPoint.from_x(x)),
                                   evaluate_objective(inst, x), delta=1e-9)

    def test_frank_wolfe_rejects_indefinite(self):
        inst = gen_unitbox(2, 1, 1.0, 0)
        lp = build_linearization(inst, box(inst), CutPool.mccormick(*box(inst)))
        with self.assertRaises(RelaxationError):
            frank_wolfe(SymMatrix.from_dense(np.diag([1.0, -0.5])), inst, lp)


class TestFrankWolfe(unittest.TestCase):

    def test_shifted_square_optimum(self):
        # (x - 0.5)^2 without its constant 0.25
        inst = QcqpInstance(Q=[np.array([[1.0]])], c=[np.array([-1.0])], b=np.zeros(0),
                            lower=np.zeros(1), upper=np.ones(1))
        lp = build_linearization(inst, box(inst), CutPool.mccormick(*box(inst)))
        sol = frank_wolfe(SymMatrix.from_dense(np.array([[1.0]])), inst, lp, tol=1e-6, max_iter=200)
        self.assertIs(sol.status, RelaxStatus.OPTIMAL)
        self.assertLessEqual(sol.iterations, 200)
        self.assertAlmostEqual(sol.bound, -0.25, delta=1e-6)
        self.assertAlmostEqual(sol.objective, -0.25, delta=1e-6)

    def test_bound_never_decreases(self):
        inst = gen_unitbox(3, 2, 0.6, 27)
        state = run_heuristic(inst, config=DualConfig.from_settings(p=8, max_iter=60))
        S0 = assemble_S0(inst, state)
        lp = build_linearization(inst, box(inst), CutPool.mccormick(*box(inst)))
        bounds = [frank_wolfe(S0, inst, lp, tol=0.0, max_iter=k).bound for k in range(1, 16)]
        for a, b in zip(bounds, bounds[1:]):
            self.assertLessEqual(a, b)

    def test_zero_perturbation_reproduces_lp(self):
        inst = gen_unitbox(3, 2, 0.5, 7)
        pool = CutPool.mccormick(*box(inst))
        lp_sol = relaxation_bound(inst, box(inst), pool)
        fw = frank_wolfe(SymMatrix(3), inst, build_linearization(inst, box(inst), pool))
        self.assertAlmostEqual(fw.bound, lp_sol.bound, delta=1e-7)

    def test_dual_perturbation_gives_valid_bound(self):
        for seed in range(3):
            inst = gen_unitbox(3, 2, 0.6, 20 + seed)
            optimum = grid_minimize(inst, 21).value
            state = run_heuristic(inst, config=DualConfig.from_settings(p=8, max_iter=80))
            S0 = assemble_S0(inst, state)
            pool = CutPool.mccormick(*box(inst))
            lp_only = relaxation_bound(inst, box(inst), pool)
            combined = relaxation_bound(inst, box(inst), pool, S0)
            self.assertLessEqual(combined.bound, optimum + 1e-6)
            self.assertGreaterEqual(combined.bound, lp_only.bound - 1e-12)


class TestCutRounds(unittest.TestCase):

    def test_rounds_add_triangles_and_tighten(self):
        inst = gen_unitbox(4, 2, 0.8, 9)
        plain = relaxation_bound(inst, box(inst), CutPool.mccormick(*box(inst)))
        pool = CutPool.mccormick(*box(inst))
        before = len(pool)
        sol = cutting_plane_rounds(inst, box(inst), pool, rounds=4, cap=12)
        self.assertGreaterEqual(sol.bound, plain.bound - 1e-9)
        self.assertEqual(len(pool) - before, pool.count(CutKind.TRIANGLE))

    def test_without_triangles_pool_is_unchanged(self):
        inst = gen_unitbox(4, 2, 0.8, 9)
        pool = CutPool.mccormick(*box(inst))
        before = len(pool)
        cutting_plane_rounds(inst, box(inst), pool, rounds=4, cap=12, use_triangles=False)
        self.assertEqual(len(pool), before)

    def test_rounds_stay_valid(self):
        inst = gen_unitbox(3, 2, 0.6, 30)
        optimum = grid_minimize(inst, 21).value
        pool = CutPool.mccormick(*box(inst))
        sol = cutting_plane_rounds(inst, box(inst), pool, rounds=4, cap=12)
        self.assertLessEqual(sol.bound, optimum + 1e-7)


class TestStrengthening(unittest.TestCase):

    def test_triangles_never_weaken_the_lp(self):
        padberg = QcqpInstance(Q=[(np.ones((3, 3)) - np.eye(3)) / 2.0], c=[-np.ones(3)], b=np.zeros(0),
                               lower=np.zeros(3), upper=np.ones(3))
        instances = [padberg] + [gen_unitbox(3, 2, 0.8, 60 + seed) for seed in range(5)]
        gains = []
        for inst in instances:
            plain = relaxation_bound(inst, box(inst), CutPool.mccormick(*box(inst)))
            pool = CutPool.mccormick(*box(inst))
            pool.extend(triangle_cuts(inst.lower, inst.upper, 0, 1, 2))
            strong = relaxation_bound(inst, box(inst), pool)
            self.assertGreaterEqual(strong.bound, plain.bound - 1e-9)
            gains.append(strong.bound - plain.bound)
        self.assertGreater(max(gains), 1e-6)
        # McCormick alone reaches x = 1/2, Y = 0
        self.assertAlmostEqual(gains[0], 0.5, places=7)


if __name__ == "__main__":
    unittest.main()
