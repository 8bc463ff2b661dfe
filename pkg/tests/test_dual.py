"""
Tests for the spectral dual: weak duality, the subgradient, and the subgradient heuristic.
"""

import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.services.cuts import CutKind, CutPool, mccormick_cuts, triangle_cut
from app.services.dual import (
    DualConfig,
    DualError,
    DualState,
    aggregate_matrix,
    default_p,
    evaluate,
    lagrangian_value,
    run_heuristic,
    s_matrix,
    trace_cap,
)
from app.services.linalg import is_psd
from app.services.oracle import grid_minimize
from app.services.qcqp import QcqpInstance, gen_unitbox


def concave_square() -> QcqpInstance:
    """min -x^2 on [0, 1]."""
    return QcqpInstance(Q=[np.array([[-1.0]])], c=[np.zeros(1)], b=np.zeros(0),
                        lower=np.zeros(1), upper=np.ones(1))


def padberg_instance() -> QcqpInstance:
    """min x0x1 + x0x2 + x1x2 - x0 - x1 - x2 on [0, 1]^3, optimum -1."""
    q = (np.ones((3, 3)) - np.eye(3)) / 2.0
    return QcqpInstance(Q=[q], c=[-np.ones(3)], b=np.zeros(0), lower=np.zeros(3), upper=np.ones(3))


def random_state(inst: QcqpInstance, rng, cuts: int = 6) -> DualState:
    state = DualState.initial(inst)
    state.alpha = rng.uniform(0.0, 0.5, inst.m)
    state.phi1 = rng.uniform(0.0, 2.0, inst.n)
    state.phi2 = rng.uniform(0.0, 0.5, inst.n)
    state.phi3 = rng.uniform(0.0, 0.5, inst.n)
    pool = state.working_set
    pool.extend(mccormick_cuts(inst.lower, inst.upper, 0, 1))
    pool.extend(triangle_cut(inst.lower, inst.upper, 0, 1, 2, t) for t in range(1, cuts + 1))
    for cut in pool:
        state.set_multiplier(cut, rng.uniform(0.0, 0.3))
    return state


class TestDualFunction(unittest.TestCase):

    def test_concave_square(self):
        ev = evaluate(concave_square(), DualState.initial(concave_square()))
        self.assertAlmostEqual(ev.bound, -1.0, places=9)

    def test_trace_cap(self):
        self.assertEqual(trace_cap(np.zeros(3), np.ones(3)), 4.0)
        self.assertEqual(trace_cap(np.array([1.0]), np.array([3.0])), 10.0)

    def test_default_p(self):
        self.assertEqual(default_p(8), 32)
        self.assertEqual(default_p(8, 1.0), 784)

    def test_weak_duality_at_random_multipliers(self):
        rng = np.random.Generator(np.random.PCG64(31))
        for seed in range(5):
            inst = gen_unitbox(3, 2, 0.6, seed)
            optimum = grid_minimize(inst, 21).value
            for _ in range(4):
                ev = evaluate(inst, random_state(inst, rng))
                self.assertLessEqual(ev.bound, optimum + 1e-6)

    def test_bound_equals_lagrangian_at_minimizer(self):
        rng = np.random.Generator(np.random.PCG64(32))
        inst = gen_unitbox(4, 3, 0.5, 2)
        for _ in range(5):
            state = random_state(inst, rng)
            ev = evaluate(inst, state)
            self.assertAlmostEqual(lagrangian_value(inst, state, ev.x, ev.X), ev.bound, delta=1e-8)
            self.assertLessEqual(np.trace(ev.X), trace_cap(inst.lower, inst.upper) - 1.0 + 1e-9)

    def test_subgradient_matches_finite_differences(self):
        rng = np.random.Generator(np.random.PCG64(33))
        inst = gen_unitbox(3, 2, 0.7, 4)
        h = 1e-5
        for _ in range(10):
            state = random_state(inst, rng)
            g = evaluate(inst, state).subgradient
            for r in range(inst.m):
                up, down = state.copy(), state.copy()
                up.alpha[r] += h
                down.alpha[r] -= h
                fd = (evaluate(inst, up).bound - evaluate(inst, down).bound) / (2 * h)
                self.assertAlmostEqual(fd, g["alpha"][r], delta=1e-4 * max(1.0, abs(fd)))
            for i in range(inst.n):
                up, down = state.copy(), state.copy()
                up.phi1[i] += h
                down.phi1[i] -= h
                fd = (evaluate(inst, up).bound - evaluate(inst, down).bound) / (2 * h)
                self.assertAlmostEqual(fd, g["phi1"][i], delta=1e-4 * max(1.0, abs(fd)))

    def test_aggregate_matrix_shape(self):
        inst = gen_unitbox(3, 1, 0.5, 0)
        state = DualState.initial(inst)
        state.rho = 2.5
        agg = aggregate_matrix(inst, state)
        self.assertEqual(agg.dim, 4)
        self.assertEqual(agg[0, 0], 2.5)
        np.testing.assert_allclose(agg.to_dense()[1:, 1:], s_matrix(inst, state).to_dense())


class TestDualState(unittest.TestCase):

    def test_multiplier_for_unknown_cut(self):
        inst = gen_unitbox(3, 1, 0.5, 0)
        state = DualState.initial(inst)
        with self.assertRaises(DualError):
            state.set_multiplier(triangle_cut(inst.lower, inst.upper, 0, 1, 2, 1), 1.0)

    def test_unknown_key_in_tables(self):
        inst = gen_unitbox(3, 1, 0.5, 0)
        state = DualState.initial(inst)
        state.delta[(CutKind.TRIANGLE.value, (0, 1, 2), 3)] = 1.0
        with self.assertRaises(DualError):
            state.cut_multipliers()

    def test_for_box_rederives_cuts(self):
        rng = np.random.Generator(np.random.PCG64(34))
        inst = gen_unitbox(3, 1, 0.5, 0)
        state = random_state(inst, rng)
        lower, upper = np.array([0.0, 0.25, 0.0]), np.array([0.5, 1.0, 1.0])
        child = state.for_box(lower, upper)
        self.assertEqual(child.working_set.keys(), state.working_set.keys())
        np.testing.assert_array_equal(child.lower, lower)
        self.assertEqual(child.phi, state.phi)
        self.assertEqual(child.best_bound, -np.inf)


class TestHeuristic(unittest.TestCase):

    def test_bounds_are_valid_and_monotone(self):
        for seed in range(3):
            inst = gen_unitbox(3, 2, 0.6, 10 + seed)
            optimum = grid_minimize(inst, 21).value
            state = run_heuristic(inst, config=DualConfig.from_settings(p=default_p(3), max_iter=120))
            self.assertLessEqual(state.best_bound, optimum + 1e-6)
            for a, b in zip(state.history, state.history[1:]):
                self.assertLessEqual(a, b)
            self.assertTrue(all(v <= optimum + 1e-6 for v in state.history))
            self.assertLessEqual(len(state.working_set), default_p(3))

    def test_terminal_state_is_psd(self):
        inst = gen_unitbox(4, 3, 0.5, 21)
        state = run_heuristic(inst, config=DualConfig.from_settings(p=10, max_iter=80))
        self.assertTrue(is_psd(s_matrix(inst, state)))

    def test_zero_cap_keeps_working_set_empty(self):
        inst = gen_unitbox(4, 3, 0.5, 22)
        state = run_heuristic(inst, config=DualConfig.from_settings(p=0, max_iter=60))
        self.assertEqual(len(state.working_set), 0)
        self.assertGreater(state.best_bound, -np.inf)

    def test_polyak_with_incumbent(self):
        inst = gen_unitbox(3, 2, 0.6, 23)
        optimum = grid_minimize(inst, 21).value
        plain = run_heuristic(inst, config=DualConfig.from_settings(p=8, max_iter=100))
        polyak = run_heuristic(inst, config=DualConfig.from_settings(p=8, max_iter=100), incumbent=optimum)
        self.assertLessEqual(polyak.best_bound, optimum + 1e-6)
        self.assertLessEqual(plain.best_bound, optimum + 1e-6)

    def test_cuts_never_weaken_the_bound(self):
        for inst in (padberg_instance(), concave_square()):
            without = run_heuristic(inst, config=DualConfig.from_settings(p=0, max_iter=200), incumbent=-1.0)
            with_cuts = run_heuristic(inst, config=DualConfig.from_settings(p=default_p(inst.n, 1.0), max_iter=200),
                                      incumbent=-1.0)
            self.assertGreaterEqual(with_cuts.best_bound, without.best_bound - 1e-9)
            self.assertLessEqual(with_cuts.best_bound, -1.0 + 1e-6)

    def test_violated_triangle_enters_working_set(self):
        inst = padberg_instance()
        state = run_heuristic(inst, config=DualConfig.from_settings(p=default_p(3, 1.0), max_iter=300),
                              incumbent=-1.0)
        self.assertIn((CutKind.TRIANGLE.value, (0, 1, 2), 1), state.admitted)
        # Shor with McCormick stops at -1.125 here; only the triangle closes the gap
        self.assertGreater(state.best_bound, -1.125 + 1e-3)

    def test_warm_start_on_sub_box(self):
        inst = gen_unitbox(3, 2, 0.6, 24)
        root = run_heuristic(inst, config=DualConfig.from_settings(p=8, max_iter=60))
        lower, upper = inst.lower.copy(), inst.upper.copy()
        upper[0] = 0.5
        child = run_heuristic(inst, (lower, upper), DualConfig.from_settings(p=8, max_iter=30), warm=root)
        np.testing.assert_array_equal(child.upper, upper)
        self.assertIsInstance(child.working_set, CutPool)


if __name__ == "__main__":
    unittest.main()
