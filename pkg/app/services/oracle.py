"""
Brute-force ground truth for tiny instances and discarded candidate cuts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.core.constants import (
    GRID_FEAS_TOL,
    ORACLE_MAX_VARS,
    ORACLE_MIN_STEPS,
    REDUNDANCY_TOL,
)
from app.services.bnb import local_search
from app.services.cuts import TRIPLE_PAIRS, Cut, CutKind, mccormick_cuts
from app.services.lp import LpProblem, solve_lp
from app.services.qcqp import QcqpInstance, evaluate_many, evaluate_objective, max_violation
from app.services.relax import y_bounds

logger = logging.getLogger(__name__)


class OracleError(Exception):
    """Raised by the grid guard, an empty grid, or a failed redundancy LP."""
    pass


@dataclass
class OracleResult:
    value: float
    argmin: np.ndarray
    resolution: float


def _grid_axes(inst: QcqpInstance, steps: int) -> list[np.ndarray]:
    return [np.linspace(inst.lower[i], inst.upper[i], steps) for i in range(inst.n)]


def grid_minimize(inst: QcqpInstance, steps_per_dim: Optional[int] = None) -> OracleResult:
    """
    Exhaustive scan of a uniform grid over the box (endpoints included).

    The grid is processed one slice per value of x_1; within a slice points
    are in lexicographic order, so the first minimum found is the
    lexicographically smallest. The best feasible grid point is then polished
    once by local search and replaced when the polish improves it.

    Raises:
        OracleError: n > 4, fewer than 11 steps, or no feasible grid point
    """
    steps = get_settings().oracle_steps if steps_per_dim is None else int(steps_per_dim)
    if inst.n > ORACLE_MAX_VARS:
        raise OracleError(f"grid oracle handles n <= {ORACLE_MAX_VARS}, got n = {inst.n}")
    if steps < ORACLE_MIN_STEPS:
        raise OracleError(f"grid oracle needs at least {ORACLE_MIN_STEPS} steps per dimension, got {steps}")

    axes = _grid_axes(inst, steps)
    if inst.n > 1:
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, inst.n - 1)
    else:
        rest = np.zeros((1, 0))

    best_value, best_point = np.inf, None
    for first in axes[0]:
        points = np.hstack([np.full((rest.shape[0], 1), first), rest])
        feasible = np.ones(points.shape[0], dtype=bool)
        for r in range(1, inst.m + 1):
            feasible &= evaluate_many(inst, r, points) - inst.b[r - 1] <= GRID_FEAS_TOL
        if not feasible.any():
            continue
        values = np.where(feasible, evaluate_many(inst, 0, points), np.inf)
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value, best_point = float(values[k]), points[k].copy()

    if best_point is None:
        raise OracleError(f"no feasible grid point at {steps} steps per dimension; "
                          f"possibly infeasible at this resolution")

    polished = local_search(inst, best_point)
    if polished is not None:
        value = evaluate_objective(inst, polished)
        if value < best_value:
            logger.debug(f"Grid polish: {best_value:.8f} -> {value:.8f}")
            best_value, best_point = value, polished

    resolution = float(np.max(inst.upper - inst.lower)) / (steps - 1)
    logger.debug(f"Grid oracle on {inst.name}: {best_value:.8f} "
                 f"(violation {max_violation(inst, best_point):.1e})")
    return OracleResult(value=best_value, argmin=best_point, resolution=resolution)


def _localize(cut: Cut) -> Cut:
    """The same cut with its triple relabeled to (0, 1, 2)."""
    where = {g: q for q, g in enumerate(cut.indices)}
    return replace(
        cut,
        indices=(0, 1, 2),
        pairs=tuple((where[p], where[q]) for p, q in cut.pairs),
        xs=tuple(where[i] for i in cut.xs),
    )


def max_cut_violation(lower, upper, candidate: Cut) -> float:
    """
    Largest violation of `candidate` over the McCormick polytope of its triple.

    An LP over (x_i, x_j, x_k) and the six lifted entries of the triple, with
    the twelve off-diagonal envelopes and the box.
    """
    if candidate.kind is CutKind.MCCORMICK or len(candidate.indices) != 3:
        raise OracleError(f"{candidate.describe()} does not index a single triple")
    idx = list(candidate.indices)
    lo = np.asarray(lower, dtype=float)[idx]
    up = np.asarray(upper, dtype=float)[idx]
    cut = _localize(candidate)

    n = 3
    N = n + 6
    rows = []
    for a, b in TRIPLE_PAIRS:
        for env in mccormick_cuts(lo, up, a, b):
            cols, vals = env.lp_row(n)
            coefs = np.zeros(N)
            np.add.at(coefs, cols, vals)
            rows.append((coefs, -env.const, "<="))

    cols, vals = cut.lp_row(n)
    objective = np.zeros(N)
    np.add.at(objective, cols, vals)
    y_lo, y_hi = y_bounds(lo, up)
    problem = LpProblem.from_rows(-objective, rows, np.concatenate([lo, y_lo]), np.concatenate([up, y_hi]))
    sol = solve_lp(problem)
    if not sol.optimal:
        raise OracleError(f"redundancy LP for {candidate.describe()} ended {sol.status.value}")
    return -sol.objective + cut.const


def certify_redundant(lower, upper, candidate: Cut) -> bool:
    """True when no point of the triple's McCormick polytope violates `candidate`."""
    return max_cut_violation(lower, upper, candidate) <= REDUNDANCY_TOL
