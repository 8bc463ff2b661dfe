"""
Node relaxations.

The lifted objective of a perturbation S is

    f_{r,S}(x, Y) = <S, x x^T> + c_r^T x + <Q_r - S, Y>

which equals f_r(x) whenever Y = x x^T. With S = 0 it is the standard
linearization (an LP over the cut pool); with a PSD S_0 assembled from dual
multipliers it is a convex quadratic minimized by Frank-Wolfe over the same
polytope.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.core.constants import PSD_TOL
from app.services.cuts import CutPool, separate
from app.services.dual import DualState, s_matrix
from app.services.linalg import (
    SymMatrix,
    is_psd,
    min_eigenvalue,
    packed_size,
    packed_weights,
    quad_form,
    triu_indices,
)
from app.services.lp import LpProblem, LpStatus, SimplexSolver, dual_objective
from app.services.qcqp import LiftedPoint, QcqpInstance

logger = logging.getLogger(__name__)


class RelaxationError(Exception):
    """Raised when a perturbation matrix is not PSD."""
    pass


class RelaxStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    LIMIT = "limit"


@dataclass
class PerturbationSet:
    """PSD matrices S_0..S_m."""

    S: list[SymMatrix]

    def __post_init__(self):
        for r, S_r in enumerate(self.S):
            if not is_psd(S_r):
                raise RelaxationError(f"S_{r} is not positive semi-definite")

    @classmethod
    def zero(cls, inst: QcqpInstance) -> "PerturbationSet":
        return cls([SymMatrix(inst.n) for _ in range(inst.m + 1)])

    @classmethod
    def from_dual(cls, inst: QcqpInstance, state: DualState) -> "PerturbationSet":
        """S_0 from the multipliers, S_r = 0 for the constraints."""
        return cls([assemble_S0(inst, state)] + [SymMatrix(inst.n) for _ in range(inst.m)])


@dataclass
class RelaxationSolution:
    point: Optional[LiftedPoint]
    bound: float
    status: RelaxStatus
    objective: float = float("nan")
    iterations: int = 0

    @property
    def infeasible(self) -> bool:
        return self.status is RelaxStatus.INFEASIBLE


def f_perturbed(inst: QcqpInstance, r: int, S_r: SymMatrix, p: LiftedPoint) -> float:
    """<S_r, x x^T> + c_r^T x + <Q_r - S_r, Y>."""
    return quad_form(S_r, p.x) + float(inst.c[r] @ p.x) + (inst.sym(r) - S_r).inner(p.Y)


def assemble_S0(inst: QcqpInstance, state: DualState) -> SymMatrix:
    """S_0 = Q_0 + sum alpha_r Q_r + Phi + Delta from dual multipliers."""
    return s_matrix(inst, state)


def y_bounds(lower: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Packed bounds of Y_pq: min and max of the four corner products."""
    rows, cols = triu_indices(len(lower))
    corners = np.stack([
        lower[rows] * lower[cols],
        lower[rows] * upper[cols],
        upper[rows] * lower[cols],
        upper[rows] * upper[cols],
    ])
    return corners.min(axis=0), corners.max(axis=0)


def build_linearization(
    inst: QcqpInstance,
    box: tuple[np.ndarray, np.ndarray],
    pool: CutPool,
) -> LpProblem:
    """
    Standard linearization over z = [x, packed Y].

    Rows: c_r^T x + <Q_r, Y> <= b_r for every constraint, then every pool cut.
    Bounds: the box on x, corner products on Y.
    """
    lower = np.asarray(box[0], dtype=float)
    upper = np.asarray(box[1], dtype=float)
    n = inst.n
    N = n + packed_size(n)
    lifted = inst.lifted_rows

    cuts = list(pool)
    A = np.zeros((inst.m + len(cuts), N))
    b = np.zeros(inst.m + len(cuts))
    for r in range(1, inst.m + 1):
        A[r - 1, :n] = inst.c[r]
        A[r - 1, n:] = lifted[r]
        b[r - 1] = inst.b[r - 1]
    for row, cut in enumerate(cuts, start=inst.m):
        cols, vals = cut.lp_row(n)
        np.add.at(A[row], cols, vals)
        b[row] = -cut.const

    y_lo, y_hi = y_bounds(lower, upper)
    return LpProblem(
        cost=np.concatenate([inst.c[0], lifted[0]]),
        A=A,
        b=b,
        equality=np.zeros(len(b), dtype=bool),
        var_lower=np.concatenate([lower, y_lo]),
        var_upper=np.concatenate([upper, y_hi]),
    )


def lp_bound(lp: LpProblem, solver: SimplexSolver) -> tuple[float, Optional[np.ndarray], LpStatus]:
    """Solve the linearization; the bound is the smaller of primal and dual values."""
    sol = solver.solve()
    if sol.status is LpStatus.INFEASIBLE:
        return np.inf, None, sol.status
    if sol.status is LpStatus.OPTIMAL:
        return min(sol.objective, dual_objective(lp, sol)), sol.x, sol.status
    return dual_objective(lp, sol), sol.x, sol.status


def frank_wolfe(
    S0: SymMatrix,
    inst: QcqpInstance,
    lp: LpProblem,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    solver: Optional[SimplexSolver] = None,
) -> RelaxationSolution:
    """
    Minimize f_{0,S0} over the LP polytope by conditional gradients.

    Steps use exact line search on the quadratic. At each iterate z the
    linear minorant gives f(z) - grad^T z + min_P grad^T s, a valid lower bound
    even before the gap closes; the best one is reported.

    Raises:
        RelaxationError: S0 not PSD
    """
    settings = get_settings()
    tol = settings.fw_tol if tol is None else tol
    max_iter = settings.fw_max_iter if max_iter is None else max_iter
    value, _ = min_eigenvalue(S0)
    if value < PSD_TOL:
        raise RelaxationError(f"S0 is not PSD (lambda_min = {value:.3e})")

    n = inst.n
    rows, cols = triu_indices(n)
    S = S0.to_dense()
    g = packed_weights(n) * (inst.Q[0][rows, cols] - S[rows, cols])
    c0 = inst.c[0]
    solver = solver or SimplexSolver(lp)

    def objective(z: np.ndarray) -> float:
        x = z[:n]
        return float(x @ S @ x + c0 @ x + g @ z[n:])

    def gradient(z: np.ndarray) -> np.ndarray:
        return np.concatenate([2.0 * S @ z[:n] + c0, g])

    mid = (lp.var_lower[:n] + lp.var_upper[:n]) / 2.0
    start = solver.solve(gradient(np.concatenate([mid, np.zeros(len(g))])))
    if start.status is LpStatus.INFEASIBLE:
        return RelaxationSolution(None, np.inf, RelaxStatus.INFEASIBLE)
    if not start.optimal:
        return RelaxationSolution(None, -np.inf, RelaxStatus.LIMIT)

    z = start.x
    best = -np.inf
    status = RelaxStatus.LIMIT
    it = 0
    for it in range(1, max_iter + 1):
        grad = gradient(z)
        sol = solver.solve(grad)
        if not sol.optimal:
            break
        lp_min = min(float(grad @ sol.x), dual_objective(solver.problem, sol))
        current = objective(z)
        best = max(best, current - float(grad @ z) + lp_min)
        gap = float(grad @ (z - sol.x))
        if gap <= tol:
            status = RelaxStatus.OPTIMAL
            break
        direction = sol.x - z
        dx = direction[:n]
        curvature = float(dx @ S @ dx)
        slope = float(grad @ direction)
        gamma = 1.0 if curvature <= 1e-15 else min(max(-slope / (2.0 * curvature), 0.0), 1.0)
        z = z + gamma * direction

    logger.debug(f"Frank-Wolfe: bound {best:.6f} after {it} iterations ({status.value})")
    return RelaxationSolution(
        point=LiftedPoint.from_packed(z, n),
        bound=best,
        status=status,
        objective=objective(z),
        iterations=it,
    )


def relaxation_bound(
    inst: QcqpInstance,
    box: tuple[np.ndarray, np.ndarray],
    pool: CutPool,
    S0: Optional[SymMatrix] = None,
) -> RelaxationSolution:
    """
    Bound of a node: the LP over the pool, and (P*) by Frank-Wolfe when S0 is given.

    The point is always the LP vertex; the bound is the larger of the two.
    """
    lp = build_linearization(inst, box, pool)
    solver = SimplexSolver(lp)
    bound, z, status = lp_bound(lp, solver)
    if status is LpStatus.INFEASIBLE:
        return RelaxationSolution(None, np.inf, RelaxStatus.INFEASIBLE)
    point = LiftedPoint.from_packed(z, inst.n)
    objective = float(lp.cost @ z)
    result = RelaxationSolution(point, bound,
                                RelaxStatus.OPTIMAL if status is LpStatus.OPTIMAL else RelaxStatus.LIMIT,
                                objective)
    if S0 is not None:
        fw = frank_wolfe(S0, inst, lp, solver=solver)
        if fw.infeasible:
            return fw
        if fw.bound > result.bound:
            logger.debug(f"(P*) bound {fw.bound:.6f} improves LP bound {result.bound:.6f}")
            result.bound = fw.bound
    return result


def cutting_plane_rounds(
    inst: QcqpInstance,
    box: tuple[np.ndarray, np.ndarray],
    pool: CutPool,
    rounds: int,
    cap: int,
    use_triangles: bool = True,
    S0: Optional[SymMatrix] = None,
) -> RelaxationSolution:
    """
    Solve, separate triangle cuts at the LP point, add them to `pool`, repeat.

    `pool` is extended in place. The returned bound comes from the last
    (tightest) LP, combined with (P*) when S0 is given.
    """
    lower, upper = box
    for rnd in range(rounds + 1):
        last = rnd == rounds or not use_triangles
        sol = relaxation_bound(inst, box, pool, S0 if last else None)
        if sol.infeasible or last:
            return sol
        new = separate(sol.point, lower, upper, cap, exclude=pool, mccormick=False, triangles=True)
        if not new:
            if S0 is not None:
                return relaxation_bound(inst, box, pool, S0)
            return sol
        pool.extend(new)
        logger.debug(f"Cut round {rnd + 1}: +{len(new)} triangle cuts (pool {len(pool)})")
    return sol
