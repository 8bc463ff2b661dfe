"""
Dense bounded-variable revised simplex.

Solves   min c^T z  s.t.  A_r z (<= | =) b_r,  lb <= z <= ub
with an explicit basis inverse kept up to date by eta updates. Bounds are
handled implicitly: nonbasic variables sit at a bound (or at 0 when free).
Phase 1 minimizes the sum of artificial variables for rows whose starting
slack is out of bounds; phase 2 keeps the artificials fixed at zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from app.core.config import get_settings

logger = logging.getLogger(__name__)


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    STALLED = "stalled"


class LpError(Exception):
    """Malformed LP data."""
    pass


# Nonbasic / basic status codes
AT_LOWER = 0
AT_UPPER = 1
FREE = 2
BASIC = 3


@dataclass
class LpProblem:
    """min cost^T z over rows A z (<= | =) b and variable bounds."""

    cost: np.ndarray
    A: np.ndarray
    b: np.ndarray
    equality: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        N = self.cost.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, N)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.equality = np.asarray(self.equality, dtype=bool).reshape(-1)
        self.var_lower = np.asarray(self.var_lower, dtype=float)
        self.var_upper = np.asarray(self.var_upper, dtype=float)
        R = self.A.shape[0]
        if self.b.shape != (R,) or self.equality.shape != (R,):
            raise LpError(f"{R} rows but {self.b.shape[0]} right-hand sides / {self.equality.shape[0]} senses")
        if self.var_lower.shape != (N,) or self.var_upper.shape != (N,):
            raise LpError(f"bounds must have {N} entries")
        if not np.all(np.isfinite(self.cost)):
            raise LpError("cost has non-finite entries")
        if np.any(self.var_lower > self.var_upper):
            raise LpError("variable bounds inverted")

    @classmethod
    def from_rows(
        cls,
        cost: Sequence[float],
        rows: Sequence[tuple[Sequence[float], float, str]],
        var_lower: Sequence[float],
        var_upper: Sequence[float],
    ) -> "LpProblem":
        """Build from (coefficients, rhs, sense) rows; sense is '<=', '>=' or '='."""
        N = len(cost)
        A = np.zeros((len(rows), N))
        b = np.zeros(len(rows))
        eq = np.zeros(len(rows), dtype=bool)
        for r, (coefs, rhs, sense) in enumerate(rows):
            sign = -1.0 if sense == ">=" else 1.0
            if sense not in ("<=", ">=", "="):
                raise LpError(f"row {r}: unknown sense {sense!r}")
            A[r] = sign * np.asarray(coefs, dtype=float)
            b[r] = sign * rhs
            eq[r] = sense == "="
        return cls(np.asarray(cost, dtype=float), A, b, eq, var_lower, var_upper)

    @property
    def num_vars(self) -> int:
        return self.cost.shape[0]

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def with_cost(self, cost: np.ndarray) -> "LpProblem":
        return LpProblem(cost, self.A, self.b, self.equality, self.var_lower, self.var_upper)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective: float
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _Basis:
    basis: np.ndarray
    status: np.ndarray
    values: np.ndarray


class SimplexSolver:
    """
    Revised simplex bound to one constraint set.

    The last optimal basis is kept, so re-solving with a new cost vector
    (same rows and bounds) starts phase 2 from it.
    """

    FEAS_TOL = 1e-9
    OPT_TOL = 1e-9
    PIVOT_TOL = 1e-9
    INFEASIBLE_TOL = 1e-7

    def __init__(
        self,
        problem: LpProblem,
        max_iter: Optional[int] = None,
        bland_after: Optional[int] = None,
        refactor_period: Optional[int] = None,
    ):
        settings = get_settings()
        self.problem = problem
        self.max_iter = max_iter or settings.lp_max_iter
        self.bland_after = bland_after or settings.lp_bland_after
        self.refactor_period = refactor_period or settings.lp_refactor_period
        self._warm: Optional[_Basis] = None
        self._presolve()

    # ========================================================================
    # SETUP
    # ========================================================================

    def _presolve(self) -> None:
        p = self.problem
        nonempty = np.any(p.A != 0.0, axis=1)
        empty = ~nonempty
        bad_le = empty & ~p.equality & (p.b < -self.INFEASIBLE_TOL)
        bad_eq = empty & p.equality & (np.abs(p.b) > self.INFEASIBLE_TOL)
        self.presolve_infeasible = bool(np.any(bad_le | bad_eq))
        self.rows = np.flatnonzero(nonempty)
        self.A = p.A[self.rows]
        self.b = p.b[self.rows]
        self.N = p.num_vars
        self.R = self.rows.shape[0]
        if empty.any():
            logger.debug(f"Presolve removed {int(empty.sum())} empty rows")

        self.art_rows = np.zeros(0, dtype=int)
        self.art_sign = np.zeros(0)
        slack_upper = np.where(p.equality[self.rows], 0.0, np.inf)
        self.lb = np.concatenate([p.var_lower, np.zeros(self.R)])
        self.ub = np.concatenate([p.var_upper, slack_upper])

    @property
    def K(self) -> int:
        return self.N + self.R + self.art_rows.shape[0]

    def _column(self, j: int) -> np.ndarray:
        if j < self.N:
            return self.A[:, j]
        col = np.zeros(self.R)
        if j < self.N + self.R:
            col[j - self.N] = 1.0
        else:
            q = j - self.N - self.R
            col[self.art_rows[q]] = self.art_sign[q]
        return col

    def _basis_inverse(self, basis: np.ndarray) -> np.ndarray:
        B = np.zeros((self.R, self.R))
        for pos, j in enumerate(basis):
            B[:, pos] = self._column(int(j))
        return np.linalg.inv(B)

    def _nonbasic_product(self, status: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Sum of A_j z_j over nonbasic columns."""
        nb = status != BASIC
        struct = np.where(nb[: self.N], values[: self.N], 0.0)
        total = self.A @ struct
        slack = np.where(nb[self.N : self.N + self.R], values[self.N : self.N + self.R], 0.0)
        total = total + slack
        if self.art_rows.shape[0]:
            art = np.where(nb[self.N + self.R :], values[self.N + self.R :], 0.0)
            np.add.at(total, self.art_rows, self.art_sign * art)
        return total

    def _reduced_costs(self, cost: np.ndarray, y: np.ndarray) -> np.ndarray:
        d = np.empty(self.K)
        d[: self.N] = cost[: self.N] - y @ self.A
        d[self.N : self.N + self.R] = cost[self.N : self.N + self.R] - y
        if self.art_rows.shape[0]:
            d[self.N + self.R :] = cost[self.N + self.R :] - self.art_sign * y[self.art_rows]
        return d

    def _cold_start(self) -> _Basis:
        N, R = self.N, self.R
        lb, ub = self.lb[:N], self.ub[:N]
        status = np.where(np.isfinite(lb), AT_LOWER, np.where(np.isfinite(ub), AT_UPPER, FREE))
        values = np.where(status == AT_LOWER, lb, np.where(status == AT_UPPER, ub, 0.0))
        residual = self.b - self.A @ values

        slack_ub = self.ub[N:N + R]
        ok = (residual >= -self.FEAS_TOL) & (residual <= slack_ub + self.FEAS_TOL)
        bad = np.flatnonzero(~ok)
        self.art_rows = bad
        self.art_sign = np.where(residual[bad] > 0, 1.0, -1.0)
        A_count = bad.shape[0]
        self.lb = np.concatenate([self.lb[: N + R], np.zeros(A_count)])
        self.ub = np.concatenate([self.ub[: N + R], np.full(A_count, np.inf)])

        full_status = np.concatenate([status, np.full(R, BASIC), np.full(A_count, BASIC)])
        full_values = np.concatenate([values, np.clip(residual, 0.0, slack_ub), np.abs(residual[bad])])
        basis = np.arange(N, N + R)
        for q, r in enumerate(bad):
            full_status[N + r] = AT_LOWER
            full_values[N + r] = 0.0
            basis[r] = N + R + q
        return _Basis(basis, full_status, full_values)

    # ========================================================================
    # SIMPLEX ITERATIONS
    # ========================================================================

    def _iterate(self, cost: np.ndarray, state: _Basis, budget: int) -> tuple[LpStatus, int]:
        basis, status, values = state.basis, state.status, state.values
        lb, ub = self.lb, self.ub
        fixed = ub - lb <= 0.0

        Binv = self._basis_inverse(basis)
        xB = Binv @ (self.b - self._nonbasic_product(status, values))
        since_refactor = 0
        degenerate_run = 0
        iterations = 0

        while True:
            if iterations >= budget:
                values[basis] = xB
                return LpStatus.STALLED, iterations
            bland = degenerate_run >= self.bland_after

            y = cost[basis] @ Binv
            d = self._reduced_costs(cost, y)
            d[basis] = 0.0
            increase = ((status == AT_LOWER) | (status == FREE)) & (d < -self.OPT_TOL) & ~fixed
            decrease = ((status == AT_UPPER) | (status == FREE)) & (d > self.OPT_TOL) & ~fixed
            eligible = increase | decrease
            if not eligible.any():
                values[basis] = xB
                return LpStatus.OPTIMAL, iterations

            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = 1.0 if increase[j] else -1.0

            delta = direction * (Binv @ self._column(j))
            lbB, ubB = lb[basis], ub[basis]
            ratios = np.full(self.R, np.inf)
            down = delta > self.PIVOT_TOL
            up = delta < -self.PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[down] = (xB[down] - lbB[down]) / delta[down]
                ratios[up] = (ubB[up] - xB[up]) / (-delta[up])
            ratios = np.where(np.isnan(ratios), np.inf, np.maximum(ratios, 0.0))
            theta_basic = float(np.min(ratios)) if self.R else np.inf
            theta_flip = ub[j] - lb[j]

            if theta_flip <= theta_basic:
                if not np.isfinite(theta_flip):
                    values[basis] = xB
                    return LpStatus.UNBOUNDED, iterations
                theta = float(theta_flip)
                xB = xB - theta * delta
                status[j] = AT_UPPER if direction > 0 else AT_LOWER
                values[j] = ub[j] if direction > 0 else lb[j]
            else:
                theta = theta_basic
                tied = np.flatnonzero(ratios <= theta + 1e-12)
                if bland:
                    r = int(tied[np.argmin(basis[tied])])
                else:
                    r = int(tied[np.argmax(np.abs(delta[tied]))])
                xB = xB - theta * delta
                leaving = int(basis[r])
                if delta[r] > 0:
                    status[leaving], values[leaving] = AT_LOWER, lb[leaving]
                else:
                    status[leaving], values[leaving] = AT_UPPER, ub[leaving]
                entering_value = values[j] + direction * theta
                basis[r] = j
                status[j] = BASIC
                xB[r] = entering_value

                pivot = delta[r] * direction
                row = Binv[r] / pivot
                Binv = Binv - np.outer(delta * direction, row)
                Binv[r] = row
                since_refactor += 1
                if since_refactor >= self.refactor_period:
                    try:
                        Binv = self._basis_inverse(basis)
                        xB = Binv @ (self.b - self._nonbasic_product(status, values))
                    except np.linalg.LinAlgError:
                        logger.warning("Basis re-inversion failed; keeping eta-updated inverse")
                    since_refactor = 0

            degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0
            iterations += 1

    # ========================================================================
    # DRIVER
    # ========================================================================

    def solve(self, cost: Optional[np.ndarray] = None) -> LpSolution:
        """
        Solve, optionally with a new cost vector.

        Args:
            cost: Replacement objective (rows and bounds unchanged); warm-starts
                from the last optimal basis when one exists

        Returns:
            LpSolution with duals y = c_B^T B^-1 on the original rows
        """
        if cost is not None:
            cost = np.asarray(cost, dtype=float)
            if cost.shape != (self.N,):
                raise LpError(f"cost must have {self.N} entries")
            self.problem = self.problem.with_cost(cost)
        N, R = self.N, self.R

        if self.presolve_infeasible:
            return self._terminal(LpStatus.INFEASIBLE, np.zeros(N), 0)

        iterations = 0
        if self._warm is not None:
            state = _Basis(self._warm.basis.copy(), self._warm.status.copy(), self._warm.values.copy())
        else:
            state = self._cold_start()
            if self.art_rows.shape[0]:
                phase1 = np.zeros(self.K)
                phase1[N + R :] = 1.0
                outcome, iterations = self._iterate(phase1, state, self.max_iter)
                if outcome is LpStatus.STALLED:
                    logger.warning(f"Simplex phase 1 stalled after {iterations} iterations")
                    return self._terminal(LpStatus.STALLED, state.values[:N], iterations)
                infeasibility = float(np.sum(state.values[N + R :]))
                scale = max(1.0, float(np.max(np.abs(self.b))) if R else 1.0)
                if infeasibility > self.INFEASIBLE_TOL * scale:
                    logger.debug(f"LP infeasible (phase 1 residual {infeasibility:.3e})")
                    return self._terminal(LpStatus.INFEASIBLE, state.values[:N], iterations)
                self.ub[N + R :] = 0.0

        phase2 = np.concatenate([self.problem.cost, np.zeros(self.K - N)])
        outcome, more = self._iterate(phase2, state, max(self.max_iter - iterations, 1))
        iterations += more
        if outcome is LpStatus.STALLED:
            logger.warning(f"Simplex stalled after {iterations} iterations")
        if outcome is not LpStatus.OPTIMAL:
            return self._terminal(outcome, state.values[:N], iterations)

        self._warm = _Basis(state.basis.copy(), state.status.copy(), state.values.copy())
        x = np.clip(state.values[:N], self.problem.var_lower, self.problem.var_upper)
        Binv = self._basis_inverse(state.basis)
        y_reduced = phase2[state.basis] @ Binv
        duals = np.zeros(self.problem.num_rows)
        duals[self.rows] = y_reduced
        reduced = self.problem.cost - duals @ self.problem.A
        return LpSolution(
            status=LpStatus.OPTIMAL,
            x=x,
            objective=float(self.problem.cost @ x),
            duals=duals,
            reduced_costs=reduced,
            iterations=iterations,
        )

    def _terminal(self, status: LpStatus, x: np.ndarray, iterations: int) -> LpSolution:
        return LpSolution(status=status, x=np.array(x, dtype=float), objective=np.nan,
                          duals=np.zeros(self.problem.num_rows), reduced_costs=np.zeros(self.N),
                          iterations=iterations)


def solve_lp(problem: LpProblem) -> LpSolution:
    return SimplexSolver(problem).solve()


def dual_objective(problem: LpProblem, solution: LpSolution) -> float:
    """
    Lagrangian dual value of the row multipliers in `solution`.

    Inequality multipliers are clipped to <= 0, which keeps the value a valid
    lower bound on the LP optimum for any multipliers.
    """
    y = np.where(problem.equality, solution.duals, np.minimum(solution.duals, 0.0))
    d = problem.cost - y @ problem.A
    total = float(problem.b @ y)
    pos, neg = d > 0, d < 0
    if np.any(pos & ~np.isfinite(problem.var_lower)) or np.any(neg & ~np.isfinite(problem.var_upper)):
        return -np.inf
    total += float(d[pos] @ problem.var_lower[pos]) + float(d[neg] @ problem.var_upper[neg])
    return total
