"""
Spatial branch-and-bound over variable boxes.

Nodes are evaluated when created (cut rounds on the node's own box, plus the
dual heuristic and the convexified objective every `refresh_depth` levels)
and kept in a best-first heap keyed by (bound, -depth, creation order).
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import count
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.core.constants import FEAS_TOL, LIFT_EPS
from app.services.cuts import CutPool
from app.services.dual import DualConfig, DualState, default_p, run_heuristic
from app.services.linalg import SymMatrix
from app.services.qcqp import QcqpInstance, evaluate_objective, max_violation
from app.services.relax import RelaxationSolution, assemble_S0, cutting_plane_rounds

logger = logging.getLogger(__name__)


class BranchError(Exception):
    """Raised when asked to branch on a lifted-consistent point."""
    pass


class GlobalStatus(str, Enum):
    OPTIMAL = "optimal"
    GAP_LIMIT = "gap_limit"
    TIME_LIMIT = "time_limit"
    INFEASIBLE = "infeasible"


@dataclass
class BnbConfig:
    eps_rel: float = 1e-4
    time_limit: float = 600.0
    node_limit: int = 100000
    use_triangles: bool = True
    p: Optional[int] = None
    refresh_depth: int = 5
    use_dual: bool = True
    cut_rounds: int = 4
    node_cut_cap: int = 60
    local_search_period: int = 10
    branch_clamp: float = 0.2
    progress_interval: float = 5.0
    threads: int = 1
    dual_max_iter: int = 500
    dual_refresh_iter: int = 100

    @classmethod
    def from_settings(cls, **overrides) -> "BnbConfig":
        s = get_settings()
        values = dict(
            eps_rel=s.eps_rel,
            time_limit=s.time_limit,
            node_limit=s.node_limit,
            use_triangles=s.use_triangles,
            refresh_depth=s.refresh_depth,
            cut_rounds=s.cut_rounds,
            node_cut_cap=s.node_cut_cap,
            local_search_period=s.local_search_period,
            branch_clamp=s.branch_clamp,
            progress_interval=s.progress_interval,
            threads=s.threads,
            dual_max_iter=s.dual_max_iter,
            dual_refresh_iter=s.dual_refresh_iter,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class BnbNode:
    lower: np.ndarray
    upper: np.ndarray
    bound: float
    depth: int
    pool: CutPool
    dual: Optional[DualState] = None
    solution: Optional[RelaxationSolution] = field(default=None, repr=False)


@dataclass
class GlobalResult:
    status: GlobalStatus
    incumbent: Optional[np.ndarray]
    value: float
    best_bound: float
    nodes: int
    root_gap: float
    root_bound: float = -np.inf
    elapsed: float = 0.0

    @property
    def gap(self) -> float:
        if not np.isfinite(self.value) or not np.isfinite(self.best_bound):
            return np.inf
        return (self.value - self.best_bound) / max(1.0, abs(self.value))


def relative_gap(value: float, bound: float) -> float:
    if not np.isfinite(value) or not np.isfinite(bound):
        return np.inf
    return max(0.0, (value - bound) / max(1.0, abs(value)))


# ============================================================================
# LOCAL SEARCH
# ============================================================================

class _Penalty:
    """f_0 plus an exterior quadratic penalty on the constraints."""

    def __init__(self, inst: QcqpInstance):
        self.Q0 = inst.Q[0]
        self.c0 = inst.c[0]
        self.Qc = np.array(inst.Q[1:]).reshape(inst.m, inst.n, inst.n)
        self.Cc = np.array(inst.c[1:]).reshape(inst.m, inst.n)
        self.b = inst.b

    def excess(self, x: np.ndarray, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        f = np.einsum("rij,i,j->r", self.Qc, x, x) + self.Cc @ x
        grads = 2.0 * (self.Qc @ x) + self.Cc
        return f - (self.b - shift), grads

    def penalized(self, x: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
        value = float(x @ self.Q0 @ x + self.c0 @ x)
        grad = 2.0 * self.Q0 @ x + self.c0
        if self.b.shape[0]:
            g, grads = self.excess(x)
            g = np.maximum(g, 0.0)
            value += mu * float(g @ g)
            grad = grad + 2.0 * mu * (g @ grads)
        return value, grad

    def restoration(self, x: np.ndarray, shift: float) -> tuple[float, np.ndarray]:
        g, grads = self.excess(x, shift)
        g = np.maximum(g, 0.0)
        return float(g @ g), 2.0 * (g @ grads)


def _descend(fun, x: np.ndarray, lo: np.ndarray, hi: np.ndarray, max_iter: int) -> np.ndarray:
    """Projected gradient descent with Armijo backtracking."""
    value, grad = fun(x)
    t = 1.0
    for _ in range(max_iter):
        while True:
            x_new = np.clip(x - t * grad, lo, hi)
            value_new, grad_new = fun(x_new)
            if value_new <= value - 1e-4 * float(grad @ (x - x_new)):
                break
            t *= 0.5
            if t < 1e-14:
                return x
        if np.max(np.abs(x_new - x)) < 1e-12:
            return x_new
        x, value, grad = x_new, value_new, grad_new
        t = min(2.0 * t, 1e6)
    return x


def _polish(inst: QcqpInstance, penalty: _Penalty, x: np.ndarray,
            lo: np.ndarray, hi: np.ndarray, max_iter: int) -> Optional[np.ndarray]:
    mu = 10.0
    while True:
        x = _descend(lambda z: penalty.penalized(z, mu), x, lo, hi, max_iter)
        if max_violation(inst, x) <= FEAS_TOL or mu >= 1e8:
            break
        mu *= 10.0
    if max_violation(inst, x) > FEAS_TOL:
        x = _descend(lambda z: penalty.restoration(z, 5e-8), x, lo, hi, max_iter)
    return x if max_violation(inst, x) <= FEAS_TOL else None


def local_search(
    inst: QcqpInstance,
    start: np.ndarray,
    box: Optional[tuple[np.ndarray, np.ndarray]] = None,
    starts: Optional[int] = None,
    seed: Optional[int] = None,
) -> Optional[np.ndarray]:
    """
    Feasible point near `start`, or None.

    Projected gradient on f_0 plus mu * sum max(0, f_r - b_r)^2 with mu raised
    tenfold until feasible, then a restoration pass on the violations alone
    (right-hand sides tightened by 5e-8). Runs from `start` and from `starts`
    seeded perturbations of it; returns the best feasible result.
    """
    settings = get_settings()
    lo, hi = box if box is not None else (inst.lower, inst.upper)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    starts = settings.ls_starts if starts is None else starts
    rng = np.random.Generator(np.random.PCG64(settings.ls_seed if seed is None else seed))
    penalty = _Penalty(inst)

    origin = np.clip(np.asarray(start, dtype=float), lo, hi)
    candidates = [origin]
    for _ in range(starts):
        noise = settings.ls_perturbation * (hi - lo) * rng.standard_normal(inst.n)
        candidates.append(np.clip(origin + noise, lo, hi))

    best, best_value = None, np.inf
    for x0 in candidates:
        x = _polish(inst, penalty, x0, lo, hi, settings.ls_max_iter)
        if x is None:
            continue
        value = evaluate_objective(inst, x)
        if value < best_value:
            best, best_value = x, value
    return best


# ============================================================================
# BRANCHING
# ============================================================================

def branch(node: BnbNode, sol: RelaxationSolution, clamp: float = 0.2,
           eps_lift: float = LIFT_EPS) -> tuple[BnbNode, BnbNode]:
    """
    Split the box on the variable with the largest total lifting error.

    i* = argmax_i sum_j |Y_ij - x_i x_j| (smallest index on ties), split at
    x_i* clamped to [l + clamp w, u - clamp w]. Children inherit the parent
    pool re-derived for their own boxes.
    """
    mismatch = sol.point.mismatch()
    if float(mismatch.max()) <= eps_lift:
        raise BranchError("relaxation point is lifted-consistent; nothing to branch on")
    i = int(np.argmax(mismatch.sum(axis=1)))
    lo, hi = float(node.lower[i]), float(node.upper[i])
    width = hi - lo
    split = min(max(float(sol.point.x[i]), lo + clamp * width), hi - clamp * width)

    left_upper = node.upper.copy()
    left_upper[i] = split
    right_lower = node.lower.copy()
    right_lower[i] = split

    children = []
    for lower, upper in ((node.lower.copy(), left_upper), (right_lower, node.upper.copy())):
        children.append(BnbNode(
            lower=lower,
            upper=upper,
            bound=node.bound,
            depth=node.depth + 1,
            pool=node.pool.regenerate(lower, upper),
            dual=node.dual,
        ))
    return children[0], children[1]


# ============================================================================
# SOLVER
# ============================================================================

class BranchAndBound:
    """Best-first spatial branch-and-bound driver for one instance."""

    def __init__(self, inst: QcqpInstance, config: Optional[BnbConfig] = None):
        self.inst = inst
        self.config = config or BnbConfig.from_settings()
        self.p = self.config.p if self.config.p is not None else default_p(inst.n)
        self.incumbent: Optional[np.ndarray] = None
        self.value = np.inf
        self.nodes = 0
        self.closed_bound = np.inf
        self.unresolved = False
        self._heap: list = []
        self._order = count()
        self._started = 0.0
        self._last_progress = 0.0

    # ------------------------------------------------------------------ incumbent

    def offer(self, x: Optional[np.ndarray]) -> bool:
        """Take-min incumbent update; x must be feasible."""
        if x is None or max_violation(self.inst, x) > FEAS_TOL:
            return False
        value = evaluate_objective(self.inst, x)
        if value < self.value:
            self.incumbent, self.value = np.array(x, dtype=float), value
            logger.debug(f"New incumbent {value:.8f}")
            return True
        return False

    def prunable(self, bound: float) -> bool:
        if not np.isfinite(self.value):
            return bound == np.inf
        return bound >= self.value - self.config.eps_rel * max(1.0, abs(self.value))

    # ------------------------------------------------------------------ nodes

    def evaluate(self, node: BnbNode) -> BnbNode:
        """Relaxation of one node; a pure function of (instance, node, incumbent value)."""
        cfg = self.config
        box = (node.lower, node.upper)
        S0: Optional[SymMatrix] = None
        dual_bound = -np.inf
        if cfg.use_dual and node.depth % max(cfg.refresh_depth, 1) == 0:
            iters = cfg.dual_max_iter if node.depth == 0 else cfg.dual_refresh_iter
            state = run_heuristic(
                self.inst,
                box,
                DualConfig.from_settings(p=self.p, max_iter=iters, triangles=cfg.use_triangles),
                incumbent=self.value if np.isfinite(self.value) else None,
                warm=node.dual,
            )
            node.dual = state
            dual_bound = state.best_bound
            S0 = assemble_S0(self.inst, state)

        sol = cutting_plane_rounds(
            self.inst, box, node.pool, cfg.cut_rounds, cfg.node_cut_cap, cfg.use_triangles, S0
        )
        node.solution = sol
        node.bound = max(node.bound, sol.bound, dual_bound)
        return node

    def _admit(self, node: BnbNode) -> None:
        """Prune, close as a leaf, or push an evaluated node."""
        sol = node.solution
        if sol.infeasible:
            return
        if self.prunable(node.bound):
            self.closed_bound = min(self.closed_bound, node.bound)
            return
        if float(sol.point.mismatch().max()) <= LIFT_EPS:
            x = sol.point.x
            if not self.offer(x):
                self.offer(local_search(self.inst, x, (self.inst.lower, self.inst.upper)))
            if not self.prunable(node.bound):
                self.unresolved = True
            self.closed_bound = min(self.closed_bound, node.bound)
            return
        heapq.heappush(self._heap, (node.bound, -node.depth, next(self._order), node))

    def _progress(self, force: bool = False) -> None:
        now = time.monotonic()
        if not force and now - self._last_progress < self.config.progress_interval:
            return
        self._last_progress = now
        bound = self.best_bound()
        logger.info(
            f"nodes={self.nodes} open={len(self._heap)} bound={bound:.8g} "
            f"incumbent={self.value:.8g} gap={relative_gap(self.value, bound):.3e} "
            f"elapsed={now - self._started:.1f}s"
        )

    def best_bound(self) -> float:
        open_min = self._heap[0][0] if self._heap else np.inf
        return min(open_min, self.closed_bound, self.value)

    # ------------------------------------------------------------------ driver

    def solve(self) -> GlobalResult:
        cfg = self.config
        inst = self.inst
        self._started = self._last_progress = time.monotonic()
        logger.info(f"Solving {inst} (triangles={'on' if cfg.use_triangles else 'off'}, p={self.p})")

        self.offer(inst.feasible_point())
        self.offer(local_search(inst, (inst.lower + inst.upper) / 2.0))

        root = BnbNode(inst.lower.copy(), inst.upper.copy(), -np.inf, 0,
                       CutPool.mccormick(inst.lower, inst.upper))
        self.evaluate(root)
        self.nodes = 1
        root_bound = root.bound if not root.solution.infeasible else np.inf
        if not root.solution.infeasible:
            self.offer(local_search(inst, root.solution.point.x))
        root_gap = relative_gap(self.value, root_bound)
        self._admit(root)

        status = None
        executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        try:
            while self._heap:
                if time.monotonic() - self._started > cfg.time_limit:
                    status = GlobalStatus.TIME_LIMIT
                    break
                if self.nodes >= cfg.node_limit:
                    status = GlobalStatus.GAP_LIMIT
                    break

                batch = []
                while self._heap and len(batch) < max(cfg.threads, 1):
                    bound, _, _, node = heapq.heappop(self._heap)
                    if self.prunable(bound):
                        self.closed_bound = min(self.closed_bound, bound)
                        continue
                    batch.append(node)
                if not batch:
                    continue

                children = []
                for node in batch:
                    self.nodes += 1
                    children.extend(branch(node, node.solution, cfg.branch_clamp))
                    if cfg.local_search_period and self.nodes % cfg.local_search_period == 0:
                        self.offer(local_search(inst, node.solution.point.x))

                if executor is not None:
                    evaluated = list(executor.map(self.evaluate, children))
                else:
                    evaluated = [self.evaluate(child) for child in children]
                for child in evaluated:
                    self._admit(child)
                self._progress()
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

        best_bound = self.best_bound()
        if status is None:
            if not np.isfinite(self.value):
                status = GlobalStatus.GAP_LIMIT if self.unresolved else GlobalStatus.INFEASIBLE
            elif relative_gap(self.value, best_bound) <= cfg.eps_rel:
                status = GlobalStatus.OPTIMAL
            else:
                status = GlobalStatus.GAP_LIMIT

        elapsed = time.monotonic() - self._started
        self._progress(force=True)
        logger.info(f"Finished {inst.name}: {status.value}, value={self.value:.8g}, "
                    f"bound={best_bound:.8g}, nodes={self.nodes}, {elapsed:.2f}s")
        return GlobalResult(
            status=status,
            incumbent=self.incumbent,
            value=self.value,
            best_bound=best_bound,
            nodes=self.nodes,
            root_gap=root_gap,
            root_bound=root_bound,
            elapsed=elapsed,
        )


def solve(inst: QcqpInstance, config: Optional[BnbConfig] = None) -> GlobalResult:
    return BranchAndBound(inst, config).solve()
