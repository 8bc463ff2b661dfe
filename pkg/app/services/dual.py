"""
Lagrangian spectral dual of the Shor + RLT + Triangle relaxation.

Every linear constraint of the lifted problem is dualized: the quadratic
constraints (alpha), the working-set cuts (phi for envelopes, delta for
triangles), the diagonal envelopes of each X_ii (phi1..phi3) and the corner
Z_00 = 1 (rho). What is left is

    min  <A(rho), Z>   over  Z >= 0 (PSD),  tr Z <= tau

whose value is tau * min(0, lambda_min(A(rho))), with
A(rho) = [[rho, d^T/2], [d/2, S]]. tau = 1 + sum_i max(l_i^2, u_i^2) keeps
every rank-one (1, x, x x^T) of the box inside the trace ball, so any
nonnegative multipliers give a valid lower bound. rho is optimized exactly
through the secular equation of the bordered matrix.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.services.cuts import Cut, CutKind, CutPool, cut_count, separate
from app.services.linalg import SymMatrix, eig_symmetric
from app.services.qcqp import LiftedPoint, QcqpInstance

logger = logging.getLogger(__name__)


class DualError(Exception):
    """Raised when a multiplier refers to a cut outside the working set."""
    pass


def trace_cap(lower: np.ndarray, upper: np.ndarray) -> float:
    return 1.0 + float(np.sum(np.maximum(lower ** 2, upper ** 2)))


def default_p(n: int, fraction: Optional[float] = None) -> int:
    """Default working-set cap: ceil(fraction * |C u G|)."""
    if fraction is None:
        fraction = get_settings().p_fraction
    return int(math.ceil(fraction * cut_count(n)))


# ============================================================================
# STATE
# ============================================================================

@dataclass
class DualState:
    """Multipliers of the dual, all >= 0, plus the working cut set they refer to."""

    alpha: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    working_set: CutPool
    phi: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)
    rho: float = 0.0
    best_bound: float = -np.inf
    iterations: int = 0
    history: list = field(default_factory=list)
    # keys of every cut that entered the working set during the run
    admitted: set = field(default_factory=set)

    @classmethod
    def initial(cls, inst: QcqpInstance, lower=None, upper=None) -> "DualState":
        lower = inst.lower if lower is None else np.asarray(lower, dtype=float)
        upper = inst.upper if upper is None else np.asarray(upper, dtype=float)
        n = inst.n
        return cls(
            alpha=np.zeros(inst.m),
            phi1=np.zeros(n),
            phi2=np.zeros(n),
            phi3=np.zeros(n),
            working_set=CutPool(lower.copy(), upper.copy()),
        )

    @property
    def lower(self) -> np.ndarray:
        return self.working_set.lower

    @property
    def upper(self) -> np.ndarray:
        return self.working_set.upper

    def multiplier(self, cut: Cut) -> float:
        table = self.phi if cut.kind is CutKind.MCCORMICK else self.delta
        return float(table.get(cut.key, 0.0))

    def set_multiplier(self, cut: Cut, value: float) -> None:
        if cut.key not in self.working_set:
            raise DualError(f"cut {cut.describe()} is not in the working set")
        table = self.phi if cut.kind is CutKind.MCCORMICK else self.delta
        table[cut.key] = float(value)

    def cut_multipliers(self) -> tuple[list[Cut], np.ndarray]:
        """Working-set cuts in pool order with their multipliers."""
        known = self.working_set.keys()
        for key in list(self.phi) + list(self.delta):
            if key not in known:
                raise DualError(f"multiplier keyed to unknown cut {key}")
        cuts = list(self.working_set)
        return cuts, np.array([self.multiplier(cut) for cut in cuts])

    def copy(self) -> "DualState":
        return DualState(
            alpha=self.alpha.copy(),
            phi1=self.phi1.copy(),
            phi2=self.phi2.copy(),
            phi3=self.phi3.copy(),
            working_set=self.working_set.copy(),
            phi=dict(self.phi),
            delta=dict(self.delta),
            rho=self.rho,
            best_bound=self.best_bound,
            iterations=self.iterations,
            history=list(self.history),
            admitted=set(self.admitted),
        )

    def for_box(self, lower, upper) -> "DualState":
        """Warm start for a sub-box: same multipliers, cuts re-derived for the new bounds."""
        state = self.copy()
        state.working_set = self.working_set.regenerate(lower, upper)
        state.best_bound = -np.inf
        state.iterations = 0
        state.history = []
        state.admitted = set()
        return state


class _CutBlock:
    """Flattened coefficients of a list of cuts, for vectorized accumulation."""

    def __init__(self, cuts: list[Cut]):
        y_id, y_p, y_q, y_a, x_id, x_i, x_a = [], [], [], [], [], [], []
        for c, cut in enumerate(cuts):
            for (p, q), a in zip(cut.pairs, cut.y):
                y_id.append(c)
                y_p.append(p)
                y_q.append(q)
                y_a.append(a)
            for i, a in zip(cut.xs, cut.xv):
                x_id.append(c)
                x_i.append(i)
                x_a.append(a)
        self.size = len(cuts)
        self.y_id = np.array(y_id, dtype=int)
        self.y_p = np.array(y_p, dtype=int)
        self.y_q = np.array(y_q, dtype=int)
        self.y_a = np.array(y_a, dtype=float)
        self.x_id = np.array(x_id, dtype=int)
        self.x_i = np.array(x_i, dtype=int)
        self.x_a = np.array(x_a, dtype=float)
        self.const = np.array([cut.const for cut in cuts], dtype=float)

    def accumulate(self, S: np.ndarray, d: np.ndarray, mu: np.ndarray) -> float:
        if self.size == 0:
            return 0.0
        half = mu[self.y_id] * self.y_a / 2.0
        np.add.at(S, (self.y_p, self.y_q), half)
        np.add.at(S, (self.y_q, self.y_p), half)
        np.add.at(d, self.x_i, mu[self.x_id] * self.x_a)
        return float(mu @ self.const)

    def values(self, x: np.ndarray, X: np.ndarray) -> np.ndarray:
        vals = self.const.copy()
        if self.size:
            np.add.at(vals, self.y_id, self.y_a * X[self.y_p, self.y_q])
            np.add.at(vals, self.x_id, self.x_a * x[self.x_i])
        return vals


# ============================================================================
# LAGRANGIAN
# ============================================================================

def lagrangian_terms(
    inst: QcqpInstance,
    state: DualState,
    block: Optional[_CutBlock] = None,
    mu: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """
    (S, d, const) of the Lagrangian <S, X> + d^T x + const.

    S = Q_0 + sum alpha_r Q_r + sum mu_c M_c + diag(phi1 - phi2 - phi3)
    """
    if block is None or mu is None:
        cuts, mu = state.cut_multipliers()
        block = _CutBlock(cuts)
    lower, upper = state.lower, state.upper
    S = inst.Q[0].copy()
    d = inst.c[0].copy()
    const = 0.0
    for r in range(inst.m):
        if state.alpha[r] != 0.0:
            S += state.alpha[r] * inst.Q[r + 1]
            d += state.alpha[r] * inst.c[r + 1]
    const -= float(state.alpha @ inst.b)
    const += block.accumulate(S, d, mu)
    S[np.diag_indices(inst.n)] += state.phi1 - state.phi2 - state.phi3
    d += -state.phi1 * (upper + lower) + 2.0 * state.phi2 * upper + 2.0 * state.phi3 * lower
    const += float(np.sum(state.phi1 * upper * lower - state.phi2 * upper ** 2 - state.phi3 * lower ** 2))
    return S, d, const


def s_matrix(inst: QcqpInstance, state: DualState) -> SymMatrix:
    S, _, _ = lagrangian_terms(inst, state)
    return SymMatrix.from_dense(S)


def aggregate_matrix(inst: QcqpInstance, state: DualState) -> SymMatrix:
    """Bordered matrix [[rho, d^T/2], [d/2, S]] of order n + 1."""
    S, d, _ = lagrangian_terms(inst, state)
    n = inst.n
    out = np.zeros((n + 1, n + 1))
    out[0, 0] = state.rho
    out[0, 1:] = d / 2.0
    out[1:, 0] = d / 2.0
    out[1:, 1:] = S
    return SymMatrix.from_dense(out)


@dataclass
class DualEvaluation:
    """Dual function value and the inner minimizer it came from."""

    bound: float
    x: np.ndarray
    X: np.ndarray
    rho: float
    lambda_min: float
    subgradient: dict


def _spectral_search(sigma: np.ndarray, w: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """
    Maximize H(lam) = (tau-1) lam - sum w_k^2 / (sigma_k - lam) over lam <= min(0, sigma_1).

    H is concave on that range and H' is decreasing, so the maximizer is the
    cap itself or the root of H' found by bisection.
    """
    t1 = tau - 1.0
    scale = max(1.0, float(np.max(np.abs(sigma))), float(np.max(np.abs(w))) if w.size else 1.0)
    active = w ** 2 > 1e-26 * scale ** 2
    ws, ss = w[active] ** 2, sigma[active]
    cap = min(0.0, float(sigma[0]))

    def slope(lam: float) -> float:
        return t1 - float(np.sum(ws / (ss - lam) ** 2))

    pole_at_cap = bool(np.any(ss - cap <= 0.0))
    if not pole_at_cap and slope(cap) >= 0.0:
        return cap, active

    lo = min(float(sigma[0]) - math.sqrt(float(ws.sum()) / t1) - 1.0, cap - 1.0)
    hi = cap
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slope(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo, active


def evaluate(inst: QcqpInstance, state: DualState, tau: Optional[float] = None,
             block: Optional[_CutBlock] = None, mu: Optional[np.ndarray] = None) -> DualEvaluation:
    """
    Dual function at the state's multipliers, with rho optimized exactly.

    Args:
        inst: Instance
        state: Multipliers (rho is ignored and re-optimized)
        tau: Trace cap, defaults to 1 + sum max(l^2, u^2) of the state's box

    Returns:
        DualEvaluation with a valid lower bound and the value of every
        dualized constraint at the inner minimizer (a subgradient)
    """
    if tau is None:
        tau = trace_cap(state.lower, state.upper)
    if block is None or mu is None:
        cuts, mu = state.cut_multipliers()
        block = _CutBlock(cuts)
    S, d, const = lagrangian_terms(inst, state, block, mu)
    sigma, V = eig_symmetric(S)
    w = V.T @ (d / 2.0)

    lam, active = _spectral_search(sigma, w, tau)
    denom = sigma[active] - lam
    coeffs = w[active] / denom
    x = -V[:, active] @ coeffs
    X = np.outer(x, x)
    rho = lam + float(np.sum(w[active] ** 2 / denom))
    # lam pinned at a coupling-free sigma_1 < 0: spend the remaining trace on v_1
    if lam < 0.0 and lam >= sigma[0] and not active[0]:
        spare = max(0.0, tau - 1.0 - float(x @ x))
        X = X + spare * np.outer(V[:, 0], V[:, 0])

    bound = const + (tau - 1.0) * lam - float(np.sum(w[active] ** 2 / denom))

    lower, upper = state.lower, state.upper
    diag = np.diag(X)
    subgradient = {
        "alpha": np.array([
            float(np.sum(inst.Q[r + 1] * X) + inst.c[r + 1] @ x - inst.b[r]) for r in range(inst.m)
        ]),
        "phi1": diag - (upper + lower) * x + upper * lower,
        "phi2": -diag + 2.0 * upper * x - upper ** 2,
        "phi3": -diag + 2.0 * lower * x - lower ** 2,
        "cuts": block.values(x, X),
    }
    return DualEvaluation(bound=float(bound), x=x, X=X, rho=float(rho),
                          lambda_min=float(lam), subgradient=subgradient)


def lagrangian_value(inst: QcqpInstance, state: DualState, x: np.ndarray, X: np.ndarray) -> float:
    """<S, X> + d^T x + const at a given (x, X)."""
    S, d, const = lagrangian_terms(inst, state)
    return float(np.sum(S * X) + d @ x + const)


# ============================================================================
# SUBGRADIENT ASCENT
# ============================================================================

@dataclass
class DualConfig:
    max_iter: int = 500
    time_limit: float = 60.0
    p: int = 0
    sep_period: int = 10
    drop_threshold: float = 1e-8
    step_a: float = 1.0
    step_b: float = 10.0
    agility_patience: int = 20
    triangles: bool = True

    @classmethod
    def from_settings(cls, p: int, max_iter: Optional[int] = None,
                      time_limit: Optional[float] = None, triangles: bool = True) -> "DualConfig":
        s = get_settings()
        return cls(
            max_iter=s.dual_max_iter if max_iter is None else max_iter,
            time_limit=s.dual_time_limit if time_limit is None else time_limit,
            p=p,
            sep_period=s.sep_period,
            drop_threshold=s.drop_threshold,
            step_a=s.step_a,
            step_b=s.step_b,
            agility_patience=s.agility_patience,
            triangles=triangles,
        )


class _Vector:
    """Flat view [alpha, phi1, phi2, phi3, mu] of a state's multipliers."""

    def __init__(self, state: DualState):
        self.m = state.alpha.shape[0]
        self.n = state.phi1.shape[0]
        self.cuts, mu = state.cut_multipliers()
        self.block = _CutBlock(self.cuts)
        self.values = np.concatenate([state.alpha, state.phi1, state.phi2, state.phi3, mu])

    @property
    def mu(self) -> np.ndarray:
        return self.values[self.m + 3 * self.n:]

    def write(self, state: DualState) -> None:
        m, n = self.m, self.n
        state.alpha = self.values[:m].copy()
        state.phi1 = self.values[m:m + n].copy()
        state.phi2 = self.values[m + n:m + 2 * n].copy()
        state.phi3 = self.values[m + 2 * n:m + 3 * n].copy()
        state.phi, state.delta = {}, {}
        for cut, value in zip(self.cuts, self.mu):
            state.set_multiplier(cut, value)

    @staticmethod
    def gradient(ev: DualEvaluation) -> np.ndarray:
        g = ev.subgradient
        return np.concatenate([g["alpha"], g["phi1"], g["phi2"], g["phi3"], g["cuts"]])


def repair_psd(inst: QcqpInstance, state: DualState) -> float:
    """
    Raise phi1 uniformly so S becomes PSD.

    Returns the shift applied (0 when S already was PSD). Any nonnegative
    phi1 keeps the dual value a valid bound.
    """
    sigma, _ = eig_symmetric(lagrangian_terms(inst, state)[0])
    shift = max(0.0, -float(sigma[0]))
    if shift > 0.0:
        state.phi1 = state.phi1 + shift
        logger.debug(f"PSD repair: phi1 raised by {shift:.3e}")
    return shift


def run_heuristic(
    inst: QcqpInstance,
    box: Optional[tuple[np.ndarray, np.ndarray]] = None,
    config: Optional[DualConfig] = None,
    incumbent: Optional[float] = None,
    warm: Optional[DualState] = None,
) -> DualState:
    """
    Projected subgradient ascent on the dual with a dynamic working set.

    Every `sep_period` iterations (and after the first evaluation) multipliers
    below `drop_threshold` leave the working set and up to p - |working set|
    violated cuts at the averaged inner minimizer enter it with multiplier 0.
    With an incumbent value the step is Polyak's toward it, scaled by an
    agility factor halved after `agility_patience` non-improving iterations;
    otherwise the normalized subgradient moves by a / (k + b).

    Args:
        inst: Instance
        box: (lower, upper), defaults to the instance box
        config: Iteration caps, p and step parameters
        incumbent: Best known feasible value (Polyak target)
        warm: State to start from (its cuts are re-derived for `box`)

    Returns:
        DualState holding the best multipliers found (PSD-repaired), best_bound
        and the bound history
    """
    config = config or DualConfig.from_settings(p=default_p(inst.n))
    lower, upper = box if box is not None else (inst.lower, inst.upper)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    tau = trace_cap(lower, upper)

    state = warm.for_box(lower, upper) if warm is not None else DualState.initial(inst, lower, upper)
    if config.p <= 0:
        state.working_set = CutPool(lower.copy(), upper.copy())
        state.phi, state.delta = {}, {}
    vec = _Vector(state)

    best_bound = -np.inf
    best_state = state.copy()
    stale = 0
    agility = 2.0
    x_sum = np.zeros(inst.n)
    X_sum = np.zeros((inst.n, inst.n))
    averaged = 0
    started = time.monotonic()
    k = 0

    for k in range(config.max_iter):
        if time.monotonic() - started > config.time_limit:
            logger.info(f"Dual heuristic hit its time limit after {k} iterations")
            break

        vec.write(state)
        ev = evaluate(inst, state, tau, vec.block, vec.mu)
        state.rho = ev.rho
        if ev.bound > best_bound:
            if ev.bound > best_bound + 1e-12 * max(1.0, abs(best_bound) if np.isfinite(best_bound) else 1.0):
                stale = 0
            best_bound = ev.bound
            best_state = state.copy()
        else:
            stale += 1
        state.history.append(best_bound)
        logger.debug(f"{k}\t{ev.bound:.8f}\t{len(state.working_set)}\t{ev.lambda_min:.3e}")

        x_sum += ev.x
        X_sum += ev.X
        averaged += 1

        if config.p > 0 and k % config.sep_period == 0:
            keep = [c for c, value in zip(vec.cuts, vec.mu) if value >= config.drop_threshold]
            dropped = len(vec.cuts) - len(keep)
            pool = CutPool(lower.copy(), upper.copy())
            pool.extend(keep)
            point = LiftedPoint(x_sum / averaged, SymMatrix.from_dense(X_sum / averaged))
            cap = config.p - len(pool)
            added = pool.extend(separate(point, lower, upper, cap, exclude=pool, triangles=config.triangles))
            kept_values = {c.key: v for c, v in zip(vec.cuts, vec.mu)}
            state.working_set = pool
            state.admitted.update(pool.keys())
            state.phi, state.delta = {}, {}
            for cut in pool:
                state.set_multiplier(cut, kept_values.get(cut.key, 0.0))
            vec = _Vector(state)
            x_sum[:] = 0.0
            X_sum[:] = 0.0
            averaged = 0
            if dropped or added:
                logger.debug(f"Working set: -{dropped} +{added} -> {len(pool)}")
            ev_grad = evaluate(inst, state, tau, vec.block, vec.mu)
        else:
            ev_grad = ev

        g = _Vector.gradient(ev_grad)
        g = np.where((vec.values <= 0.0) & (g < 0.0), 0.0, g)
        norm2 = float(g @ g)
        if norm2 <= 1e-18:
            logger.debug(f"Dual heuristic: zero projected subgradient at iteration {k}")
            break

        if stale >= config.agility_patience:
            agility /= 2.0
            stale = 0
        if incumbent is not None and np.isfinite(incumbent):
            gap = incumbent - ev_grad.bound
            if gap <= 1e-9 * max(1.0, abs(incumbent)):
                break
            step = agility * gap / norm2
        else:
            step = config.step_a / (k + config.step_b) / math.sqrt(norm2)
        vec.values = np.maximum(vec.values + step * g, 0.0)

    best_state.best_bound = best_bound
    best_state.iterations = k + 1
    best_state.history = state.history
    best_state.admitted = state.admitted
    repair_psd(inst, best_state)
    repaired = evaluate(inst, best_state, tau)
    best_state.rho = repaired.rho
    best_state.best_bound = max(best_bound, repaired.bound)
    logger.info(
        f"Dual heuristic: bound {best_state.best_bound:.6f} after {best_state.iterations} iterations, "
        f"{len(best_state.working_set)} cuts in working set"
    )
    return best_state
