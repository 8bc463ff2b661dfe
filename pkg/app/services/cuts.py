"""
McCormick envelopes and General Triangle inequalities in the lifted (x, Y) space.

Every cut is stored as  sum_pq a_pq Y_pq + sum_i v_i x_i + l <= 0  with one
coefficient per lifted variable Y_pq (p <= q). Triangle inequalities are not
transcribed: each candidate comes out of a signed triple product

    (+-(x_i - b_i)) (+-(x_j - b_j)) (+-(x_k - b_k)) >= 0,    b in {l, u}

where one cubic term is bounded by a McCormick envelope of a bilinear term and
the remaining products are lifted. Eight sign patterns (families) times three
pulled-out variables times two envelope corners give 48 candidates; twelve of
them cut points of the McCormick polytope, the others are implied by it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from app.core.constants import VIOLATION_TOL
from app.services.linalg import SymMatrix, packed_index
from app.services.qcqp import LiftedPoint

logger = logging.getLogger(__name__)


class CutError(Exception):
    """Raised on inverted bounds or unknown cut identities."""
    pass


class CutKind(str, Enum):
    MCCORMICK = "mccormick"
    TRIANGLE = "triangle"
    CANDIDATE = "candidate"


# Factor of each family over (i, j, k): 'u' is (u_a - x_a), 'l' is (x_a - l_a)
FAMILY_PATTERNS = ("uuu", "uul", "ulu", "luu", "ull", "lul", "llu", "lll")

# Pairs of a triple, in the order (i,j), (i,k), (j,k)
TRIPLE_PAIRS = ((0, 1), (0, 2), (1, 2))
_PAIR_SLOT = {pair: slot for slot, pair in enumerate(TRIPLE_PAIRS)}

# Classical 0-1 triangle forms, coefficients on (x_i, x_j, x_k, Y_ij, Y_ik, Y_jk, const)
PADBERG_FORMS = {
    "0": (1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0),
    "i": (-1.0, 0.0, 0.0, 1.0, 1.0, -1.0, 0.0),
    "j": (0.0, -1.0, 0.0, 1.0, -1.0, 1.0, 0.0),
    "k": (0.0, 0.0, -1.0, -1.0, 1.0, 1.0, 0.0),
}


# ============================================================================
# CUT OBJECTS
# ============================================================================

@dataclass(frozen=True)
class Cut:
    """
    One linear inequality <M, Y> + v^T x + l <= 0.

    `pairs`/`y` hold the coefficient of each lifted variable Y_pq, `xs`/`xv`
    the coefficients on x. For candidates, t = 6 (family - 1) + variant.
    """

    kind: CutKind
    indices: tuple[int, ...]
    t: int
    pairs: tuple[tuple[int, int], ...]
    y: tuple[float, ...]
    xs: tuple[int, ...]
    xv: tuple[float, ...]
    const: float

    @property
    def key(self) -> tuple[str, tuple[int, ...], int]:
        return (self.kind.value, self.indices, self.t)

    @property
    def family(self) -> Optional[int]:
        if self.kind is CutKind.CANDIDATE:
            return (self.t - 1) // 6 + 1
        if self.kind is CutKind.TRIANGLE:
            return TRIANGLE_VARIANTS[self.t - 1][0]
        return None

    @property
    def variant(self) -> Optional[int]:
        if self.kind is CutKind.CANDIDATE:
            return (self.t - 1) % 6 + 1
        if self.kind is CutKind.TRIANGLE:
            return TRIANGLE_VARIANTS[self.t - 1][1]
        return None

    @property
    def l(self) -> float:
        return self.const

    def M(self, n: int) -> SymMatrix:
        """Coefficient matrix: M_pq = a_pq / 2 off the diagonal, a_pp on it."""
        out = SymMatrix(n)
        for (p, q), a in zip(self.pairs, self.y):
            out[p, q] = out[p, q] + (a if p == q else a / 2.0)
        return out

    def v(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for i, a in zip(self.xs, self.xv):
            out[i] += a
        return out

    def lp_row(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and coefficients over z = [x, packed Y]."""
        cols = list(self.xs) + [n + packed_index(n, p, q) for p, q in self.pairs]
        return np.array(cols, dtype=int), np.array(self.xv + self.y, dtype=float)

    def lhs(self, x: np.ndarray, Y: SymMatrix) -> float:
        total = self.const
        for i, a in zip(self.xs, self.xv):
            total += a * x[i]
        for (p, q), a in zip(self.pairs, self.y):
            total += a * Y[p, q]
        return float(total)

    def describe(self) -> str:
        label = "-".join(str(i) for i in self.indices)
        return f"{self.kind.value}[{label}]#{self.t}"


def violation(cut: Cut, p: LiftedPoint) -> float:
    """<M, Y> + v^T x + l at p; positive means violated."""
    return cut.lhs(p.x, p.Y)


# ============================================================================
# MCCORMICK
# ============================================================================

def _check_box(lower: np.ndarray, upper: np.ndarray, indices: Iterable[int]) -> None:
    for i in indices:
        if not lower[i] < upper[i]:
            raise CutError(f"bounds inverted at index {i}: [{lower[i]}, {upper[i]}]")


def _envelope(kind_t: int, i: int, j: int, gi: float, gj: float, over: bool) -> Cut:
    """Tangent plane of x_i x_j at corner (gi, gj): Y <= E (over) or Y >= E (under)."""
    sign = 1.0 if over else -1.0
    const = sign * gi * gj
    if i == j:
        xs, xv = (i,), (-sign * (gi + gj),)
    else:
        xs, xv = (i, j), (-sign * gj, -sign * gi)
    return Cut(CutKind.MCCORMICK, (i, j), kind_t, ((i, j),), (sign,), xs, xv, const)


def mccormick_cuts(lower: np.ndarray, upper: np.ndarray, i: int, j: int) -> list[Cut]:
    """
    McCormick envelopes of Y_ij over the box.

    mc1: Y <= u_j x_i + l_i x_j - l_i u_j     mc3: Y >= u_j x_i + u_i x_j - u_i u_j
    mc2: Y <= l_j x_i + u_i x_j - u_i l_j     mc4: Y >= l_j x_i + l_i x_j - l_i l_j

    For i == j, mc1 and mc2 coincide and only mc1 is returned.
    """
    if i > j:
        i, j = j, i
    _check_box(lower, upper, (i, j))
    li, ui, lj, uj = float(lower[i]), float(upper[i]), float(lower[j]), float(upper[j])
    cuts = [
        _envelope(1, i, j, li, uj, over=True),
        _envelope(2, i, j, ui, lj, over=True),
        _envelope(3, i, j, ui, uj, over=False),
        _envelope(4, i, j, li, lj, over=False),
    ]
    if i == j:
        del cuts[1]
    return cuts


def all_mccormick_cuts(lower: np.ndarray, upper: np.ndarray) -> list[Cut]:
    """Envelopes for every pair i <= j, diagonal included."""
    n = len(lower)
    out: list[Cut] = []
    for i in range(n):
        for j in range(i, n):
            out.extend(mccormick_cuts(lower, upper, i, j))
    return out


# ============================================================================
# TRIPLE-PRODUCT DERIVATION
# ============================================================================

def _variant_parts(variant: int) -> tuple[int, int]:
    """(position of the pulled-out variable, envelope corner) of a variant 1..6."""
    return (variant - 1) // 2, (variant - 1) % 2


def is_cutting_variant(family: int, variant: int) -> bool:
    """
    A candidate cuts the McCormick polytope iff its pulled-out variable has an
    upper factor (u_a - x_a) and the envelope corner sits on the opposite bound
    of both remaining factors.
    """
    pattern = FAMILY_PATTERNS[family - 1]
    pos, corner = _variant_parts(variant)
    if pattern[pos] != "u":
        return False
    b, c = [q for q in range(3) if q != pos]
    sigma = -1 if pattern.count("u") % 2 else 1
    # under-envelopes use corners (l,l)/(u,u), over-envelopes (l,u)/(u,l)
    gb_upper = corner == 1
    gc_upper = (corner == 1) if sigma < 0 else (corner == 0)
    return gb_upper == (pattern[b] == "l") and gc_upper == (pattern[c] == "l")


@lru_cache(maxsize=None)
def _triangle_variants() -> tuple[tuple[int, int], ...]:
    return tuple(
        (family, variant)
        for family in range(1, 9)
        for variant in range(1, 7)
        if is_cutting_variant(family, variant)
    )


TRIANGLE_VARIANTS = _triangle_variants()


def _triple_coefficients(
    family: int,
    variant: int,
    lo: np.ndarray,
    up: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Coefficients of one candidate for a batch of triples.

    Args:
        family: 1..8
        variant: 1..6
        lo, up: (T, 3) bounds of (x_i, x_j, x_k) for T triples

    Returns:
        (xcoef (T, 3), ycoef (T, 3) on Y_ij/Y_ik/Y_jk, const (T,))
    """
    pattern = FAMILY_PATTERNS[family - 1]
    pos, corner = _variant_parts(variant)
    sigma = -1.0 if pattern.count("u") % 2 else 1.0
    beta = [up[:, q] if pattern[q] == "u" else lo[:, q] for q in range(3)]
    b, c = [q for q in range(3) if q != pos]

    if sigma < 0:
        gb, gc = (lo[:, b], lo[:, c]) if corner == 0 else (up[:, b], up[:, c])
    else:
        gb, gc = (lo[:, b], up[:, c]) if corner == 0 else (up[:, b], lo[:, c])

    size = lo.shape[0]
    xcoef = np.zeros((size, 3))
    ycoef = np.zeros((size, 3))

    # x_a * E(x_b, x_c), E the tangent plane of x_b x_c at (gb, gc)
    ycoef[:, _PAIR_SLOT[tuple(sorted((pos, b)))]] += gc
    ycoef[:, _PAIR_SLOT[tuple(sorted((pos, c)))]] += gb
    xcoef[:, pos] -= gb * gc

    # remainder of prod (x - beta) once the cubic term is removed
    ycoef[:, 0] -= beta[2]
    ycoef[:, 1] -= beta[1]
    ycoef[:, 2] -= beta[0]
    xcoef[:, 0] += beta[1] * beta[2]
    xcoef[:, 1] += beta[0] * beta[2]
    xcoef[:, 2] += beta[0] * beta[1]
    const = -beta[0] * beta[1] * beta[2]

    return -sigma * xcoef, -sigma * ycoef, -sigma * const


def _triple_cut(kind: CutKind, t: int, triple: tuple[int, int, int],
                xcoef: np.ndarray, ycoef: np.ndarray, const: float) -> Cut:
    i, j, k = triple
    return Cut(
        kind=kind,
        indices=triple,
        t=t,
        pairs=((i, j), (i, k), (j, k)),
        y=tuple(float(a) for a in ycoef),
        xs=triple,
        xv=tuple(float(a) for a in xcoef),
        const=float(const),
    )


def _triple_bounds(lower: np.ndarray, upper: np.ndarray, i: int, j: int, k: int):
    if not i < j < k:
        raise CutError(f"triple must satisfy i < j < k, got ({i}, {j}, {k})")
    _check_box(lower, upper, (i, j, k))
    idx = [i, j, k]
    lo = np.asarray(lower, dtype=float)[idx].reshape(1, 3)
    up = np.asarray(upper, dtype=float)[idx].reshape(1, 3)
    return lo, up


def candidate_cut(lower, upper, i: int, j: int, k: int, family: int, variant: int) -> Cut:
    lo, up = _triple_bounds(lower, upper, i, j, k)
    xcoef, ycoef, const = _triple_coefficients(family, variant, lo, up)
    t = 6 * (family - 1) + variant
    return _triple_cut(CutKind.CANDIDATE, t, (i, j, k), xcoef[0], ycoef[0], const[0])


def candidate_cuts(lower, upper, i: int, j: int, k: int) -> list[Cut]:
    """All 48 triple-product candidates, ordered by (family, variant)."""
    return [
        candidate_cut(lower, upper, i, j, k, family, variant)
        for family in range(1, 9)
        for variant in range(1, 7)
    ]


def triangle_cut(lower, upper, i: int, j: int, k: int, t: int) -> Cut:
    if not 1 <= t <= 12:
        raise CutError(f"triangle index must lie in 1..12, got {t}")
    lo, up = _triple_bounds(lower, upper, i, j, k)
    family, variant = TRIANGLE_VARIANTS[t - 1]
    xcoef, ycoef, const = _triple_coefficients(family, variant, lo, up)
    return _triple_cut(CutKind.TRIANGLE, t, (i, j, k), xcoef[0], ycoef[0], const[0])


def triangle_cuts(lower, upper, i: int, j: int, k: int) -> list[Cut]:
    """The 12 General Triangle inequalities of a triple, t = 1..12."""
    return [triangle_cut(lower, upper, i, j, k, t) for t in range(1, 13)]


def make_cut(kind: CutKind | str, indices: Sequence[int], t: int, lower, upper) -> Cut:
    """Re-derive a cut from its identity for the given box."""
    kind = CutKind(kind)
    indices = tuple(int(i) for i in indices)
    if kind is CutKind.MCCORMICK:
        i, j = indices
        for cut in mccormick_cuts(lower, upper, i, j):
            if cut.t == t:
                return cut
        raise CutError(f"no McCormick cut #{t} for pair {indices}")
    if len(indices) != 3:
        raise CutError(f"{kind.value} cut needs a triple, got {indices}")
    if kind is CutKind.TRIANGLE:
        return triangle_cut(lower, upper, *indices, t)
    if not 1 <= t <= 48:
        raise CutError(f"candidate index must lie in 1..48, got {t}")
    return candidate_cut(lower, upper, *indices, (t - 1) // 6 + 1, (t - 1) % 6 + 1)


def cut_count(n: int) -> int:
    """|C u G|: four envelopes per pair i < j plus twelve triangles per triple."""
    return 4 * comb(n, 2) + 12 * comb(n, 3)


def padberg_form(cut: Cut) -> Optional[str]:
    """Which classical 0-1 triangle form ('0', 'i', 'j', 'k') a unit-box triple cut equals."""
    if cut.kind is CutKind.MCCORMICK:
        return None
    coefs = np.array(cut.xv + cut.y + (cut.const,))
    for name, form in PADBERG_FORMS.items():
        if np.array_equal(coefs, np.array(form)):
            return name
    return None


# ============================================================================
# WITNESS POINTS
# ============================================================================

def witness_point(lower, upper, i: int, j: int, k: int, t: int) -> LiftedPoint:
    """
    A point of the McCormick polytope cut off by triangle t of (i, j, k).

    x sits at the box midpoints. Each pair of the triple takes the upper end
    (u_p u_q + l_p l_q) / 2 of its McCormick interval when the cut's Y
    coefficient is positive and the lower end (u_p l_q + l_p u_q) / 2 otherwise;
    every other entry is the product of midpoints. The violation is then
    half the product of the three box widths.
    """
    cut = triangle_cut(lower, upper, i, j, k, t)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = (lower + upper) / 2.0
    point = LiftedPoint.from_x(x)
    for (p, q), a in zip(cut.pairs, cut.y):
        if a > 0:
            point.Y[p, q] = (upper[p] * upper[q] + lower[p] * lower[q]) / 2.0
        else:
            point.Y[p, q] = (upper[p] * lower[q] + lower[p] * upper[q]) / 2.0
    return point


# ============================================================================
# CUT POOL
# ============================================================================

@dataclass
class CutPool:
    """Ordered, duplicate-free set of cuts valid for one box."""

    lower: np.ndarray
    upper: np.ndarray
    _cuts: dict = field(default_factory=dict, repr=False)

    @classmethod
    def mccormick(cls, lower, upper) -> "CutPool":
        pool = cls(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        pool.extend(all_mccormick_cuts(pool.lower, pool.upper))
        return pool

    def add(self, cut: Cut) -> bool:
        if cut.key in self._cuts:
            return False
        self._cuts[cut.key] = cut
        return True

    def extend(self, cuts: Iterable[Cut]) -> int:
        return sum(1 for cut in cuts if self.add(cut))

    def remove(self, key) -> None:
        self._cuts.pop(key, None)

    def keys(self) -> set:
        return set(self._cuts)

    def count(self, kind: CutKind) -> int:
        return sum(1 for cut in self._cuts.values() if cut.kind is kind)

    def __contains__(self, item) -> bool:
        key = item.key if isinstance(item, Cut) else item
        return key in self._cuts

    def __iter__(self) -> Iterator[Cut]:
        return iter(list(self._cuts.values()))

    def __len__(self) -> int:
        return len(self._cuts)

    def copy(self) -> "CutPool":
        return CutPool(self.lower.copy(), self.upper.copy(), dict(self._cuts))

    def regenerate(self, lower, upper) -> "CutPool":
        """Same cut identities, coefficients re-derived for a new box."""
        pool = CutPool(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        for kind, indices, t in self._cuts:
            pool.add(make_cut(kind, indices, t, pool.lower, pool.upper))
        return pool


# ============================================================================
# SEPARATION
# ============================================================================

@lru_cache(maxsize=64)
def _triples(n: int) -> np.ndarray:
    if n < 3:
        return np.zeros((0, 3), dtype=int)
    out = np.array(list(combinations(range(n), 3)), dtype=int)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _pairs(n: int) -> np.ndarray:
    if n < 2:
        return np.zeros((0, 2), dtype=int)
    out = np.array(list(combinations(range(n), 2)), dtype=int)
    out.setflags(write=False)
    return out


def _mccormick_violations(x, Yd, lower, upper, pairs) -> np.ndarray:
    """(P, 4) violations of mc1..mc4 for every pair i < j."""
    I, J = pairs[:, 0], pairs[:, 1]
    y = Yd[I, J]
    xi, xj = x[I], x[J]
    li, ui, lj, uj = lower[I], upper[I], lower[J], upper[J]
    return np.stack([
        y - uj * xi - li * xj + li * uj,
        y - lj * xi - ui * xj + ui * lj,
        -y + uj * xi + ui * xj - ui * uj,
        -y + lj * xi + li * xj - li * lj,
    ], axis=1)


def separate(
    p: LiftedPoint,
    lower,
    upper,
    cap: int,
    exclude: Optional[CutPool] = None,
    mccormick: bool = True,
    triangles: bool = True,
    threshold: float = VIOLATION_TOL,
) -> list[Cut]:
    """
    Most violated cuts at p.

    Scans the envelopes of every pair i < j and the 12 triangles of every
    triple i < j < k, skipping identities already in `exclude`.

    Args:
        p: Point to separate
        lower, upper: Box the cuts are derived for
        cap: Maximum number of cuts returned
        exclude: Pool whose cuts are skipped
        mccormick: Scan envelopes
        triangles: Scan triangle inequalities
        threshold: Minimum violation

    Returns:
        Cuts sorted by decreasing violation, ties by (indices, t)
    """
    if cap <= 0:
        return []
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = p.n
    x = p.x
    Yd = p.Y.to_dense()
    skip = exclude.keys() if exclude is not None else set()

    # (violation, indices, t, kind, coefficients-or-None)
    found: list[tuple] = []

    if mccormick and n >= 2:
        pairs = _pairs(n)
        viol = _mccormick_violations(x, Yd, lower, upper, pairs)
        rows, cols = np.nonzero(viol > threshold)
        for r, col in zip(rows, cols):
            pair = (int(pairs[r, 0]), int(pairs[r, 1]))
            found.append((float(viol[r, col]), pair, int(col) + 1, CutKind.MCCORMICK, None))

    if triangles and n >= 3:
        triples = _triples(n)
        I, J, K = triples[:, 0], triples[:, 1], triples[:, 2]
        lo = np.stack([lower[I], lower[J], lower[K]], axis=1)
        up = np.stack([upper[I], upper[J], upper[K]], axis=1)
        xs = np.stack([x[I], x[J], x[K]], axis=1)
        ys = np.stack([Yd[I, J], Yd[I, K], Yd[J, K]], axis=1)
        for t, (family, variant) in enumerate(TRIANGLE_VARIANTS, start=1):
            xcoef, ycoef, const = _triple_coefficients(family, variant, lo, up)
            viol = np.sum(xcoef * xs, axis=1) + np.sum(ycoef * ys, axis=1) + const
            for r in np.flatnonzero(viol > threshold):
                triple = (int(I[r]), int(J[r]), int(K[r]))
                found.append((float(viol[r]), triple, t, CutKind.TRIANGLE,
                              (xcoef[r], ycoef[r], const[r])))

    found.sort(key=lambda item: (-item[0], item[1], item[2]))

    out: list[Cut] = []
    for value, indices, t, kind, coefs in found:
        if (kind.value, indices, t) in skip:
            continue
        if kind is CutKind.MCCORMICK:
            out.append(mccormick_cuts(lower, upper, *indices)[t - 1])
        else:
            out.append(_triple_cut(kind, t, indices, *coefs))
        if len(out) >= cap:
            break

    logger.debug(f"Separation: {len(found)} violated, returning {len(out)} (cap {cap})")
    return out
