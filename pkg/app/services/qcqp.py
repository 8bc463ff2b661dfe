"""
QCQP instances over boxes: validation, JSON (de)serialization, evaluation and
the seeded unit-box generator.

    min  f_0(x)
    s.t. f_r(x) <= b_r,  r = 1..m
         l <= x <= u,    l >= 0

with f_r(x) = <Q_r, x x^T> + c_r^T x.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.core.constants import FEAS_TOL
from app.models.instance import ConstraintBlock, InstanceDocument, QuadraticBlock
from app.services.linalg import DimensionMismatchError, SymMatrix, packed_weights, triu_indices

logger = logging.getLogger(__name__)


class InstanceError(Exception):
    """Base exception for instance problems; `path` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class InstanceFormatError(InstanceError):
    """Document is not valid JSON or does not match the schema."""
    pass


class InstanceValueError(InstanceError):
    """Document is well-formed but holds an invalid value."""
    pass


class ConstraintIndexError(IndexError):
    """Constraint index outside 0..m."""
    pass


# ============================================================================
# INSTANCE
# ============================================================================

@dataclass(frozen=True, eq=False)
class QcqpInstance:
    """
    Validated QCQP. Matrices are dense, symmetrized at construction and
    read-only afterwards, so instances can be shared across threads.
    """

    Q: Sequence[np.ndarray]
    c: Sequence[np.ndarray]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.Q) == 0:
            raise InstanceValueError("objective", "missing objective")
        if len(self.Q) != len(self.c):
            raise InstanceValueError("constraints", "Q and c lists differ in length")

        lower = _frozen(self.lower)
        upper = _frozen(self.upper)
        n = lower.shape[0]
        if n < 1:
            raise InstanceValueError("n", "at least one variable is required")
        if upper.shape != (n,):
            raise InstanceValueError("u", f"expected {n} upper bounds, got {upper.shape[0]}")

        Q, c = [], []
        for r, (q, lin) in enumerate(zip(self.Q, self.c)):
            where = _block_path(r)
            q = np.asarray(q, dtype=float)
            if q.shape != (n, n):
                raise InstanceValueError(f"{where}.Q", f"expected shape ({n}, {n}), got {q.shape}")
            if not np.all(np.isfinite(q)):
                raise InstanceValueError(f"{where}.Q", "non-finite entry")
            lin = np.asarray(lin, dtype=float)
            if lin.shape != (n,):
                raise InstanceValueError(f"{where}.c", f"expected {n} entries, got {lin.shape}")
            _check_finite(lin, f"{where}.c")
            Q.append(_frozen((q + q.T) / 2.0))
            c.append(_frozen(lin))

        b = _frozen(np.atleast_1d(np.asarray(self.b, dtype=float)) if len(Q) > 1 else np.zeros(0))
        if b.shape != (len(Q) - 1,):
            raise InstanceValueError("constraints", f"expected {len(Q) - 1} right-hand sides, got {b.shape[0]}")
        for r in range(b.shape[0]):
            if not math.isfinite(b[r]):
                raise InstanceValueError(f"constraints[{r}].b", "non-finite entry")

        _check_finite(lower, "l")
        _check_finite(upper, "u")
        for i in range(n):
            if lower[i] < 0:
                raise InstanceValueError(f"l[{i}]", f"negative lower bound at index {i}")
            if lower[i] >= upper[i]:
                raise InstanceValueError(f"u[{i}]", f"bounds inverted at index {i}")

        object.__setattr__(self, "Q", tuple(Q))
        object.__setattr__(self, "c", tuple(c))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "meta", dict(self.meta or {}))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def m(self) -> int:
        return len(self.Q) - 1

    @property
    def name(self) -> str:
        return str(self.meta.get("name", f"{self.n}_{self.m}"))

    @cached_property
    def lifted_rows(self) -> np.ndarray:
        """(m+1) x P coefficients of <Q_r, Y> on the packed Y variables."""
        rows, cols = triu_indices(self.n)
        weights = packed_weights(self.n)
        out = np.array([weights * q[rows, cols] for q in self.Q])
        out.setflags(write=False)
        return out

    def sym(self, r: int) -> SymMatrix:
        _check_index(self, r)
        return SymMatrix.from_dense(self.Q[r], symmetrize=False)

    def feasible_point(self) -> Optional[np.ndarray]:
        """Point recorded by the generator, if any."""
        point = self.meta.get("feasible_point")
        if point is None:
            return None
        point = np.asarray(point, dtype=float)
        return point if point.shape == (self.n,) else None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QcqpInstance):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and all(np.array_equal(a, b) for a, b in zip(self.Q, other.Q))
            and all(np.array_equal(a, b) for a, b in zip(self.c, other.c))
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and self.meta == other.meta
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"QcqpInstance(name={self.name!r}, n={self.n}, m={self.m})"


@dataclass
class LiftedPoint:
    """A point (x, Y) of the lifted space; Y symmetric by storage."""

    x: np.ndarray
    Y: SymMatrix

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.Y.dim != self.x.shape[0]:
            raise DimensionMismatchError(f"x has {self.x.shape[0]} entries, Y has order {self.Y.dim}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_x(cls, x: np.ndarray) -> "LiftedPoint":
        """The rank-one point (x, x x^T)."""
        x = np.asarray(x, dtype=float)
        return cls(x, SymMatrix.from_dense(np.outer(x, x), symmetrize=False))

    @classmethod
    def from_packed(cls, z: np.ndarray, n: int) -> "LiftedPoint":
        z = np.asarray(z, dtype=float)
        return cls(z[:n].copy(), SymMatrix(n, z[n:].copy()))

    def packed(self) -> np.ndarray:
        """LP variable vector [x, packed Y]."""
        return np.concatenate([self.x, self.Y.data])

    def mismatch(self) -> np.ndarray:
        """|Y - x x^T| as a dense matrix."""
        return np.abs(self.Y.to_dense() - np.outer(self.x, self.x))


# ============================================================================
# EVALUATION
# ============================================================================

def evaluate_constraint(inst: QcqpInstance, r: int, x: np.ndarray) -> float:
    """f_r(x) = <Q_r, x x^T> + c_r^T x."""
    _check_index(inst, r)
    x = _check_point(inst, x)
    return float(x @ inst.Q[r] @ x + inst.c[r] @ x)


def evaluate_objective(inst: QcqpInstance, x: np.ndarray) -> float:
    return evaluate_constraint(inst, 0, x)


def evaluate_many(inst: QcqpInstance, r: int, points: np.ndarray) -> np.ndarray:
    """f_r at every row of `points` (k x n)."""
    _check_index(inst, r)
    points = np.asarray(points, dtype=float)
    return np.einsum("ki,ij,kj->k", points, inst.Q[r], points) + points @ inst.c[r]


def constraint_excess(inst: QcqpInstance, x: np.ndarray) -> np.ndarray:
    """f_r(x) - b_r for r = 1..m."""
    x = _check_point(inst, x)
    return np.array([x @ inst.Q[r] @ x + inst.c[r] @ x for r in range(1, inst.m + 1)]) - inst.b


def max_violation(inst: QcqpInstance, x: np.ndarray) -> float:
    """Largest constraint or box violation, 0 when feasible."""
    x = _check_point(inst, x)
    worst = max(float(np.max(inst.lower - x)), float(np.max(x - inst.upper)), 0.0)
    if inst.m:
        worst = max(worst, float(np.max(constraint_excess(inst, x))))
    return worst


def is_feasible(inst: QcqpInstance, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
    return max_violation(inst, x) <= tol


# ============================================================================
# SERIALIZATION
# ============================================================================

def parse(text: str) -> QcqpInstance:
    """
    Parse and validate a JSON instance document.

    Raises:
        InstanceFormatError: invalid JSON or schema mismatch
        InstanceValueError: inverted/negative bounds, non-finite entries
    """
    try:
        raw = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise InstanceFormatError("$", f"invalid JSON: {e}") from e

    try:
        doc = InstanceDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(part) for part in first["loc"]) or "$"
        raise InstanceFormatError(path, first["msg"]) from e

    return from_document(doc)


def from_document(doc: InstanceDocument) -> QcqpInstance:
    n = doc.n
    blocks: list[QuadraticBlock] = [doc.objective, *doc.constraints]
    Q, c = [], []
    for r, block in enumerate(blocks):
        q = np.zeros((n, n))
        for i, j, v in block.Q:
            if not math.isfinite(v):
                raise InstanceValueError(f"{_block_path(r)}.Q", f"non-finite coefficient at ({i}, {j})")
            if i == j:
                q[i, i] += v
            else:
                q[i, j] += v / 2.0
                q[j, i] += v / 2.0
        Q.append(q)
        c.append(np.asarray(block.c, dtype=float))
    b = np.array([block.b for block in doc.constraints], dtype=float)
    return QcqpInstance(Q=Q, c=c, b=b, lower=np.asarray(doc.l, dtype=float),
                        upper=np.asarray(doc.u, dtype=float), meta=dict(doc.meta))


def to_document(inst: QcqpInstance) -> InstanceDocument:
    def triplets(q: np.ndarray) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(np.triu(q))
        return [
            (int(i), int(j), float(q[i, j]) if i == j else float(2.0 * q[i, j]))
            for i, j in zip(rows, cols)
        ]

    return InstanceDocument(
        n=inst.n,
        m=inst.m,
        l=inst.lower.tolist(),
        u=inst.upper.tolist(),
        objective=QuadraticBlock(Q=triplets(inst.Q[0]), c=inst.c[0].tolist()),
        constraints=[
            ConstraintBlock(Q=triplets(inst.Q[r]), c=inst.c[r].tolist(), b=float(inst.b[r - 1]))
            for r in range(1, inst.m + 1)
        ],
        meta=inst.meta,
    )


def serialize(inst: QcqpInstance) -> str:
    """Inverse of parse: parse(serialize(inst)) == inst."""
    return json.dumps(to_document(inst).model_dump())


def load_instance(path: str | Path) -> QcqpInstance:
    text = Path(path).read_text(encoding="utf-8")
    inst = parse(text)
    logger.debug(f"Loaded {inst} from {path}")
    return inst


def save_instance(inst: QcqpInstance, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize(inst), encoding="utf-8")
    logger.info(f"Wrote {inst.name} to {path}")
    return path


# ============================================================================
# GENERATOR
# ============================================================================

def instance_name(n: int, m: int, seed: int, density: float) -> str:
    """Benchmark naming `n_m_seed_density` with density in percent."""
    return f"{n}_{m}_{seed}_{int(round(density * 100))}"


def gen_unitbox(n: int, m: int, density: float, seed: int, diagonal: bool = True) -> QcqpInstance:
    """
    Random QCQP on [0, 1]^n that is feasible by construction.

    Draws come from numpy's PCG64 bit generator seeded with `seed`, so the
    output is identical across platforms. Each packed upper-triangular entry
    (diagonal included unless `diagonal` is False) is nonzero with probability `density`, with value
    uniform on [-10, 10] as the full coefficient of its monomial; c_r is
    uniform on [-10, 10]. A point x~ uniform on [0.05, 0.95]^n is drawn last
    and b_r = f_r(x~) + |f_r(x~)|; x~ is recorded as meta.feasible_point.

    Args:
        n: Variable count (>= 2)
        m: Constraint count
        density: Fraction in (0, 1]
        seed: PRNG seed
        diagonal: Also draw the squared terms at `density`. With False only
            the strict upper triangle is random and every Q_r has a zero
            diagonal; the draw sequence, hence the off-diagonal entries, is
            unchanged

    Returns:
        QcqpInstance named n_m_seed_density
    """
    if n < 2:
        raise InstanceValueError("n", f"generator needs n >= 2, got {n}")
    if m < 0:
        raise InstanceValueError("m", f"constraint count must be >= 0, got {m}")
    if not 0.0 < density <= 1.0:
        raise InstanceValueError("density", f"density must lie in (0, 1], got {density}")

    rng = np.random.Generator(np.random.PCG64(seed))
    rows, cols = triu_indices(n)
    size = rows.shape[0]

    Q, c = [], []
    for _ in range(m + 1):
        mask = rng.random(size) < density
        values = np.where(mask, rng.uniform(-10.0, 10.0, size), 0.0)
        if not diagonal:
            values[rows == cols] = 0.0
        q = np.zeros((n, n))
        halves = np.where(rows == cols, values, values / 2.0)
        q[rows, cols] = halves
        q[cols, rows] = halves
        Q.append(q)
        c.append(rng.uniform(-10.0, 10.0, n))

    x_tilde = rng.uniform(0.05, 0.95, n)
    f = np.array([x_tilde @ Q[r] @ x_tilde + c[r] @ x_tilde for r in range(1, m + 1)])
    b = f + np.abs(f)

    meta = {
        "name": instance_name(n, m, seed, density),
        "seed": seed,
        "density": density,
        "feasible_point": x_tilde.tolist(),
    }
    if not diagonal:
        meta["diagonal"] = False
    inst = QcqpInstance(Q=Q, c=c, b=b, lower=np.zeros(n), upper=np.ones(n), meta=meta)
    logger.debug(f"Generated {inst}")
    return inst


# ============================================================================
# HELPERS
# ============================================================================

def _frozen(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_finite(values: np.ndarray, path: str) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise InstanceValueError(f"{path}[{int(bad[0])}]", "non-finite entry")


def _block_path(r: int) -> str:
    return "objective" if r == 0 else f"constraints[{r - 1}]"


def _check_index(inst: QcqpInstance, r: int) -> None:
    if not 0 <= r <= inst.m:
        raise ConstraintIndexError(f"constraint index {r} outside 0..{inst.m}")


def _check_point(inst: QcqpInstance, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n,):
        raise DimensionMismatchError(f"point of shape {x.shape} for n={inst.n}")
    return x
