"""Dense symmetric linear algebra: packed storage, cyclic Jacobi eigen-solver, quadratic forms."""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Union

import numpy as np

from app.core.constants import PSD_TOL

logger = logging.getLogger(__name__)


class LinalgError(Exception):
    """Base exception for linear algebra failures."""
    pass


class EigenNonConvergenceError(LinalgError):
    """Raised when the Jacobi sweeps hit their cap (ill-conditioned input)."""
    pass


class DimensionMismatchError(LinalgError):
    """Raised when operand shapes do not agree."""
    pass


@lru_cache(maxsize=256)
def triu_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major upper-triangle indices (i <= j) of an n x n matrix. Read-only."""
    rows, cols = np.triu_indices(n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=256)
def packed_weights(n: int) -> np.ndarray:
    """Multiplicity of each packed entry in a full <A, B> sum: 1 on the diagonal, 2 off it."""
    rows, cols = triu_indices(n)
    weights = np.where(rows == cols, 1.0, 2.0)
    weights.setflags(write=False)
    return weights


def packed_size(n: int) -> int:
    return n * (n + 1) // 2


def packed_index(n: int, i: int, j: int) -> int:
    """Position of entry (i, j) in row-major packed upper-triangular storage."""
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


class SymMatrix:
    """
    Symmetric matrix stored as its packed upper triangle.

    Reads of (j, i) return (i, j). The packing order is the row-major order of
    ``np.triu_indices(dim)``, the same order used for the lifted Y variables.
    """

    __slots__ = ("dim", "data")

    def __init__(self, dim: int, data: np.ndarray | None = None):
        if dim < 1:
            raise DimensionMismatchError(f"SymMatrix order must be >= 1, got {dim}")
        self.dim = dim
        if data is None:
            self.data = np.zeros(packed_size(dim))
        else:
            data = np.asarray(data, dtype=float)
            if data.shape != (packed_size(dim),):
                raise DimensionMismatchError(
                    f"packed data of length {data.shape} does not match order {dim}"
                )
            self.data = data

    @classmethod
    def from_dense(cls, matrix: np.ndarray, symmetrize: bool = True) -> "SymMatrix":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {matrix.shape}")
        if symmetrize:
            matrix = (matrix + matrix.T) / 2.0
        rows, cols = triu_indices(matrix.shape[0])
        return cls(matrix.shape[0], matrix[rows, cols].copy())

    @classmethod
    def zeros(cls, dim: int) -> "SymMatrix":
        return cls(dim)

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls.diagonal(np.ones(dim))

    @classmethod
    def diagonal(cls, values: np.ndarray) -> "SymMatrix":
        values = np.asarray(values, dtype=float)
        out = cls(len(values))
        rows, cols = triu_indices(len(values))
        out.data[rows == cols] = values
        return out

    def to_dense(self) -> np.ndarray:
        rows, cols = triu_indices(self.dim)
        dense = np.zeros((self.dim, self.dim))
        dense[rows, cols] = self.data
        dense[cols, rows] = self.data
        return dense

    def diag(self) -> np.ndarray:
        rows, cols = triu_indices(self.dim)
        return self.data[rows == cols].copy()

    def copy(self) -> "SymMatrix":
        return SymMatrix(self.dim, self.data.copy())

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        return float(self.data[packed_index(self.dim, i, j)])

    def __setitem__(self, key: tuple[int, int], value: float) -> None:
        i, j = key
        self.data[packed_index(self.dim, i, j)] = value

    def inner(self, other: "SymMatrix") -> float:
        """Frobenius inner product <A, B> = sum_ij a_ij b_ij."""
        self._check(other)
        return float(np.dot(packed_weights(self.dim) * self.data, other.data))

    def _check(self, other: "SymMatrix") -> None:
        if self.dim != other.dim:
            raise DimensionMismatchError(f"orders differ: {self.dim} vs {other.dim}")

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        self._check(other)
        return SymMatrix(self.dim, self.data + other.data)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        self._check(other)
        return SymMatrix(self.dim, self.data - other.data)

    def __mul__(self, scalar: float) -> "SymMatrix":
        return SymMatrix(self.dim, self.data * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(self.dim, -self.data)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim})"


MatrixLike = Union[SymMatrix, np.ndarray]


def _dense(matrix: MatrixLike) -> np.ndarray:
    if isinstance(matrix, SymMatrix):
        return matrix.to_dense()
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {matrix.shape}")
    return matrix.copy()


def _off_norm(a: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> float:
    return math.sqrt(2.0 * float(np.sum(a[rows, cols] ** 2)))


def eig_symmetric(
    matrix: MatrixLike,
    tol: float | None = None,
    max_sweeps: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.

    Args:
        matrix: SymMatrix or a dense symmetric array
        tol: Stop when the off-diagonal Frobenius norm falls below tol * ||A||_F
            (default dim * machine epsilon)
        max_sweeps: Sweep cap (default 100 * dim^2)

    Returns:
        (values, vectors): eigenvalues sorted ascending, orthonormal eigenvectors as columns

    Raises:
        EigenNonConvergenceError: sweep cap reached
    """
    a = _dense(matrix)
    n = a.shape[0]
    if not np.all(np.isfinite(a)):
        raise LinalgError("matrix has non-finite entries")
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v

    eps = float(np.finfo(float).eps)
    cap = max_sweeps if max_sweeps is not None else 100 * n * n
    threshold = (tol if tol is not None else n * eps) * scale
    rows, cols = np.triu_indices(n, 1)
    converged = False
    for _ in range(cap):
        if _off_norm(a, rows, cols) <= threshold:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # negligible against the diagonal: drop without rotating
                if abs(apq) <= eps * math.sqrt(abs(a[p, p] * a[q, q])):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        converged = _off_norm(a, rows, cols) <= threshold

    if not converged:
        raise EigenNonConvergenceError(f"Jacobi did not converge within {cap} sweeps (order {n})")

    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], v[:, order]


def min_eigenvalue(matrix: MatrixLike) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector."""
    values, vectors = eig_symmetric(matrix)
    return float(values[0]), vectors[:, 0].copy()


def is_psd(matrix: MatrixLike, tol: float = PSD_TOL) -> bool:
    value, _ = min_eigenvalue(matrix)
    return value >= tol


def project_psd(matrix: MatrixLike) -> SymMatrix:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped to zero)."""
    values, vectors = eig_symmetric(matrix)
    clipped = (vectors * np.maximum(values, 0.0)) @ vectors.T
    return SymMatrix.from_dense(clipped)


def quad_form(matrix: MatrixLike, x: np.ndarray) -> float:
    """x^T A x, i.e. <A, x x^T>."""
    x = np.asarray(x, dtype=float)
    if isinstance(matrix, SymMatrix):
        if x.shape != (matrix.dim,):
            raise DimensionMismatchError(f"vector of shape {x.shape} against order {matrix.dim}")
        rows, cols = triu_indices(matrix.dim)
        return float(np.dot(packed_weights(matrix.dim) * matrix.data, x[rows] * x[cols]))
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape != (x.shape[0], x.shape[0]):
        raise DimensionMismatchError(f"matrix of shape {matrix.shape} against vector of shape {x.shape}")
    return float(x @ matrix @ x)
