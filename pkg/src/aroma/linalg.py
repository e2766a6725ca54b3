"""Sparse vectors and the bilinear / Kronecker kernels shared by all learners.

Matrices are plain 2-D ``float64`` numpy arrays. ``vec`` stacks columns, so the
rank-one matrix paired with ``W`` (m x n) in ``q^T W p`` is ``outer(q, p)``
(also m x n) and ``q^T W p == vec(W) @ vec(outer(q, p))``.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes do not agree."""


class SparseVector:
    """Immutable sparse vector stored as sorted indices and nonzero values."""

    __slots__ = ("dim", "indices", "values")

    def __init__(self, dim: int, indices: Sequence[int] = (), values: Sequence[float] = ()):
        dim = int(dim)
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        val = np.asarray(values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ValueError("indices and values must have the same length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= dim:
                raise ValueError(f"index out of range for dim {dim}")
            if not np.all(np.isfinite(val)):
                raise ValueError("values must be finite")
            keep = val != 0.0
            if not keep.all():
                idx, val = idx[keep], val[keep]
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def __setattr__(self, name, value):
        raise AttributeError("SparseVector is immutable")

    @classmethod
    def from_dense(cls, x: Iterable[float]) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        nz = np.flatnonzero(x)
        return cls(x.size, nz, x[nz])

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        pairs = sorted(pairs)
        return cls(dim, [i for i, _ in pairs], [v for _, v in pairs])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.dim)
        x[self.indices] = self.values
        return x

    def squared_norm(self) -> float:
        return float(self.values @ self.values)

    def __sub__(self, other: "SparseVector") -> "SparseVector":
        if not isinstance(other, SparseVector):
            return NotImplemented
        if other.dim != self.dim:
            raise DimensionError(f"cannot subtract vectors of dims {self.dim} and {other.dim}")
        idx = np.union1d(self.indices, other.indices)
        val = np.zeros(idx.size)
        val[np.searchsorted(idx, self.indices)] += self.values
        val[np.searchsorted(idx, other.indices)] -= other.values
        return SparseVector(self.dim, idx, val)

    def __neg__(self) -> "SparseVector":
        return SparseVector(self.dim, self.indices, -self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        body = ", ".join(f"{i}: {v!r}" for i, v in zip(self.indices.tolist(), self.values.tolist()))
        return f"SparseVector(dim={self.dim}, {{{body}}})"


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _check_dims(q: SparseVector, W: np.ndarray, p: SparseVector) -> None:
    if W.ndim != 2 or W.shape != (q.dim, p.dim):
        raise DimensionError(
            f"bilinear form needs W of shape ({q.dim}, {p.dim}), got {W.shape}"
        )


def bilinear_score(q: SparseVector, W: np.ndarray, p: SparseVector) -> float:
    """Return ``q^T W p`` touching only the ``nnz(q) * nnz(p)`` entries of ``W``.

    Summation runs over q's nonzeros in the outer loop and p's in the inner loop.
    """
    _check_dims(q, W, p)
    if q.nnz == 0 or p.nnz == 0:
        return 0.0
    block = W[np.ix_(q.indices, p.indices)]
    return float(q.values @ (block @ p.values))


def vec(W) -> np.ndarray:
    """Stack the columns of ``W`` into a vector of length ``m * n``."""
    return np.asarray(W, dtype=np.float64).reshape(-1, order="F")


def unvec(x, m: int, n: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(x, dtype=np.float64).reshape((m, n), order="F")


def outer(q: SparseVector, p: SparseVector) -> np.ndarray:
    """Dense ``q p^T`` (m x n); only the ``nnz(q) * nnz(p)`` block is written."""
    out = np.zeros((q.dim, p.dim))
    if q.nnz and p.nnz:
        out[np.ix_(q.indices, p.indices)] = np.outer(q.values, p.values)
    return out


def quadratic_form(x: SparseVector, A: np.ndarray) -> float:
    """``x^T A x`` for a square ``A``, using only the support of ``x``."""
    if A.shape != (x.dim, x.dim):
        raise DimensionError(f"need a ({x.dim}, {x.dim}) matrix, got {A.shape}")
    if x.nnz == 0:
        return 0.0
    return float(x.values @ (A[np.ix_(x.indices, x.indices)] @ x.values))


def kron_quadratic_form(q: SparseVector, Lambda: np.ndarray, p: SparseVector, Omega: np.ndarray) -> float:
    """``vec(q p^T)^T (Omega kron Lambda) vec(q p^T) = (q^T Lambda q)(p^T Omega p)``."""
    return quadratic_form(q, Lambda) * quadratic_form(p, Omega)


def matvec(A: np.ndarray, x: SparseVector) -> np.ndarray:
    """Dense ``A x`` using only the columns in the support of ``x``."""
    if A.shape[1] != x.dim:
        raise DimensionError(f"cannot multiply {A.shape} by vector of dim {x.dim}")
    if x.nnz == 0:
        return np.zeros(A.shape[0])
    return A[:, x.indices] @ x.values


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


class Triplet:
    """A query with a preferred object ``p_plus`` and a worse object ``p_minus``."""

    __slots__ = ("q", "p_plus", "p_minus")

    def __init__(self, q: SparseVector, p_plus: SparseVector, p_minus: SparseVector):
        if p_plus.dim != p_minus.dim:
            raise DimensionError(
                f"p_plus and p_minus dims differ: {p_plus.dim} vs {p_minus.dim}"
            )
        self.q = q
        self.p_plus = p_plus
        self.p_minus = p_minus

    @property
    def p(self) -> SparseVector:
        """The object difference ``p_plus - p_minus``."""
        return self.p_plus - self.p_minus

    def __repr__(self) -> str:
        return f"Triplet(q={self.q!r}, p_plus={self.p_plus!r}, p_minus={self.p_minus!r})"


def triplet_hinge(W: np.ndarray, t: Triplet) -> float:
    """Ranking hinge ``max(0, 1 - q^T W (p_plus - p_minus))``."""
    return max(0.0, 1.0 - bilinear_score(t.q, W, t.p))
