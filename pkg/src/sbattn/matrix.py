"""Dense/sparse matrix primitives and the Hadamard algebra used throughout.

Dense matrices are plain ``float64`` numpy arrays. Sparse matrices are a
sorted coordinate list (:class:`SparseMatrix`); a CSR view is built on demand
for products and is never part of the public contract.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sps

# largest x with exp(x) finite in float64
EXP_OVERFLOW = 709.782712893384


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class DomainError(ValueError):
    """An entrywise operation was applied outside its domain."""


def as_dense(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite 2-D float64 array (C order)."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        i, j = np.argwhere(~np.isfinite(arr))[0]
        raise DomainError(f"{name} has a non-finite entry at ({i}, {j})")
    return arr


@dataclass(frozen=True)
class SparseMatrix:
    """Coordinate-list matrix with entries sorted by (row, col).

    Explicit zeros are dropped on construction unless ``structural`` is set,
    in which case zeros at listed positions are kept (used for the large part
    of the score matrix, whose support is defined by a mask).
    """

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    structural: bool = False
    _csr: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.row_idx, dtype=np.int64).ravel()
        c = np.asarray(self.col_idx, dtype=np.int64).ravel()
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not (len(r) == len(c) == len(v)):
            raise ShapeError("row_idx, col_idx and values must have equal length")
        if len(r):
            if r.min() < 0 or r.max() >= self.rows or c.min() < 0 or c.max() >= self.cols:
                raise IndexError(f"sparse index out of bounds for shape {(self.rows, self.cols)}")
            if not np.all(np.isfinite(v)):
                raise DomainError("sparse values must be finite")
        if not self.structural:
            keep = v != 0.0
            r, c, v = r[keep], c[keep], v[keep]
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if len(r) > 1:
            dup = (r[1:] == r[:-1]) & (c[1:] == c[:-1])
            if dup.any():
                k = int(np.argmax(dup))
                raise ValueError(f"duplicate entry at ({r[k]}, {c[k]})")
        for name, arr in (("row_idx", r), ("col_idx", c), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = as_dense(a)
        r, c = np.nonzero(a)
        return cls(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SparseMatrix":
        z = np.zeros(0)
        return cls(rows, cols, z, z, z)

    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(v)) for i, j, v in zip(self.row_idx, self.col_idx, self.values)]

    def densify(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_idx, self.col_idx] = self.values
        return out

    def tocsr(self) -> sps.csr_array:
        if not self._csr:
            self._csr.append(
                sps.csr_array((self.values, (self.row_idx, self.col_idx)), shape=self.shape)
            )
        return self._csr[0]


@dataclass(frozen=True)
class SupportPattern:
    """Sorted, deduplicated set of (row, col) positions."""

    rows: int
    cols: int
    positions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pos = tuple(sorted(set((int(i), int(j)) for i, j in self.positions)))
        for i, j in pos:
            if not (0 <= i < self.rows and 0 <= j < self.cols):
                raise IndexError(f"position ({i}, {j}) out of bounds")
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.positions)

    def __contains__(self, item) -> bool:
        return tuple(item) in set(self.positions)

    def as_set(self) -> set[tuple[int, int]]:
        return set(self.positions)

    def indicator(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        if self.positions:
            r, c = zip(*self.positions)
            out[list(r), list(c)] = 1.0
        return out


Matrix = Union[np.ndarray, SparseMatrix]


def _shape(m: Matrix) -> tuple[int, int]:
    return m.shape if isinstance(m, SparseMatrix) else as_dense(m).shape


def matmul(a, b) -> np.ndarray:
    a, b = as_dense(a, "A"), as_dense(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def entrywise_exp(a) -> np.ndarray:
    """exp applied to every entry; refuses to overflow."""
    a = as_dense(a)
    bad = a > EXP_OVERFLOW
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise OverflowError(f"exp overflows at ({i}, {j}): value {a[i, j]!r}; pre-scale the input")
    return np.exp(a)


def hadamard_pow(a, c: float) -> np.ndarray:
    """Entrywise power ``a[i, j] ** c``.

    Non-integer exponents require strictly positive entries.
    """
    a = as_dense(a)
    c = float(c)
    if c != round(c):
        bad = a <= 0
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DomainError(
                f"non-integer power {c} of non-positive entry {a[i, j]!r} at ({i}, {j})"
            )
        return a**c
    return a ** int(round(c))


def support(a: Matrix) -> SupportPattern:
    if isinstance(a, SparseMatrix):
        keep = a.values != 0.0
        pos = zip(a.row_idx[keep].tolist(), a.col_idx[keep].tolist())
        return SupportPattern(a.rows, a.cols, tuple(pos))
    a = as_dense(a)
    r, c = np.nonzero(a)
    return SupportPattern(a.shape[0], a.shape[1], tuple(zip(r.tolist(), c.tolist())))


def _nonzero_mask(a: Matrix) -> np.ndarray:
    if isinstance(a, SparseMatrix):
        out = np.zeros(a.shape, dtype=bool)
        out[a.row_idx, a.col_idx] = a.values != 0.0
        return out
    return as_dense(a) != 0.0


def are_disjoint(mats: Sequence[Matrix]) -> bool:
    """True iff no two matrices share a nonzero position."""
    if not mats:
        return True
    shape = _shape(mats[0])
    count = np.zeros(shape, dtype=np.int64)
    for m in mats:
        if _shape(m) != shape:
            raise ShapeError(f"shape mismatch: {_shape(m)} vs {shape}")
        count += _nonzero_mask(m)
    return bool(count.max(initial=0) <= 1)


def norm(a: Matrix, kind: str = "linf", p: float | None = None, reference=None) -> float:
    """Entrywise norms: ``linf``, ``l1``, ``lp`` (needs ``p``), ``fro`` and
    ``rel_fro`` (``||a - reference||_F / ||reference||_F``)."""
    x = a.densify() if isinstance(a, SparseMatrix) else as_dense(a)
    if kind == "linf":
        return float(np.abs(x).max(initial=0.0))
    if kind == "l1":
        return float(np.abs(x).sum())
    if kind == "lp":
        if p is None or p <= 0:
            raise ValueError("lp norm needs p > 0")
        return float((np.abs(x) ** p).sum() ** (1.0 / p))
    if kind == "fro":
        return float(np.sqrt((x * x).sum()))
    if kind == "rel_fro":
        if reference is None:
            raise ValueError("rel_fro needs a reference matrix")
        ref = as_dense(reference, "reference")
        if ref.shape != x.shape:
            raise ShapeError(f"reference shape {ref.shape} != {x.shape}")
        den = np.sqrt((ref * ref).sum())
        if den == 0.0:
            raise ValueError("rel_fro reference has zero Frobenius norm")
        diff = x - ref
        return float(np.sqrt((diff * diff).sum()) / den)
    raise ValueError(f"unknown norm kind {kind!r}")


def sparse_apply(s: SparseMatrix, v) -> np.ndarray:
    """``densify(s) @ v`` touching only stored entries."""
    v = as_dense(v, "V")
    if s.cols != v.shape[0]:
        raise ShapeError(f"cannot multiply sparse {s.shape} by {v.shape}")
    if s.nnz == 0:
        return np.zeros((s.rows, v.shape[1]))
    return np.asarray(s.tocsr() @ v)


def densify(s: Matrix) -> np.ndarray:
    return s.densify() if isinstance(s, SparseMatrix) else as_dense(s).copy()


def sparsify(a) -> SparseMatrix:
    return a if isinstance(a, SparseMatrix) else SparseMatrix.from_dense(a)
