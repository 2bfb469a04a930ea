"""Threshold splits of Q and K, the large-entry mask and the sparse part A_L."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrix import SparseMatrix, SupportPattern, as_dense


@dataclass(frozen=True)
class ThresholdSplit:
    T: float
    large: SparseMatrix
    small: np.ndarray

    @property
    def large_rows(self) -> np.ndarray:
        return np.unique(self.large.row_idx)


def split(M, T: float) -> ThresholdSplit:
    """Entries with |value| > T go to ``large``; ties and the rest to ``small``."""
    M = as_dense(M)
    if T < 0:
        raise ValueError(f"threshold must be >= 0, got {T}")
    big = np.abs(M) > T
    r, c = np.nonzero(big)
    large = SparseMatrix(M.shape[0], M.shape[1], r, c, M[r, c])
    small = np.where(big, 0.0, M)
    return ThresholdSplit(float(T), large, small)


@dataclass(frozen=True)
class LargeMask:
    """Union of full rows ``large_rows`` and full columns ``large_cols`` of an n x n grid."""

    n: int
    large_rows: np.ndarray
    large_cols: np.ndarray

    @property
    def mask_size(self) -> int:
        a, b = len(self.large_rows), len(self.large_cols)
        return self.n * (a + b) - a * b

    @property
    def empty(self) -> bool:
        return len(self.large_rows) == 0 and len(self.large_cols) == 0

    def indicator(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        out[self.large_rows, :] = True
        out[:, self.large_cols] = True
        return out

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major sorted (row, col) index arrays of the pattern."""
        return np.nonzero(self.indicator())

    @property
    def pattern(self) -> SupportPattern:
        r, c = self.coordinates()
        return SupportPattern(self.n, self.n, tuple(zip(r.tolist(), c.tolist())))

    def outside_rows(self) -> np.ndarray:
        keep = np.ones(self.n, dtype=bool)
        keep[self.large_rows] = False
        return np.nonzero(keep)[0]


def build_large_mask(qs: ThresholdSplit, ks: ThresholdSplit, n: int) -> LargeMask:
    if qs.large.rows != n or ks.large.rows != n:
        raise ValueError(f"splits have {qs.large.rows} and {ks.large.rows} rows, expected {n}")
    rows = np.unique(qs.large.row_idx).astype(np.int64)
    cols = np.unique(ks.large.row_idx).astype(np.int64)
    return LargeMask(n, rows, cols)


def compute_A_L(Q, K, mask: LargeMask) -> SparseMatrix:
    """Exact inner products <Q_i, K_j> at every mask position, zeros kept."""
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    n = mask.n
    if mask.empty:
        return SparseMatrix.empty(n, n)
    # full rows, then the column strips of the remaining rows
    rows = mask.large_rows
    other = mask.outside_rows()
    cols = mask.large_cols
    block_rows = Q[rows] @ K.T
    block_cols = Q[other] @ K[cols].T
    r = np.concatenate([np.repeat(rows, n), np.repeat(other, len(cols))])
    c = np.concatenate([np.tile(np.arange(n), len(rows)), np.tile(cols, len(other))])
    v = np.concatenate([block_rows.ravel(), block_cols.ravel()])
    return SparseMatrix(n, n, r, c, v, structural=True)


def small_gram(qs: ThresholdSplit, ks: ThresholdSplit, mask: LargeMask) -> np.ndarray:
    """A_s: Q_s K_s^T zeroed on the mask (dense, for checks)."""
    A = qs.small @ ks.small.T
    A[mask.indicator()] = 0.0
    return A


def expected_large_count(n: int, d: int, T: float, sigma: float) -> float:
    """Tail bound 2 n d exp(-T^2 / sigma^2) on the number of |entries| > T."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return 2.0 * n * d * math.exp(-(T * T) / (sigma * sigma))


def default_threshold(n: int, c: float = 0.5) -> float:
    return math.sqrt(c * math.log(n))


def sample_subgaussian(n: int, d: int, sigma: float, seed: int) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.random.default_rng(seed).normal(0.0, sigma, size=(n, d))


@dataclass(frozen=True)
class SparsityReport:
    n: int
    d: int
    T: float
    count_large_Q: int
    count_large_K: int
    mask_size: int
    expected_large: float
    alpha_hat: float


def sparsity_report(Q, K, T: float, sigma: float | None = None) -> SparsityReport:
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    n, d = Q.shape
    qs, ks = split(Q, T), split(K, T)
    mask = build_large_mask(qs, ks, n)
    size = mask.mask_size
    alpha = math.log(size) / math.log(n) - 1.0 if size > 0 and n > 1 else float("-inf")
    expected = expected_large_count(n, d, T, sigma) if sigma else float("nan")
    return SparsityReport(n, d, float(T), qs.large.nnz, ks.large.nnz, size, expected, alpha)
