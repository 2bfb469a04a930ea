"""Exact, polynomial and support-basis attention engines."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exp_poly import (
    ExpPolynomial,
    column_weights,
    enumerate_monomials,
    fit_exp_polynomial,
    monomial_count,
    monomial_features,
)
from .matrix import ShapeError, as_dense
from .support_basis import LargeMask, build_large_mask, split

OVERFLOW_GUARD = 700.0
ROW_BLOCK = 512
# small slabs stay cache resident; measured faster and steadier than big ones
FACTOR_CHUNK_BYTES = 2 * 2**20
MIN_CHUNK_ROWS = 32
MIN_BOUND = 1e-12


class NormalizationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class AttentionInputs:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        Q, K, V = as_dense(self.Q, "Q"), as_dense(self.K, "K"), as_dense(self.V, "V")
        if not (Q.shape == K.shape and Q.shape[0] == V.shape[0]):
            raise ShapeError(f"Q {Q.shape}, K {K.shape}, V {V.shape} do not share n and d")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "V", V)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.Q.shape[1]


@dataclass
class AttentionOutput:
    P: np.ndarray
    row_sums: np.ndarray
    engine: str
    wall_time: float
    info: dict = field(default_factory=dict)


def _augment(V: np.ndarray) -> np.ndarray:
    # trailing ones column carries the row sums through every product
    return np.hstack([V, np.ones((V.shape[0], 1))])


def _normalize(numer: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    D = numer[:, -1].copy()
    if not np.all(D > 0):
        i = int(np.argmin(D))
        raise NormalizationError(f"{what}: row sum {D[i]!r} at row {i} is not positive")
    return numer[:, :-1] / D[:, None], D


def exact_attention(inp: AttentionInputs) -> AttentionOutput:
    t0 = time.perf_counter()
    S = (inp.Q @ inp.K.T) / inp.d
    top = float(np.abs(S).max(initial=0.0))
    if top > OVERFLOW_GUARD:
        raise OverflowError(f"max |QK^T/d| = {top:.6g} exceeds {OVERFLOW_GUARD}")
    A = np.exp(S)
    numer = A @ _augment(inp.V)
    P, D = _normalize(numer, "exact attention")
    return AttentionOutput(P, D, "exact", time.perf_counter() - t0)


def exact_attention_loop(Q, K, V) -> np.ndarray:
    """Per-entry reference with no matrix products, for small tests."""
    Q, K, V = as_dense(Q), as_dense(K), as_dense(V)
    n, d = Q.shape
    out = np.zeros_like(V)
    for i in range(n):
        w = np.array([np.exp(sum(Q[i, k] * K[j, k] for k in range(d)) / d) for j in range(n)])
        out[i] = (w[:, None] * V).sum(axis=0) / w.sum()
    return out


def entry_bound(Q: np.ndarray, K: np.ndarray) -> float:
    """max|Q| * max|K|, which bounds every |<Q_i, K_j>| / d."""
    if Q.size == 0:
        return 0.0
    return float(np.abs(Q).max() * np.abs(K).max())


def fit_for(R: float, eps0: float) -> ExpPolynomial:
    return fit_exp_polynomial(max(R, MIN_BOUND), eps0)


def _lowrank_numerator(Q, K, Vaug, poly: ExpPolynomial, d: int) -> np.ndarray:
    """U1 (U2^T Vaug), built in row chunks so only chunk x r factor slabs exist."""
    n = Q.shape[0]
    r = monomial_count(d, poly.degree)
    basis = enumerate_monomials(d, poly.degree, cap=None)
    w = column_weights(basis, poly, 1.0 / d)
    step = max(1, min(n, max(MIN_CHUNK_ROWS, FACTOR_CHUNK_BYTES // (8 * r))))
    W = np.zeros((r, Vaug.shape[1]))
    for s in range(0, n, step):
        W += monomial_features(K[s : s + step], basis).T @ Vaug[s : s + step]
    W *= w[:, None]
    out = np.empty((n, Vaug.shape[1]))
    for s in range(0, n, step):
        out[s : s + step] = monomial_features(Q[s : s + step], basis) @ W
    return out


def poly_attention_as23(
    inp: AttentionInputs, eps0: float, poly: ExpPolynomial | None = None
) -> AttentionOutput:
    """Polynomial attention D~^-1 U1 (U2^T V); never forms an n x n matrix."""
    t0 = time.perf_counter()
    if poly is None:
        poly = fit_for(entry_bound(inp.Q, inp.K), eps0)
    numer = _lowrank_numerator(inp.Q, inp.K, _augment(inp.V), poly, inp.d)
    P, D = _normalize(numer, "polynomial normalization collapsed")
    info = {"degree": poly.degree, "R": poly.R, "r": monomial_count(inp.d, poly.degree)}
    return AttentionOutput(P, D, "as23", time.perf_counter() - t0, info)


def _mask_correction(Q, K, Qs, Ks, Vaug, mask: LargeMask, poly: ExpPolynomial, d: int) -> np.ndarray:
    """Sum over mask positions of (exp(G) - 1 - (P(Gs) - 1)) * Vaug rows.

    G = <Q_i, K_j>/d is the exact large part; P(Gs) is what the low-rank term
    already put there, so it is swapped out. Rows in ``large_rows`` cover all
    columns; the remaining rows only the ``large_cols`` strip.
    """
    n = mask.n
    out = np.zeros((n, Vaug.shape[1]))

    def run(rows, cols):
        if len(rows) == 0 or len(cols) == 0:
            return
        Kc, Ksc, Vc = K[cols], Ks[cols], Vaug[cols]
        for s in range(0, len(rows), ROW_BLOCK):
            blk = rows[s : s + ROW_BLOCK]
            G = (Q[blk] @ Kc.T) / d
            Gs = (Qs[blk] @ Ksc.T) / d
            W = np.expm1(G)
            W -= poly(Gs) - 1.0
            out[blk] += W @ Vc

    run(mask.large_rows, np.arange(n))
    run(mask.outside_rows(), mask.large_cols)
    return out


def _support_numerator(inp: AttentionInputs, T: float, eps0: float, poly):
    qs, ks = split(inp.Q, T), split(inp.K, T)
    mask = build_large_mask(qs, ks, inp.n)
    if poly is None:
        poly = fit_for(min(T * T, entry_bound(qs.small, ks.small)), eps0)
    Vaug = _augment(inp.V)
    numer = _lowrank_numerator(qs.small, ks.small, Vaug, poly, inp.d)
    if not mask.empty:
        numer += _mask_correction(inp.Q, inp.K, qs.small, ks.small, Vaug, mask, poly, inp.d)
    info = {
        "degree": poly.degree,
        "R": poly.R,
        "r": monomial_count(inp.d, poly.degree),
        "mask_size": mask.mask_size,
        "large_rows": len(mask.large_rows),
        "large_cols": len(mask.large_cols),
    }
    return numer, info


def gaussian_kde_single(
    inp: AttentionInputs, T: float, eps0: float, poly: ExpPolynomial | None = None
) -> np.ndarray:
    """Unnormalized C1 + C2 approximating exp(QK^T/d) V."""
    numer, _ = _support_numerator(inp, T, eps0, poly)
    return numer[:, :-1]


def approx_attention_single(
    inp: AttentionInputs, T: float, eps0: float, poly: ExpPolynomial | None = None
) -> AttentionOutput:
    """Support-basis attention: exact on the large-entry mask, polynomial elsewhere."""
    t0 = time.perf_counter()
    numer, info = _support_numerator(inp, T, eps0, poly)
    P, D = _normalize(numer, "support-basis attention")
    info["T"] = float(T)
    return AttentionOutput(P, D, "support_basis", time.perf_counter() - t0, info)


def verify_normalization_error(A, A_tilde) -> float:
    """max_i |D~_ii - D_ii| / D_ii for the row sums of A and A_tilde."""
    A, At = as_dense(A, "A"), as_dense(A_tilde, "A_tilde")
    if A.shape != At.shape:
        raise ShapeError(f"shapes differ: {A.shape} vs {At.shape}")
    D, Dt = A.sum(1), At.sum(1)
    if not np.all(D > 0):
        raise NormalizationError("reference row sum is not positive")
    return float(np.max(np.abs(Dt - D) / D))
