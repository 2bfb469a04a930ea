"""Multi-threshold bucketing, normalized blocks and the sketched attention engine.

Rows of Q and K are bucketed by their max absolute entry on the geometric grid
T_l = b (1 + eps_B)^l. Block (l, l') of QK^T only involves rows of Q in bucket l
and rows of K in bucket l'; dividing those rows by C_l = T_l / sqrt(ln n) keeps
normalized entries below sqrt(ln n), and

    exp(block / d) = exp(Qn Kn^T / d) ** C,     C = C_l * C_l'.

Seen as full n x n matrices (zero outside their rows/columns) the blocks sum to
QK^T, so exp(QK^T / d) = sum of their entrywise exps - (m^2 - 1) * ones.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .engines import AttentionInputs, AttentionOutput, NormalizationError, _augment
from .exp_poly import (
    ExpPolynomial,
    column_weights,
    enumerate_monomials,
    fit_exp_polynomial,
    monomial_features,
)
from .matrix import as_dense, hadamard_pow
from .sketch import DEFAULT_KAPPA, SketchSpec, sketch_width, sketched_kernel_apply

B_FLOOR = 1e-6
CLAMP = 1e-300


@dataclass(frozen=True)
class BucketScheme:
    b: float
    B: float
    eps_B: float
    m: int
    thresholds: np.ndarray  # T_0 .. T_m
    q_assign: np.ndarray  # 1-based bucket per row
    k_assign: np.ndarray
    n: int

    def rows(self, which: str, ell: int) -> np.ndarray:
        a = self.q_assign if which == "q" else self.k_assign
        return np.nonzero(a == ell)[0]

    def C(self, ell: int) -> float:
        return float(self.thresholds[ell] / math.sqrt(math.log(self.n)))


def bucket_count(b: float, B: float, eps_B: float) -> int:
    """floor(log_{1+eps}(B/b)) + 1, corrected against the actual thresholds."""
    m = int(math.floor(math.log(B / b) / math.log1p(eps_B))) + 1
    m = max(m, 1)
    # smallest m with b(1+eps)^(m-1) <= B < b(1+eps)^m
    while m > 1 and b * (1 + eps_B) ** (m - 1) > B:
        m -= 1
    while b * (1 + eps_B) ** m <= B:
        m += 1
    return m


def _assign(M: np.ndarray, thresholds: np.ndarray, m: int) -> np.ndarray:
    rowmax = np.abs(M).max(axis=1)
    # bucket l holds T_{l-1} <= max < T_l; below T_0 (zero rows) -> 1, last bucket closed
    idx = np.searchsorted(thresholds[1:m], rowmax, side="right") + 1
    return np.clip(idx, 1, m).astype(np.int64)


def bucket_scheme(Q, K, eps_B: float) -> BucketScheme:
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    if eps_B <= 0:
        raise ValueError("eps_B must be positive")
    n = Q.shape[0]
    if n < 2 or K.shape[0] != n:
        raise ValueError("need Q and K with the same n >= 2 rows")
    mags = np.abs(np.concatenate([Q.ravel(), K.ravel()]))
    B = float(mags.max(initial=0.0))
    if B == 0.0:
        raise ValueError("Q and K are all zero; the bucket floor b is undefined")
    b = float(max(mags[mags > 0].min(), B_FLOOR * B))
    m = bucket_count(b, B, eps_B)
    thresholds = b * (1 + eps_B) ** np.arange(m + 1, dtype=np.float64)
    return BucketScheme(b, B, float(eps_B), m, thresholds, _assign(Q, thresholds, m), _assign(K, thresholds, m), n)


def single_bucket_eps(Q, K) -> float:
    """An eps_B that yields m = 1 for these inputs."""
    mags = np.abs(np.concatenate([np.ravel(Q), np.ravel(K)]))
    B = mags.max()
    b = max(mags[mags > 0].min(), B_FLOOR * B)
    return float((B / b) * (1 + 1e-9) - 1 + 1e-12)


@dataclass(frozen=True)
class NormalizedBlock:
    ell: int
    C_scalar: float
    rows: np.ndarray
    M_norm: np.ndarray


@dataclass(frozen=True)
class Block:
    ell: int
    ell2: int
    C: float
    q: NormalizedBlock
    k: NormalizedBlock

    def expand(self, n: int, d: int | None = None) -> np.ndarray:
        """n x n matrix with C * Qn Kn^T on the block and zeros elsewhere."""
        out = np.zeros((n, n))
        out[np.ix_(self.q.rows, self.k.rows)] = self.C * (self.q.M_norm @ self.k.M_norm.T)
        return out


def normalized_block(M: np.ndarray, scheme: BucketScheme, which: str, ell: int) -> NormalizedBlock:
    rows = scheme.rows(which, ell)
    c = scheme.C(ell)
    return NormalizedBlock(ell, c, rows, M[rows] / c)


def decompose_blocks(Q, K, scheme: BucketScheme) -> list[Block]:
    """All m^2 blocks in (l, l') order, empty ones included."""
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    qb = [normalized_block(Q, scheme, "q", l) for l in range(1, scheme.m + 1)]
    kb = [normalized_block(K, scheme, "k", l) for l in range(1, scheme.m + 1)]
    return [Block(a.ell, c.ell, a.C_scalar * c.C_scalar, a, c) for a in qb for c in kb]


def multi_block_identity(Q, K, scheme: BucketScheme) -> np.ndarray:
    """sum_blocks exp(expand(block)/d) - (m^2 - 1) ones, densely (for checks)."""
    Q = as_dense(Q)
    n, d = Q.shape
    out = np.zeros((n, n))
    for blk in decompose_blocks(Q, K, scheme):
        out += np.exp(blk.expand(n) / d)
    return out - (scheme.m**2 - 1)


def _block_factors(blk: Block, poly: ExpPolynomial, d: int, scale: float):
    basis = enumerate_monomials(d, poly.degree, cap=None)
    w = column_weights(basis, poly, scale)
    U1 = monomial_features(blk.q.M_norm, basis) * w
    U2 = monomial_features(blk.k.M_norm, basis)
    return U1, U2, basis


def multi_reference_matrix(Q, K, scheme: BucketScheme, eps0: float) -> np.ndarray:
    """Unsketched real-power approximation of exp(QK^T/d), built densely."""
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    n, d = Q.shape
    poly = fit_exp_polynomial(math.log(n), eps0)
    out = np.zeros((n, n))
    for blk in decompose_blocks(Q, K, scheme):
        full = np.ones((n, n))
        if len(blk.q.rows) and len(blk.k.rows):
            U1, U2, _ = _block_factors(blk, poly, d, 1.0 / d)
            approx = np.maximum(U1 @ U2.T, CLAMP)
            full[np.ix_(blk.q.rows, blk.k.rows)] = hadamard_pow(approx, blk.C)
        out += full
    return out - (scheme.m**2 - 1)


def multi_reference_oracle(Q, K, V, scheme: BucketScheme, eps0: float) -> np.ndarray:
    return multi_reference_matrix(Q, K, scheme, eps0) @ as_dense(V, "V")


def even_degree(C: float) -> int:
    return max(2, 2 * math.ceil(C / 2))


def approx_attention_multi(
    inp: AttentionInputs,
    eps_B: float,
    eps0: float,
    eps_sk: float,
    delta: float,
    seed: int = 0,
    kappa: float = DEFAULT_KAPPA,
) -> AttentionOutput:
    """Bucketed attention with sketched polynomial kernels on every block.

    Each block needs exp(x)^C with real C. The sketch degree is the even
    integer p >= C and the inner polynomial approximates exp(x C/p), so that
    its p-th power targets exp(C x) with no rounding of C.
    """
    t0 = time.perf_counter()
    n, d = inp.n, inp.d
    scheme = bucket_scheme(inp.Q, inp.K, eps_B)
    Vaug = _augment(inp.V)
    colsum = Vaug.sum(axis=0)
    numer = np.zeros((n, d + 1))
    ln_n = math.log(n)
    blocks_info = []
    for blk in decompose_blocks(inp.Q, inp.K, scheme):
        # full n x n view of this block: its entries plus ones everywhere else
        numer += colsum
        if len(blk.q.rows) == 0 or len(blk.k.rows) == 0:
            continue
        numer[blk.q.rows] -= Vaug[blk.k.rows].sum(axis=0)
        p = even_degree(blk.C)
        s = blk.C / p
        poly = fit_exp_polynomial(s * ln_n, eps0)
        basis = enumerate_monomials(d, poly.degree, cap=None)
        w = column_weights(basis, poly, s / d)
        live = w != 0
        # split each column weight evenly between the two sides
        root = np.sqrt(np.abs(w[live]))
        U1 = monomial_features(blk.q.M_norm, basis)[:, live] * (np.sign(w[live]) * root)
        U2 = monomial_features(blk.k.M_norm, basis)[:, live] * root
        spec = SketchSpec(
            p, U1.shape[1], sketch_width(p, eps_sk, delta, n, kappa), eps_sk, delta,
            seed=(seed, blk.ell, blk.ell2),
        )
        numer[blk.q.rows] += sketched_kernel_apply(U1, U2, Vaug[blk.k.rows], spec)
        blocks_info.append(
            {"ell": blk.ell, "ell2": blk.ell2, "C": blk.C, "p": p, "degree": poly.degree,
             "r": U1.shape[1], "z": spec.z}
        )
    numer -= (scheme.m**2 - 1) * colsum
    D = numer[:, -1].copy()
    if not np.all(D > 0):
        i = int(np.argmin(D))
        raise NormalizationError(f"multi-threshold row sum {D[i]!r} at row {i} is not positive; sketch too narrow")
    P = numer[:, :-1] / D[:, None]
    info = {"m": scheme.m, "b": scheme.b, "B": scheme.B, "blocks": blocks_info}
    return AttentionOutput(P, D, "multi_threshold", time.perf_counter() - t0, info)
