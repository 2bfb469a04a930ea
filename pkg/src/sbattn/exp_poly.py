"""Polynomial approximation of exp and its monomial low-rank expansion.

A degree-g polynomial P with |P(x) - e^x| <= eps e^x on [-R, R] turns the
entrywise map M -> P(M) of a Gram matrix M = Q K^T * scale into a product
U1 U2^T whose rank r counts the monomials of total degree <= g in d variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from .matrix import as_dense, ShapeError

GRID_POINTS = 10_000
MAX_R = 50.0
INT64_MAX = 2**63 - 1


class PolyFitError(RuntimeError):
    """Degree cap reached before the relative-error certificate passed."""


class BoundViolation(ValueError):
    """Scaled Gram entries leave the interval the polynomial was fitted on."""


@dataclass(frozen=True)
class ExpPolynomial:
    degree: int
    coeffs: np.ndarray  # monomial basis, c_0 .. c_g
    R: float
    target_eps: float
    achieved_eps: float

    def __call__(self, x):
        """Horner evaluation, entrywise."""
        x = np.asarray(x, dtype=np.float64)
        out = np.full_like(x, self.coeffs[-1])
        for c in self.coeffs[-2::-1]:
            out = out * x + c
        return out


def _certificate_grid(R: float) -> np.ndarray:
    # linspace already contains both endpoints
    return np.linspace(-R, R, GRID_POINTS + 1)


def relative_error(poly: ExpPolynomial | np.ndarray, R: float) -> float:
    """Max of |P(x) - e^x| / e^x over the certificate grid."""
    x = _certificate_grid(R)
    if isinstance(poly, ExpPolynomial):
        px = poly(x)
    else:
        px = np.polynomial.polynomial.polyval(x, poly)
    ex = np.exp(x)
    return float(np.max(np.abs(px - ex) / ex))


def _cheb_monomial(R: float, g: int) -> np.ndarray:
    # interpolate exp(R t) at Chebyshev points of [-1, 1], then rescale t = x / R
    ch = Chebyshev.interpolate(lambda t: np.exp(R * t), g)
    a = ch.convert(kind=Polynomial).coef
    a = np.pad(a, (0, g + 1 - len(a)))
    return a / R ** np.arange(g + 1)


def fit_exp_polynomial(R: float, eps: float, max_degree: int = 60) -> ExpPolynomial:
    """Smallest-degree Chebyshev fit of exp on [-R, R] with relative error <= eps.

    Degrees are tried as 0, 1, 2, 4, 8, ... and the first passing bracket is
    bisected, so the returned degree is minimal for the (monotone) search.
    """
    R = float(R)
    if not (R > 0):
        raise ValueError(f"R must be positive, got {R}")
    if R > MAX_R:
        raise ValueError(f"R={R} exceeds the sanity cap {MAX_R}")
    if not (1e-12 <= eps < 0.1):
        raise ValueError(f"eps must lie in [1e-12, 0.1), got {eps}")

    cache: dict[int, tuple[np.ndarray, float]] = {}

    def attempt(g):
        if g not in cache:
            c = _cheb_monomial(R, g)
            cache[g] = (c, relative_error(c, R))
        return cache[g][1] <= eps

    lo, hi = -1, None
    g = 0
    while g <= max_degree:
        if attempt(g):
            hi = g
            break
        lo = g
        g = 1 if g == 0 else 2 * g
    if hi is None:
        if lo < max_degree and attempt(max_degree):
            hi = max_degree
        else:
            best = min(e for _, e in cache.values())
            raise PolyFitError(
                f"no degree <= {max_degree} reaches eps={eps:g} on [-{R:g}, {R:g}]; "
                f"best relative error {best:.3g}"
            )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if attempt(mid):
            hi = mid
        else:
            lo = mid
    coeffs, err = cache[hi]
    coeffs = coeffs.copy()
    coeffs.setflags(write=False)
    return ExpPolynomial(hi, coeffs, R, float(eps), err)


@dataclass(frozen=True)
class MonomialBasis:
    """Exponent vectors with total degree <= g in graded lexicographic order.

    ``parent[k]`` is the column index of the exponent with one factor of
    ``lastvar[k]`` removed, which lets the factor columns be built by a single
    multiply per column.
    """

    d: int
    g: int
    exponents: np.ndarray  # (r, d) int
    degree: np.ndarray  # (r,)
    parent: np.ndarray  # (r,), -1 for the constant
    lastvar: np.ndarray  # (r,)
    multinomial: np.ndarray  # int64

    @property
    def r(self) -> int:
        return len(self.degree)


def monomial_count(d: int, g: int) -> int:
    return sum(math.comb(d + j - 1, j) for j in range(g + 1))


def rank_bound(d: int, g: int) -> int:
    return math.comb(2 * (g + d), 2 * g)


def enumerate_monomials(d: int, g: int, cap: int | None = 10**6) -> MonomialBasis:
    """Graded-lex basis; equivalent to ``combinations_with_replacement`` per degree.

    Children of a degree j-1 monomial append a variable >= its last one, so
    walking parents in order and variables upward reproduces lex order.
    """
    if d < 1 or g < 0:
        raise ValueError(f"need d >= 1 and g >= 0, got d={d}, g={g}")
    if cap is not None and rank_bound(d, g) > cap:
        raise ValueError(
            f"monomial basis too large: r={monomial_count(d, g)} "
            f"(bound {rank_bound(d, g)} exceeds cap {cap})"
        )
    exps = [np.zeros((1, d), dtype=np.int64)]
    degs = [np.zeros(1, dtype=np.int64)]
    parents = [np.full(1, -1, dtype=np.int64)]
    lastvars = [np.zeros(1, dtype=np.int64)]
    mult = [np.ones(1, dtype=np.int64)]
    offset, prev_last = 0, np.zeros(1, dtype=np.int64)
    for j in range(1, g + 1):
        counts = d - prev_last
        par = np.repeat(np.arange(len(prev_last)), counts)
        last = np.concatenate([np.arange(lo, d) for lo in prev_last])
        e = exps[-1][par].copy()
        e[np.arange(len(par)), last] += 1
        m_par = mult[-1][par]
        if float(m_par.max()) * j > INT64_MAX:
            raise OverflowError(f"multinomial coefficient overflow at degree {j}")
        # j!/prod(e!) from the parent's (j-1)!/prod(e'!)
        m = m_par * j // e[np.arange(len(par)), last]
        exps.append(e)
        degs.append(np.full(len(par), j, dtype=np.int64))
        parents.append(par + offset)
        lastvars.append(last)
        mult.append(m)
        offset += len(prev_last)
        prev_last = last
    return MonomialBasis(
        d=d,
        g=g,
        exponents=np.concatenate(exps),
        degree=np.concatenate(degs),
        parent=np.concatenate(parents),
        lastvar=np.concatenate(lastvars),
        multinomial=np.concatenate(mult),
    )


@dataclass(frozen=True)
class LowRankFactors:
    U1: np.ndarray
    U2: np.ndarray
    basis: MonomialBasis
    eps0: float


def monomial_features(X: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Columns prod_k X[:, k] ** e_k for every exponent e of the basis.

    Built transposed (one contiguous row per monomial) and returned as a view.
    """
    n = X.shape[0]
    Xt = np.ascontiguousarray(X.T)
    Ft = np.empty((basis.r, n))
    Ft[0] = 1.0
    start = 1
    for j in range(1, basis.g + 1):
        stop = start + math.comb(basis.d + j - 1, j)
        sl = slice(start, stop)
        np.multiply(Ft[basis.parent[sl]], Xt[basis.lastvar[sl]], out=Ft[sl])
        start = stop
    return Ft.T


def column_weights(basis: MonomialBasis, poly: ExpPolynomial, scale: float) -> np.ndarray:
    c = np.asarray(poly.coeffs)
    deg = basis.degree
    w = np.zeros(basis.r)
    live = deg <= poly.degree
    w[live] = c[deg[live]] * scale ** deg[live].astype(np.float64)
    return w * basis.multinomial.astype(np.float64)


def build_low_rank_factors(
    Q,
    K,
    poly: ExpPolynomial,
    scale: float | None = None,
    check_bound: bool = False,
    cap: int | None = 10**6,
) -> LowRankFactors:
    """U1, U2 with (U1 U2^T)[i, l] = P(scale * <Q_i, K_l>); scale defaults to 1/d."""
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    if Q.shape[1] != K.shape[1]:
        raise ShapeError(f"Q {Q.shape} and K {K.shape} differ in column count")
    d = Q.shape[1]
    if scale is None:
        scale = 1.0 / d
    if check_bound:
        top = float(np.abs(Q @ K.T).max(initial=0.0)) * scale
        if top > poly.R * (1 + 1e-12):
            raise BoundViolation(f"max |scaled Gram entry| {top:.6g} exceeds R={poly.R:.6g}")
    basis = enumerate_monomials(d, poly.degree, cap=cap)
    U2 = monomial_features(K, basis)
    U1 = monomial_features(Q, basis)
    U1 *= column_weights(basis, poly, scale)
    return LowRankFactors(U1, U2, basis, poly.target_eps)


def eval_poly_gram_oracle(Q, K, poly: ExpPolynomial, scale: float | None = None) -> np.ndarray:
    """P(scale * <Q_i, K_j>) by a per-entry dot product and Horner (no BLAS)."""
    Q, K = as_dense(Q, "Q"), as_dense(K, "K")
    if scale is None:
        scale = 1.0 / Q.shape[1]
    G = (Q[:, None, :] * K[None, :, :]).sum(axis=2) * scale
    return poly(G)
