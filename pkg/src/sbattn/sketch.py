"""Tensor-sketch feature map for even-degree polynomial kernels.

phi'(x) = (S x^{(p/2)})^{(2)} is evaluated recursively, without forming
the r^{p/2}-dimensional tensor. Writing q = p/2 and w_1 = T_1 x,

    w_k = sqrt(z) * (S_k w_{k-1}) o (T_k x),      S_2 = identity,

so <w_q(x), w_q(y)> estimates <x, y>^q and <phi'(x), phi'(y)> = <w_q(x), w_q(y)>^2
is always nonnegative. All maps have i.i.d. +-1/sqrt(z) entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .matrix import ShapeError, as_dense

DEFAULT_KAPPA = 8.0


def sketch_width(p: int, eps: float, delta: float, n: int, kappa: float = DEFAULT_KAPPA) -> int:
    """z = ceil(kappa * p * eps^-2 * ln(n / delta))."""
    return max(1, math.ceil(kappa * p * math.log(n / delta) / (eps * eps)))


def _rademacher(rng: np.random.Generator, shape, z: int) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=shape) / math.sqrt(z)


@dataclass(frozen=True)
class SketchSpec:
    p: int
    input_dim: int
    z: int
    eps: float
    delta: float
    seed: int | tuple

    def __post_init__(self):
        if self.p < 2 or self.p % 2:
            raise ValueError(f"sketch degree must be an even integer >= 2, got {self.p}")
        if self.z < 1 or self.input_dim < 1:
            raise ValueError("z and input_dim must be positive")

    @classmethod
    def for_problem(cls, p, input_dim, n, eps, delta, seed, kappa=DEFAULT_KAPPA):
        return cls(p, input_dim, sketch_width(p, eps, delta, n, kappa), eps, delta, seed)

    @cached_property
    def maps(self) -> tuple[list[np.ndarray], list[np.ndarray | None]]:
        """(T_1..T_q as z x r, S_1..S_q as z x z or None)."""
        q = self.p // 2
        ss = np.random.SeedSequence(self.seed if isinstance(self.seed, int) else list(self.seed))
        Ts, Ss = [], [None, None]
        for k, child in enumerate(ss.spawn(2 * q)):
            rng = np.random.default_rng(child)
            if k < q:
                Ts.append(_rademacher(rng, (self.z, self.input_dim), self.z))
            elif k - q >= 2:
                Ss.append(_rademacher(rng, (self.z, self.z), self.z))
        return Ts, Ss[:q]


def sketch_half(X, spec: SketchSpec) -> np.ndarray:
    """Rows w_q(x) for each row x of X (n x z)."""
    X = as_dense(X, "X")
    if X.shape[1] != spec.input_dim:
        raise ShapeError(f"rows have length {X.shape[1]}, sketch expects {spec.input_dim}")
    Ts, Ss = spec.maps
    root = math.sqrt(spec.z)
    W = X @ Ts[0].T
    for k in range(1, len(Ts)):
        if Ss[k] is not None:
            W = W @ Ss[k].T
        W = root * W * (X @ Ts[k].T)
    return W


def sketch_feature_map(x, spec: SketchSpec) -> np.ndarray:
    """phi'(x) as a length z^2 vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("sketch_feature_map takes a single vector")
    w = sketch_half(x[None, :], spec)[0]
    return np.outer(w, w).ravel()


def feature_rows(X, spec: SketchSpec) -> np.ndarray:
    """phi' applied to every row (n x z^2)."""
    W = sketch_half(X, spec)
    return (W[:, :, None] * W[:, None, :]).reshape(W.shape[0], -1)


def sketched_poly_kernel(U1, U2, spec: SketchSpec, factored: bool = False):
    """phi'(U1) phi'(U2)^T, estimating (U1 U2^T)^{o p}.

    With ``factored`` the pair (phi'(U1), phi'(U2)) is returned instead.
    """
    F1, F2 = feature_rows(U1, spec), feature_rows(U2, spec)
    if factored:
        return F1, F2
    return F1 @ F2.T


def sketched_kernel_apply(U1, U2, V, spec: SketchSpec) -> np.ndarray:
    """phi'(U1) (phi'(U2)^T V) without forming the z^2-wide features.

    Row i of the result is sum_j <w_i, w_j>^2 V_j = w_i^T (sum_j V_j w_j w_j^T) w_i,
    so only one z x z matrix per column of V is held.
    """
    W1, W2 = sketch_half(U1, spec), sketch_half(U2, spec)
    V = as_dense(V, "V")
    out = np.empty((W1.shape[0], V.shape[1]))
    for c in range(V.shape[1]):
        M = (W2 * V[:, c : c + 1]).T @ W2
        out[:, c] = np.einsum("ia,ia->i", W1 @ M, W1)
    return out


def sketch_error_bound(U1, U2, p: int, eps: float) -> float:
    """max_{i,j} eps * ||U1_i||^p * ||U2_j||^p."""
    a = np.sqrt((np.asarray(U1) ** 2).sum(1)).max(initial=0.0)
    b = np.sqrt((np.asarray(U2) ** 2).sum(1)).max(initial=0.0)
    return float(eps * a**p * b**p)
