import math

import numpy as np
import pytest

from sbattn import engines as E
from sbattn import multi as MT


def signed_uniform(rng, n, d, lo, hi):
    return rng.uniform(lo, hi, (n, d)) * rng.choice([-1.0, 1.0], (n, d))


@pytest.mark.parametrize("b,B,eps", [(1.0, 1.0, 0.1), (0.5, 2.0, 0.1), (0.5, 2.0, 1.0), (1e-3, 7.0, 0.25)])
def test_bucket_count_brackets_B(b, B, eps):
    m = MT.bucket_count(b, B, eps)
    assert b * (1 + eps) ** (m - 1) <= B < b * (1 + eps) ** m


def test_every_row_in_its_bucket(rng):
    Q, K = signed_uniform(rng, 40, 3, 0.5, 2.0), signed_uniform(rng, 40, 3, 0.5, 2.0)
    s = MT.bucket_scheme(Q, K, 0.1)
    for M, a in ((Q, s.q_assign), (K, s.k_assign)):
        top = np.abs(M).max(1)
        assert np.all(top >= s.thresholds[a - 1]) and np.all(top < s.thresholds[a])


def test_scheme_errors():
    with pytest.raises(ValueError):
        MT.bucket_scheme(np.zeros((3, 2)), np.zeros((3, 2)), 0.1)
    with pytest.raises(ValueError):
        MT.bucket_scheme(np.ones((3, 2)), np.ones((3, 2)), 0.0)


def test_single_bucket_eps(rng):
    Q, K = signed_uniform(rng, 16, 2, 0.5, 2.0), signed_uniform(rng, 16, 2, 0.5, 2.0)
    assert MT.bucket_scheme(Q, K, MT.single_bucket_eps(Q, K)).m == 1


def test_blocks_sum_to_gram(rng):
    Q, K = signed_uniform(rng, 20, 3, 0.1, 2.0), signed_uniform(rng, 20, 3, 0.1, 2.0)
    s = MT.bucket_scheme(Q, K, 0.5)
    blocks = MT.decompose_blocks(Q, K, s)
    assert len(blocks) == s.m**2
    total = sum(b.expand(20) for b in blocks)
    assert np.abs(total - Q @ K.T).max() <= 1e-12
    for b in blocks:
        for nb in (b.q, b.k):
            if len(nb.rows):
                assert np.abs(nb.M_norm).max() <= math.sqrt(math.log(20)) * (1 + 1e-12)


def test_multi_identity(rng):
    Q, K = signed_uniform(rng, 24, 3, 0.1, 2.0), signed_uniform(rng, 24, 3, 0.1, 2.0)
    s = MT.bucket_scheme(Q, K, 0.8)
    assert s.m >= 2
    assert np.abs(MT.multi_block_identity(Q, K, s) - np.exp(Q @ K.T / 3)).max() <= 1e-12


def test_reference_close_to_exact(rng):
    n, d = 32, 4
    Q, K = signed_uniform(rng, n, d, 0.5, 2.0), signed_uniform(rng, n, d, 0.5, 2.0)
    s = MT.bucket_scheme(Q, K, 0.25)
    A = np.exp(Q @ K.T / d)
    Ar = MT.multi_reference_matrix(Q, K, s, 1e-4)
    assert np.abs(Ar - A).max() / A.max() <= 0.05


def test_even_degree():
    assert [MT.even_degree(c) for c in (0.3, 2.0, 2.01, 5.5)] == [2, 2, 4, 6]


def test_sketched_engine_runs_and_is_deterministic(rng):
    n, d = 32, 4
    Q, K = signed_uniform(rng, n, d, 0.5, 2.0), signed_uniform(rng, n, d, 0.5, 2.0)
    inp = E.AttentionInputs(Q, K, rng.normal(size=(n, d)))
    a = MT.approx_attention_multi(inp, 0.25, 1e-3, 0.5, 0.05, seed=3)
    b = MT.approx_attention_multi(inp, 0.25, 1e-3, 0.5, 0.05, seed=3)
    assert np.array_equal(a.P, b.P)
    assert a.info["m"] >= 2 and all(blk["p"] % 2 == 0 for blk in a.info["blocks"])
    err = np.abs(a.P - E.exact_attention(inp).P).max() / np.abs(inp.V).max()
    assert err < 0.5
