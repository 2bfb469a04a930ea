import numpy as np
import pytest

from sbattn import engines as E
from sbattn.exp_poly import monomial_count
from sbattn.matrix import ShapeError


def inputs(rng, n=40, d=4, s=0.3):
    return E.AttentionInputs(rng.normal(0, s, (n, d)), rng.normal(0, s, (n, d)), rng.normal(size=(n, d)))


def test_exact_matches_loop(rng):
    inp = inputs(rng, 12, 3)
    assert np.allclose(E.exact_attention(inp).P, E.exact_attention_loop(inp.Q, inp.K, inp.V), rtol=1e-12, atol=1e-13)


def test_exact_known_value():
    # Q K^T = 0 gives uniform weights, so every row is the mean of V
    Q = np.zeros((3, 2))
    V = np.arange(6.0).reshape(3, 2)
    P = E.exact_attention(E.AttentionInputs(Q, Q, V)).P
    assert np.allclose(P, np.tile(V.mean(0), (3, 1)))


def test_inputs_validation():
    with pytest.raises(ShapeError):
        E.AttentionInputs(np.ones((3, 2)), np.ones((3, 3)), np.ones((3, 2)))


def test_overflow_guard():
    Q = np.full((2, 1), 30.0)
    with pytest.raises(OverflowError):
        E.exact_attention(E.AttentionInputs(Q, Q, np.ones((2, 1))))


@pytest.mark.parametrize("eps0", [1e-3, 1e-8])
def test_as23_within_envelope(rng, eps0):
    inp = inputs(rng)
    out = E.poly_attention_as23(inp, eps0)
    ex = E.exact_attention(inp).P
    err = np.abs(out.P - ex).max() / np.abs(inp.V).max()
    assert err <= 4 * eps0
    assert out.info["r"] == monomial_count(inp.d, out.info["degree"])


@pytest.mark.parametrize("T", [0.1, 0.3, 0.6])
def test_support_within_envelope(rng, T):
    inp = inputs(rng)
    out = E.approx_attention_single(inp, T, 1e-6)
    ex = E.exact_attention(inp).P
    assert np.abs(out.P - ex).max() / np.abs(inp.V).max() <= 4e-6
    assert out.info["T"] == T


def test_support_with_large_entries(rng):
    # entries far beyond the polynomial range are handled exactly on the mask
    Q, K = rng.normal(0, 0.1, (30, 3)), rng.normal(0, 0.1, (30, 3))
    Q[4, 1], K[7, 2] = 20.0, -15.0
    inp = E.AttentionInputs(Q, K, rng.normal(size=(30, 3)))
    out = E.approx_attention_single(inp, 0.5, 1e-8)
    assert out.info["large_rows"] == 1 and out.info["large_cols"] == 1
    assert np.abs(out.P - E.exact_attention(inp).P).max() <= 1e-6


def test_empty_mask_bit_equal(rng):
    inp = inputs(rng, s=0.1)
    a = E.poly_attention_as23(inp, 1e-6)
    s = E.approx_attention_single(inp, 5.0, 1e-6)
    assert s.info["mask_size"] == 0
    assert np.array_equal(a.P, s.P)


def test_kde_matches_numerator(rng):
    inp = inputs(rng, 16, 2)
    C = E.gaussian_kde_single(inp, 0.4, 1e-10)
    ref = np.exp(inp.Q @ inp.K.T / inp.d) @ inp.V
    assert np.allclose(C, ref, rtol=1e-8, atol=1e-8)


def test_normalization_error():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    At = np.array([[1.0, 1.2], [2.0, 2.0]])
    assert E.verify_normalization_error(A, At) == pytest.approx(0.1)
    with pytest.raises(E.NormalizationError):
        E.verify_normalization_error(np.zeros((2, 2)), At)
