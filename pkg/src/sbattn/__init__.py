"""Exact and approximate softmax attention: polynomial, support-basis and
multi-threshold engines, plus the benchmark harness."""
from .engines import (
    AttentionInputs,
    AttentionOutput,
    approx_attention_single,
    exact_attention,
    gaussian_kde_single,
    poly_attention_as23,
    verify_normalization_error,
)
from .multi import approx_attention_multi, bucket_scheme, decompose_blocks

__all__ = [
    "AttentionInputs",
    "AttentionOutput",
    "approx_attention_multi",
    "approx_attention_single",
    "bucket_scheme",
    "decompose_blocks",
    "exact_attention",
    "gaussian_kde_single",
    "poly_attention_as23",
    "verify_normalization_error",
]
