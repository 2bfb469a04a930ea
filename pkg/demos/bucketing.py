"""Bucketing rows by magnitude, and the multi-threshold engine on a toy input.

Run: python3 demos/bucketing.py
"""
import numpy as np

from sbattn import AttentionInputs, approx_attention_multi, bucket_scheme, exact_attention
from sbattn.multi import multi_block_identity, multi_reference_matrix, single_bucket_eps

rng = np.random.default_rng(3)
n, d = 32, 4
Q, K = rng.uniform(0.5, 2.0, (n, d)), rng.uniform(0.5, 2.0, (n, d))
V = rng.normal(size=(n, d))
inp = AttentionInputs(Q, K, V)

scheme = bucket_scheme(Q, K, 0.1)
print(f"b={scheme.b:.3f} B={scheme.B:.3f} m={scheme.m}")
print("rows per Q bucket:", np.bincount(scheme.q_assign, minlength=scheme.m + 1)[1:])

A = np.exp(Q @ K.T / d)
print("block identity linf:", f"{np.abs(multi_block_identity(Q, K, scheme) - A).max():.1e}")

# unsketched: bucketing shrinks each block's power C and with it the error
for label, eps_B in (("m=1", single_bucket_eps(Q, K)), ("bucketed", 0.1)):
    Ar = multi_reference_matrix(Q, K, bucket_scheme(Q, K, eps_B), 1e-3)
    print(f"{label:>9} reference, max rel err on A: {np.abs(Ar / A - 1).max():.2e}")

# sketched engine: the sketch noise dominates at this size
ref = exact_attention(inp).P
for label, eps_B in (("m=1", single_bucket_eps(Q, K)), ("bucketed", 0.1)):
    out = approx_attention_multi(inp, eps_B, 1e-3, 0.5, 0.05, seed=0)
    print(f"{label:>9} sketched engine, linf err on P: {np.abs(out.P - ref).max():.2e}")
