"""Error and mask size of the support-basis engine across thresholds.

Small entries go through the polynomial, entries above T are computed
exactly. Run: python3 demos/single_threshold_errors.py
"""
import numpy as np

from sbattn import AttentionInputs, approx_attention_single, exact_attention, poly_attention_as23
from sbattn.support_basis import sample_subgaussian

n, d = 512, 16
Q = sample_subgaussian(n, d, 0.1, 0)
K = sample_subgaussian(n, d, 0.1, 1)
V = sample_subgaussian(n, d, 1.0, 2)
inp = AttentionInputs(Q, K, V)
ref = exact_attention(inp).P

a = poly_attention_as23(inp, 1e-6)
print(f"as23: degree {a.info['degree']}, rank {a.info['r']}, linf err {np.abs(a.P - ref).max():.2e}")

print(f"{'T':>6} {'mask %':>8} {'degree':>6} {'linf err':>10}")
for T in (0.1, 0.2, 0.3, 0.4, 0.5):
    out = approx_attention_single(inp, T, 1e-6)
    frac = 100.0 * out.info["mask_size"] / n**2
    print(f"{T:6.2f} {frac:8.2f} {out.info['degree']:6d} {np.abs(out.P - ref).max():10.2e}")

# a few huge entries: AS23 would need a much larger fit range, the mask absorbs them
Q2 = Q.copy()
Q2[3, 5] = 25.0
inp2 = AttentionInputs(Q2, K, V)
out = approx_attention_single(inp2, 0.4, 1e-6)
print("with one entry of 25:", f"linf err {np.abs(out.P - exact_attention(inp2).P).max():.2e}",
      f"({out.info['large_rows']} large row, degree {out.info['degree']})")
