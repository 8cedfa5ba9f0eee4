"""Convolution algebra on a grid: symmetry, integration by parts, and the half-order energy identity.

Run: python demos/01_convolution_identities.py
"""

import numpy as np

from convact import (
    HalfOperatorScheme,
    HalfScheme,
    TimeGrid,
    conv_commutativity_residual,
    conv_ibp_residual,
    convolve,
    half_energy_identity,
    sample,
)

print("[f, g](t) = integral_0^t f(s) g(t - s) ds\n")

g = TimeGrid(1.0, 256)
f, h = sample(np.exp, g), sample(np.cos, g)
print(f"[exp, cos](1)             = {convolve(f, h).value_at_t:.10f}")
print(f"|[exp, cos] - [cos, exp]| = {conv_commutativity_residual(f, h):.2e}   (symmetric to round-off)\n")

print("integration by parts, [u', v] - [u, v'] = u(0) v(t) - u(t) v(0):")
for n in (100, 200, 400, 800):
    grid = TimeGrid(1.0, n)
    res = conv_ibp_residual(sample(np.cos, grid), sample(np.sin, grid))
    print(f"  n = {n:4d}  residual {res:.3e}")
print("  (second order in h: each doubling divides the residual by about 4)\n")

print("half-order energy identity [D^1/2 u, D^1/2 u](t) = u(0) u(t), for u = cos:")
for kind in HalfScheme:
    row = []
    for n in (128, 256, 512, 1024):
        sc = HalfOperatorScheme(kind, TimeGrid(1.0, n))
        lhs, rhs = half_energy_identity(sample(np.cos, sc.grid), sc)
        row.append(f"{abs(lhs - rhs):.2e}")
    print(f"  {kind.value:<20} " + "  ".join(row))
print("  (slow fractional-order decrease: the half derivative is singular at s = 0)")
