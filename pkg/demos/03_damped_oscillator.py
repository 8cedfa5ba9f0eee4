"""Damping through the half-order convolution term.

For ``m u'' + c u' + k u = f`` the natural impulse is ``f0 = m v0 + c u0``.
The critically damped case ``m = 1, c = 2, k = 1`` from rest at ``u0 = 1``
has exact solution ``(1 + s) exp(-s)``.

Run: python demos/03_damped_oscillator.py
"""

import numpy as np

from convact import SdofProblem, Sinusoid, TimeGrid, natural_condition_sdof, reference_sdof, solve_sdof

p = SdofProblem(m=1.0, c=2.0, k=1.0, u0=1.0).with_natural_impulse()
print(f"critically damped, natural impulse f0 = {p.f0}")
print(f"{'n':>5} {'sup error':>11} {'order':>6} {'m u_h(0) + c u0 - f0':>22}")
prev = None
for n in (64, 128, 256, 512):
    g = TimeGrid(1.0, n)
    u = solve_sdof(p, g).solution
    err = np.max(np.abs(u.values - (1 + g.nodes) * np.exp(-g.nodes)))
    order = "" if prev is None else f"{np.log2(prev / err):6.2f}"
    print(f"{n:5d} {err:11.3e} {order:>6} {natural_condition_sdof(p, u):22.3e}")
    prev = err

print("\nforced, underdamped, over a longer window (reference: closed form)")
q = SdofProblem(m=1.0, c=0.3, k=4.0, f=Sinusoid(1.0, 3.0), u0=0.0, v0=1.0).with_natural_impulse()
g = TimeGrid(10.0, 1024)
rep = solve_sdof(q, g)
ref = reference_sdof(q, g)
print(f"  sup error {np.max(np.abs(rep.solution.values - ref.values)):.2e},"
      f" condition estimate {rep.condition_estimate:.2e}")
