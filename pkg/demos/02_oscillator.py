"""A spring-mass system solved as a stationary point, with no end-time condition.

The initial velocity is never imposed. It comes out of stationarity through
the impulse ``f0 = m v0``: change ``f0`` and the recovered starting slope
follows it.

Run: python demos/02_oscillator.py
"""

import numpy as np

from convact import SdofProblem, TimeGrid, natural_condition_sdof, reference_sdof, solve_sdof

base = SdofProblem(m=1.0, k=1.0, u0=1.0)  # u'' + u = 0, u(0) = 1
print("conservative oscillator, exact solution cos(s)")
print(f"{'n':>5} {'sup error':>11} {'m u_h(0)-f0':>12} {'stationarity':>13}")
for n in (32, 64, 128, 256):
    g = TimeGrid(1.0, n)
    rep = solve_sdof(base, g)
    err = np.max(np.abs(rep.solution.values - np.cos(g.nodes)))
    print(f"{n:5d} {err:11.3e} {natural_condition_sdof(base, rep.solution):12.3e} {rep.residual_sup:13.1e}")

print("\nthe impulse selects the initial velocity:")
g = TimeGrid(2.0, 256)
for v0 in (-1.0, 0.0, 2.0):
    p = SdofProblem(m=1.0, k=1.0, u0=1.0, v0=v0).with_natural_impulse()
    u = solve_sdof(p, g).solution
    slope = (-3 * u.values[0] + 4 * u.values[1] - u.values[2]) / (2 * g.h)
    err = np.max(np.abs(u.values - reference_sdof(p, g).values))
    print(f"  f0 = {p.f0:+.1f}  ->  u_h'(0) = {slope:+.4f}   error vs exact {err:.1e}")
