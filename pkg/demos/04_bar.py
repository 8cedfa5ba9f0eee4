"""A bar fixed at x = 0 and free at x = l, elastic and then Kelvin-Voigt.

The space-time action is made stationary on a tensor grid. The traction-free
end and the initial velocity both come out as natural conditions.

Run: python demos/04_bar.py
"""

import numpy as np

from convact import (
    BarProblem,
    SineMode,
    SpaceTimeGrid,
    bar_energy,
    neumann_residual_bar,
    reference_bar_modal,
    reference_bar_timestep,
    sample_field,
    solve_bar,
)

wave = lambda X, S: np.sin(np.pi * X / 2) * np.cos(np.pi * S / 2)

print("elastic standing wave sin(pi x / 2) cos(pi s / 2)")
print(f"{'grid':>7} {'sup error':>11} {'end traction':>13}")
elastic = BarProblem(rho=1.0, E=1.0, u0=SineMode(1))
for nx in (8, 16, 24, 32):
    g = SpaceTimeGrid.uniform(1.0, 1.0, nx, 2 * nx)
    p = elastic.with_natural_impulse(g)
    u = solve_bar(p, g).solution
    err = np.max(np.abs(u.values - sample_field(wave, g).values))
    neu = np.max(np.abs(neumann_residual_bar(p, u).values))
    print(f"{nx:3d}x{2 * nx:<3d} {err:11.3e} {neu:13.3e}")

g = SpaceTimeGrid.uniform(1.0, 1.0, 16, 32)
modal = reference_bar_modal(elastic, g)
print(f"(modal series agrees with the closed form to {np.max(np.abs(modal.values - sample_field(wave, g).values)):.0e})")

print("\nKelvin-Voigt bar, same start, against a method-of-lines reference")
print(f"{'gamma':>6} {'grid':>7} {'sup error':>11} {'energy at t':>12}")
for gamma in (0.05, 0.5):
    for nx, nt in ((8, 24), (16, 48), (32, 96)):
        g = SpaceTimeGrid.uniform(1.0, 1.0, nx, nt)
        p = BarProblem(rho=1.0, E=1.0, gamma=gamma, u0=SineMode(1)).with_natural_impulse(g)
        u = solve_bar(p, g).solution
        err = np.max(np.abs(u.values - reference_bar_timestep(p, g).values))
        print(f"{gamma:6.2f} {nx:3d}x{nt:<3d} {err:11.3e} {bar_energy(p, u)[-1]:12.4f}")
print("(initial energy is pi^2 / 16 = 0.6169; viscosity drains it)")
