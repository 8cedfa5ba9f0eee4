"""Why the plain action needs an end-time value and the convolved one does not.

Stationarity of the usual integral of (kinetic - potential) energy, with only
u(0) known, gives n - 1 equations for n unknowns. Adding the end value
u(t) squares the system. The convolved action's system is square from the
start and only ever sees initial data.

Run: python demos/05_classical_contrast.py
"""

import math

import numpy as np

from convact import SdofProblem, TimeGrid, classical_system, convolved_system

p = SdofProblem(m=1.0, k=1.0, u0=1.0)
print(f"{'n':>4} {'plain: rows x unknowns':>23} {'rank':>5} {'with u(t)':>10} {'convolved':>10}")
for n in (8, 16, 32, 64):
    g = TimeGrid(1.0, n)
    cls, _ = classical_system(p, g)
    end, _ = classical_system(p, g, end_value=math.cos(1.0))
    conv, _ = convolved_system(p, g)
    print(
        f"{n:4d} {cls.shape[0]:>14d} x {cls.shape[1]:<6d} {np.linalg.matrix_rank(cls):5d}"
        f" {np.linalg.matrix_rank(end):10d} {np.linalg.matrix_rank(conv):10d}"
    )
print("\nthe plain system is one equation short until u(t) is supplied;")
print("supplying it means knowing the answer at the final time in advance.")
