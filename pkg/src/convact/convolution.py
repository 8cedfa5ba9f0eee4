"""Temporal convolution ``[f, g](t) = int_0^t f(s) g(t - s) ds`` on uniform grids.

Two discretisations live here:

* :func:`convolve` applies the composite trapezoid rule at every node. On a
  uniform grid ``g(kh - jh)`` is itself a node value, so no interpolation is
  needed and the rule is symmetric in ``f`` and ``g``.
* :func:`conv_mass_matrix` and :func:`conv_stiffness_matrix` give the *exact*
  convolution at ``t`` of the piecewise-linear interpolants (and of their
  derivatives). These are the bilinear forms the discrete actions are built on.

Dirac-type convolutions ``[f0 delta, u](t) = f0 u(t)`` are never discretised;
callers use the value directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from convact.errors import GridMismatchError
from convact.signals import Signal, TimeGrid, derivative


@dataclass(frozen=True)
class ConvKernelResult:
    value_at_t: float
    trace: Signal


def _same_grid(f: Signal, g: Signal) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"cannot convolve signals on {f.grid} and {g.grid}")


def convolve(f: Signal, g: Signal) -> ConvKernelResult:
    """Trapezoid convolution of ``f`` and ``g`` at every node ``t_k = k h``.

    ``trace.values[k]`` approximates ``int_0^{kh} f(s) g(kh - s) ds``;
    ``trace.values[0]`` is zero.
    """
    _same_grid(f, g)
    a, b = f.values, g.values
    n1 = a.size
    full = np.convolve(a, b)[:n1]
    # half weights at the two ends of each sub-interval [0, kh]
    trace = f.grid.h * (full - 0.5 * a[0] * b - 0.5 * a * b[0])
    trace[0] = 0.0
    out = Signal(f.grid, trace)
    return ConvKernelResult(out.at_end, out)


def conv_commutativity_residual(f: Signal, g: Signal) -> float:
    """``max_k |[f, g](t_k) - [g, f](t_k)|``."""
    _same_grid(f, g)
    return float(np.max(np.abs(convolve(f, g).trace.values - convolve(g, f).trace.values)))


def conv_ibp_residual(v: Signal, u: Signal) -> float:
    """Defect of ``[v, u'](t) = v(0) u(t) - v(t) u(0) + [v', u](t)``.

    Derivatives are the second-order nodal ones of :func:`convact.signals.derivative`.
    """
    _same_grid(v, u)
    lhs = convolve(v, derivative(u)).value_at_t
    boundary = v.values[0] * u.at_end - v.at_end * u.values[0]
    rhs = boundary + convolve(derivative(v), u).value_at_t
    return abs(lhs - rhs)


def conv_ibp_second_residual(v: Signal, u: Signal) -> float:
    """Defect of ``[v', u'](t) = v'(0) u(t) - v'(t) u(0) + [v'', u](t)``.

    This is the rule above applied to ``v'``; ``v''`` is the nodal derivative
    applied twice.
    """
    _same_grid(v, u)
    dv = derivative(v)
    lhs = convolve(dv, derivative(u)).value_at_t
    boundary = dv.values[0] * u.at_end - dv.at_end * u.values[0]
    rhs = boundary + convolve(derivative(dv), u).value_at_t
    return abs(lhs - rhs)


def titchmarsh_probe(f: Signal, g: Signal, tol: float) -> bool:
    """Sanity probe of "``[f, g] = 0`` implies ``f = 0`` or ``g = 0``".

    With ``scale`` the larger of the two sup norms, returns ``False`` only when
    ``max |[f, g]| <= tol * scale`` while both ``max |f|`` and ``max |g|``
    exceed ``tol * scale``. Not a proof of anything.
    """
    _same_grid(f, g)
    nf = float(np.max(np.abs(f.values)))
    ng = float(np.max(np.abs(g.values)))
    scale = max(nf, ng)
    if scale == 0.0:
        return True
    small_conv = float(np.max(np.abs(convolve(f, g).trace.values))) <= tol * scale
    return (not small_conv) or nf <= tol * scale or ng <= tol * scale


# -- exact convolutions of piecewise-linear interpolants -------------------


def conv_mass_matrix(grid: TimeGrid) -> np.ndarray:
    """Matrix ``M`` with ``a @ M @ b = [a, b](t)`` for piecewise-linear ``a, b``.

    Cell ``i`` of the first factor meets cell ``n - 1 - i`` of the reflected
    second factor, so ``M`` is supported on three anti-diagonals.
    """
    n, h = grid.n, grid.h
    M = np.zeros((n + 1, n + 1))
    i = np.arange(n)
    np.add.at(M, (i, n - i), h / 3)
    np.add.at(M, (i, n - i - 1), h / 6)
    np.add.at(M, (i + 1, n - i), h / 6)
    np.add.at(M, (i + 1, n - i - 1), h / 3)
    return M


def conv_stiffness_matrix(grid: TimeGrid) -> np.ndarray:
    """Matrix ``K`` with ``a @ K @ b = [a', b'](t)`` for piecewise-linear ``a, b``."""
    n, h = grid.n, grid.h
    K = np.zeros((n + 1, n + 1))
    i = np.arange(n)
    np.add.at(K, (i + 1, n - i), 1 / h)
    np.add.at(K, (i + 1, n - i - 1), -1 / h)
    np.add.at(K, (i, n - i), -1 / h)
    np.add.at(K, (i, n - i - 1), 1 / h)
    return K


def conv_mixed_matrix(grid: TimeGrid) -> np.ndarray:
    """Matrix ``B`` with ``a @ B @ b = [a', b](t)`` for piecewise-linear ``a, b``.

    Not symmetric.
    """
    n = grid.n
    B = np.zeros((n + 1, n + 1))
    i = np.arange(n)
    # slope of a on cell i times the mean of b over the reflected cell
    for rows, sign in ((i + 1, 1.0), (i, -1.0)):
        np.add.at(B, (rows, n - i), sign * 0.5)
        np.add.at(B, (rows, n - i - 1), sign * 0.5)
    return B
