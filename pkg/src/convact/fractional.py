r"""Left Riemann-Liouville operators of order 1/2 on uniform grids.

.. math::

    (J^{1/2} u)(\tau) = \frac{1}{\Gamma(1/2)} \int_0^\tau \frac{u(s)}{\sqrt{\tau - s}}\,ds,
    \qquad
    D^{1/2} u = \frac{d}{d\tau} J^{1/2} u.

Two independent discretisations are offered through :class:`HalfOperatorScheme`:
Grünwald-Letnikov (the primary scheme) and product integration of the
piecewise-linear interpolant against the weakly singular kernel (used as the
oracle).

:func:`half_form_matrix` is different in kind: it gives the exact value of
``[D^{1/2} a, D^{1/2} b](t)`` for piecewise-linear ``a, b`` using closed-form
Beta integrals, and is what the dissipative actions are assembled from.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from convact.errors import GridMismatchError
from convact.signals import Signal, TimeGrid, derivative, diff_nodes
from convact.convolution import convolve

SQRT_PI = math.sqrt(math.pi)


class HalfScheme(enum.Enum):
    GRUNWALD_LETNIKOV = "grunwald_letnikov"
    DIRECT_QUADRATURE = "direct_quadrature"


def gl_weights(alpha: float, n: int) -> np.ndarray:
    """Grünwald-Letnikov weights ``(-1)^k binom(alpha, k)`` for ``k = 0..n``."""
    w = np.empty(n + 1)
    w[0] = 1.0
    for k in range(1, n + 1):
        w[k] = w[k - 1] * (k - 1 - alpha) / k
    return w


@dataclass(frozen=True)
class HalfOperatorScheme:
    kind: HalfScheme
    grid: TimeGrid

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", HalfScheme(self.kind))

    @cached_property
    def derivative_weights(self) -> np.ndarray:
        w = gl_weights(0.5, self.grid.n)
        w.flags.writeable = False
        return w

    @cached_property
    def integral_weights(self) -> np.ndarray:
        w = gl_weights(-0.5, self.grid.n)
        w.flags.writeable = False
        return w

    @cached_property
    def _product_weights(self) -> tuple[np.ndarray, np.ndarray]:
        # int over the cell at offset m (s from tau - m h to tau - (m-1) h) of the
        # linear interpolant against (tau - s)^(-1/2), split onto its two nodes
        h = self.grid.h
        m = np.arange(1, self.grid.n + 1)
        A, B = m * h, (m - 1) * h
        I0 = 2 * (np.sqrt(A) - np.sqrt(B))
        I1 = (2 / 3) * (A**1.5 - B**1.5)
        left = I0 * (1 - A / h) + I1 / h
        right = A / h * I0 - I1 / h
        return left / SQRT_PI, right / SQRT_PI


def _check(u: Signal, scheme: HalfOperatorScheme) -> None:
    if u.grid != scheme.grid:
        raise GridMismatchError(f"signal on {u.grid}, scheme on {scheme.grid}")


def half_integral(u: Signal, scheme: HalfOperatorScheme) -> Signal:
    """Riemann-Liouville integral of order 1/2 at every node; node 0 holds the limit 0."""
    _check(u, scheme)
    n, h = scheme.grid.n, scheme.grid.h
    x = u.values
    if scheme.kind is HalfScheme.GRUNWALD_LETNIKOV:
        out = math.sqrt(h) * np.convolve(scheme.integral_weights, x)[: n + 1]
    else:
        left, right = scheme._product_weights
        out = np.zeros(n + 1)
        # out[k] = sum_{m=1..k} left[m-1] x[k-m] + right[m-1] x[k-m+1]
        out[1:] = np.convolve(left, x)[:n] + np.convolve(right, x)[1 : n + 1]
        # np.convolve also picks up right[k] * x[0] at output k, which is past m = k
        out[1:n] -= right[1:] * x[0]
    out[0] = 0.0
    return Signal(u.grid, out)


def half_derivative(u: Signal, scheme: HalfOperatorScheme) -> Signal:
    """Riemann-Liouville derivative of order 1/2 at every node.

    The derivative of a function with ``u(0) != 0`` blows up like
    ``u(0) / sqrt(pi s)``; node 0 then holds ``+-inf``. With ``u(0) = 0`` node 0
    holds 0.
    """
    _check(u, scheme)
    n, h = scheme.grid.n, scheme.grid.h
    if scheme.kind is HalfScheme.GRUNWALD_LETNIKOV:
        out = np.convolve(scheme.derivative_weights, u.values)[: n + 1] / math.sqrt(h)
    else:
        out = diff_nodes(half_integral(u, scheme).values, h)
    u0 = u.values[0]
    out[0] = math.copysign(math.inf, u0) if u0 != 0 else 0.0
    return Signal(u.grid, out)


def _beta_weight_moments(t: float, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell moments of ``w(s) = s^(-1/2) (t - s)^(-1/2)``.

    Returns ``int w`` and ``int s w`` over ``[edges[j], edges[j+1]]`` using
    ``s = t sin^2(theta)``; the zeroth moments sum to ``B(1/2, 1/2) = pi``.
    """
    theta = np.arcsin(np.sqrt(np.clip(edges / t, 0.0, 1.0)))
    m0 = 2 * np.diff(theta)
    m1 = t * np.diff(theta - 0.5 * np.sin(2 * theta))
    return m0, m1


def half_product_convolution(da: Signal, db: Signal, a0: float, b0: float) -> float:
    """``[D^{1/2} a, D^{1/2} b](t)`` from nodal half derivatives.

    Each factor is written ``D(s) = g(s) / sqrt(s)`` with ``g(0) = a(0) / sqrt(pi)``;
    the product ``g_a(s) g_b(t - s)`` is interpolated linearly and integrated
    exactly against ``s^(-1/2) (t - s)^(-1/2)``. This keeps both endpoint
    singularities out of the quadrature.
    """
    grid = da.grid
    s = grid.nodes
    ga = np.empty_like(s)
    gb = np.empty_like(s)
    ga[1:] = np.sqrt(s[1:]) * da.values[1:]
    gb[1:] = np.sqrt(s[1:]) * db.values[1:]
    ga[0] = a0 / SQRT_PI
    gb[0] = b0 / SQRT_PI
    G = ga * gb[::-1]
    m0, m1 = _beta_weight_moments(grid.t_final, s)
    left = s[:-1]
    slope = np.diff(G) / grid.h
    return float(np.sum(G[:-1] * m0 + slope * (m1 - left * m0)))


def half_energy_identity(u: Signal, scheme: HalfOperatorScheme) -> tuple[float, float]:
    """Both sides of ``[D^{1/2} u, D^{1/2} u](t) = [u', u](t) + u(0) u(t)``.

    The left side convolves the scheme's half derivatives (see
    :func:`half_product_convolution`); the right side uses the nodal derivative
    and the trapezoid convolution.
    """
    _check(u, scheme)
    d = half_derivative(u, scheme)
    u0 = float(u.values[0])
    lhs = half_product_convolution(d, d, u0, u0)
    rhs = convolve(derivative(u), u).value_at_t + u0 * u.at_end
    return lhs, rhs


def half_ibp_residual(f: Signal, g: Signal, scheme: HalfOperatorScheme) -> float:
    """``|[f, D^{1/2} g](t) - [D^{1/2} f, g](t)|`` for ``f(0) = g(0) = 0``."""
    _check(f, scheme)
    _check(g, scheme)
    if f.values[0] != 0 or g.values[0] != 0:
        raise ValueError("half_ibp_residual requires f(0) = g(0) = 0")
    left = convolve(f, half_derivative(g, scheme)).value_at_t
    right = convolve(half_derivative(f, scheme), g).value_at_t
    return abs(left - right)


def _kernel_conv(p: float, q: float, L: np.ndarray) -> np.ndarray:
    # [s^p / Gamma(p+1), s^q / Gamma(q+1)](L) = L^(p+q+1) / Gamma(p+q+2), zero for L <= 0
    L = np.asarray(L, dtype=float)
    e = p + q + 1
    pos = np.where(L > 0, L, 0.0)
    return np.where(L > 0, pos**e, 0.0) / math.gamma(e + 1)


def half_form_matrix(grid: TimeGrid) -> np.ndarray:
    """Matrix ``W`` with ``a @ W @ b = [D^{1/2} a, D^{1/2} b](t)`` exactly.

    ``a`` and ``b`` are read as piecewise-linear interpolants. Writing
    ``a(s) = a(0) + sum_j c_j (s - s_j)_+`` with ``c_j`` the slope jumps, each
    half derivative is a sum of ``s^(-1/2) / Gamma(1/2)`` and shifted
    ``(s - s_j)_+^(1/2) / Gamma(3/2)`` kernels, and the convolution of two such
    kernels is a Beta integral in closed form.
    """
    # The form is invariant under s -> s / h, so work in units of h: the
    # stencils and kernel values are then small integers (halves) and the
    # assembly is exact in floating point.
    n = grid.n
    C = np.zeros((n, n + 1))
    j = np.arange(n)
    C[j, j] = -1.0
    C[j, j + 1] = 1.0
    C[1:] -= C[:-1].copy()
    e0 = np.zeros(n + 1)
    e0[0] = 1.0
    const_const = float(_kernel_conv(-0.5, -0.5, n))
    const_ramp = _kernel_conv(-0.5, 0.5, n - j)
    ramp_ramp = _kernel_conv(0.5, 0.5, n - j[:, None] - j[None, :])
    cross = C.T @ const_ramp
    W = const_const * np.outer(e0, e0) + np.outer(e0, cross) + np.outer(cross, e0) + C.T @ ramp_ramp @ C
    return 0.5 * (W + W.T)
