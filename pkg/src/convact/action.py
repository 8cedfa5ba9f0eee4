"""Convolved action functionals, their first variations, and the natural impulses.

Trajectories are read as piecewise-linear interpolants of their nodal values
(tensor-product bilinear for the bar), and every convolution and spatial
integral in the actions is evaluated *exactly* on that space. Each discrete
action is therefore a quadratic form

    I_h(u) = 1/2 u.A.u - b.u

and its variation ``eta.(A u - b)`` is the exact directional derivative, which
is what the stationarity solver sets to zero.

The impulse terms are never discretised: ``[f0 delta, u](t) = f0 u(t)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Union

import numpy as np

from convact.convolution import conv_mass_matrix, conv_stiffness_matrix
from convact.errors import AdmissibilityError
from convact.fractional import half_form_matrix
from convact.signals import (
    Field,
    Signal,
    SpaceTimeGrid,
    SineMode,
    TimeGrid,
    diff_nodes,
    field_values,
    space_values,
    time_values,
)


@dataclass(frozen=True)
class SdofProblem:
    """``m u'' + c u' + k u = f`` with ``u(0) = u0``, ``u'(0) = v0``.

    ``f0`` is the amplitude of the impulse ``f0 delta(s)`` entering the action;
    stationarity is consistent with the initial velocity only when it equals
    :func:`natural_impulse_sdof`. There is deliberately no end-time datum.
    """

    m: float
    c: float = 0.0
    k: float = 0.0
    f: Any = None
    u0: float = 0.0
    v0: float = 0.0
    f0: float = 0.0

    def __post_init__(self) -> None:
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if self.c < 0 or self.k < 0:
            raise ValueError(f"damping and stiffness must be >= 0, got c={self.c}, k={self.k}")

    def with_natural_impulse(self) -> "SdofProblem":
        return dataclasses.replace(self, f0=natural_impulse_sdof(self))


def _at_origin(data, default=0.0) -> float:
    if data is None:
        return default
    if isinstance(data, Signal):
        return float(data.values[0])
    if callable(data):
        return float(np.asarray(data(np.zeros(1)), dtype=float).ravel()[0])
    arr = np.asarray(data, dtype=float)
    return float(arr.ravel()[0]) if arr.ndim else float(arr)


@dataclass(frozen=True)
class BarProblem:
    """Kelvin-Voigt bar ``rho u_ss = E u_xx + gamma u_xxs + f`` on ``(0, l)``.

    Fixed (``u = u_hat``) at ``x = 0``, traction ``p`` at ``x = l``. Space data
    (``u0``, ``v0``, ``f_hat0``) may be callables of ``x`` or arrays on the
    space nodes; time data (``u_hat``, ``p``) callables or :class:`Signal`;
    ``f`` a callable of ``(x, s)`` or a :class:`Field`. ``None`` means zero.
    """

    rho: float
    E: float
    gamma: float = 0.0
    l: float = 1.0
    f: Any = None
    u0: Any = None
    v0: Any = None
    u_hat: Any = None
    p: Any = None
    f_hat0: Any = None
    p_hat0: float = 0.0

    def __post_init__(self) -> None:
        if not (self.rho > 0 and self.E > 0 and self.l > 0):
            raise ValueError("rho, E and l must be positive")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.gamma == 0 and self.p_hat0 != 0:
            raise ValueError("an elastic bar (gamma = 0) admits no contact impulse p_hat0")
        if not np.isclose(_at_origin(self.u0), _at_origin(self.u_hat), rtol=1e-12, atol=1e-12):
            raise ValueError("incompatible data: u0(0) must equal u_hat(0)")

    def with_natural_impulse(self, grid: SpaceTimeGrid) -> "BarProblem":
        f_hat0, p_hat0 = natural_impulse_bar(self, grid)
        return dataclasses.replace(self, f_hat0=f_hat0, p_hat0=p_hat0)


Problem = Union[SdofProblem, BarProblem]
Trajectory = Union[Signal, Field]


# -- Galerkin matrices -------------------------------------------------------


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@lru_cache(maxsize=16)
def time_matrices(grid: TimeGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(M, K, W)``: exact ``[a, b]``, ``[a', b']`` and ``[D^1/2 a, D^1/2 b]`` at ``t``."""
    return (
        _readonly(conv_mass_matrix(grid)),
        _readonly(conv_stiffness_matrix(grid)),
        _readonly(half_form_matrix(grid)),
    )


@lru_cache(maxsize=16)
def space_matrices(nx: int, hx: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear finite-element mass and stiffness matrices on ``[0, l]``."""
    M = np.zeros((nx + 1, nx + 1))
    K = np.zeros((nx + 1, nx + 1))
    i = np.arange(nx)
    for a, b, mv, kv in ((i, i, 2, 1), (i + 1, i + 1, 2, 1), (i, i + 1, 1, -1), (i + 1, i, 1, -1)):
        np.add.at(M, (a, b), mv * hx / 6)
        np.add.at(K, (a, b), kv / hx)
    return _readonly(M), _readonly(K)


# -- single degree of freedom ------------------------------------------------


def _check_sdof(p: SdofProblem, u: Signal) -> None:
    if u.values[0] != p.u0:
        raise AdmissibilityError(f"u(0) = {u.values[0]!r} but the problem pins u(0) = {p.u0!r}")


def _check_variation(eta: Signal, grid: TimeGrid) -> None:
    if eta.grid != grid:
        raise AdmissibilityError("variation and trajectory live on different grids")
    if eta.values[0] != 0:
        raise AdmissibilityError(f"admissible variations vanish at s = 0, got {eta.values[0]!r}")


def sdof_system(p: SdofProblem, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """``(A, b)`` with ``I_h(u) = 1/2 u.A.u - b.u`` over all ``n + 1`` nodal values."""
    M, K, W = time_matrices(grid)
    A = p.m * K + p.k * M
    if p.c:
        A = A + p.c * W
    b = M @ time_values(p.f, grid)
    b[-1] += p.f0
    return A, b


def action_sdof(p: SdofProblem, u: Signal) -> float:
    """``m/2 [u',u'] + c/2 [u^(1/2),u^(1/2)] + k/2 [u,u] - [f,u] - f0 u(t)``."""
    _check_sdof(p, u)
    M, K, W = time_matrices(u.grid)
    x = u.values
    value = 0.5 * p.m * (x @ K @ x) + 0.5 * p.k * (x @ M @ x)
    if p.c:
        value += 0.5 * p.c * (x @ W @ x)
    value -= time_values(p.f, u.grid) @ M @ x + p.f0 * x[-1]
    return float(value)


def sdof_gradient(p: SdofProblem, u: Signal) -> np.ndarray:
    """Gradient of :func:`action_sdof` with respect to every nodal value."""
    A, b = sdof_system(p, u.grid)
    return A @ u.values - b


def variation_sdof(p: SdofProblem, u: Signal, eta: Signal) -> float:
    """Exact derivative of ``eps -> action_sdof(u + eps eta)`` at ``eps = 0``."""
    _check_sdof(p, u)
    _check_variation(eta, u.grid)
    return float(eta.values @ sdof_gradient(p, u))


def natural_impulse_sdof(p: SdofProblem) -> float:
    """Impulse amplitude ``m v0 + c u0`` matching the initial momentum."""
    return p.m * p.v0 + p.c * p.u0


def classical_matrices(grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Plain (non-convolved) ``L^2`` mass and stiffness matrices of hat functions."""
    return space_matrices(grid.n, grid.h)


def action_sdof_classical(p: SdofProblem, u: Signal) -> float:
    """``int_0^t (m/2 u'^2 - k/2 u^2 - f u) ds`` with plain products.

    Only meaningful for conservative problems, and only together with an
    end-time datum, which this package never supplies.
    """
    if p.c != 0:
        raise ValueError("the classical action has no dissipative term; c must be 0")
    M, K = classical_matrices(u.grid)
    x = u.values
    f = time_values(p.f, u.grid)
    return float(0.5 * p.m * (x @ K @ x) - 0.5 * p.k * (x @ M @ x) - f @ M @ x)


# -- bar -----------------------------------------------------------------------


@dataclass(frozen=True)
class BarData:
    """Problem data sampled on a grid."""

    u0: np.ndarray
    u_hat: np.ndarray
    traction: np.ndarray
    force: np.ndarray
    f_hat0: np.ndarray


def bar_data(p: BarProblem, grid: SpaceTimeGrid) -> BarData:
    if not np.isclose(grid.l, p.l):
        raise ValueError(f"grid length {grid.l} does not match bar length {p.l}")
    return BarData(
        u0=space_values(p.u0, grid.x),
        u_hat=time_values(p.u_hat, grid.time),
        traction=time_values(p.p, grid.time),
        force=field_values(p.f, grid),
        f_hat0=space_values(p.f_hat0, grid.x),
    )


def _check_bar(p: BarProblem, u: Field) -> BarData:
    data = bar_data(p, u.grid)
    if not np.array_equal(u.values[0, :], data.u_hat):
        raise AdmissibilityError("u(0, s) must equal u_hat(s) at every time node")
    if not np.array_equal(u.values[:, 0], data.u0):
        raise AdmissibilityError("u(x, 0) must equal u0(x) at every space node")
    return data


def _check_bar_variation(v: Field, grid: SpaceTimeGrid) -> None:
    if v.grid != grid:
        raise AdmissibilityError("variation and trajectory live on different grids")
    if np.any(v.values[0, :] != 0) or np.any(v.values[:, 0] != 0):
        raise AdmissibilityError("admissible variations vanish on x = 0 and on s = 0")


def bar_operator(p: BarProblem, grid: SpaceTimeGrid, U: np.ndarray) -> np.ndarray:
    """Apply the bar's quadratic-form matrix to nodal values ``U`` (shape ``grid.shape``)."""
    Mt, Kt, Wt = time_matrices(grid.time)
    Mx, Kx = space_matrices(grid.nx, grid.hx)
    out = p.rho * (Mx @ U @ Kt) + p.E * (Kx @ U @ Mt)
    if p.gamma:
        out = out + p.gamma * (Kx @ U @ Wt)
    return out


def bar_load(p: BarProblem, grid: SpaceTimeGrid, data: BarData | None = None) -> np.ndarray:
    """Linear part ``b`` of the bar action, shaped like the nodal grid."""
    data = data or bar_data(p, grid)
    Mt = time_matrices(grid.time)[0]
    Mx = space_matrices(grid.nx, grid.hx)[0]
    b = Mx @ data.force @ Mt
    b[:, -1] += Mx @ data.f_hat0
    b[-1, :] += Mt @ data.traction
    b[-1, -1] += p.p_hat0
    return b


def action_bar(p: BarProblem, u: Field) -> float:
    """Convolved action of the (visco)elastic bar at the trajectory ``u``."""
    data = _check_bar(p, u)
    U = u.values
    quad = float(np.sum(U * bar_operator(p, u.grid, U)))
    return 0.5 * quad - float(np.sum(U * bar_load(p, u.grid, data)))


def bar_gradient(p: BarProblem, u: Field) -> np.ndarray:
    return bar_operator(p, u.grid, u.values) - bar_load(p, u.grid)


def variation_bar(p: BarProblem, u: Field, v: Field) -> float:
    """Exact derivative of ``eps -> action_bar(u + eps v)`` at ``eps = 0``."""
    _check_bar(p, u)
    _check_bar_variation(v, u.grid)
    return float(np.sum(v.values * bar_gradient(p, u)))


def second_derivative_nodes(values: np.ndarray, h: float) -> np.ndarray:
    """Second-order accurate nodal second derivative (four-point one-sided at the ends)."""
    u = np.asarray(values, dtype=float)
    if u.size < 4:
        raise ValueError("need at least 4 nodes for a second derivative")
    d2 = np.empty_like(u)
    d2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    d2[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / h**2
    d2[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h**2
    return d2


def natural_impulse_bar(p: BarProblem, grid: SpaceTimeGrid) -> tuple[np.ndarray, float]:
    """``(f_hat0, p_hat0) = (rho v0 - gamma u0'', gamma u0'(l))`` on the space nodes."""
    x = grid.x
    u0 = space_values(p.u0, x)
    f_hat0 = p.rho * space_values(p.v0, x)
    p_hat0 = 0.0
    if not p.gamma:
        return f_hat0, p_hat0
    if isinstance(p.u0, SineMode):
        # exact: u0'' = -k^2 u0, and u0'(l) = 0 when the mode is built for this bar
        k = p.u0.wavenumber
        f_hat0 = f_hat0 + p.gamma * k**2 * u0
        if p.u0.length != p.l:
            p_hat0 = float(p.gamma * p.u0.amplitude * k * np.cos(k * p.l))
    else:
        f_hat0 = f_hat0 - p.gamma * second_derivative_nodes(u0, grid.hx)
        p_hat0 = float(p.gamma * diff_nodes(u0, grid.hx)[-1])
    return f_hat0, p_hat0


# -- generic entry points --------------------------------------------------------


def action(p: Problem, u: Trajectory) -> float:
    if isinstance(p, SdofProblem):
        return action_sdof(p, u)
    return action_bar(p, u)


def variation(p: Problem, u: Trajectory, eta: Trajectory) -> float:
    if isinstance(p, SdofProblem):
        return variation_sdof(p, u, eta)
    return variation_bar(p, u, eta)


def perturb(u: Trajectory, eta: Trajectory, eps: float) -> Trajectory:
    """``u + eps eta``; pinned values are untouched since ``eta`` vanishes there."""
    return type(u)(u.grid, u.values + eps * eta.values)
