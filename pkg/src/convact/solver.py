"""Stationary trajectories of the discrete actions, and independent references.

The stationarity systems are dense (the convolution couples every time level
to its mirror image) and nonsymmetric once restricted to the free nodes; they
are solved by LU with partial pivoting. The free nodes are every node not
pinned by the essential data: for the oscillator all of ``s_1 .. s_n``,
including the final time, and for the bar every node off ``x = 0`` and
``s = 0``. Nothing here ever reads an end-time displacement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from convact.action import (
    BarProblem,
    SdofProblem,
    _check_bar,
    _check_sdof,
    bar_data,
    bar_gradient,
    bar_load,
    bar_operator,
    classical_matrices,
    sdof_gradient,
    sdof_system,
    space_matrices,
    time_matrices,
)
from convact.errors import SingularSystemError, SystemTooLargeError
from convact.signals import (
    Constant,
    Field,
    Signal,
    SpaceTimeGrid,
    Sinusoid,
    TimeGrid,
    Zero,
    diff_nodes,
    field_values,
    space_values,
    time_values,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_FREE_NODES = 6000


@dataclass(frozen=True, eq=False)
class StationaryReport:
    solution: Union[Signal, Field]
    residual_sup: float
    system_size: int
    condition_estimate: float
    free_nodes: np.ndarray


def sdof_free_nodes(grid: TimeGrid) -> np.ndarray:
    """Indices of the unknown nodal values: all but ``s = 0``."""
    return np.arange(1, grid.n + 1)


def bar_free_mask(grid: SpaceTimeGrid) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    mask[0, :] = False
    mask[:, 0] = False
    return mask


def _lu_solve(A: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    anorm = np.linalg.norm(A, 1)
    lu, piv, info = scipy.linalg.lapack.dgetrf(A)
    if info > 0:
        raise SingularSystemError("stationarity system is exactly singular", math.inf)
    rcond, _ = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    cond = math.inf if rcond == 0 else 1.0 / rcond
    if rcond < A.shape[0] * np.finfo(float).eps:
        raise SingularSystemError("stationarity system is numerically rank deficient", cond)
    x, info = scipy.linalg.lapack.dgetrs(lu, piv, rhs)
    return x, cond


# -- certification --------------------------------------------------------------


def _normalized(residual: np.ndarray, scale: np.ndarray) -> float:
    top = float(np.max(np.abs(residual))) if residual.size else 0.0
    denom = float(np.max(scale)) if scale.size else 0.0
    return top / denom if denom > 0 else top


def _sdof_scale(p: SdofProblem, u: Signal) -> np.ndarray:
    M, K, W = time_matrices(u.grid)
    a = np.abs(u.values)
    scale = p.m * (np.abs(K) @ a) + p.k * (np.abs(M) @ a) + np.abs(M) @ np.abs(time_values(p.f, u.grid))
    if p.c:
        scale += p.c * (np.abs(W) @ a)
    scale[-1] += abs(p.f0)
    return scale


def _bar_scale(p: BarProblem, u: Field) -> np.ndarray:
    Mt, Kt, Wt = time_matrices(u.grid.time)
    Mx, Kx = space_matrices(u.grid.nx, u.grid.hx)
    a = np.abs(u.values)
    scale = p.rho * (np.abs(Mx) @ a @ np.abs(Kt)) + p.E * (np.abs(Kx) @ a @ np.abs(Mt))
    if p.gamma:
        scale += p.gamma * (np.abs(Kx) @ a @ np.abs(Wt))
    data = bar_data(p, u.grid)
    scale += np.abs(Mx) @ np.abs(data.force) @ np.abs(Mt)
    scale[:, -1] += np.abs(Mx) @ np.abs(data.f_hat0)
    scale[-1, :] += np.abs(Mt) @ np.abs(data.traction)
    scale[-1, -1] += abs(p.p_hat0)
    return scale


def certify_stationarity(p: Union[SdofProblem, BarProblem], u: Union[Signal, Field]) -> float:
    """Largest variation over the free nodal basis, relative to the gradient scale.

    The scale is the largest row of ``|A| |u| + |b|``, so a value near machine
    precision means ``u`` is stationary to round-off.
    """
    if isinstance(p, SdofProblem):
        _check_sdof(p, u)
        g = sdof_gradient(p, u)[sdof_free_nodes(u.grid)]
        return _normalized(g, _sdof_scale(p, u)[sdof_free_nodes(u.grid)])
    _check_bar(p, u)
    mask = bar_free_mask(u.grid)
    return _normalized(bar_gradient(p, u)[mask], _bar_scale(p, u)[mask])


# -- stationarity solvers -----------------------------------------------------------


def solve_sdof(p: SdofProblem, grid: TimeGrid) -> StationaryReport:
    """Stationary point of the oscillator action with ``u(0)`` pinned and ``u(t)`` free."""
    if grid.n < 8:
        raise ValueError(f"solve_sdof needs n >= 8, got {grid.n}")
    A, b = sdof_system(p, grid)
    free = sdof_free_nodes(grid)
    rhs = b[free] - A[free, 0] * p.u0
    x, cond = _lu_solve(A[np.ix_(free, free)], rhs)
    values = np.empty(grid.num_nodes)
    values[0] = p.u0
    values[free] = x
    u = Signal(grid, values)
    return StationaryReport(u, certify_stationarity(p, u), free.size, cond, free)


def solve_bar(
    p: BarProblem, grid: SpaceTimeGrid, max_free_nodes: int = DEFAULT_MAX_FREE_NODES
) -> StationaryReport:
    """Stationary point of the bar action; ``x = l`` and ``s = t`` stay free."""
    mask = bar_free_mask(grid)
    nfree = int(mask.sum())
    if nfree > max_free_nodes:
        raise SystemTooLargeError(f"{nfree} free nodes exceed the dense-solve cap of {max_free_nodes}")
    data = bar_data(p, grid)
    pinned = np.zeros(grid.shape)
    pinned[0, :] = data.u_hat
    pinned[:, 0] = data.u0
    # rhs = b_free - A_free,pinned u_pinned, read off the gradient at the pinned part
    rhs = -(bar_operator(p, grid, pinned) - bar_load(p, grid, data))[mask]

    Mt, Kt, Wt = time_matrices(grid.time)
    Mx, Kx = space_matrices(grid.nx, grid.hx)
    A = p.rho * np.kron(Mx[1:, 1:], Kt[1:, 1:]) + p.E * np.kron(Kx[1:, 1:], Mt[1:, 1:])
    if p.gamma:
        A += p.gamma * np.kron(Kx[1:, 1:], Wt[1:, 1:])
    x, cond = _lu_solve(A, rhs)
    values = pinned.copy()
    values[mask] = x
    u = Field(grid, values)
    free = np.flatnonzero(mask.ravel())
    return StationaryReport(u, certify_stationarity(p, u), nfree, cond, free)


# -- classical contrast -------------------------------------------------------------


def classical_system(p: SdofProblem, grid: TimeGrid, end_value: float | None = None):
    """Stationarity equations of the plain ``L^2`` action in the unknowns ``u_1 .. u_n``.

    Variations must vanish at both ends, so only the interior nodes give
    equations: ``n - 1`` rows for ``n`` unknowns. Passing ``end_value`` appends
    the end-time condition ``u_n = end_value`` as a final row.
    """
    if p.c != 0:
        raise ValueError("the classical action has no dissipative term; c must be 0")
    M, K = classical_matrices(grid)
    A = p.m * K - p.k * M
    b = M @ time_values(p.f, grid)
    rows = np.arange(1, grid.n)
    cols = sdof_free_nodes(grid)
    mat = A[np.ix_(rows, cols)]
    rhs = b[rows] - A[rows, 0] * p.u0
    if end_value is not None:
        end_row = np.zeros(cols.size)
        end_row[-1] = 1.0
        mat = np.vstack([mat, end_row])
        rhs = np.append(rhs, end_value)
    return mat, rhs


def convolved_system(p: SdofProblem, grid: TimeGrid):
    """Stationarity equations of the convolved action: ``n`` rows, ``n`` unknowns."""
    A, b = sdof_system(p, grid)
    free = sdof_free_nodes(grid)
    return A[np.ix_(free, free)], b[free] - A[free, 0] * p.u0


# -- natural-condition diagnostics ------------------------------------------------------


def natural_condition_sdof(p: SdofProblem, u: Signal) -> float:
    """``m u'(0) + c u(0) - f0`` with the second-order one-sided derivative."""
    return float(p.m * diff_nodes(u.values, u.grid.h)[0] + p.c * u.values[0] - p.f0)


def neumann_residual_bar(p: BarProblem, u: Field) -> Signal:
    """``E u_x(l, s) + gamma u_xs(l, s) - p(s)`` at every time node."""
    grid = u.grid
    ux_end = diff_nodes(u.values, grid.hx, axis=0)[-1]
    res = p.E * ux_end - time_values(p.p, grid.time)
    if p.gamma:
        res = res + p.gamma * diff_nodes(ux_end, grid.time.h)
    return Signal(grid.time, res)


def initial_traction_residual_bar(p: BarProblem, u: Field) -> float:
    """``gamma u_x(l, 0) - p_hat0``."""
    ux_end = diff_nodes(u.values[:, 0], u.grid.hx)[-1]
    return float(p.gamma * ux_end - p.p_hat0)


# -- reference solutions ----------------------------------------------------------------


def _sdof_closed_form(p: SdofProblem, s: np.ndarray) -> np.ndarray | None:
    f = p.f
    if f is None or isinstance(f, Zero):
        amp, omega = 0j, 0.0
    elif isinstance(f, Constant):
        amp, omega = complex(0, f.value), 0.0  # Im(i F) = F
    elif isinstance(f, Sinusoid):
        amp, omega = f.amplitude * np.exp(1j * f.phase), f.frequency
    else:
        return None
    m, c, k = p.m, p.c, p.k
    if amp != 0:
        den = -m * omega**2 + 1j * c * omega + k
        if abs(den) <= 1e-12 * (m * omega**2 + c * abs(omega) + k):
            return None
        P = amp / den
        up0 = float(np.imag(P))
        vp0 = float(np.imag(1j * omega * P))
    else:
        P, up0, vp0 = 0j, 0.0, 0.0
    U0, V0 = p.u0 - up0, p.v0 - vp0
    disc = c * c - 4 * m * k
    if abs(disc) <= 1e-14 * max(c * c, 4 * m * k):
        lam = -c / (2 * m)
        hom = (U0 + (V0 - lam * U0) * s) * np.exp(lam * s)
    else:
        root = np.sqrt(complex(disc))
        l1, l2 = (-c + root) / (2 * m), (-c - root) / (2 * m)
        A = (V0 - l2 * U0) / (l1 - l2)
        B = U0 - A
        hom = np.real(A * np.exp(l1 * s) + B * np.exp(l2 * s))
    return hom + np.imag(P * np.exp(1j * omega * s))


def _time_interpolant(data, grid: TimeGrid):
    """Callable (with ``.derivative()``-free use) for problem data between nodes."""
    if isinstance(data, Signal):
        return CubicSpline(grid.nodes, data.values)
    if data is None:
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    if callable(data):
        return data
    return lambda s: np.full_like(np.asarray(s, dtype=float), float(data))


def reference_sdof(p: SdofProblem, grid: TimeGrid, substeps: int = 8) -> Signal:
    """Independent solution of ``m u'' + c u' + k u = f``, ``u(0) = u0``, ``u'(0) = v0``.

    Closed form for zero, constant and sinusoidal forcing presets; otherwise
    an 8th-order Dormand-Prince integration with steps of at most
    ``h / substeps``, tight tolerances, read out at the grid nodes.
    """
    s = grid.nodes
    closed = _sdof_closed_form(p, s)
    if closed is not None:
        closed[0] = p.u0  # exact in theory; keeps the reference admissible bit for bit
        return Signal(grid, closed)
    f = _time_interpolant(p.f, grid)

    def rhs(t, y):
        return [y[1], (float(f(t)) - p.c * y[1] - p.k * y[0]) / p.m]

    sol = solve_ivp(
        rhs, (0.0, grid.t_final), [p.u0, p.v0], method="DOP853", t_eval=s,
        max_step=grid.h / substeps, rtol=1e-12, atol=1e-14,
    )
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    values = sol.y[0]
    values[0] = p.u0
    return Signal(grid, values)


def _is_zero(data, grid: SpaceTimeGrid, kind: str) -> bool:
    if data is None or isinstance(data, Zero):
        return True
    if kind == "time":
        vals = time_values(data, grid.time)
    elif kind == "field":
        vals = field_values(data, grid)
    else:
        vals = space_values(data, grid.x)
    return not np.any(vals)


def reference_bar_modal(p: BarProblem, grid: SpaceTimeGrid) -> Field:
    """Eigenfunction series of the homogeneous fixed-free elastic bar.

    Modes ``sin((2j - 1) pi x / 2l)`` for ``j = 1 .. nx``; coefficients are the
    discrete (trapezoid) projections of ``u0`` and ``v0``.
    """
    if p.gamma != 0:
        raise ValueError("modal reference needs an elastic bar (gamma = 0)")
    for name, kind in (("u_hat", "time"), ("p", "time"), ("f", "field")):
        if not _is_zero(getattr(p, name), grid, kind):
            raise ValueError(f"modal reference needs homogeneous data; {name} is nonzero")
    x, s = grid.x, grid.time.nodes
    j = np.arange(1, grid.nx + 1)
    kappa = (2 * j - 1) * math.pi / (2 * p.l)
    omega = kappa * math.sqrt(p.E / p.rho)
    Phi = np.sin(np.outer(x, kappa))
    w = np.full(x.size, grid.hx)
    w[0] = w[-1] = grid.hx / 2
    gram = Phi.T @ (w[:, None] * Phi)
    a = np.linalg.solve(gram, Phi.T @ (w * space_values(p.u0, x)))
    b = np.linalg.solve(gram, Phi.T @ (w * space_values(p.v0, x))) / omega
    temporal = a[:, None] * np.cos(np.outer(omega, s)) + b[:, None] * np.sin(np.outer(omega, s))
    return Field(grid, Phi @ temporal)


def reference_bar_timestep(p: BarProblem, grid: SpaceTimeGrid, substeps: int = 4) -> Field:
    """Method-of-lines reference for the Kelvin-Voigt bar.

    Central differences in ``x`` with a ghost node carrying
    ``E u_x + gamma u_xs = p`` at ``x = l``; trapezoidal rule in time with
    step ``h / substeps`` (A-stable for every ``gamma >= 0``).
    """
    nx, hx = grid.nx, grid.hx
    dt = grid.time.h / substeps
    nsteps = grid.time.n * substeps
    fine = np.arange(nsteps + 1) * dt
    x = grid.x

    u_hat = _time_interpolant(p.u_hat, grid.time)
    u_hat_fine = np.asarray(u_hat(fine), dtype=float) * np.ones_like(fine)
    du_hat_fine = CubicSpline(fine, u_hat_fine)(fine, 1) if np.any(u_hat_fine) else np.zeros_like(fine)
    traction = np.asarray(_time_interpolant(p.p, grid.time)(fine), dtype=float) * np.ones_like(fine)
    if isinstance(p.f, Field):
        force = CubicSpline(grid.time.nodes, p.f.values[1:], axis=1)(fine)
    elif p.f is None:
        force = np.zeros((nx, fine.size))
    else:
        X, S = np.meshgrid(x[1:], fine, indexing="ij")
        force = (np.asarray(p.f(X, S), dtype=float) if callable(p.f) else float(p.f)) * np.ones_like(X)

    # second difference on nodes 1..nx acting on z = E u + gamma u_s
    L = (np.diag(-2.0 * np.ones(nx)) + np.diag(np.ones(nx - 1), 1) + np.diag(np.ones(nx - 1), -1)) / hx**2
    L[-1, -2] = 2.0 / hx**2
    I = np.eye(nx)
    A = np.block([[np.zeros((nx, nx)), I], [p.E * L / p.rho, p.gamma * L / p.rho]])

    def g(step: int) -> np.ndarray:
        z0 = p.E * u_hat_fine[step] + p.gamma * du_hat_fine[step]
        acc = force[:, step].copy()
        acc[0] += z0 / hx**2
        acc[-1] += 2 * traction[step] / hx
        return np.concatenate([np.zeros(nx), acc / p.rho])

    lhs = scipy.linalg.lu_factor(np.eye(2 * nx) - 0.5 * dt * A)
    explicit = np.eye(2 * nx) + 0.5 * dt * A
    y = np.concatenate([space_values(p.u0, x)[1:], space_values(p.v0, x)[1:]])
    out = np.empty(grid.shape)
    out[1:, 0] = y[:nx]
    g_prev = g(0)
    for step in range(1, nsteps + 1):
        g_next = g(step)
        y = scipy.linalg.lu_solve(lhs, explicit @ y + 0.5 * dt * (g_prev + g_next))
        g_prev = g_next
        if step % substeps == 0:
            out[1:, step // substeps] = y[:nx]
    out[0, :] = u_hat_fine[::substeps]
    return Field(grid, out)


def bar_energy(p: BarProblem, u: Field) -> np.ndarray:
    """``1/2 int (rho u_s^2 + E u_x^2) dx`` at every time node (nodal differences)."""
    grid = u.grid
    us = diff_nodes(u.values, grid.time.h, axis=1)
    ux = np.diff(u.values, axis=0) / grid.hx
    w = np.full(grid.nx + 1, grid.hx)
    w[0] = w[-1] = grid.hx / 2
    kinetic = 0.5 * p.rho * (w @ us**2)
    strain = 0.5 * p.E * grid.hx * np.sum(ux**2, axis=0)
    return kinetic + strain


__all__ = [
    "StationaryReport",
    "solve_sdof",
    "solve_bar",
    "certify_stationarity",
    "reference_sdof",
    "reference_bar_modal",
    "reference_bar_timestep",
    "classical_system",
    "convolved_system",
    "natural_condition_sdof",
    "neumann_residual_bar",
    "initial_traction_residual_bar",
    "bar_energy",
]
