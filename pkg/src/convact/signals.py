"""Uniform grids, sampled functions, and the elementary discrete calculus on them.

Everything here is immutable: the sample arrays of :class:`Signal` and
:class:`Field` are flagged read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from convact.errors import GridMismatchError


def _frozen(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected samples of shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``s_k = k h`` on ``[0, t_final]`` with ``n`` intervals."""

    t_final: float
    n: int

    def __post_init__(self) -> None:
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return self.t_final / self.n

    @property
    def num_nodes(self) -> int:
        return self.n + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_final, self.n * factor)


@dataclass(frozen=True, eq=False)
class Signal:
    """A real function of time sampled at the nodes of a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values, (self.grid.num_nodes,)))

    def _check(self, other: "Signal") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"signals live on {self.grid} and {other.grid}")

    def __add__(self, other: "Signal") -> "Signal":
        self._check(other)
        return Signal(self.grid, self.values + other.values)

    def __sub__(self, other: "Signal") -> "Signal":
        self._check(other)
        return Signal(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Signal":
        return Signal(self.grid, scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Signal":
        return Signal(self.grid, -self.values)

    @property
    def at_end(self) -> float:
        """Value at the final node ``s = t``."""
        return float(self.values[-1])


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Tensor grid on ``[0, l] x [0, t]`` with ``nx`` space and ``time.n`` time intervals."""

    l: float
    nx: int
    time: TimeGrid

    def __post_init__(self) -> None:
        if not self.l > 0:
            raise ValueError(f"l must be positive, got {self.l}")
        if int(self.nx) != self.nx or self.nx < 2:
            raise ValueError(f"nx must be an integer >= 2, got {self.nx}")

    @classmethod
    def uniform(cls, l: float, t_final: float, nx: int, nt: int) -> "SpaceTimeGrid":
        return cls(l, nx, TimeGrid(t_final, nt))

    @property
    def hx(self) -> float:
        return self.l / self.nx

    @property
    def nt(self) -> int:
        return self.time.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.hx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.time.n + 1)

    @property
    def num_nodes(self) -> int:
        return (self.nx + 1) * (self.time.n + 1)


@dataclass(frozen=True, eq=False)
class Field:
    """A real function of ``(x, s)`` sampled on a :class:`SpaceTimeGrid`.

    ``values[i, k]`` holds ``u(x_i, s_k)``; the row-major flattening
    ``values.ravel()`` therefore runs over all times for a fixed space node
    before moving to the next space node.
    """

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1 and vals.size == self.grid.num_nodes:
            vals = vals.reshape(self.grid.shape)
        object.__setattr__(self, "values", _frozen(vals, self.grid.shape))

    def __add__(self, other: "Field") -> "Field":
        if other.grid != self.grid:
            raise GridMismatchError(f"fields live on {self.grid} and {other.grid}")
        return Field(self.grid, self.values + other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, scalar * self.values)

    __rmul__ = __mul__

    def at_space_node(self, i: int) -> Signal:
        return Signal(self.grid.time, self.values[i])


def sample(fn: Callable[[np.ndarray], np.ndarray], grid: TimeGrid) -> Signal:
    """Evaluate ``fn`` at every node of ``grid``."""
    s = grid.nodes
    return Signal(grid, np.broadcast_to(np.asarray(fn(s), dtype=float), s.shape))


def sample_field(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: SpaceTimeGrid) -> Field:
    """Evaluate ``fn(x, s)`` on the tensor grid."""
    X, S = np.meshgrid(grid.x, grid.time.nodes, indexing="ij")
    return Field(grid, np.broadcast_to(np.asarray(fn(X, S), dtype=float), X.shape))


def diff_nodes(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Second-order finite-difference derivative of nodal samples along ``axis``.

    Central differences in the interior, three-point one-sided stencils at the
    two ends. Exact for quadratics.
    """
    u = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    if u.shape[-1] < 3:
        raise ValueError("need at least 3 nodes to differentiate")
    du = np.empty_like(u)
    du[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2 * h)
    du[..., 0] = (-3 * u[..., 0] + 4 * u[..., 1] - u[..., 2]) / (2 * h)
    du[..., -1] = (3 * u[..., -1] - 4 * u[..., -2] + u[..., -3]) / (2 * h)
    return np.moveaxis(du, -1, axis)


def derivative(u: Signal) -> Signal:
    """Nodal derivative of ``u`` (see :func:`diff_nodes`)."""
    return Signal(u.grid, diff_nodes(u.values, u.grid.h))


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    return w


def trapezoid(u: Signal) -> float:
    """Composite trapezoid approximation of the integral of ``u`` over ``[0, t]``."""
    return float(trapezoid_weights(u.grid.n, u.grid.h) @ u.values)


# -- analytic forcing presets ----------------------------------------------
#
# Presets are plain callables; solvers recognise them to pick closed forms.


@dataclass(frozen=True)
class Zero:
    def __call__(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.value)


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(frequency * s + phase)``."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __call__(self, s):
        return self.amplitude * np.sin(self.frequency * np.asarray(s, dtype=float) + self.phase)


@dataclass(frozen=True)
class SineMode:
    """Fixed-free bar mode ``amplitude * sin((2j - 1) pi x / (2 l))``."""

    mode: int
    length: float = 1.0
    amplitude: float = 1.0

    @property
    def wavenumber(self) -> float:
        return (2 * self.mode - 1) * math.pi / (2 * self.length)

    def __call__(self, x):
        return self.amplitude * np.sin(self.wavenumber * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Tabulated:
    """Samples on a uniform grid over ``[0, span]``, read back by linear interpolation."""

    values: tuple[float, ...]
    span: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) < 2:
            raise ValueError("a tabulated function needs at least 2 samples")
        if not self.span > 0:
            raise ValueError(f"span must be positive, got {self.span}")

    def __call__(self, s):
        knots = np.linspace(0.0, self.span, len(self.values))
        return np.interp(np.asarray(s, dtype=float), knots, self.values)


TimeData = Union[Signal, Callable, float, None]


def time_values(data: TimeData, grid: TimeGrid) -> np.ndarray:
    """Nodal values of time-dependent problem data on ``grid``.

    ``data`` may be a :class:`Signal` on ``grid``, a callable of time, a
    constant, or ``None`` (zero).
    """
    if data is None:
        return np.zeros(grid.num_nodes)
    if isinstance(data, Signal):
        if data.grid != grid:
            raise GridMismatchError(f"data sampled on {data.grid}, expected {grid}")
        return np.array(data.values)
    if callable(data):
        return np.array(sample(data, grid).values)
    return np.full(grid.num_nodes, float(data))


def space_values(data, x: np.ndarray) -> np.ndarray:
    """Nodal values of space-dependent data at the points ``x``."""
    if data is None:
        return np.zeros_like(x)
    if callable(data):
        return np.broadcast_to(np.asarray(data(x), dtype=float), x.shape).copy()
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full_like(x, float(arr))
    if arr.shape != x.shape:
        raise GridMismatchError(f"space data of shape {arr.shape} does not match {x.shape} nodes")
    return arr.copy()


def field_values(data, grid: SpaceTimeGrid) -> np.ndarray:
    """Nodal values of ``(x, s)`` data, shape ``grid.shape``."""
    if data is None:
        return np.zeros(grid.shape)
    if isinstance(data, Field):
        if data.grid != grid:
            raise GridMismatchError(f"field sampled on {data.grid}, expected {grid}")
        return np.array(data.values)
    if callable(data):
        return np.array(sample_field(data, grid).values)
    return np.full(grid.shape, float(data))
