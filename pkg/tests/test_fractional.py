import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gammaln

from convact.errors import GridMismatchError
from convact.fractional import (
    HalfOperatorScheme,
    HalfScheme,
    gl_weights,
    half_derivative,
    half_energy_identity,
    half_form_matrix,
    half_ibp_residual,
    half_integral,
)
from convact.convolution import conv_mixed_matrix
from convact.signals import Signal, TimeGrid, sample

SQRT_PI = math.sqrt(math.pi)
SCHEMES = list(HalfScheme)


def _scheme(kind, n=512, t=1.0):
    return HalfOperatorScheme(kind, TimeGrid(t, n))


def _rl_integral_quad(fn, tau):
    """Independent oracle: adaptive quadrature with the (tau - s)^(-1/2) weight handled analytically."""
    val, _ = quad(fn, 0.0, tau, weight="alg", wvar=(0.0, -0.5), epsabs=1e-13, epsrel=1e-13)
    return val / SQRT_PI


class TestWeights:
    def test_first_values(self):
        np.testing.assert_allclose(gl_weights(0.5, 3), [1, -0.5, -0.125, -0.0625])

    def test_derivative_weights_are_negative_after_the_first(self):
        # (-1)^k binom(1/2, k) keeps one sign for k >= 1; it does not alternate
        w = _scheme(HalfScheme.GRUNWALD_LETNIKOV).derivative_weights
        assert w[0] == 1.0
        assert np.all(w[1:] < 0)

    def test_integral_weights_are_positive(self):
        assert np.all(_scheme(HalfScheme.GRUNWALD_LETNIKOV).integral_weights > 0)

    def test_partial_sums_closed_form(self):
        # sum_{j<=k} (-1)^j binom(1/2, j) = Gamma(k + 1/2) / (sqrt(pi) k!) -> 0 like 1/sqrt(pi k)
        w = gl_weights(0.5, 512)
        k = np.arange(513)
        closed = np.exp(gammaln(k + 0.5) - gammaln(k + 1)) / SQRT_PI
        np.testing.assert_allclose(np.cumsum(w), closed, rtol=1e-12, atol=1e-15)
        assert np.all(np.diff(np.cumsum(w)) < 0)
        assert np.cumsum(w)[-1] == pytest.approx(1 / math.sqrt(math.pi * 512), rel=1e-3)

    def test_weights_are_read_only(self):
        sc = _scheme(HalfScheme.GRUNWALD_LETNIKOV, 8)
        with pytest.raises(ValueError):
            sc.derivative_weights[1] = 0.0

    def test_kind_accepts_string(self):
        assert HalfOperatorScheme("direct_quadrature", TimeGrid(1.0, 4)).kind is HalfScheme.DIRECT_QUADRATURE


@pytest.mark.parametrize("kind", SCHEMES)
class TestHalfIntegral:
    def test_zero(self, kind):
        sc = _scheme(kind, 32)
        assert not np.any(half_integral(Signal(sc.grid, np.zeros(33)), sc).values)

    def test_constant(self, kind):
        sc = _scheme(kind)
        val = half_integral(sample(lambda s: 1 + 0 * s, sc.grid), sc)
        assert val.values[0] == 0.0
        assert abs(val.at_end - 2 / SQRT_PI) <= 1e-2

    def test_ramp(self, kind):
        sc = _scheme(kind)
        assert abs(half_integral(sample(lambda s: s, sc.grid), sc).at_end - (4 / 3) / SQRT_PI) <= 1e-2

    def test_against_quadrature_oracle(self, kind):
        errs = []
        for n in (128, 512):
            sc = _scheme(kind, n)
            approx = half_integral(sample(np.cos, sc.grid), sc).values
            errs.append(max(abs(approx[k] - _rl_integral_quad(np.cos, k * sc.grid.h)) for k in (n // 8, n // 2, n)))
        assert errs[1] <= 1e-2
        assert errs[1] < errs[0]

    def test_grid_mismatch(self, kind):
        sc = _scheme(kind, 8)
        with pytest.raises(GridMismatchError):
            half_integral(sample(np.cos, TimeGrid(1.0, 9)), sc)


def test_direct_integral_is_exact_for_piecewise_linear():
    # product integration integrates the linear interpolant exactly, so affine data is reproduced
    sc = _scheme(HalfScheme.DIRECT_QUADRATURE, 64)
    tau = sc.grid.nodes
    approx = half_integral(sample(lambda s: 2 - 3 * s, sc.grid), sc).values
    exact = (2 * 2 * np.sqrt(tau) - 3 * (4 / 3) * tau**1.5) / SQRT_PI
    np.testing.assert_allclose(approx, exact, atol=1e-13)


@pytest.mark.parametrize("kind", SCHEMES)
class TestHalfDerivative:
    def test_zero(self, kind):
        sc = _scheme(kind, 32)
        assert not np.any(half_derivative(Signal(sc.grid, np.zeros(33)), sc).values)

    def test_ramp(self, kind):
        sc = _scheme(kind)
        assert abs(half_derivative(sample(lambda s: s, sc.grid), sc).at_end - 2 / SQRT_PI) <= 2e-2

    def test_constant(self, kind):
        sc = _scheme(kind)
        d = half_derivative(sample(lambda s: 1 + 0 * s, sc.grid), sc)
        assert d.values[0] == math.inf
        assert abs(d.at_end - 1 / SQRT_PI) <= 2e-2

    def test_negative_start_flags_minus_inf(self, kind):
        sc = _scheme(kind, 16)
        assert half_derivative(sample(lambda s: s - 1, sc.grid), sc).values[0] == -math.inf

    @pytest.mark.parametrize("n", [64, 128, 256])
    def test_composition_recovers_u(self, kind, n):
        sc = _scheme(kind, n)
        u = sample(np.sin, sc.grid)
        back = half_derivative(half_integral(u, sc), sc)
        assert np.max(np.abs(back.values[1:-1] - u.values[1:-1])) < math.sqrt(sc.grid.h)

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-5, 5), b=st.floats(-5, 5))
    def test_linear(self, kind, a, b):
        sc = _scheme(kind, 32)
        f = sample(lambda s: s * np.cos(s), sc.grid)
        g = sample(lambda s: s**2, sc.grid)
        for op in (half_integral, half_derivative):
            lhs = op(a * f + b * g, sc).values
            rhs = a * op(f, sc).values + b * op(g, sc).values
            np.testing.assert_allclose(lhs, rhs, atol=1e-11 * (1 + abs(a) + abs(b)))


@pytest.mark.parametrize("kind", SCHEMES)
class TestEnergyIdentity:
    def test_zero(self, kind):
        sc = _scheme(kind, 32)
        assert half_energy_identity(Signal(sc.grid, np.zeros(33)), sc) == (0.0, 0.0)

    def test_constant(self, kind):
        sc = _scheme(kind)
        lhs, rhs = half_energy_identity(sample(lambda s: 1 + 0 * s, sc.grid), sc)
        assert rhs == 1.0
        assert abs(lhs - rhs) <= 5e-2

    def test_ramp(self, kind):
        sc = _scheme(kind)
        lhs, rhs = half_energy_identity(sample(lambda s: s, sc.grid), sc)
        assert rhs == pytest.approx(0.5, abs=1e-12)
        assert abs(lhs - 0.5) <= 5e-2


@pytest.mark.parametrize("kind", SCHEMES)
class TestHalfIbp:
    def test_zero(self, kind):
        sc = _scheme(kind, 16)
        z = Signal(sc.grid, np.zeros(17))
        assert half_ibp_residual(z, z, sc) == 0.0

    @pytest.mark.parametrize("g", [lambda s: s, lambda s: s**2])
    def test_small_and_decreasing(self, kind, g):
        res = []
        for n in (128, 256, 512):
            sc = _scheme(kind, n)
            res.append(half_ibp_residual(sample(lambda s: s, sc.grid), sample(g, sc.grid), sc))
        assert res[-1] < 5e-2
        # some pairs are reproduced to round-off; allow for that noise
        assert res[2] <= res[1] + 1e-15 and res[1] <= res[0] + 1e-15

    def test_rejects_nonzero_start(self, kind):
        sc = _scheme(kind, 16)
        with pytest.raises(ValueError):
            half_ibp_residual(sample(np.cos, sc.grid), sample(np.sin, sc.grid), sc)


def _pl_scaled_half_derivative(a, grid):
    """``sqrt(s) * D^{1/2} a(s)`` for the piecewise-linear interpolant of ``a`` (closed form)."""
    slopes = np.diff(a) / grid.h
    jumps = np.diff(np.concatenate([[0.0], slopes]))
    knots = grid.nodes[:-1]

    def g(s):
        ramp = np.sqrt(np.clip(s - knots, 0.0, None))
        return (a[0] + 2 * math.sqrt(s) * float(jumps @ ramp)) / SQRT_PI

    return g


@pytest.mark.parametrize("n", [2, 3, 5])
def test_half_form_matrix_against_quadrature(n):
    rng = np.random.default_rng(7 + n)
    g = TimeGrid(0.8, n)
    a, b = rng.normal(size=n + 1), rng.normal(size=n + 1)
    ga, gb = _pl_scaled_half_derivative(a, g), _pl_scaled_half_derivative(b, g)
    t = g.t_final
    # the s^(-1/2) (t - s)^(-1/2) weight is handled by the quadrature rule itself
    val, _ = quad(lambda s: ga(s) * gb(t - s), 0, t, weight="alg", wvar=(-0.5, -0.5), limit=400, epsabs=1e-13)
    assert a @ half_form_matrix(g) @ b == pytest.approx(val, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("n", [4, 17, 64])
def test_half_form_matrix_polarizes_energy_identity(n):
    # [D^1/2 a, D^1/2 b] = sym([a', b] + a(0) b(t)) holds exactly for piecewise-linear a, b
    g = TimeGrid(1.3, n)
    B = conv_mixed_matrix(g)
    corner = np.zeros((n + 1, n + 1))
    corner[0, n] = 1.0
    target = 0.5 * (B + B.T + corner + corner.T)
    W = half_form_matrix(g)
    np.testing.assert_allclose(W, target, atol=1e-12 * np.max(np.abs(target)))
    np.testing.assert_array_equal(W, W.T)
