import numpy as np
import pytest

from nlh import kernels, quad
from nlh.errors import ConfigError, ShiftOutOfMargin


@pytest.fixture
def gauss():
    return kernels.make_kernel("gaussian", width=1.0)


def test_kernel_over_quadrant(gauss):
    # integral over x < 0 < y of K(x - y) = integral_0^inf r K(r) dr = 1/sqrt(2 pi)
    one = quad.polynomial_profile([1.0])
    assert quad.bilinear_Q(one, one, gauss) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-12)


def test_diagonal_and_product_rules_agree(gauss):
    u = quad.trig_profile(0.8, 1)
    v = quad.polynomial_profile([0.3, 0.0, 1.0])
    a = quad.skew_pair(u, v, gauss, method="product")
    b = quad.skew_pair(u, v, gauss, method="diagonal")
    assert a == pytest.approx(b, rel=1e-9)


def test_skew_pair_constant_linear(gauss):
    # P(1, x) = 1/2 int_Q (y - x) K = 1/2 int_0^inf r^2 K = kappa2 / 4
    one, lin = quad.polynomial_profile([1.0]), quad.monomial(1)
    assert quad.skew_pair(one, lin, gauss) == pytest.approx(0.25, rel=1e-12)
    assert quad.skew_pair(lin, one, gauss) == pytest.approx(-0.25, rel=1e-12)


def test_periodic_convolution_is_multiplier(gauss):
    T, n, k = 2 * np.pi / 0.7, 64, 0.7
    x = quad.periodic_grid(T, n)
    u = quad.GridProfile(x, np.cos(k * x), "periodic", period=T)
    out = quad.convolve(gauss, u)
    np.testing.assert_allclose(out.values[:, 0], np.exp(-k * k / 2) * np.cos(k * x), atol=1e-14)


def test_line_convolution_against_direct_quadrature(gauss):
    x = quad.line_grid(-20, 20, 0.05)
    front = quad.GridProfile(x, np.tanh(x), "line", far_left=[-1.0], far_right=[1.0])
    nodal = quad.convolve(gauss, front).values[:, 0]
    fn = quad.FunctionProfile(lambda s: np.tanh(s)[:, None], [lambda s: (1 / np.cosh(s) ** 2)[:, None]], scale=0.5)
    xs = x[::40]
    direct = quad.convolve_at(gauss, fn, xs)[:, 0]
    np.testing.assert_allclose(nodal[::40], direct, atol=1e-8)


def test_spline_derivative_on_line():
    x = quad.line_grid(-10, 10, 0.05)
    u = quad.GridProfile(x, np.sin(x), "line")
    np.testing.assert_allclose(u.nodal_derivative(1)[5:-5, 0], np.cos(x[5:-5]), atol=1e-8)


def test_trig_interpolant_shift_exact():
    T, n = 10.0, 32
    x = quad.periodic_grid(T, n)
    u = quad.GridProfile(x, np.sin(2 * np.pi * x / T), "periodic", period=T)
    moved = quad.shift(u, 1.3)
    np.testing.assert_allclose(moved.values[:, 0], np.sin(2 * np.pi * (x + 1.3) / T), atol=1e-13)


def test_shift_margin():
    x = quad.line_grid(-10, 10, 0.1)
    u = quad.GridProfile(x, np.tanh(x), "line")
    with pytest.raises(ShiftOutOfMargin):
        quad.shift(u, 15.0)


def test_trig_profile_derivatives():
    p = quad.trig_profile(1.7, 2, 0.4, -0.3)
    xs = np.linspace(-2, 2, 9)
    h = 1e-5
    fd = (p.eval(xs + h) - p.eval(xs - h)) / (2 * h)
    np.testing.assert_allclose(p.eval(xs, 1), fd, atol=1e-8)


def test_profile_roundtrip(tmp_path):
    x = quad.line_grid(-5, 5, 0.5)
    u = quad.GridProfile(x, np.column_stack([np.tanh(x), x * 0]), "line", far_left=[-1, 0], far_right=[1, 0])
    quad.write_profile(u, tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x,u1,u2"
    back = quad.read_profile(tmp_path / "u.csv")
    np.testing.assert_array_equal(back.values, u.values)
    np.testing.assert_array_equal(back.far_left, [-1, 0])


def test_missing_profile(tmp_path):
    with pytest.raises(ConfigError):
        quad.read_profile(tmp_path / "nope.csv")


def test_quadrant_examples():
    expo = kernels.make_kernel("exponential", rate=1.0)
    gauss = kernels.make_kernel("gaussian", width=1.0)
    one, lin = quad.polynomial_profile([1.0]), quad.monomial(1)
    # integral over Q of K = 1/2 integral |r| K = 1/2 for the unit exponential
    assert quad.bilinear_Q(one, one, expo) == pytest.approx(0.5, rel=1e-12)
    # integral over Q of (y - x) K = 1/2 kappa2
    val = quad.bilinear_Q(one, lin, gauss) - quad.bilinear_Q(lin, one, gauss)
    assert val == pytest.approx(0.5, rel=1e-12)
    u = quad.trig_profile(0.9, 1, 0.3, 0.2)
    assert quad.skew_pair(u, u, gauss) == 0.0


def test_antisymmetric_square_vanishes():
    f = lambda x, y: (x - y) * np.exp(-(x - y) ** 2) * np.cos(x + y)  # noqa: E731
    assert abs(quad.integrate_square(f, -2.0, 2.0)) < 1e-14


def test_convolution_far_field(gauss):
    x = quad.line_grid(-20, 20, 0.1)
    c = quad.GridProfile(x, np.full(x.size, 0.7), "line", far_left=[0.7], far_right=[0.7])
    # order-8 end corrections at h = 0.1 leave errors of a few 1e-10 near the ends
    np.testing.assert_allclose(quad.convolve(gauss, c).values[:, 0], 0.7, rtol=0, atol=1e-9)
    front = quad.GridProfile(x, np.tanh(x), "line", far_left=[-1.0], far_right=[1.0])
    out = quad.convolve(gauss, front).values[:, 0]
    assert out[0] == pytest.approx(-1.0, abs=1e-9) and out[-1] == pytest.approx(1.0, abs=1e-9)


def test_shift_group_action():
    x = quad.line_grid(-15, 15, 0.05)
    u = quad.GridProfile(x, np.tanh(x) + 0.1 * np.exp(-x ** 2), "line", far_left=[-1.0], far_right=[1.0])
    np.testing.assert_array_equal(quad.shift(u, 0.0).values, u.values)
    a = quad.shift(quad.shift(u, 0.7), 1.1)
    b = quad.shift(u, 1.8)
    np.testing.assert_allclose(a.eval(x[100:-100]), b.eval(x[100:-100]), atol=1e-8)
    T = 7.0
    xp = quad.periodic_grid(T, 32)
    p = quad.GridProfile(xp, np.cos(2 * np.pi * xp / T) + 0.3 * np.sin(4 * np.pi * xp / T), "periodic", period=T)
    np.testing.assert_allclose(quad.shift(p, T).values, p.values, atol=1e-14)


def test_leggauss_cache(tmp_path, monkeypatch):
    from nlh import _rules

    monkeypatch.setenv("NLH_CACHE_DIR", str(tmp_path))
    x, w = _rules._cached_leggauss(37)
    assert (tmp_path / "legendre_37.npy").exists()
    x2, w2 = _rules._cached_leggauss(37)
    np.testing.assert_array_equal(x, x2)
    assert w.sum() == pytest.approx(2.0, rel=1e-14)
