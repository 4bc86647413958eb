import numpy as np
import pytest

from nlh import kernels, quad, variational as var
from nlh.errors import ConfigError, ResidualTooLarge

from conftest import whitham_kernel

GAUSS = kernels.make_kernel("gaussian", width=1.0)
T = var.SymmetryGenerator.translation()


def constant(value, dim=1):
    return quad.polynomial_profile([value], dim)


@pytest.mark.parametrize("spec", [
    var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25]),
    var.whitham(GAUSS, 0.7, 0.9),
    var.nfe(GAUSS, 1.0, 0.04, 0.1),
    var.nls(kernels.make_kernel("gaussian", dim=2, width=0.5), [0, 1, -1], 1.8, 2.0),
    var.pinning(GAUSS, 0.3, 0.5),
])
def test_gradients_consistent(spec):
    rep = spec.check_gradients()
    assert all(item["passed"] for item in rep.values()), rep


def test_literal_nfe_dissipation_has_wrong_sign():
    # s'(0) = mu + 1/kappa0 > 0, so Gamma = -s' is negative unless the equation is flipped
    rep = var.nfe(GAUSS, 1.0, 0.04, 0.1, orientation="literal").check_gradients()
    assert not rep["gamma_positive"]["passed"]


def test_constant_hamiltonian_equals_potential():
    # at a constant, the quadrant integral vanishes and H = -(E + kappa0 u^2 / 2) = F(u)
    spec = var.allen_cahn(GAUSS, [0, 0, -0.5, 0, 0.25])
    for ubar in (0.0, 0.3, 1.0):
        assert var.hamiltonian(spec, constant(ubar)) == pytest.approx(float(spec.F(ubar)), abs=1e-14)


def test_pinning_constant_hamiltonian():
    spec = var.pinning(GAUSS, 0.3, 0.5)
    assert var.hamiltonian(spec, constant(1.0)) == pytest.approx(-float(spec.F_a(1.0)), abs=1e-14)


def test_translation_charge_is_hamiltonian():
    spec = var.whitham(GAUSS, 1.0, 0.9)
    u = quad.trig_profile(1.1, 0, 0.1, 0.05)
    assert var.noether_charge(spec, u, T, strict=False) == pytest.approx(var.hamiltonian(spec, u), abs=1e-14)


def test_form_on_constant_and_linear():
    # omega_0(1, x) = int_Q (y - x) K(x - y) = kappa2 / 2, which is 1 for width sqrt 2
    spec = var.whitham(whitham_kernel(), 1.0, 1.0)
    zero = constant(0.0)
    val = var.presymplectic(spec, zero, constant(1.0), quad.monomial(1))
    assert val == pytest.approx(1.0, rel=1e-12)
    assert var.presymplectic(spec, zero, quad.monomial(1), constant(1.0)) == pytest.approx(-1.0, rel=1e-12)


def test_form_degenerate_for_compact_kernel():
    k = kernels.make_kernel("compact-bump", radius=1.0)
    spec = var.whitham(k, 1.0, 1.0)
    # v vanishes on [-3, 3]: every pair (x, y) in Q within reach of the kernel sees v = 0
    v = quad.FunctionProfile(lambda x: np.where(np.abs(x) > 3, np.cos(x), 0.0)[:, None], scale=0.5)
    w = quad.trig_profile(0.9, 1)
    assert var.presymplectic(spec, constant(0.0), v, w) == 0.0


def test_grid_and_quadrature_residuals_agree():
    spec = var.whitham(GAUSS, 1.0, 1.05)
    x = quad.line_grid(-30, 30, 0.05)
    u = quad.GridProfile(x, 0.1 / np.cosh(0.3 * x) ** 2, "line", far_left=[0.0], far_right=[0.0])
    grid = var.el_residual(spec, u)
    pts = x[200:-200:50]
    direct = var.el_residual(spec, u, x=pts)
    np.testing.assert_allclose(grid[200:-200:50], direct, atol=1e-9)


def test_hamiltonian_relation_off_solution():
    spec = var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25])
    u = quad.trig_profile(0.8, 0, 0.3, 0.1)
    v = quad.trig_profile(1.3, 0, 0.2, -0.4)
    out = var.hamiltonian_relation_check(spec, u, v, 1e-4)
    assert out["gap"] < 1e-6
    assert abs(out["residual_term"]) > 1e-3  # the residual term is really needed here


def test_strict_charge_rejects_non_solution():
    spec = var.whitham(GAUSS, 1.0, 0.96)
    x = quad.periodic_grid(20.0, 32)
    u = quad.GridProfile(x, 0.1 * np.cos(2 * np.pi * x / 20), "periodic", period=20.0)
    with pytest.raises(ResidualTooLarge):
        var.noether_charge(spec, u, T)


def test_translation_not_allowed_for_inhomogeneous_spec():
    spec = var.nls(kernels.make_kernel("gaussian", dim=2, width=0.5), [0, 1, -1], 1.8, 2.0)
    with pytest.raises(ConfigError):
        var.charge_constancy(spec, constant(0.0, 2), T, [0.0, 1.0], strict=False)


def test_greens_formula_on_arbitrary_profile():
    spec = var.nfe(GAUSS, 1.0, 0.04, 0.1)
    u = quad.FunctionProfile(lambda x: (0.2 * np.exp(-x ** 2) + 0.05 * np.sin(x))[:, None],
                             [lambda x: (-0.4 * x * np.exp(-x ** 2) + 0.05 * np.cos(x))[:, None]], scale=0.5)
    lhs, rhs, gap = var.greens_formula_check(spec, u, T, -3.0, 3.0)
    assert gap < 1e-8
    assert abs(lhs) > 1e-4


def test_rotation_generator():
    xi = var.SymmetryGenerator.rotation(2)
    u, v = np.array([[1.0, 0.0]]), np.zeros((1, 2))
    np.testing.assert_allclose(xi.act(u, v), [[0.0, -1.0]])
    assert xi.one == 0.0


def test_allen_cahn_residual_against_direct_formula():
    from scipy.integrate import quad as squad

    spec = var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25])
    f = lambda s: 0.3 * np.sin(0.7 * s) + 0.2 * np.exp(-s ** 2)  # noqa: E731
    u = quad.FunctionProfile(lambda s: f(s)[:, None],
                             [lambda s: (0.21 * np.cos(0.7 * s) - 0.4 * s * np.exp(-s ** 2))[:, None]], scale=0.5)
    xs = np.array([-1.3, 0.0, 0.4, 2.2])
    k = lambda r: np.exp(-r * r / 2) / np.sqrt(2 * np.pi)  # noqa: E731
    conv = np.array([squad(lambda y: k(x - y) * f(y), x - 12, x + 12, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
                     for x in xs])
    # -kappa0 u + K*u - F'(u) with F'(u) = -0.4 u + u^3
    want = -f(xs) + conv - (-0.4 * f(xs) + f(xs) ** 3)
    np.testing.assert_allclose(var.el_residual(spec, u, x=xs)[:, 0], want, atol=1e-11)


def test_boundary_term_zero_cases():
    spec = var.whitham(GAUSS, 1.0, 0.9)
    assert var.boundary_term(spec, constant(0.4), T) == 0.0
    nls = var.nls(kernels.make_kernel("gaussian", dim=2, width=0.5), [0, 1, -1], 1.8, 2.0)
    u = quad.FunctionProfile(lambda s: np.column_stack([np.cos(s), 0.5 * np.sin(2 * s) + 0.1]),
                             [lambda s: np.column_stack([-np.sin(s), np.cos(2 * s)])], dim=2, scale=0.5)
    # DS(u) J u = 2 f'(|u|^2) (1, 1)^T (u . J u) = 0
    assert abs(var.boundary_term(nls, u, var.SymmetryGenerator.rotation(2))) < 1e-15


def test_whitham_boundary_term_against_tensor_rule():
    spec = var.whitham(GAUSS, 1.0, 0.9)
    u = quad.trig_profile(1.0, 0, 1.0, 0.0)
    # plain tensor Gauss-Legendre rule on the truncated quadrant [-14, 0] x [0, 14]
    t, w = np.polynomial.legendre.leggauss(300)
    X, wx = 7 * (t - 1), 7 * w
    Y, wy = 7 * (t + 1), 7 * w
    K = np.exp(-(X[:, None] - Y[None, :]) ** 2 / 2) / np.sqrt(2 * np.pi)
    sigma = 0.5 * np.cos(X)[:, None] * K * -np.sin(Y)[None, :]
    sigma_t = 0.5 * -np.sin(X)[:, None] * K * np.cos(Y)[None, :]
    brute = float(wx @ (sigma - sigma_t) @ wy)
    assert var.boundary_term(spec, u, T) == pytest.approx(brute, rel=1e-6)


def test_nls_plane_wave_gauge_charge():
    nls = var.nls(kernels.make_kernel("gaussian", dim=2, width=0.5), [0, 1, -1], 1.8, 2.0, lam=1.0)
    rate, a0 = 0.3, np.array([0.6, 0.2])
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def wave(s, order=0):
        th = rate * s
        rot = np.stack([np.cos(th)[:, None] * a0 + np.sin(th)[:, None] * (J @ a0)])[0]
        return rot if order % 2 == 0 else rot @ J.T * rate

    u = quad.FunctionProfile(lambda s: wave(s), [lambda s: wave(s, 1)], dim=2, scale=0.5)
    xi = var.SymmetryGenerator.rotation(2, speed=rate)
    want = -rate ** 2 * float(a0 @ a0)
    for x in (-2.0, 0.0, 1.5):
        assert var.noether_charge(nls, u, xi, x, strict=False) == pytest.approx(want, rel=1e-12)


def test_trivial_values():
    spec = var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25], c=0.1)
    zero = constant(0.0)
    assert var.hamiltonian(var.whitham(GAUSS, 1.0, 0.9), zero) == 0.0
    assert var.dissipation_check(spec, constant(0.0), -2.0, 2.0) == (0.0, 0.0, 0.0)
    v = quad.trig_profile(0.8, 0, 0.3, 0.1)
    assert var.presymplectic(spec, zero, v, v) == 0.0
    zero_v = var.hamiltonian_relation_check(var.whitham(GAUSS, 1.0, 0.9), v, constant(0.0))
    assert zero_v["minus_DH_v"] == 0.0 and zero_v["omega"] == 0.0
    dev, _ = var.charge_constancy(var.allen_cahn(GAUSS, [0, 0, -0.5, 0, 0.25]), constant(1.0), T, [0.5, 3.0])
    assert dev == 0.0


def test_nfe_constant_lyapunov():
    spec = var.nfe(GAUSS, 1.0, 0.04, 0.1)
    u = np.array([[0.2]])
    s = spec.S(u)[0, 0]
    # the auto orientation flips the kernel, so kappa0 of the spec is -1
    k0 = float(kernels.moment(spec.kernel, 0)[0, 0])
    assert k0 == pytest.approx(-1.0)
    want = -(spec.E(np.zeros(1), u, np.zeros_like(u))[0] + 0.5 * s * k0 * s)
    assert var.lyapunov(spec, constant(0.2)) == pytest.approx(want, abs=1e-15)


def test_front_charge_drift_is_dissipation(nfe_front):
    spec, prof = nfe_front
    a, b = -4.0, 3.0
    drift = var.noether_charge(spec, prof, T, b, strict=False) - var.noether_charge(spec, prof, T, a, strict=False)
    assert drift == pytest.approx(var.dissipation_integral(spec, prof, a, b), rel=1e-6)
