import numpy as np
import pytest

from nlh import kernels, quad, solvers, variational as var
from nlh.errors import (ConfigError, ContinuationStalled, FarFieldNotEquilibrium, JacobianSingular, NewtonDiverged,
                        WindowNotPlateau)

from conftest import whitham_kernel

GAUSS = kernels.make_kernel("gaussian", width=1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        solvers.SolveConfig(n=100)
    with pytest.raises(ConfigError):
        solvers.SolveConfig(topology="line", left=1.0, right=0.0)
    with pytest.raises(ConfigError):
        solvers.SolveConfig(tol=0.0)


@pytest.mark.parametrize("topology", ["periodic", "line"])
def test_jacobian_matches_finite_differences(topology):
    spec = var.nfe(GAUSS, 1.0, 0.04, 0.1) if topology == "line" else var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25])
    x = quad.periodic_grid(12.0, 32) if topology == "periodic" else quad.line_grid(-6, 6, 0.25)
    ops = solvers.Operators.build(spec.kernel, x, topology, 12.0)
    rng = np.random.default_rng(3)
    U = 0.1 * rng.standard_normal((x.size, 1))
    far = (np.array([0.0]), np.array([0.0]))
    _, J = solvers.residual_and_jacobian(spec, ops, U, far)
    h = 1e-6
    fd = np.zeros_like(J)
    for k in range(x.size):
        e = np.zeros_like(U)
        e[k] = h
        fd[:, k] = (solvers.residual_and_jacobian(spec, ops, U + e, far, False)[0]
                    - solvers.residual_and_jacobian(spec, ops, U - e, far, False)[0]).ravel() / (2 * h)
    np.testing.assert_allclose(J, fd, atol=1e-7)


def test_newton_scalar():
    z, hist = solvers.newton(lambda z, jac: (z ** 2 - 2, np.diag(2 * z)), np.array([1.0]), 1e-14)
    assert z[0] == pytest.approx(np.sqrt(2), rel=1e-14)
    with pytest.raises((NewtonDiverged, JacobianSingular)):
        solvers.newton(lambda z, jac: (z ** 2 + 1, np.diag(2 * z)), np.array([0.3]), 1e-12, max_iter=5)


def test_equilibrium_guess_is_returned():
    spec = var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25])
    cfg = solvers.SolveConfig(n=32, period=10.0)
    prof = solvers.solve_periodic(spec, cfg, np.zeros(32))
    assert np.max(np.abs(prof.values)) == 0.0


def test_far_field_must_be_equilibrium():
    spec = var.nfe(GAUSS, 1.0, 0.04, 0.1)
    cfg = solvers.SolveConfig(topology="line", left=-20.0, right=20.0, h=0.2, far_left=[0.5], far_right=[0.0],
                              phase_value=0.1)
    with pytest.raises(FarFieldNotEquilibrium):
        solvers.solve_line(spec, cfg, np.zeros(201))


def test_whitham_wave_resolved(whitham_wave):
    spec, prof = whitham_wave
    assert np.max(np.abs(var.el_residual(spec, prof))) < 1e-10
    assert solvers.spectral_tail(prof) < 1e-10
    assert solvers.amplitude(prof) == pytest.approx(0.01, rel=0.05)


def test_continuation_in_speed():
    base = solvers.SolveConfig(n=64, period=2 * np.pi / 0.2, amplitude=0.005)
    x = quad.periodic_grid(base.period, base.n)
    guess = 0.005 * np.cos(2 * np.pi * x / base.period)
    pts = solvers.continue_branch(lambda c: var.whitham(whitham_kernel(), 1.0, c), base, [0.96, 0.97, 0.98], guess)
    assert len(pts) == 3
    assert all(pt.residual < 1e-9 for pt in pts)
    periods = [pt.period_or_speed for pt in pts]
    assert periods[0] < periods[1] < periods[2]  # the period grows like 1/sqrt(c* - c)


def test_whitham_branch_periods():
    dcs = [-0.08, -0.06, -0.04, -0.03, -0.02, -0.015, -0.01]
    T0 = 2 * np.pi / np.sqrt(0.08)
    base = solvers.SolveConfig(n=64, period=T0, amplitude=2e-4)
    x = quad.periodic_grid(T0, 64)
    pts = solvers.continue_branch(lambda c: var.whitham(whitham_kernel(), 1.0, c), base, [1 + d for d in dcs],
                                  2e-4 * np.cos(2 * np.pi * x / T0))
    for dc, pt in zip(dcs, pts):
        assert pt.residual < 1e-9
        # linear root of exp(-k^2) = c for the width-sqrt(2) kernel
        exact = 2 * np.pi / np.sqrt(-np.log(1 + dc))
        assert pt.period_or_speed == pytest.approx(exact, rel=1e-3)
        quadratic = 2 * np.pi / np.sqrt(-dc)
        miss = pt.period_or_speed / quadratic - 1
        if dc > -0.07:
            assert abs(miss) < 0.02
        else:
            # the quadratic predictor drops the O(dc) dispersion term: the miss is that term
            assert miss == pytest.approx(np.sqrt(dc / np.log(1 + dc)) - 1, abs=1e-3)
            assert abs(miss) > 0.02


def test_continuation_stalls_without_prior_point():
    base = solvers.SolveConfig(n=32, period=10.0, amplitude=0.5, max_iter=3)
    x = quad.periodic_grid(10.0, 32)
    with pytest.raises(ContinuationStalled):
        solvers.continue_branch(lambda c: var.whitham(whitham_kernel(), 1.0, c), base, [1.5], np.cos(x))


def test_branch_csv(tmp_path, whitham_wave):
    spec, prof = whitham_wave
    pt = solvers._branch_point(spec, 0.96, prof)
    solvers.write_branch([pt], tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "param,amplitude,period_or_speed,charge,residual"
    assert float(lines[1].split(",")[2]) == pytest.approx(prof.period)


def test_far_field_wavenumber_synthetic():
    x = quad.line_grid(-20, 20, 0.1)
    rate = 0.3
    U = np.column_stack([np.cos(rate * x), -np.sin(rate * x)]) * 0.7
    prof = quad.GridProfile(x, U, "line")
    est, err = solvers.far_field_wavenumber(prof, (0.0, 15.0))
    assert est == pytest.approx(rate, abs=1e-10) and err < 1e-10
    ramp = quad.GridProfile(x, U * (1 + np.tanh(x))[:, None], "line")
    with pytest.raises(WindowNotPlateau):
        solvers.far_field_wavenumber(ramp, (-5.0, 5.0))


def test_plane_wave_amplitude_is_a_root():
    spec = var.nls(kernels.make_kernel("gaussian", dim=2, width=0.5), [0.0, 1.0, -1.0], 1.8, 2.0)
    mu = 1 - 1.8 ** 2 / 4
    rho = solvers.plane_wave_amplitude(spec, 0.1, mu)
    assert abs(solvers.plane_wave_gap(spec, rho, 0.1, mu)) < 1e-12
    # the smallest upward crossing, not the larger root near 0.95
    assert rho == pytest.approx(0.599, abs=0.01)


def test_nfe_front_endpoints(nfe_front):
    spec, prof = nfe_front
    assert prof.values[0, 0] == pytest.approx(0.2, abs=1e-12)
    assert abs(prof.values[-1, 0]) < 1e-6
    assert float(prof.eval(np.array([0.0]))[0, 0]) == pytest.approx(0.1, abs=1e-10)


def test_nls_step_converges(nls_step):
    spec, res = nls_step
    assert res.converged, res.message
    assert res.residual < 1e-10
    q = solvers.gauge_charge(res.profile)
    assert np.max(q) - np.min(q) < 1e-8


def test_trivial_nls_cases():
    kernel = kernels.make_kernel("gaussian", dim=2, width=0.5)
    spec = var.nls(kernel, [0.0, 1.0, -1.0], c=1.8, ell=2.0)
    x = quad.line_grid(-5.0, 5.0, 0.1)
    zero = quad.GridProfile(x, np.zeros((x.size, 2)), "line", far_left=[0, 0], far_right=[0, 0])
    assert np.max(np.abs(var.el_residual(spec, zero))) == 0.0
    real = quad.GridProfile(x, np.column_stack([np.full(x.size, 0.4), np.zeros(x.size)]), "line")
    rate, _ = solvers.far_field_wavenumber(real, (-4.0, 4.0))
    assert rate == 0.0


def test_symmetric_line_zero_guess_unchanged():
    spec = var.allen_cahn(GAUSS, [0, 0, -0.2, 0, 0.25])
    cfg = solvers.SolveConfig(topology="line", left=-10.0, right=10.0, h=0.2, far_left=[0.0], far_right=[0.0],
                              symmetric=True)
    prof = solvers.solve_line(spec, cfg, np.zeros(101))
    assert np.max(np.abs(prof.values)) == 0.0
