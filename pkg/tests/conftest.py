import time

import numpy as np
import pytest

from nlh import kernels, quad, solvers, variational

SQRT2 = float(np.sqrt(2.0))


def whitham_kernel():
    # width sqrt(2): kappa0 = 1, kappa2 = 2, so 2 pi / sqrt|c - c*| is the linear period
    return kernels.make_kernel("gaussian", width=SQRT2)


def solve_whitham_wave(n=256, dc=-0.04, amplitude=0.01, tol=1e-12):
    spec = variational.whitham(whitham_kernel(), 1.0, 1.0 + dc)
    T = 2 * np.pi / np.sqrt(abs(dc))
    x = quad.periodic_grid(T, n)
    cfg = solvers.SolveConfig(n=n, period=T, amplitude=amplitude, tol=tol)
    return spec, solvers.solve_periodic(spec, cfg, amplitude * np.cos(2 * np.pi * x / T))


def solve_nfe_front():
    spec = variational.nfe(kernels.make_kernel("gaussian", width=1.0), alpha=1.0, mu=0.04, c=0.1)
    cfg = solvers.SolveConfig(topology="line", left=-80.0, right=200.0, h=0.1, far_left=[0.2], far_right=[0.0],
                              phase_value=0.1, pin="left")
    x = quad.line_grid(cfg.left, cfg.right, cfg.h)
    return spec, solvers.solve_line(spec, cfg, 0.1 * (1 - np.tanh(x / 4)))


def solve_nls_step():
    kernel = kernels.make_kernel("gaussian", dim=2, width=0.5)
    spec = variational.nls(kernel, [0.0, 1.0, -1.0], c=1.8, ell=2.0)
    cfg = solvers.SolveConfig(topology="line", left=-30.0, right=30.0, h=0.1, tol=1e-10)
    return spec, solvers.nls_step_solve(spec, cfg, twist=0.1)


SOLVE_SECONDS = {}


def _timed(name, fn):
    t0 = time.perf_counter()
    out = fn()
    SOLVE_SECONDS[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def whitham_wave():
    return _timed("whitham_wave", solve_whitham_wave)


@pytest.fixture(scope="session")
def nfe_front():
    return _timed("nfe_front", solve_nfe_front)


@pytest.fixture(scope="session")
def nls_step():
    return _timed("nls_step", solve_nls_step)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
