"""Newton solvers for periodic waves, fronts and pulses, and the NLS step problem.

All solvers share one discretization: nodal values on a uniform grid, the
derivative matrices of the profile interpolant (trigonometric for periodic
grids, quintic spline on lines) and the nodal convolution matrix of
`quad.convolve_values`.  The residual is therefore exactly
`variational.el_residual` on the returned profile, and the Jacobian is its
exact derivative up to finite differences in the pointwise terms.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import kernels as kern
from . import quad
from . import variational as var
from .errors import (ConfigError, ContinuationStalled, FarFieldNotEquilibrium, JacobianSingular,
                     NewtonDiverged, WindowNotPlateau)

FD_STEP = 1e-6


@dataclass
class SolveConfig:
    """Discretization and Newton settings.

    Periodic solves use `n` (a power of two) and `period`; with `amplitude`
    set the period becomes an unknown and the first cosine coefficient is
    held at `amplitude`.  Line solves use [left, right] with spacing `h`,
    far-field values, and either an even reduction (`symmetric`) or a value
    phase condition u(phase_at) = phase_value.
    """

    topology: str = "periodic"
    n: int = 256
    period: float = 2 * np.pi
    amplitude: float = None
    left: float = -40.0
    right: float = 40.0
    h: float = 0.1
    far_left: list = None
    far_right: list = None
    symmetric: bool = False
    phase_at: float = 0.0
    phase_value: float = None
    pin: str = "left"
    tol: float = 1e-10
    max_iter: int = 40
    min_damping: float = 1.0 / 256
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("Newton tolerance must be positive")
        if self.topology == "periodic":
            if self.n < 4 or self.n & (self.n - 1):
                raise ConfigError("periodic grids need N a power of two")
            if self.period <= 0:
                raise ConfigError("period must be positive")
        elif self.topology == "line":
            if self.right <= self.left or self.h <= 0:
                raise ConfigError("line grids need left < right and h > 0")
        else:
            raise ConfigError(f"unknown topology {self.topology!r}")


@dataclass
class BranchPoint:
    param: float
    amplitude: float
    period_or_speed: float
    charge: float
    residual: float
    profile: object = None

    def row(self):
        return [self.param, self.amplitude, self.period_or_speed, self.charge, self.residual]


# ----------------------------------------------------------- discretization


def _identity_profile(x, topology, period=None):
    return quad.GridProfile(x, np.eye(x.size), topology, period=period)


def derivative_matrices(x, topology, period=None, orders=(1, 2)):
    """Matrices D_k with (D_k u)_i = u^(k)(x_i) for the grid interpolant."""
    ident = _identity_profile(x, topology, period)
    return [ident.nodal_derivative(k) for k in orders]


def convolution_matrix(kernel, x, topology, period=None):
    """Nodal convolution matrix (scalar kernels); line tails are handled separately."""
    if not kernel.is_scalar:
        raise ConfigError("the solvers support scalar-times-identity kernels")
    if topology == "periodic":
        scalar = kern.Kernel(kernel.profile, dim=1, eta0=kernel.eta0)
        return quad.convolve_values(scalar, _identity_profile(x, topology, period), np.eye(x.size))
    return quad.line_convolution_matrix(kernel, x)


@dataclass
class Operators:
    x: np.ndarray
    topology: str
    period: float
    D1: np.ndarray
    D2: np.ndarray
    C: np.ndarray

    @classmethod
    def build(cls, kernel, x, topology, period=None):
        D1, D2 = derivative_matrices(x, topology, period)
        return cls(x, topology, period, D1, D2, convolution_matrix(kernel, x, topology, period))


def _pointwise(spec, x, U, V, W):
    out = spec.E_u(x, U, V)
    if spec.has_gradient_term:
        out = out - np.einsum("nij,nj->ni", spec.E_vv(x, U, V), W) - np.einsum("nij,nj->ni", spec.E_uv(x, U, V), V)
    if spec.dissipative:
        out = out - spec.c * np.einsum("nij,nj->ni", spec.gamma(U), V)
    return out


def residual_and_jacobian(spec, ops, U, far=None, jacobian=True):
    """Nodal residual R (N, d) and its Jacobian with respect to U (flattened n*d + a)."""
    x = ops.x
    N, d = U.shape
    V, W = ops.D1 @ U, ops.D2 @ U
    SU = spec.S(U)
    KS = ops.C @ SU
    if ops.topology == "line":
        left, right = (SU[0], SU[-1]) if far is None else (spec.S(far[0][None, :])[0], spec.S(far[1][None, :])[0])
        KS = KS + quad.line_tails(spec.kernel, x, left, right)
    DS = spec.DS(U)
    R = _pointwise(spec, x, U, V, W) + np.einsum("nji,nj->ni", DS, KS)
    if not jacobian:
        return R, None
    blocks = []
    for arg in range(3 if spec.has_gradient_term else 2):
        B = np.zeros((N, d, d))
        for b in range(d):
            e = np.zeros(d)
            e[b] = FD_STEP
            args_p, args_m = [U, V, W], [U, V, W]
            args_p = [a + e if k == arg else a for k, a in enumerate(args_p)]
            args_m = [a - e if k == arg else a for k, a in enumerate(args_m)]
            B[:, :, b] = (_pointwise(spec, x, *args_p) - _pointwise(spec, x, *args_m)) / (2 * FD_STEP)
        blocks.append(B)
    J = np.zeros((N, d, N, d))
    idx = np.arange(N)
    J[idx, :, idx, :] += blocks[0]
    if spec.D2S is not None:
        J[idx, :, idx, :] += np.einsum("ni,nijk->njk", KS, spec.D2S(U))
    J += blocks[1][:, :, None, :] * ops.D1[:, None, :, None]
    if spec.has_gradient_term:
        J += blocks[2][:, :, None, :] * ops.D2[:, None, :, None]
    J += np.einsum("nca,nm,mcb->namb", DS, ops.C, DS)
    return R, J.reshape(N * d, N * d)


def _solve_linear(A, b):
    try:
        lu = linalg.lu_factor(A, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise JacobianSingular(str(exc)) from None
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * max(1.0, np.max(np.abs(np.diag(lu[0])))):
        raise JacobianSingular("Jacobian is numerically singular")
    return linalg.lu_solve(lu, b, check_finite=False)


def newton(fun, z0, tol, max_iter=40, min_damping=1.0 / 256, scale=None):
    """Damped Newton on z: fun(z, jac) -> (F, J).  Convergence is tested on max|F|
    restricted to the first `scale` entries (the collocation residual)."""
    z = np.array(z0, dtype=float)
    F, J = fun(z, True)
    norm = lambda F: float(np.max(np.abs(F[:scale] if scale else F)))  # noqa: E731
    full = lambda F: float(np.linalg.norm(F))  # noqa: E731
    history = [norm(F)]
    for _ in range(max_iter):
        if norm(F) <= tol:
            return z, history
        step = _solve_linear(J, -F)
        lam = 1.0
        while True:
            z_new = z + lam * step
            F_new, _ = fun(z_new, False)
            if np.all(np.isfinite(F_new)) and (full(F_new) < full(F) * (1 - 1e-4 * lam) or norm(F_new) <= tol):
                break
            lam /= 2
            if lam < min_damping:
                raise NewtonDiverged(f"line search failed at residual {history[-1]:.3e}")
        z = z_new
        F, J = fun(z, True)
        history.append(norm(F))
    if norm(F) <= tol:
        return z, history
    raise NewtonDiverged(f"no convergence in {max_iter} iterations (residual {history[-1]:.3e})")


# ------------------------------------------------------------------ periodic


def _even_map(n):
    """P with u = P h for even periodic sequences u_j = u_{n-j}, h = u_0..u_{n/2}."""
    m = n // 2 + 1
    P = np.zeros((n, m))
    for j in range(n):
        P[j, min(j, n - j)] = 1.0
    return P


def _cos1(values, n):
    return 2.0 * np.mean(values[:, 0] * np.cos(2 * np.pi * np.arange(n) / n))


def solve_periodic(spec, config, guess):
    """Even periodic solution by Newton; guess is a Profile or nodal array.

    With config.amplitude set the period is solved for; otherwise it is fixed.
    """
    n, d = config.n, spec.dim
    if d != 1:
        raise ConfigError("periodic solves are implemented for scalar fields")
    T0 = config.period
    x0 = quad.periodic_grid(T0, n)
    U0 = guess.eval(x0) if isinstance(guess, quad.Profile) else np.asarray(guess, dtype=float).reshape(n, d)
    P = _even_map(n)
    h0 = (P.T @ U0[:, 0]) / P.sum(axis=0)
    rows = slice(0, n // 2 + 1)
    free_T = config.amplitude is not None
    cache = {}

    def ops_for(T):
        if T not in cache:
            cache.clear()
            cache[T] = Operators.build(spec.kernel, quad.periodic_grid(T, n), "periodic", T)
        return cache[T]

    def fun(z, jac):
        T = z[-1] if free_T else T0
        if T <= 0:
            return np.full(z.size, np.inf), None
        U = (P @ z[:P.shape[1]])[:, None]
        R, J = residual_and_jacobian(spec, ops_for(T), U, jacobian=jac)
        F = R[rows, 0]
        if free_T:
            F = np.append(F, _cos1(U, n) - config.amplitude)
        if not jac:
            return F, None
        Jh = J[rows] @ P
        if free_T:
            dT = 1e-6 * T
            Rp, _ = residual_and_jacobian(spec, Operators.build(spec.kernel, quad.periodic_grid(T + dT, n),
                                                                "periodic", T + dT), U, jacobian=False)
            Rm, _ = residual_and_jacobian(spec, Operators.build(spec.kernel, quad.periodic_grid(T - dT, n),
                                                                "periodic", T - dT), U, jacobian=False)
            colT = (Rp[rows, 0] - Rm[rows, 0]) / (2 * dT)
            amp_row = 2.0 / n * (np.cos(2 * np.pi * np.arange(n) / n) @ P)
            Jh = np.block([[Jh, colT[:, None]], [amp_row[None, :], np.zeros((1, 1))]])
        return F, Jh

    z0 = np.append(h0, T0) if free_T else h0
    R0, _ = fun(z0, False)
    if np.max(np.abs(R0)) <= config.tol:
        z = z0
    else:
        z, _ = newton(fun, z0, config.tol, config.max_iter, config.min_damping)
    T = z[-1] if free_T else T0
    x = quad.periodic_grid(T, n)
    prof = quad.GridProfile(x, (P @ z[:P.shape[1]])[:, None], "periodic", period=T)
    return prof


def spectral_tail(profile):
    """Energy fraction of the last quarter of the Fourier modes (resolution guard)."""
    c = np.abs(np.fft.rfft(profile.values, axis=0)) ** 2
    total = float(c.sum())
    return float(c[3 * c.shape[0] // 4:].sum()) / total if total > 0 else 0.0


# ---------------------------------------------------------------------- line


def check_far_field(spec, values, xs=(0.0,), tol=1e-8):
    for v, x in zip(values, xs):
        u = np.asarray(v, dtype=float).reshape(1, spec.dim)
        r = spec.E_u(np.array([x]), u, np.zeros_like(u)) + np.einsum(
            "nji,nj->ni", spec.DS(u), spec.S(u) @ kern.moment(spec.kernel, 0).T)
        if np.max(np.abs(r)) > tol:
            raise FarFieldNotEquilibrium(f"far-field value {v} has constant residual {np.max(np.abs(r)):.3e}")


def solve_line(spec, config, guess):
    """Front or pulse on [left, right] with pinned ends and far-field tails.

    Translation is removed either by the even reduction (config.symmetric,
    grid symmetric about 0, both ends pinned) or by u(phase_at) = phase_value.
    In the second case only the end given by config.pin is held at its far
    value and the phase condition takes the collocation row of the other
    end.  This suits fronts whose free end is a stable state: pinning both
    ends over-determines the problem and leaves the Jacobian nearly singular.
    """
    d = spec.dim
    x = quad.line_grid(config.left, config.right, config.h)
    N = x.size
    U0 = guess.eval(x) if isinstance(guess, quad.Profile) else np.asarray(guess, dtype=float).reshape(N, d)
    fl = np.asarray(config.far_left if config.far_left is not None else U0[0], dtype=float).reshape(d)
    fr = np.asarray(config.far_right if config.far_right is not None else U0[-1], dtype=float).reshape(d)
    check_far_field(spec, [fl, fr], [x[0], x[-1]])
    ops = Operators.build(spec.kernel, x, "line")
    far = (fl, fr)

    if config.symmetric:
        pins = (0, N - 1)
    elif config.pin in ("left", "right"):
        pins = (0,) if config.pin == "left" else (N - 1,)
    else:
        raise ConfigError("a phase condition needs exactly one pinned end (pin = 'left' or 'right')")

    def pinned(U, jac):
        R, J = residual_and_jacobian(spec, ops, U, far, jacobian=jac)
        R = R.copy()
        for j in pins:
            R[j] = U[j] - (fl if j == 0 else fr)
            if jac:
                for k in range(j * d, (j + 1) * d):
                    J[k] = 0.0
                    J[k, k] = 1.0
        return R.ravel(), J

    if config.symmetric:
        if abs(x[0] + x[-1]) > 1e-9 * abs(x[0]) or N % 2 == 0:
            raise ConfigError("the even reduction needs a grid symmetric about 0 with odd size")
        m = N // 2
        P1 = np.zeros((N, m + 1))
        for j in range(N):
            P1[j, abs(j - m)] = 1.0
        P = np.kron(P1, np.eye(d))
        rows = slice(m * d, N * d)

        def fun(z, jac):
            U = (P @ z).reshape(N, d)
            F, J = pinned(U, jac)
            return F[rows], (J[rows] @ P if jac else None)

        z0 = np.linalg.lstsq(P, U0.ravel(), rcond=None)[0]
    else:
        # the row of the free end carries u(phase_at) = phase_value
        if config.phase_value is None:
            raise ConfigError("line solves without symmetry need phase_value")
        i0 = int(np.argmin(np.abs(x - config.phase_at)))
        comp = int(config.extra.get("phase_component", 0))
        free = (N - 1) * d + comp if config.pin == "left" else comp

        def fun(z, jac):
            U = z.reshape(N, d)
            F, J = pinned(U, jac)
            F[free] = U[i0, comp] - config.phase_value
            if jac:
                J[free] = 0.0
                J[free, i0 * d + comp] = 1.0
            return F, J

        z0 = U0.ravel()

    F0, _ = fun(z0, False)
    if np.max(np.abs(F0)) <= config.tol:
        z = z0
    else:
        z, _ = newton(fun, z0, config.tol, config.max_iter, config.min_damping)
    U = (P @ z).reshape(N, d) if config.symmetric else z.reshape(N, d)
    return quad.GridProfile(x, U, "line", far_left=fl, far_right=fr)


# -------------------------------------------------------------- continuation


def amplitude(profile):
    v = profile.values
    if profile.topology == "periodic":
        return 0.5 * float(np.max(v[:, 0]) - np.min(v[:, 0]))
    return float(np.max(np.abs(v - profile.far_right)))


def _branch_point(spec, param, prof, speed=None):
    res = float(np.max(np.abs(var.el_residual(spec, prof))))
    if spec.dissipative:
        charge = var.lyapunov(spec, prof)
    elif spec.x_dependent:
        charge = float("nan")
    else:
        charge = var.hamiltonian(spec, prof)
    per = prof.period if prof.topology == "periodic" else (speed if speed is not None else spec.c)
    return BranchPoint(float(param), amplitude(prof), float(per), float(charge), res, prof)


def continue_branch(make_spec, config, params, guess, kind="periodic", make_guess=None, max_halvings=5):
    """Natural-parameter continuation over `params` with step halving on failure.

    make_spec(p) builds the spec at parameter p; make_guess(p, previous) may
    supply a fresh guess (default: the previous solution).
    """
    solve = solve_periodic if kind == "periodic" else solve_line
    points, prev, p_prev = [], guess, None
    for p in params:
        target, attempts = p, 0
        while True:
            g = make_guess(target, prev) if make_guess else prev
            cfg = config
            if kind == "periodic" and isinstance(prev, quad.GridProfile):
                cfg = replace(config, period=prev.period)
            try:
                prof = solve(make_spec(target), cfg, g)
            except (NewtonDiverged, JacobianSingular):
                attempts += 1
                if attempts > max_halvings or p_prev is None:
                    raise ContinuationStalled(f"continuation stalled near parameter {target}") from None
                target = 0.5 * (p_prev + target)
                continue
            prev, p_prev = prof, target
            if target == p:
                break
            target = p
        points.append(_branch_point(make_spec(p), p, prev))
    return points


def write_branch(points, path):
    header = "param,amplitude,period_or_speed,charge,residual"
    np.savetxt(path, np.array([pt.row() for pt in points]), delimiter=",", header=header, comments="",
               fmt="%.17g")


# ------------------------------------------------------------------------ NLS


J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def plane_wave_gap(spec, rho, rate, mu):
    """rate^2 - mu - 4 kappa0 f'(rho) f(rho): zero for plane waves exp(x rate J) A0 with |A0|^2 = rho.

    The factor 4 comes from s(u) = f(|u|^2)(1, 1): both components of k*s
    contribute and D s carries 2 f'(|u|^2) u.
    """
    k0 = float(kern.moment(spec.kernel, 0)[0, 0])
    f, df = spec.f, spec.f.deriv()
    return rate ** 2 - mu - 4 * k0 * df(rho) * f(rho)


def plane_wave_amplitude(spec, rate, mu, bracket=(1e-6, 5.0)):
    """Smallest rho in the bracket where plane_wave_gap crosses zero upwards."""
    from scipy import optimize

    grid = np.linspace(*bracket, 2001)
    vals = np.array([plane_wave_gap(spec, r, rate, mu) for r in grid])
    roots = [optimize.brentq(lambda r: plane_wave_gap(spec, r, rate, mu), a, b)
             for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]) if va < 0 < vb]
    if not roots:
        raise ConfigError(f"no plane wave with rate {rate} at mu = {mu}")
    return min(roots)


@dataclass
class NLSResult:
    profile: object
    rate: float
    rho: float
    converged: bool
    residual: float
    history: list
    message: str = ""


def _nls_system(spec, config, twist):
    if spec.family != "nls":
        raise ConfigError("nls_step_solve needs an nls spec")
    c = spec.params["c"]
    if not 0 < abs(c) < 2:
        raise ConfigError("the step problem needs 0 < |c| < 2")
    mu_r = 1.0 - c * c / 4
    x = quad.line_grid(config.left, config.right, config.h)
    N = x.size
    ops = Operators.build(spec.kernel, x, "line")
    rho0 = plane_wave_amplitude(spec, twist, mu_r)
    ramp = 0.5 * (1 + np.tanh(x - config.extra.get("front_at", 0.0)))
    theta = -twist * (x - x[-1])
    U0 = np.sqrt(rho0) * ramp[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    z0 = np.concatenate([U0.ravel(), [twist, rho0]])
    e1 = np.array([1.0, 0.0])

    def fun(z, jac):
        U = z[:2 * N].reshape(N, 2)
        rate, rho = z[-2], z[-1]
        sr = np.sqrt(max(rho, 1e-300))
        far = (np.zeros(2), U[-1])
        R, J = residual_and_jacobian(spec, ops, U, far, jacobian=jac)
        R = R.copy()
        if jac:
            J = J.copy()
            # tails on the right use S(U[-1]); add their dependence on the last node
            dtail = quad.kernel_tail(spec.kernel, x[-1] - x)[:, 0, 0]
            DSr = spec.DS(U[-1:])[0]
            DSn = spec.DS(U)
            J[:, -2:] += np.einsum("nca,n,cb->nab", DSn, dtail, DSr).reshape(2 * N, 2)
        R[0] = U[0]
        R[-1] = U[-1] - sr * e1
        V = ops.D1 @ U
        extra = np.array([V[-1, 1] + rate * sr, plane_wave_gap(spec, rho, rate, mu_r)])
        F = np.concatenate([R.ravel(), extra])
        if not jac:
            return F, None
        Jf = np.zeros((2 * N + 2, 2 * N + 2))
        Jf[:2 * N, :2 * N] = J
        for k in (0, 1, 2 * N - 2, 2 * N - 1):
            Jf[k] = 0.0
            Jf[k, k] = 1.0
        Jf[2 * N - 2, -1] = -0.5 / sr
        Jf[2 * N, :2 * N] = np.kron(ops.D1[-1], np.array([0.0, 1.0]))
        Jf[2 * N, -2] = sr
        Jf[2 * N, -1] = 0.5 * rate / sr
        h = 1e-7
        Jf[2 * N + 1, -2] = 2 * rate
        Jf[2 * N + 1, -1] = (plane_wave_gap(spec, rho + h, rate, mu_r) - plane_wave_gap(spec, rho - h, rate, mu_r)) / (2 * h)
        return F, Jf

    def build(z):
        U = z[:2 * N].reshape(N, 2)
        return quad.GridProfile(x, U, "line", far_left=np.zeros(2), far_right=U[-1])

    return fun, z0, build


def nls_step_solve(spec, config, twist=0.1):
    """Connect A = 0 at the left end to a plane wave at the right end.

    Unknowns: nodal A (N x 2), the right wavenumber rate and |A0|^2 = rho.
    Equations: collocation at interior nodes, A(left) = 0,
    A(right) = sqrt(rho) e1 (which also fixes the gauge), A2'(right) = -rate sqrt(rho),
    and the plane-wave relation between rate and rho.  The initial guess
    twists with wavenumber `twist` so that the selected rate is not built in.
    Returns an NLSResult; on failure the best iterate is kept with converged = False.
    """
    fun, z0, build = _nls_system(spec, config, twist)
    N = (z0.size - 2) // 2
    try:
        z, hist = newton(fun, z0, config.tol, config.max_iter, config.min_damping, 2 * N)
        F, _ = fun(z, False)
        return NLSResult(build(z), float(z[-2]), float(z[-1]), True, float(np.max(np.abs(F))), hist)
    except (NewtonDiverged, JacobianSingular) as exc:
        # keep the iterate with the smallest residual for the fallback check
        best = _best_iterate(fun, z0, config)
        F, _ = fun(best, False)
        return NLSResult(build(best), float(best[-2]), float(best[-1]), False, float(np.max(np.abs(F))), [],
                         str(exc))


def _best_iterate(fun, z0, config):
    z = np.array(z0, dtype=float)
    best, best_norm = z.copy(), np.inf
    for _ in range(config.max_iter):
        F, J = fun(z, True)
        nrm = float(np.linalg.norm(F))
        if nrm < best_norm:
            best, best_norm = z.copy(), nrm
        try:
            z = z + 0.5 * _solve_linear(J, -F)
        except JacobianSingular:
            break
    return best


def gauge_charge(profile, x=None):
    """-u' . J u at the nodes (or at x)."""
    xs = profile.x if x is None else np.atleast_1d(x)
    U, V = profile.eval(xs), profile.eval(xs, 1)
    return -np.einsum("ni,ij,nj->n", V, J2, U)


def far_field_wavenumber(profile, window, plateau_tol=1e-2):
    """Rotation rate of (u1, u2) over the window by a least-squares phase fit.

    Returns (rate, standard error).  A plane wave exp(x rate J) A0 gives rate.
    """
    a, b = window
    x = np.linspace(a, b, 201)
    U = profile.eval(x)
    amp = np.hypot(U[:, 0], U[:, 1])
    if amp.max() <= 0 or (amp.max() - amp.min()) > plateau_tol * amp.max():
        raise WindowNotPlateau(f"amplitude varies by {(amp.max() - amp.min()):.3e} on the window")
    phase = np.unwrap(np.arctan2(U[:, 1], U[:, 0]))
    A = np.column_stack([x, np.ones_like(x)])
    sol, res, *_ = np.linalg.lstsq(A, phase, rcond=None)
    dof = max(1, x.size - 2)
    sigma2 = float(res[0]) / dof if res.size else 0.0
    cov = sigma2 * np.linalg.inv(A.T @ A)
    return float(-sol[0]), float(np.sqrt(cov[0, 0]))
