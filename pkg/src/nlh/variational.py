"""Nonlocal Lagrangians L = E(x, u, u') + 1/2 S(u) . K*S(u) and their invariants.

Field values are arrays of shape (M, d).  A `LagrangianSpec` bundles the
pointwise data (E and its derivatives, S and its derivatives), the kernel,
and an optional dissipation term c Gamma(u) u'.  Everything evaluated at
"x = 0" follows the anchoring convention: a charge at x is the same
expression evaluated on the shifted profile.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels as kern
from . import quad
from ._rules import gauss_panels
from .errors import ConfigError, ResidualTooLarge

STRICT_TOL = 1e-6
GAP_FLOOR = 1e-12  # relative gaps fall back to absolute below this size


class LagrangianSpec:
    """Immutable bundle of the data defining one nonlocal Euler-Lagrange problem.

    Callables take x (M,), u (M, d), v (M, d):
      E -> (M,), E_u, E_v -> (M, d), E_vv, E_uv, E_uu -> (M, d, d)
    with E_uv[i, j] = d^2 E / dv_i du_j.  S(u) -> (M, d), DS(u) -> (M, d, d),
    D2S(u) -> (M, d, d, d) with D2S[i, j, k] = d^2 S_i / du_j du_k.
    gamma(u) -> (M, d, d) is the dissipation matrix, used with speed c.
    """

    def __init__(self, kernel, dim, E, E_u, E_v, S, DS, *, E_vv=None, E_uv=None, E_uu=None, D2S=None,
                 has_gradient_term=False, gamma=None, c=0.0, x_dependent=False, family="custom", params=None):
        if kernel.dim != dim:
            raise ConfigError(f"kernel dimension {kernel.dim} does not match state dimension {dim}")
        self.kernel = kernel
        self.dim = dim
        self.E, self.E_u, self.E_v = E, E_u, E_v
        self.S, self.DS = S, DS
        zeros = lambda x, u, v: np.zeros((np.shape(u)[0], dim, dim))  # noqa: E731
        self.E_vv = E_vv or zeros
        self.E_uv = E_uv or zeros
        self.E_uu = E_uu
        self.D2S = D2S
        self.has_gradient_term = bool(has_gradient_term)
        self.gamma = gamma
        self.c = float(c)
        self.x_dependent = bool(x_dependent)
        self.family = family
        self.params = dict(params or {})

    @property
    def regularity(self):
        return 2 if self.has_gradient_term else 1

    @property
    def dissipative(self):
        return self.gamma is not None and self.c != 0.0

    def check_gradients(self, samples=20, seed=0, h=1e-6):
        """Finite-difference consistency of E_u, E_v, DS (and Gamma positivity)."""
        rng = np.random.default_rng(seed)
        d = self.dim
        x = rng.uniform(-1, 1, samples)
        u = rng.uniform(-0.3, 0.3, (samples, d))
        v = rng.uniform(-0.3, 0.3, (samples, d))
        errs = {}
        eu, ev, ds = np.zeros((samples, d)), np.zeros((samples, d)), np.zeros((samples, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            eu[:, j] = (self.E(x, u + e, v) - self.E(x, u - e, v)) / (2 * h)
            ev[:, j] = (self.E(x, u, v + e) - self.E(x, u, v - e)) / (2 * h)
            ds[:, :, j] = (self.S(u + e) - self.S(u - e)) / (2 * h)
        errs["E_u"] = float(np.max(np.abs(eu - self.E_u(x, u, v))))
        errs["E_v"] = float(np.max(np.abs(ev - self.E_v(x, u, v))))
        errs["DS"] = float(np.max(np.abs(ds - self.DS(u))))
        report = {k: {"error": val, "passed": val < 1e-6} for k, val in errs.items()}
        if self.gamma is not None:
            eig = np.linalg.eigvalsh(0.5 * (self.gamma(u) + np.swapaxes(self.gamma(u), 1, 2)))
            report["gamma_positive"] = {"min_eig": float(eig.min()), "passed": bool(eig.min() > 0)}
        return report


@dataclass(frozen=True)
class SymmetryGenerator:
    """xi = (A, rate): u_xi = A u + rate u', 1_xi = -rate."""

    A: np.ndarray = None
    rate: float = 0.0

    @classmethod
    def translation(cls):
        return cls(None, 1.0)

    @classmethod
    def rotation(cls, dim=2, speed=1.0):
        J = np.zeros((dim, dim))
        J[0, 1], J[1, 0] = speed, -speed
        return cls(J, 0.0)

    @property
    def one(self):
        return -self.rate

    def act(self, u, v):
        out = self.rate * v
        if self.A is not None:
            out = out + u @ np.asarray(self.A).T
        return out


# ------------------------------------------------------------ profile helpers


class Mapped(quad.Profile):
    """Pointwise image fn(x, u, u') of a profile (order-0 evaluation only)."""

    topology = "function"

    def __init__(self, u, fn, dim, growth=None, offset=0.0):
        self.u = u
        self.fn = fn
        self.dim = dim
        self.offset = offset
        self.growth = 3 * getattr(u, "growth", 0) if growth is None else growth

    def resolution(self):
        return self.u.resolution()

    def eval(self, x, order=0):
        if order:
            raise ValueError("mapped profiles are evaluated without derivatives")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.asarray(self.fn(x + self.offset, self.u.eval(x), self.u.eval(x, 1))).reshape(x.size, self.dim)


class Derivative(quad.Profile):
    """u' as a profile, evaluated exactly through u's own derivatives."""

    topology = "function"

    def __init__(self, u):
        self.u = u
        self.dim = u.dim
        self.growth = getattr(u, "growth", 0)

    def resolution(self):
        return self.u.resolution()

    def eval(self, x, order=0):
        return self.u.eval(x, order + 1)


def combine(u, v, eps):
    """The profile u + eps v (same grid for grid profiles)."""
    if isinstance(u, quad.GridProfile):
        vv = v.values if isinstance(v, quad.GridProfile) and v.x.size == u.x.size else v.eval(u.x)
        out = u.with_values(u.values + eps * vv)
        if u.topology == "line":
            out.far_left = u.far_left + eps * vv[0]
            out.far_right = u.far_right + eps * vv[-1]
        return out
    fns = [lambda x, k=k: u.eval(x, k) + eps * v.eval(x, k) for k in range(3)]
    return quad.FunctionProfile(fns[0], fns[1:], u.dim, max(u.growth, getattr(v, "growth", 0)), u.resolution())


def _S_of(spec, u, offset=0.0):
    return Mapped(u, lambda x, U, V: spec.S(U), spec.dim, offset=offset)


def _DS_times(spec, u, w):
    """DS(u) w as a profile, w given as a profile."""

    def fn(x, U, V):
        return np.einsum("nij,nj->ni", spec.DS(U), w.eval(x))

    return Mapped(u, fn, spec.dim, growth=3 * getattr(u, "growth", 0) + getattr(w, "growth", 0))


def _DS_xi(spec, u, xi):
    def fn(x, U, V):
        return np.einsum("nij,nj->ni", spec.DS(U), xi.act(U, V))

    return Mapped(u, fn, spec.dim)


def _at0(u, order=0):
    return u.eval(np.zeros(1), order)


def conv_S_at(spec, u, xq):
    """(K * S(u))(xq)."""
    return quad.convolve_at(spec.kernel, u, xq, transform=spec.S)


# --------------------------------------------------------------- operations


def el_residual(spec, u, x=None):
    """-d/dx grad_v E + grad_u E + DS^T K*S(u) [- c Gamma u'] at the grid nodes (or at x).

    Grid profiles without explicit points use the nodal convolution of
    `quad.convolve_values`; otherwise the convolution is computed by direct
    quadrature at the requested points.
    """
    if x is None and isinstance(u, quad.GridProfile):
        xs = u.x
        U, V = u.values, u.nodal_derivative(1)
        far = None
        if u.topology == "line":
            far = (spec.S(u.far_left[None, :])[0], spec.S(u.far_right[None, :])[0])
        KS = quad.convolve_values(spec.kernel, u, spec.S(U), far)
        W = u.nodal_derivative(2) if spec.has_gradient_term else None
    else:
        xs = np.atleast_1d(np.asarray(x if x is not None else u.x, dtype=float))
        U, V = u.eval(xs), u.eval(xs, 1)
        KS = conv_S_at(spec, u, xs)
        W = u.eval(xs, 2) if spec.has_gradient_term else None
    res = spec.E_u(xs, U, V) + np.einsum("nji,nj->ni", spec.DS(U), KS)
    if spec.has_gradient_term:
        res -= np.einsum("nij,nj->ni", spec.E_vv(xs, U, V), W) + np.einsum("nij,nj->ni", spec.E_uv(xs, U, V), V)
    if spec.dissipative:
        res -= spec.c * np.einsum("nij,nj->ni", spec.gamma(U), V)
    return res


def residual_norm(spec, u):
    r = el_residual(spec, u)
    return float(np.max(np.abs(r)))


def _require_solution(spec, u, strict, tol=STRICT_TOL):
    if not strict:
        return
    if not isinstance(u, quad.GridProfile):
        return
    r = residual_norm(spec, u)
    if r > tol:
        raise ResidualTooLarge(f"residual max-norm {r:.3e} exceeds {tol:.1e}")


def boundary_term(spec, u, xi, tol=quad.QUAD_TOL):
    """B_xi(u) = integral over Q of sigma(x,y) - sigma(y,x),
    sigma(x,y) = 1/2 S(u(x)) . K(x-y) (DS(u) u_xi)(y)."""
    Su = _S_of(spec, u)
    g = _DS_xi(spec, u, xi)
    f = quad.SeparableQ([(0.5, Su, g), (-0.5, g, Su)], spec.kernel, antisymmetric=True)
    return quad.integrate_Q(f, spec.kernel, tol)


def noether_charge(spec, u, xi, x=0.0, strict=True, tol=quad.QUAD_TOL):
    """C_xi(u)(x) = L 1_xi + grad_v E . u_xi + B_xi(phi_x u), via the shifted profile."""
    _require_solution(spec, u, strict)
    us = quad.shift(u, x)
    U, V = _at0(us), _at0(us, 1)
    xs = np.array([float(x)])
    KS = conv_S_at(spec, us, np.zeros(1))
    lag = spec.E(xs, U, V)[0] + 0.5 * float(spec.S(U)[0] @ KS[0])
    uxi = xi.act(U, V)
    val = lag * xi.one + float(spec.E_v(xs, U, V)[0] @ uxi[0])
    return val + boundary_term(spec, us, xi, tol)


def hamiltonian(spec, u, tol=quad.QUAD_TOL, offset=0.0):
    """H(u) = -[E - grad_v E . u' + 1/2 S.K*S]_{x=0}
    + 1/2 integral over Q of S(u(x)).K(x-y) DS(u(y))u'(y) - (x <-> y)."""
    x0 = np.array([offset])
    U, V = _at0(u), _at0(u, 1)
    KS = conv_S_at(spec, u, np.zeros(1))
    local = spec.E(x0, U, V)[0] - float(spec.E_v(x0, U, V)[0] @ V[0]) + 0.5 * float(spec.S(U)[0] @ KS[0])
    Su = _S_of(spec, u)
    g = _DS_times(spec, u, Derivative(u))
    f = quad.SeparableQ([(0.5, Su, g), (-0.5, g, Su)], spec.kernel)
    return -local + quad.integrate_Q(f, spec.kernel, tol)


def lyapunov(spec, u, tol=quad.QUAD_TOL):
    """Same expression as `hamiltonian`; monotone along shifts of dissipative solutions."""
    return hamiltonian(spec, u, tol)


def dissipation_integral(spec, u, a, b):
    """-c * integral_a^b Gamma(u) u' . u' dx."""
    x, w = gauss_panels(a, b, min(0.25, 0.5 * u.resolution()), 16)
    U, V = u.eval(x), u.eval(x, 1)
    return -spec.c * float(np.sum(w * np.einsum("ni,nij,nj->n", V, spec.gamma(U), V)))


def dissipation_check(spec, u, a, b):
    """(L(phi_b u) - L(phi_a u), -c int_a^b Gamma u'.u', relative gap)."""
    if not spec.dissipative:
        raise ConfigError("dissipation_check needs a dissipative spec")
    lhs = lyapunov(spec, quad.shift(u, b)) - lyapunov(spec, quad.shift(u, a))
    rhs = dissipation_integral(spec, u, a, b)
    scale = max(abs(lhs), abs(rhs))
    gap = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return lhs, rhs, gap


def omega_local(spec, u, v, w):
    if not spec.has_gradient_term:
        return 0.0
    x0 = np.zeros(1)
    U, V = _at0(u), _at0(u, 1)
    Hv, Muv = spec.E_vv(x0, U, V)[0], spec.E_uv(x0, U, V)[0]
    v0, v1, w0, w1 = _at0(v)[0], _at0(v, 1)[0], _at0(w)[0], _at0(w, 1)[0]
    return float(w0 @ Hv @ v1 - v0 @ Hv @ w1 + w0 @ Muv @ v0 - v0 @ Muv @ w0)


def presymplectic(spec, u, v, w, tol=quad.QUAD_TOL):
    """omega_u(v, w) = omega^n + omega^loc."""
    a, b = _DS_times(spec, u, v), _DS_times(spec, u, w)
    f = quad.SeparableQ([(1.0, a, b), (-1.0, b, a)], spec.kernel, antisymmetric=True)
    return quad.integrate_Q(f, spec.kernel, tol) + omega_local(spec, u, v, w)


def hamiltonian_relation_check(spec, u, v, fd_step=1e-4):
    """Relative gap in -DH(u)v = omega_u(u', v) + R(u)(0) . v(0).

    DH is taken by central differences; R is the Euler-Lagrange residual,
    which vanishes for solutions, so the relation holds for any profile.
    """
    hp = hamiltonian(spec, combine(u, v, fd_step))
    hm = hamiltonian(spec, combine(u, v, -fd_step))
    dh = (hp - hm) / (2 * fd_step)
    om = presymplectic(spec, u, Derivative(u), v)
    res = float(el_residual(spec, u, x=[0.0])[0] @ _at0(v)[0])
    rhs = om + res
    scale = max(abs(dh), abs(rhs))
    gap = abs(dh + rhs) / scale if scale > 0 else 0.0
    return {"minus_DH_v": -dh, "omega": om, "residual_term": res, "gap": gap, "fd_step": fd_step}


def charge_constancy(spec, u, xi, shifts, strict=True):
    """max over tau of |C(tau) - C(0)| / max(1, |C(0)|)."""
    if spec.x_dependent and xi.rate != 0.0:
        raise ConfigError("translation is not a symmetry of an x-dependent Lagrangian")
    _require_solution(spec, u, strict)
    c0 = noether_charge(spec, u, xi, 0.0, strict=False)
    dev = max(abs(noether_charge(spec, u, xi, t, strict=False) - c0) for t in shifts)
    return dev / max(1.0, abs(c0)), c0


def greens_formula_check(spec, u, xi, a, b):
    """int_a^b [n . K*(DS u_xi) - DS^T K*n . u_xi] dx against B_xi(phi_b u) - B_xi(phi_a u),
    with n = grad_n L = S(u)/2.  Holds for any smooth u, solution or not."""
    x, w = gauss_panels(a, b, min(0.25, 0.5 * u.resolution()), 16)
    U, V = u.eval(x), u.eval(x, 1)
    n = 0.5 * spec.S(U)
    g = _DS_xi(spec, u, xi)
    Kg = quad.convolve_at(spec.kernel, g, x)
    Kn = 0.5 * quad.convolve_at(spec.kernel, u, x, transform=spec.S)
    uxi = xi.act(U, V)
    integrand = np.einsum("ni,ni->n", n, Kg) - np.einsum("nji,nj,ni->n", spec.DS(U), Kn, uxi)
    lhs = float(np.sum(w * integrand))
    rhs = boundary_term(spec, quad.shift(u, b), xi) - boundary_term(spec, quad.shift(u, a), xi)
    scale = max(abs(lhs), abs(rhs), GAP_FLOOR)
    return lhs, rhs, abs(lhs - rhs) / scale


# ------------------------------------------------------------------ families


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1, 1.0, 0.0)
    mid = (s > 0) & (s < 1)
    sm = s[mid]
    a = np.exp(-1.0 / sm)
    b = np.exp(-1.0 / (1.0 - sm))
    out[mid] = a / (a + b)
    return out


def _smooth_step_deriv(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 0) & (s < 1)
    sm = s[mid]
    a = np.exp(-1.0 / sm)
    b = np.exp(-1.0 / (1.0 - sm))
    out[mid] = (a / sm ** 2 * b + a * b / (1 - sm) ** 2) / (a + b) ** 2
    return out


def cutoff(t):
    """chi_1: 1 on |t| <= 1, 0 on |t| >= 2, smooth in between."""
    return _smooth_step(2.0 - np.abs(t))


def cutoff_deriv(t):
    return -np.sign(t) * _smooth_step_deriv(2.0 - np.abs(t))


def _poly(coefs):
    return np.polynomial.Polynomial(np.asarray(coefs, dtype=float))


def _diag(vals):
    """(M, d) -> (M, d, d) diagonal."""
    return vals[:, :, None] * np.eye(vals.shape[1])


def allen_cahn(kernel, F_coefs, c=0.0):
    """E = -1/2 u.kappa0 u - F(u), S = id; F(u) = sum_i poly(u_i).

    With c != 0 the dissipative version (Gamma = id) is returned.
    """
    d = kernel.dim
    k0 = kern.moment(kernel, 0)
    F = _poly(F_coefs)
    dF, d2F = F.deriv(1), F.deriv(2)

    def E(x, u, v):
        return -0.5 * np.einsum("ni,ij,nj->n", u, k0, u) - F(u).sum(axis=1)

    def E_u(x, u, v):
        return -u @ k0 - dF(u)

    def E_uu(x, u, v):
        return -k0[None] - _diag(d2F(u))

    spec = LagrangianSpec(kernel, d, E, E_u, lambda x, u, v: np.zeros_like(v), lambda u: u,
                          lambda u: np.broadcast_to(np.eye(d), (u.shape[0], d, d)).copy(),
                          E_uu=E_uu, D2S=lambda u: np.zeros((u.shape[0], d, d, d)),
                          gamma=(lambda u: np.broadcast_to(np.eye(d), (u.shape[0], d, d)).copy()) if c else None,
                          c=c, family="allen-cahn", params={"F_coefs": list(map(float, F_coefs)), "c": c})
    spec.F = F
    return spec


def pinning(kernel, a, d_coupling):
    """0 = d(-u + K*u) + u(1-u)(u-a): E = -d/2 u^2 + F_a(u), S = sqrt(d) u."""
    fa = _poly([0.0, -a, 1 + a, -1.0])  # u(1-u)(u-a)
    Fa = fa.integ()
    sd = np.sqrt(d_coupling)
    spec = LagrangianSpec(kernel, 1,
                          lambda x, u, v: -0.5 * d_coupling * u[:, 0] ** 2 + Fa(u[:, 0]),
                          lambda x, u, v: -d_coupling * u + fa(u),
                          lambda x, u, v: np.zeros_like(v),
                          lambda u: sd * u, lambda u: np.full((u.shape[0], 1, 1), sd),
                          E_uu=lambda x, u, v: (-d_coupling + fa.deriv()(u))[:, :, None],
                          D2S=lambda u: np.zeros((u.shape[0], 1, 1, 1)),
                          family="pinning", params={"a": a, "d": d_coupling})
    spec.F_a = Fa
    return spec


def whitham(kernel, alpha, c):
    """E = F_c(u) = -c u^2/2 + alpha u^3/3, S = id."""
    F = _poly([0.0, 0.0, -0.5 * c, alpha / 3.0])
    dF, d2F = F.deriv(1), F.deriv(2)
    spec = LagrangianSpec(kernel, 1,
                          lambda x, u, v: F(u[:, 0]),
                          lambda x, u, v: dF(u),
                          lambda x, u, v: np.zeros_like(v),
                          lambda u: u, lambda u: np.ones((u.shape[0], 1, 1)),
                          E_uu=lambda x, u, v: d2F(u)[:, :, None],
                          D2S=lambda u: np.zeros((u.shape[0], 1, 1, 1)),
                          family="whitham", params={"alpha": alpha, "c": c})
    spec.F = F
    spec.c_star = float(kern.moment(kernel, 0)[0, 0])
    return spec


class NFENonlinearity:
    """s(u) = chi(u/eps) S(u) + sgn eps (1 - chi(u/eps)) u, S(u) = u(mu + 1/kappa0 - alpha u^2).

    sgn = -1 reproduces the literal cutoff; sgn = sign(S'(0)) keeps s' of one
    sign across the cutoff region.
    """

    def __init__(self, kappa0, alpha, mu, eps, sgn):
        self.k0, self.alpha, self.mu, self.eps, self.sgn = kappa0, alpha, mu, eps, sgn
        self.lin = mu + 1.0 / kappa0

    def S(self, u):
        return u * (self.lin - self.alpha * u ** 2)

    def dS(self, u):
        return self.lin - 3 * self.alpha * u ** 2

    def __call__(self, u):
        chi = cutoff(u / self.eps)
        return chi * self.S(u) + self.sgn * self.eps * (1 - chi) * u

    def deriv(self, u):
        chi = cutoff(u / self.eps)
        dchi = cutoff_deriv(u / self.eps) / self.eps
        return chi * self.dS(u) + dchi * self.S(u) + self.sgn * self.eps * ((1 - chi) - dchi * u)

    def deriv2(self, u, h=1e-5):
        return (self.deriv(u + h) - self.deriv(u - h)) / (2 * h)

    def energy(self, u):
        """int_0^u s'(r) r dr by Gauss-Legendre on [0, u]."""
        t, w = np.polynomial.legendre.leggauss(24)
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for k in range(4):  # four panels
            lo, hi = k / 4, (k + 1) / 4
            r = u[..., None] * (0.5 * (hi - lo) * t + 0.5 * (hi + lo))
            out += u * 0.5 * (hi - lo) * np.sum(w * self.deriv(r) * r, axis=-1)
        return out


def nfe(kernel, alpha, mu, c, eps=0.8, orientation="auto"):
    """Neural-field traveling waves -c u' = -u + K*s(u), in dissipative form.

    orientation "literal": E = -int s' r, kernel K, Gamma = -s'.
    orientation "auto": the equation is multiplied by o = -sign(s'(0)) so that
    Gamma = o (-s') is positive: E = -o int s' r, kernel o K.
    """
    k0 = float(kern.moment(kernel, 0)[0, 0])
    if k0 == 0:
        raise ConfigError("nfe needs kappa0 != 0")
    lin = mu + 1.0 / k0
    if orientation == "literal":
        o, sgn = 1.0, -1.0
    elif orientation == "auto":
        o, sgn = -float(np.sign(lin)), float(np.sign(lin))
    else:
        raise ConfigError(f"unknown orientation {orientation!r}")
    s = NFENonlinearity(k0, alpha, mu, eps, sgn)
    Keff = kern.scaled(kernel, o)
    spec = LagrangianSpec(Keff, 1,
                          lambda x, u, v: -o * s.energy(u[:, 0]),
                          lambda x, u, v: -o * s.deriv(u) * u,
                          lambda x, u, v: np.zeros_like(v),
                          lambda u: s(u), lambda u: s.deriv(u)[:, :, None],
                          E_uu=lambda x, u, v: (-o * (s.deriv2(u) * u + s.deriv(u)))[:, :, None],
                          D2S=lambda u: s.deriv2(u)[:, :, None, None],
                          gamma=lambda u: (-o * s.deriv(u))[:, :, None], c=c, family="nfe",
                          params={"alpha": alpha, "mu": mu, "c": c, "eps": eps, "orientation": orientation})
    spec.s = s
    spec.orientation_sign = o
    spec.kappa0 = k0
    return spec


def nls(kernel, f_coefs, c, ell, lam=None):
    """A'' + (lambda(x) - c^2/4) A + Ds^T k*s = 0 with s(A) = f(|A|^2)(1, 1).

    E = -|v|^2/2 + (lambda(x) - c^2/4)|u|^2/2; lambda is a smooth step from
    0 (x <= -ell) to 1 (x >= ell), or the constant `lam` when given.
    """
    if kernel.dim != 2:
        raise ConfigError("nls needs a 2x2 kernel")
    f = _poly(f_coefs)
    df, d2f = f.deriv(1), f.deriv(2)
    one = np.ones(2)

    def lam_of(x):
        if lam is not None:
            return np.full(np.shape(x), float(lam))
        return _smooth_step((np.asarray(x) + ell) / (2 * ell))

    def pot(x):
        return lam_of(x) - c * c / 4

    def S(u):
        return f((u ** 2).sum(axis=1))[:, None] * one

    def DS(u):
        rho = (u ** 2).sum(axis=1)
        return one[None, :, None] * (2 * df(rho))[:, None, None] * u[:, None, :]

    def D2S(u):
        rho = (u ** 2).sum(axis=1)
        inner = 4 * d2f(rho)[:, None, None] * u[:, :, None] * u[:, None, :] + 2 * df(rho)[:, None, None] * np.eye(2)
        return one[None, :, None, None] * inner[:, None, :, :]

    spec = LagrangianSpec(kernel, 2,
                          lambda x, u, v: -0.5 * (v ** 2).sum(axis=1) + 0.5 * pot(x) * (u ** 2).sum(axis=1),
                          lambda x, u, v: pot(x)[:, None] * u,
                          lambda x, u, v: -v,
                          S, DS,
                          E_vv=lambda x, u, v: -np.broadcast_to(np.eye(2), (u.shape[0], 2, 2)).copy(),
                          E_uu=lambda x, u, v: pot(x)[:, None, None] * np.eye(2),
                          D2S=D2S, has_gradient_term=True, x_dependent=lam is None, family="nls",
                          params={"f_coefs": list(map(float, f_coefs)), "c": c, "ell": ell, "lam": lam})
    spec.f = f
    spec.lam = lam_of
    return spec


def spec_from_config(block, kernel):
    """Build a spec from {family, params} (see the README for the keys)."""
    fam = block.get("family")
    p = dict(block.get("params", {}))
    try:
        if fam == "allen-cahn":
            return allen_cahn(kernel, p["F_coefs"], p.get("c", 0.0))
        if fam == "whitham":
            return whitham(kernel, p["alpha"], p["c"])
        if fam == "nfe":
            return nfe(kernel, p["alpha"], p["mu"], p["c"], p.get("eps", 0.8), p.get("orientation", "auto"))
        if fam == "nls":
            return nls(kernel, p["f_coefs"], p["c"], p["ell"], p.get("lam"))
        if fam == "pinning":
            return pinning(kernel, p["a"], p["d"])
    except KeyError as exc:
        raise ConfigError(f"missing parameter {exc} for family {fam!r}") from None
    raise ConfigError(f"unknown spec family {fam!r}")
