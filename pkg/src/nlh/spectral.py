"""Linearization at u = 0: symbols, characteristic roots, center bases, pairings."""
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial

import numpy as np
from scipy import optimize

from . import kernels as kern
from . import quad
from . import variational as var
from .errors import ConfigError, HypC4Violated, RootClusterUnresolved, ZeroNotEquilibrium

C1_TOL = 1e-10
ORDER_TOL = 1e-6
MAX_ORDER = 8
# smallest singular value of Sigma_p, relative, treated as a zero (a bounded 1-D minimizer
# resolves a simple crossing to roughly 1e-8 relative)
SINGULAR_TOL = 1e-7


class SymbolSpec:
    """Sigma_p(nu) and Sigma(nu) = Sigma_p(nu) + DS(0)^T K^(nu) DS(0) for one spec."""

    def __init__(self, spec):
        self.spec = spec
        d = spec.dim
        x0, z = np.zeros(1), np.zeros((1, d))
        resid = spec.E_u(x0, z, z)[0] + spec.DS(z)[0].T @ (kern.moment(spec.kernel, 0) @ spec.S(z)[0])
        if np.max(np.abs(resid)) > C1_TOL:
            raise ZeroNotEquilibrium(f"u = 0 is not an equilibrium (residual {np.max(np.abs(resid)):.3e})")
        if spec.E_uu is None:
            raise ConfigError("the symbol needs E_uu")
        self.dim = d
        self.H = spec.E_vv(x0, z, z)[0]
        M = spec.E_uv(x0, z, z)[0]
        self.skew = M - M.T
        self.gamma0 = spec.gamma(z)[0] if spec.dissipative else np.zeros((d, d))
        self.c = spec.c if spec.dissipative else 0.0
        self.B0 = spec.DS(z)[0]
        curv = np.zeros((d, d))
        if spec.D2S is not None:
            weight = kern.moment(spec.kernel, 0) @ spec.S(z)[0]
            curv = np.einsum("i,ijk->jk", weight, spec.D2S(z)[0])
        self.A0 = spec.E_uu(x0, z, z)[0] + curv
        self.eta0 = spec.kernel.eta0

    def principal(self, nu):
        nu = complex(nu)
        return -self.H * nu ** 2 - self.skew * nu - self.c * self.gamma0 * nu + self.A0

    def __call__(self, nu):
        nu = complex(nu)
        khat = kern.symbol_hat(self.spec.kernel, nu)
        return self.principal(nu) + self.B0.T @ khat @ self.B0

    def det(self, nu):
        return np.linalg.det(self(nu))

    def derivative(self, nu, n, radius=None, points=64):
        """n-th nu-derivative by the Cauchy integral on a circle inside the strip."""
        if n == 0:
            return self(nu)
        nu = complex(nu)
        if radius is None:
            room = self.eta0 - abs(nu.real)
            radius = min(0.5, 0.5 * room) if np.isfinite(room) else 0.5
        theta = 2 * np.pi * np.arange(points) / points
        acc = np.zeros((self.dim, self.dim), dtype=complex)
        for t in theta:
            acc += self(nu + radius * np.exp(1j * t)) * np.exp(-1j * n * t)
        return factorial(n) * acc / (points * radius ** n)


def build_symbol(spec):
    return SymbolSpec(spec)


def grid_symbol(spec, ell, period=None, n=64, eps=1e-6):
    """Sigma(i ell) read off the periodic linearization of el_residual at 0.

    The residual is applied to +/- eps cos(ell x) e_k on a grid of one period
    and projected on cos and sin; returns a d x d complex matrix.
    """
    d = spec.dim
    period = period or (2 * np.pi / ell)
    x = quad.periodic_grid(period, n)
    out = np.zeros((d, d), dtype=complex)
    for k in range(d):
        base = np.zeros((n, d))
        base[:, k] = np.cos(ell * x)
        rp = var.el_residual(spec, quad.GridProfile(x, eps * base, "periodic", period=period))
        rm = var.el_residual(spec, quad.GridProfile(x, -eps * base, "periodic", period=period))
        lin = (rp - rm) / (2 * eps)
        a = 2 * np.mean(lin * np.cos(ell * x)[:, None], axis=0)
        b = 2 * np.mean(lin * np.sin(ell * x)[:, None], axis=0)
        out[:, k] = a - 1j * b
    return out


# -------------------------------------------------------------------- roots


@dataclass
class Root:
    ell: float
    vectors: list
    orders: list

    @property
    def multiplicity(self):
        """Dimension contributed to the center space (+/- i ell counted together)."""
        total = sum(self.orders)
        return total if self.ell == 0 else 2 * total


@dataclass
class RootSet:
    roots: list = field(default_factory=list)

    @property
    def count(self):
        return sum(r.multiplicity for r in self.roots)

    def as_list(self):
        return [{"ell": r.ell, "order": int(o), "kernel_vector": [float(c) for c in np.real(e)]}
                for r in self.roots for e, o in zip(r.vectors, r.orders)]


def _det_real(sym, ell):
    dv = sym.det(1j * ell)
    return dv.real


def _kernel_vectors(mat, scale):
    u_, s, vh = np.linalg.svd(mat)
    vecs = []
    for sv, row in zip(s, vh):
        if sv <= 1e-6 * scale:
            v = np.conj(row)
            # real representative (symbols of even kernels are real on the axis)
            v = np.real(v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))])))
            vecs.append(v / np.linalg.norm(v))
    return vecs


def _order(sym, nu, e, scale):
    for m in range(1, MAX_ORDER + 1):
        val = np.linalg.norm(sym.derivative(nu, m) @ e)
        if val > ORDER_TOL * scale:
            return m
    raise HypC4Violated(f"no nonvanishing derivative up to order {MAX_ORDER} at nu = {nu}")


def char_roots(sym, l_max, dl=None):
    """Roots i*ell of det Sigma on 0 <= ell <= l_max, with kernel vectors and orders."""
    if l_max <= 0:
        raise ConfigError("l_max must be positive")
    dl = dl or min(0.01, l_max / 100)
    grid = np.linspace(0.0, l_max, int(np.ceil(l_max / dl)) + 1)
    vals = np.array([sym.det(1j * g) for g in grid])
    scale = max(1.0, float(np.max(np.abs(vals))))
    mags = np.abs(vals)
    re = vals.real
    found = []
    # sign changes of the real part
    for i in range(len(grid) - 1):
        if re[i] == 0.0:
            found.append(grid[i])
        elif re[i] * re[i + 1] < 0:
            r = optimize.brentq(lambda t: _det_real(sym, t), grid[i], grid[i + 1], xtol=1e-14, rtol=1e-14)
            if abs(sym.det(1j * r)) < 1e-8 * scale:
                found.append(r)
    # local minima of the modulus (even-order tangencies, ell = 0)
    for i in range(len(grid)):
        lo, hi = max(i - 1, 0), min(i + 1, len(grid) - 1)
        if re[lo] * re[hi] < 0 or (i > 0 and re[i] == 0.0):
            continue  # simple root, handled above
        if mags[i] <= mags[lo] and mags[i] <= mags[hi] and mags[i] < 1e-3 * scale:
            a, b = grid[lo], grid[hi]
            if i == 0:
                r = 0.0
            else:
                res = optimize.minimize_scalar(lambda t: abs(sym.det(1j * t)), bounds=(a, b), method="bounded",
                                               options={"xatol": 1e-13})
                r = float(res.x)
                # polish on the derivative of det, which has a simple zero at a double root
                dd = lambda t: _det_real(sym, t + 1e-6) - _det_real(sym, t - 1e-6)  # noqa: E731
                if dd(a) * dd(b) < 0:
                    r = optimize.brentq(dd, a, b, xtol=1e-14)
            if abs(sym.det(1j * r)) < 1e-8 * scale:
                found.append(r)
    found = sorted(found)
    merged = []
    for r in found:
        if merged and abs(r - merged[-1]) < 1e-7:
            continue
        if merged and abs(r - merged[-1]) < dl:
            raise RootClusterUnresolved(f"roots {merged[-1]} and {r} closer than scan resolution {dl}")
        merged.append(r)
    roots = []
    for r in merged:
        nu = 1j * r
        mat = sym(nu)
        mscale = max(1.0, float(np.max(np.abs(mat))), float(np.max(np.abs(sym.derivative(nu, 1)))))
        vecs = _kernel_vectors(mat, mscale)
        if not vecs:
            continue
        orders = [_order(sym, nu, e, mscale) for e in vecs]
        if r == 0.0 and any(o % 2 for o in orders):
            raise HypC4Violated("odd order at nu = 0 contradicts the kernel symmetry")
        roots.append(Root(float(r), vecs, orders))
    return RootSet(roots)


def check_ellipticity(sym, l_max=1e4, samples=400):
    """sup over a log grid of |l|^R ||Sigma_p(i l)^{-1}|| (R = 2 with a gradient term,
    1 with dissipation, 0 otherwise).

    Local minima of the smallest singular value are refined, so a zero of
    det Sigma_p between grid points is reported with its location.
    """
    spec = sym.spec
    power = 2 if spec.has_gradient_term else (1 if spec.dissipative else 0)
    lam = np.concatenate([[0.0], np.logspace(-3, np.log10(l_max), samples)])

    def svals(l):
        return np.linalg.svd(sym.principal(1j * l), compute_uv=False)

    sv = np.array([svals(l) for l in lam])
    smin, smax = sv[:, -1], sv[:, 0]
    for i in range(len(lam)):
        lo, hi = max(i - 1, 0), min(i + 1, len(lam) - 1)
        if smin[i] > smin[lo] or smin[i] > smin[hi]:
            continue
        l_star, s_star = lam[i], smin[i]
        strict = smin[i] < smin[lo] or smin[i] < smin[hi]
        if strict and s_star >= SINGULAR_TOL * max(1.0, smax[i]):
            res = optimize.minimize_scalar(lambda t: svals(t)[-1], bounds=(lam[lo], lam[hi]), method="bounded",
                                           options={"xatol": 1e-14})
            if res.fun < s_star:
                l_star, s_star = float(res.x), float(res.fun)
        if s_star < SINGULAR_TOL * max(1.0, smax[i]):
            return {"passed": False, "witness": float(l_star), "sup": float("inf"), "power": power}
    vals = np.where(lam > 0, lam ** power / smin, 0.0)
    k = int(np.argmax(vals))
    return {"passed": bool(np.isfinite(vals[k])), "sup": float(vals[k]), "at": float(lam[k]), "power": power}


def nonresonance(ells, n_max=20, tol=1e-9):
    """Smallest nonzero integer vector n with |ell . n| < tol, |n|_inf <= n_max."""
    ells = np.asarray([e for e in ells if e != 0], dtype=float)
    if ells.size < 2:
        return {"passed": True, "violation": None}
    rng = np.arange(-n_max, n_max + 1)
    grids = np.meshgrid(*([rng] * ells.size), indexing="ij")
    vecs = np.stack([g.ravel() for g in grids], axis=1)
    vecs = vecs[np.any(vecs != 0, axis=1)]
    vals = np.abs(vecs @ ells)
    bad = np.nonzero(vals < tol)[0]
    if bad.size == 0:
        return {"passed": True, "violation": None}
    best = vecs[bad[np.argmin(np.abs(vecs[bad]).sum(axis=1))]]
    if best[np.nonzero(best)[0][0]] < 0:
        best = -best
    return {"passed": False, "violation": [int(v) for v in best]}


# ----------------------------------------------------------- C_{p,q} moment formula


def cpq(p, q):
    """C_{p,q} as an exact Fraction."""
    total = Fraction(0)
    for m in range(p + 1):
        for n in range(q + 1):
            if (m + n) % 2:
                continue
            sigma = -1 if m % 2 == 0 else 1
            total += Fraction(comb(p, m) * comb(q, n) * sigma, m + n + 1)
    return Fraction((-1) ** q, 2 ** (p + q)) * total


def khat_derivative_at0(kernel, m):
    """K^^(m)(0) = (-1)^m kappa_m."""
    return (-1) ** m * kern.moment(kernel, m)


def moment_identity(p, q, kernel, tol=quad.QUAD_TOL):
    """(closed, brute) for the integral over Q of (x^p y^q - x^q y^p) K(x - y)."""
    m = p + q + 1
    closed = float(cpq(p, q)) * float(khat_derivative_at0(kernel, m)[0, 0])
    e = np.eye(kernel.dim)[0]
    a, b = quad.monomial(p, kernel.dim, e), quad.monomial(q, kernel.dim, e)
    f = quad.SeparableQ([(1.0, a, b), (-1.0, b, a)], kernel, antisymmetric=True)
    brute = quad.integrate_Q(f, kernel, tol) if p != q else 0.0
    return closed, brute


# ------------------------------------------------------------- center basis


@dataclass(frozen=True)
class BasisVector:
    """x^power (cos(ell x) + sign sin(ell x)) e."""

    root: int
    k: int
    power: int
    sign: int
    ell: float
    e: tuple
    order: int
    conjugate: bool

    def profile(self):
        return quad.trig_profile(self.ell, self.power, 1.0, float(self.sign) if self.ell else 0.0,
                                 np.asarray(self.e))

    def label(self):
        star = "*" if self.conjugate else ""
        return f"psi{star}[{self.root},{self.k},{self.power}]"


@dataclass
class CenterBasis:
    vectors: list

    def __len__(self):
        return len(self.vectors)


def center_basis(roots):
    """Pairs (psi, psi*) per root and kernel vector.

    At ell = 0 the vectors x^l e (l < n) already pair among themselves, so the
    basis has n elements.  For ell > 0 the partners use cos - sin for every
    order, which keeps the 2n vectors of the pair +/- i ell independent.
    """
    out = []
    for j, r in enumerate(roots.roots):
        for k, (e, n) in enumerate(zip(r.vectors, r.orders)):
            e = tuple(float(c) for c in e)
            if r.ell == 0:
                if n % 2:
                    raise HypC4Violated("odd order at nu = 0")
                out += [BasisVector(j, k, l, 1, 0.0, e, n, l >= n // 2) for l in range(n)]
            else:
                out += [BasisVector(j, k, l, 1, r.ell, e, n, False) for l in range(n)]
                out += [BasisVector(j, k, n - l - 1, -1, r.ell, e, n, True) for l in range(n)]
    return CenterBasis(out)


def _closed_entry(sym, a, b):
    """omega_0(a, b) from C_{p,q} and Sigma derivatives, or nan when the moment formula does not apply."""
    if a.root != b.root:
        return 0.0
    p, q = a.power, b.power
    ea, eb = np.asarray(a.e), np.asarray(b.e)
    m = p + q + 1
    nu = 1j * a.ell
    if a.ell == 0:
        if (p + q) % 2 == 0:
            return 0.0
        return float(cpq(p, q)) * float(np.real(ea @ sym.derivative(0.0, m) @ eb))
    if a.sign == b.sign:
        if (p + q) % 2 == 0:
            return 0.0 if p == q else np.nan
        # g(r) = cos(ell r), h odd
        val = ea @ sym.derivative(nu, m) @ eb
        return float(cpq(p, q)) * float(np.real(val))
    if (p + q) % 2:
        return np.nan
    # g(r) = sign_a sin(ell r) with sign from (cos + s_a sin)(x)(cos + s_b sin)(y)
    val = -1j * (ea @ sym.derivative(nu, m) @ eb)
    return float(cpq(p, q)) * float(np.real(val)) * a.sign


def symplectic_pairing(basis, sym, tol=quad.QUAD_TOL):
    """Gram matrices of omega_0 on the basis: (closed form, quadrature)."""
    spec = sym.spec
    n = len(basis)
    zero = quad.polynomial_profile([0.0], spec.dim)
    closed = np.zeros((n, n))
    brute = np.zeros((n, n))
    profs = [b.profile() for b in basis.vectors]
    for i in range(n):
        for j in range(i + 1, n):
            closed[i, j] = _closed_entry(sym, basis.vectors[i], basis.vectors[j])
            closed[j, i] = -closed[i, j]
            brute[i, j] = var.presymplectic(spec, zero, profs[i], profs[j], tol)
            brute[j, i] = -brute[i, j]
    return closed, brute


def pairing_report(basis, sym, tol=quad.QUAD_TOL):
    closed, brute = symplectic_pairing(basis, sym, tol)
    known = np.isfinite(closed)
    scale = max(1e-300, float(np.max(np.abs(brute))))
    gaps = []
    for c, b in zip(closed[known], brute[known]):
        gaps.append(abs(c - b) / abs(c) if abs(c) > 1e-10 * scale else abs(b) / scale)
    return {
        "labels": [v.label() for v in basis.vectors],
        "closed": closed.tolist(),
        "quadrature": brute.tolist(),
        "max_rel_gap": float(max(gaps, default=0.0)),
        "det": float(np.linalg.det(brute)) if len(basis) else 1.0,
        "closed_form_complete": bool(known.all()),
    }
