"""Profiles, convolutions, shifts and integration over the quadrant Q.

Q = (-inf, 0) x (0, inf).  Integrands that contain a kernel factor
K(x - y) only see the strip |x - y| < R, so every Q-integral here is an
integral over a bounded triangle.
"""
import json
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.special import erfc

from . import kernels as kern
from ._rules import gauss_panels, gregory_weights
from .errors import ConfigError, ShiftOutOfMargin

QUAD_TOL = 1e-14
PANEL_ORDER = 16
SHIFT_MARGIN = 0.1


# ------------------------------------------------------------------ profiles


class Profile:
    """Base class: a function R -> R^d that can be evaluated anywhere."""

    topology = "abstract"
    growth = 0  # polynomial growth degree, used to widen truncation radii

    def eval(self, x, order=0):
        raise NotImplementedError

    def resolution(self):
        """Length scale below which the profile is not resolved."""
        return np.inf


class GridProfile(Profile):
    """Uniform-grid profile, periodic or on a truncated line.

    values has shape (N, d).  Line profiles carry far-field constants that
    are used beyond the grid; periodic profiles are trigonometric
    interpolants of their samples.
    """

    def __init__(self, x, values, topology, period=None, far_left=None, far_right=None,
                 decay=None, margin=SHIFT_MARGIN):
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != x.size:
            raise ConfigError("grid and values disagree in length")
        self.x = x
        self.values = values
        self.dim = values.shape[1]
        self.h = float(x[1] - x[0])
        self.topology = topology
        self.margin = margin
        if topology == "periodic":
            self.period = float(period if period is not None else self.h * x.size)
            self._coef = np.fft.rfft(values, axis=0) / x.size
            self.far_left = self.far_right = None
        elif topology == "line":
            self.period = None
            self.far_left = np.asarray(values[0] if far_left is None else far_left, dtype=float).reshape(self.dim)
            self.far_right = np.asarray(values[-1] if far_right is None else far_right, dtype=float).reshape(self.dim)
            self.decay = decay
            self._spline = make_interp_spline(x, values, k=5, axis=0)
        else:
            raise ConfigError(f"unknown topology {topology!r}")

    @property
    def n(self):
        return self.x.size

    def resolution(self):
        return 8 * self.h

    def _trig(self, x, order):
        N = self.n
        T = self.period
        k = np.arange(self._coef.shape[0])
        omega = 2 * np.pi / T
        c = self._coef * ((1j * omega * k) ** order)[:, None]
        wts = np.full(k.size, 2.0)
        wts[0] = 1.0
        if N % 2 == 0:
            wts[-1] = 1.0
            if order % 2:
                c[-1] = 0.0  # Nyquist mode has no odd derivative
        phase = np.exp(1j * omega * np.outer(np.asarray(x, dtype=float) - self.x[0], k))
        return np.real(phase @ (wts[:, None] * c))

    def eval(self, x, order=0):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.topology == "periodic":
            out = np.empty((x.size, self.dim))
            for start in range(0, x.size, 4096):
                out[start:start + 4096] = self._trig(x[start:start + 4096], order)
            return out
        out = np.empty((x.size, self.dim))
        inside = (x >= self.x[0]) & (x <= self.x[-1])
        out[inside] = self._spline(x[inside], nu=order)
        left, right = x < self.x[0], x > self.x[-1]
        out[left] = self.far_left if order == 0 else 0.0
        out[right] = self.far_right if order == 0 else 0.0
        return out

    def nodal_derivative(self, order=1):
        """Derivative values at the grid nodes."""
        if self.topology == "periodic":
            N = self.n
            k = np.fft.rfftfreq(N, d=self.period / (2 * np.pi * N))
            mult = (1j * k) ** order
            if N % 2 == 0 and order % 2:
                mult[-1] = 0.0
            return np.fft.irfft(np.fft.rfft(self.values, axis=0) * mult[:, None], n=N, axis=0)
        return self._spline(self.x, nu=order)

    def with_values(self, values):
        return GridProfile(self.x, values, self.topology, self.period, self.far_left, self.far_right,
                           getattr(self, "decay", None), self.margin)

    def metadata(self):
        meta = {"topology": self.topology, "N": int(self.n), "h": self.h, "x0": float(self.x[0]), "d": self.dim}
        if self.topology == "periodic":
            meta["period"] = self.period
        else:
            meta["far_left"] = self.far_left.tolist()
            meta["far_right"] = self.far_right.tolist()
        return meta


def periodic_grid(period, n):
    """Nodes x_j = j T / N, j = 0..N-1."""
    return np.arange(n) * (period / n)


def line_grid(left, right, h):
    n = int(round((right - left) / h)) + 1
    return np.linspace(left, right, n)


class FunctionProfile(Profile):
    """Profile given by callables.  Missing derivatives use finite differences."""

    topology = "function"

    def __init__(self, fn, derivs=(), dim=1, growth=0, scale=np.inf, far_left=None, far_right=None):
        self.fn = fn
        self.derivs = tuple(derivs)
        self.dim = dim
        self.growth = growth
        self.scale = scale
        self.far_left = far_left
        self.far_right = far_right

    def resolution(self):
        return self.scale

    def _call(self, f, x):
        out = np.asarray(f(x), dtype=float)
        return out.reshape(x.size, self.dim)

    def eval(self, x, order=0):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if order == 0:
            return self._call(self.fn, x)
        if order <= len(self.derivs):
            return self._call(self.derivs[order - 1], x)
        # eighth-order central differences of the highest known derivative
        base = order - 1
        h = 1e-3
        c = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
        acc = np.zeros((x.size, self.dim))
        for j, cj in enumerate(c):
            if cj:
                acc += cj * self.eval(x + (j - 4) * h, base)
        return acc / h


def monomial(p, dim=1, vector=None):
    """x^p times a fixed vector (default: ones)."""
    vec = np.ones(dim) if vector is None else np.asarray(vector, dtype=float)
    coef = np.zeros(p + 1)
    coef[p] = 1.0
    poly = np.polynomial.Polynomial(coef)
    derivs = [poly.deriv(m) for m in (1, 2)]
    return FunctionProfile(lambda x: poly(x)[:, None] * vec, [lambda x, q=q: q(x)[:, None] * vec for q in derivs],
                           dim=vec.size, growth=p)


def polynomial_profile(coefs, dim=1):
    """sum_k coefs[k] x^k (scalar components equal)."""
    poly = np.polynomial.Polynomial(np.asarray(coefs, dtype=float))
    derivs = [poly.deriv(m) for m in (1, 2)]
    return FunctionProfile(lambda x: np.repeat(poly(x)[:, None], dim, axis=1),
                           [lambda x, q=q: np.repeat(q(x)[:, None], dim, axis=1) for q in derivs],
                           dim=dim, growth=len(coefs) - 1)


def trig_profile(ell, poly_power=0, cos_coef=1.0, sin_coef=1.0, vector=None):
    """x^l (a cos(ell x) + b sin(ell x)) e, with analytic derivatives."""
    vec = np.atleast_1d(np.ones(1) if vector is None else np.asarray(vector, dtype=float))
    l = poly_power

    def raw(x, m):
        # derivatives by Leibniz: d^m [x^l g(x)] with g = a cos + b sin
        total = np.zeros_like(x, dtype=float)
        for j in range(m + 1):
            if j > l:
                break
            pw = np.prod(np.arange(l - j + 1, l + 1)) if j else 1.0
            xp = pw * x ** (l - j)
            k = m - j
            # k-th derivative of a cos + b sin
            phase = k * np.pi / 2
            g = ell ** k * (cos_coef * np.cos(ell * x + phase) + sin_coef * np.sin(ell * x + phase))
            total += _binom(m, j) * xp * g
        return total[:, None] * vec

    return FunctionProfile(lambda x: raw(x, 0), [lambda x: raw(x, 1), lambda x: raw(x, 2)],
                           dim=vec.size, growth=l, scale=np.pi / max(ell, 1e-300) / 2 if ell else np.inf)


def _binom(n, k):
    from math import comb
    return comb(n, k)


# -------------------------------------------------------------- Q integrands


class QIntegrand:
    """Pointwise integrand sigma(x, y) on Q (vectorized in x, y)."""

    def __init__(self, fn, antisymmetric=False, growth=0):
        self.fn = fn
        self.antisymmetric = antisymmetric
        self.growth = growth

    def __call__(self, x, y):
        return self.fn(x, y)


class SeparableQ(QIntegrand):
    """sum_t c_t a_t(x) . K(x - y) b_t(y), with a_t, b_t profiles."""

    def __init__(self, terms, kernel, antisymmetric=False):
        self.terms = [(float(c), a, b) for c, a, b in terms]
        self.kernel = kernel
        growth = max((_growth(a) + _growth(b) for _, a, b in self.terms), default=0)
        super().__init__(self._pointwise, antisymmetric, growth)

    def _pointwise(self, x, y):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        out = np.zeros(x.size)
        for c, a, b in self.terms:
            out += c * np.einsum("ni,ni->n", _ev(a, x), self.kernel.apply(x - y, _ev(b, y)))
        return out

    def resolution(self):
        res = [getattr(p, "resolution", lambda: np.inf)() for _, a, b in self.terms for p in (a, b)
               if isinstance(p, Profile)]
        return min(res, default=np.inf)


def _growth(p):
    return getattr(p, "growth", 0)


def _ev(p, x):
    if isinstance(p, Profile):
        return p.eval(x)
    return np.asarray(p(x), dtype=float).reshape(x.size, -1)


def _panel_width(kernel, resolution=np.inf):
    return min(kernel.scale / 2, resolution)


def q_radius(kernel, tol=QUAD_TOL, growth=0):
    return kern.truncation_radius(kernel, tol, power=1 + growth)


def integrate_Q(f, kernel, tol=QUAD_TOL, method="auto"):
    """Integral of f over Q, truncated where the kernel factor is below tol.

    Separable integrands use a tensor-product rule on [-R, 0] x [0, R];
    general integrands use the diagonal coordinates x = (r+s)/2,
    y = (s-r)/2 with r in [-R, 0), |s| < |r| and Jacobian 1/2.
    """
    if method == "auto":
        method = "product" if isinstance(f, SeparableQ) else "diagonal"
    R = q_radius(kernel, tol, f.growth)
    res = f.resolution() if isinstance(f, SeparableQ) else np.inf
    width = _panel_width(kernel, res)
    if method == "product":
        return _product_Q(f, kernel, R, width)
    return _diagonal_Q(f, kernel, R, width)


def _product_Q(f, kernel, R, width):
    X, wX = gauss_panels(-R, 0.0, width, PANEL_ORDER)
    Y, wY = gauss_panels(0.0, R, width, PANEL_ORDER)
    diff = X[:, None] - Y[None, :]
    total = 0.0
    if kernel.is_scalar:
        Kmat = kernel.scalar(diff) * wX[:, None] * wY[None, :]
        for c, a, b in f.terms:
            total += c * np.einsum("id,ij,jd->", _ev(a, X), Kmat, _ev(b, Y))
    else:
        Kmat = kernel.matrix(diff) * (wX[:, None] * wY[None, :])[:, :, None, None]
        for c, a, b in f.terms:
            total += c * np.einsum("id,ijde,je->", _ev(a, X), Kmat, _ev(b, Y))
    return float(total)


def _diagonal_Q(f, kernel, R, width):
    brk = [-b for b in kernel.breaks if 0 < b < R]
    r, wr = gauss_panels(-R, 0.0, width, PANEL_ORDER, brk)
    total = 0.0
    # group r-nodes in chunks to bound memory
    for start in range(0, r.size, 64):
        rr, ww = r[start:start + 64], wr[start:start + 64]
        xs, ys, wts = [], [], []
        for ri, wi in zip(rr, ww):
            s, ws = gauss_panels(ri, -ri, width, PANEL_ORDER)
            xs.append(0.5 * (ri + s))
            ys.append(0.5 * (s - ri))
            wts.append(0.5 * wi * ws)
        x, y, w = np.concatenate(xs), np.concatenate(ys), np.concatenate(wts)
        total += float(np.sum(w * np.asarray(f(x, y)).ravel()))
    return total


def bilinear_Q(a, b, kernel, tol=QUAD_TOL):
    """Integral over Q of a(x) . K(x-y) b(y)."""
    return integrate_Q(SeparableQ([(1.0, a, b)], kernel), kernel, tol)


def skew_pair(u, v, kernel, tol=QUAD_TOL, method="auto"):
    """P(u, v) = 1/2 integral over Q of K(x-y) (u(x).v(y) - v(x).u(y))."""
    f = SeparableQ([(0.5, u, v), (-0.5, v, u)], kernel, antisymmetric=True)
    return integrate_Q(f, kernel, tol, method)


def integrate_square(f, a, b, width=0.25, order=PANEL_ORDER):
    """Integral of f(x, y) over (a, b)^2 (used for antisymmetry checks)."""
    x, w = gauss_panels(a, b, width, order)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return float(np.sum(np.outer(w, w) * np.asarray(f(X.ravel(), Y.ravel())).reshape(X.shape)))


# -------------------------------------------------------------- convolutions


def kernel_tail(kernel, t):
    """integral of K(r) over r > t, as an array of matrices (t.shape + (d, d))."""
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def one(p):
        if hasattr(p, "base"):
            return p.factor * one(p.base)
        fam = p.family
        if fam == "gaussian":
            return p.weight * 0.5 * erfc(t / (np.sqrt(2) * p.width))
        if fam == "mexican-hat":
            return sum(q.weight * 0.5 * erfc(t / (np.sqrt(2) * q.width)) for q in p.parts)
        if fam == "exponential":
            a = p.rate
            return p.weight * np.where(t >= 0, 0.5 * np.exp(-a * np.abs(t)), 1 - 0.5 * np.exp(-a * np.abs(t)))
        R = kern.truncation_radius(Kernel1(p), 1e-15)
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            lo, hi = max(ti, -R), R
            if lo >= hi:
                out[i] = 0.0 if ti >= R else p.moment(0)
                continue
            xs, ws = gauss_panels(lo, hi, p.scale / 2, PANEL_ORDER, p.breaks)
            out[i] = np.sum(ws * p(xs))
        return out

    if kernel.is_scalar:
        return one(kernel.profile)[..., None, None] * np.eye(kernel.dim)
    out = np.empty(t.shape + (kernel.dim, kernel.dim))
    for i, row in enumerate(kernel.entries):
        for j, p in enumerate(row):
            out[..., i, j] = one(p)
    return out


def Kernel1(profile):
    return kern.Kernel(profile)


def line_convolution_matrix(kernel, x):
    """Dense weights W with (K*w)(x_i) ~ sum_j W_ij w_j on the grid (scalar kernels)."""
    w = gregory_weights(x.size, x[1] - x[0])
    return kernel.scalar(x[:, None] - x[None, :]) * w[None, :]


def line_tails(kernel, x, left, right):
    """Far-field contributions of constants beyond a truncated grid."""
    tl = kernel_tail(kernel, x - x[0])
    tr = kernel_tail(kernel, x[-1] - x)
    return np.einsum("nij,j->ni", tl, left) + np.einsum("nij,j->ni", tr, right)


def convolve_values(kernel, profile, values, far=None):
    """K * w at the grid nodes of `profile`, for nodal values w of shape (N, d).

    On line grids w is continued by constants beyond the grid: `far` =
    (left, right) when given, else the edge values of w.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if profile.topology == "periodic":
        N = profile.n
        k = 2 * np.pi * np.fft.rfftfreq(N, d=profile.period / N)
        what = np.fft.rfft(values, axis=0)
        if kernel.is_scalar:
            mult = np.array([kern.symbol_hat(kernel, 1j * kk)[0, 0] for kk in k]) if not _fast_hat(kernel) \
                else kernel.profile.hat(1j * k)
            out = what * np.real(mult)[:, None]
        else:
            mult = np.array([kern.symbol_hat(kernel, 1j * kk) for kk in k])
            out = np.einsum("kij,kj->ki", np.real(mult), what)
        return np.fft.irfft(out, n=N, axis=0)
    if profile.topology == "line":
        x = profile.x
        wts = gregory_weights(x.size, profile.h)
        left, right = (values[0], values[-1]) if far is None else far
        if kernel.is_scalar:
            body = (kernel.scalar(x[:, None] - x[None, :]) * wts[None, :]) @ values
        else:
            body = np.einsum("ijab,jb->ia", kernel.matrix(x[:, None] - x[None, :]) * wts[None, :, None, None], values)
        return body + line_tails(kernel, x, left, right)
    raise ConfigError("nodal convolution needs a grid profile")


def _fast_hat(kernel):
    return kernel.profile.hat is not None


def convolve(kernel, w):
    """K * w as a new profile on the same grid."""
    far = (w.far_left, w.far_right) if w.topology == "line" else None
    vals = convolve_values(kernel, w, w.values, far)
    out = w.with_values(vals)
    if w.topology == "line":
        k0 = kern.moment(kernel, 0)
        out.far_left = k0 @ w.far_left
        out.far_right = k0 @ w.far_right
    return out


def convolve_at(kernel, profile, xq, transform=None, tol=QUAD_TOL, nodal=None):
    """(K * g(u))(x) at arbitrary points xq, g = transform (identity by default).

    Periodic grid profiles use the exact Fourier multiplier on the grid and
    trigonometric interpolation; other profiles use direct quadrature.
    `nodal` may pass precomputed nodal values of g(u) for periodic grids.
    """
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    g = transform if transform is not None else (lambda v: v)
    if isinstance(profile, GridProfile) and profile.topology == "periodic":
        vals = nodal if nodal is not None else g(profile.values)
        conv = profile.with_values(convolve_values(kernel, profile, vals))
        return conv.eval(xq)
    R = q_radius(kernel, tol, _growth(profile))
    brk = [b for b in kernel.breaks if -R < b < R]
    r, w = gauss_panels(-R, R, _panel_width(kernel, profile.resolution()), PANEL_ORDER, brk)
    out = []
    for start in range(0, xq.size, 256):
        xs = xq[start:start + 256]
        y = (xs[:, None] - r[None, :]).ravel()
        gv = np.asarray(g(profile.eval(y)))
        gv = gv.reshape(xs.size, r.size, -1)
        if kernel.is_scalar:
            out.append(np.einsum("j,pjd->pd", w * kernel.scalar(r), gv))
        else:
            out.append(np.einsum("j,jab,pjb->pa", w, kernel.matrix(r), gv))
    return np.concatenate(out, axis=0)


# -------------------------------------------------------------------- shifts


def shift(u, tau):
    """phi_tau u (x) = u(x + tau)."""
    tau = float(tau)
    if tau == 0.0:
        return u
    if isinstance(u, GridProfile):
        if u.topology == "line":
            length = u.x[-1] - u.x[0]
            if abs(tau) > u.margin * length:
                raise ShiftOutOfMargin(f"|tau| = {abs(tau)} exceeds margin {u.margin * length}")
        return u.with_values(u.eval(u.x + tau))
    if isinstance(u, FunctionProfile):
        fns = [u.fn, *u.derivs]
        moved = [(lambda x, f=f: f(np.asarray(x) + tau)) for f in fns]
        return FunctionProfile(moved[0], moved[1:], u.dim, u.growth, u.scale, u.far_left, u.far_right)
    raise ConfigError("cannot shift this profile type")


# ----------------------------------------------------------------------- I/O


def write_profile(profile, path):
    """CSV with header x,u1..ud plus a sidecar JSON holding the metadata."""
    path = Path(path)
    header = "x," + ",".join(f"u{i + 1}" for i in range(profile.dim))
    data = np.column_stack([profile.x, profile.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
    path.with_suffix(".json").write_text(json.dumps(profile.metadata(), indent=2, sort_keys=True) + "\n")


def read_profile(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"profile file {path} not found")
    meta_path = path.with_suffix(".json")
    if not meta_path.exists():
        raise ConfigError(f"sidecar metadata {meta_path} not found")
    meta = json.loads(meta_path.read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x, vals = data[:, 0], data[:, 1:]
    if meta["topology"] == "periodic":
        return GridProfile(x, vals, "periodic", period=meta["period"])
    return GridProfile(x, vals, "line", far_left=meta["far_left"], far_right=meta["far_right"])
