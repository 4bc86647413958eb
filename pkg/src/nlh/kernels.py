"""Convolution kernels: evaluation, moments, Fourier-Laplace symbols, checks.

A `Kernel` is either a scalar profile times the d x d identity, or a
symmetric d x d array of scalar profiles.  Scalar profiles know their own
closed forms where one exists; everything else falls back to composite
Gauss-Legendre quadrature truncated at `truncation_radius`.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import integrate, optimize

from ._rules import gauss_panels
from .errors import ConfigError, OutsideAnalyticStrip, TruncationNotConverged

DEFAULT_TOL = 1e-13
HARD_CAP_SCALES = 1e4


def _double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


class _Gaussian:
    family = "gaussian"

    def __init__(self, width, weight=1.0):
        if width <= 0:
            raise ConfigError("gaussian width must be positive")
        self.width = float(width)
        self.weight = float(weight)
        self.scale = self.width
        self.eta = np.inf
        self.radius = None
        self.breaks = ()

    def __call__(self, r):
        w = self.width
        return self.weight / (np.sqrt(2 * np.pi) * w) * np.exp(-0.5 * (np.asarray(r) / w) ** 2)

    def moment(self, m):
        if m % 2:
            return 0.0
        return self.weight * self.width ** m * _double_factorial(m - 1)

    def hat(self, nu):
        return self.weight * np.exp(0.5 * (nu * self.width) ** 2)

    def params(self):
        return {"width": self.width, "weight": self.weight}


class _Exponential:
    family = "exponential"

    def __init__(self, rate, weight=1.0):
        if rate <= 0:
            raise ConfigError("exponential rate must be positive")
        self.rate = float(rate)
        self.weight = float(weight)
        self.scale = 1.0 / self.rate
        self.eta = self.rate
        self.radius = None
        self.breaks = (0.0,)

    def __call__(self, r):
        a = self.rate
        return self.weight * 0.5 * a * np.exp(-a * np.abs(np.asarray(r)))

    def moment(self, m):
        if m % 2:
            return 0.0
        return self.weight * factorial(m) / self.rate ** m

    def hat(self, nu):
        a = self.rate
        return self.weight * a * a / (a * a - nu * nu)

    def params(self):
        return {"rate": self.rate, "weight": self.weight}


class _CompactBump:
    family = "compact-bump"
    _unit_mass = None

    def __init__(self, radius, weight=1.0):
        if radius <= 0:
            raise ConfigError("compact-bump radius must be positive")
        self.radius = float(radius)
        self.weight = float(weight)
        self.scale = self.radius / 4
        self.eta = np.inf
        self.breaks = (-self.radius, self.radius)
        if _CompactBump._unit_mass is None:
            _CompactBump._unit_mass = 2 * integrate.quad(self._shape, 0, 1, epsabs=1e-15, epsrel=1e-13, limit=200)[0]

    @staticmethod
    def _shape(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = np.abs(t) < 1
        out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
        return out

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.weight * self._shape(r / self.radius) / (self.radius * self._unit_mass)

    def moment(self, m):
        if m % 2:
            return 0.0
        # independent reference path: adaptive quadrature in the unit variable
        val = 2 * integrate.quad(lambda t: t ** m * self._shape(t), 0, 1, epsabs=1e-16, epsrel=1e-13, limit=200)[0]
        return self.weight * self.radius ** m * val / self._unit_mass

    hat = None

    def params(self):
        return {"radius": self.radius, "weight": self.weight}


class _MexicanHat:
    family = "mexican-hat"

    def __init__(self, widths, weights):
        if len(widths) != len(weights) or not widths:
            raise ConfigError("mexican-hat needs matching non-empty widths and weights")
        self.parts = [_Gaussian(w, c) for w, c in zip(widths, weights)]
        self.scale = min(p.scale for p in self.parts)
        self.eta = np.inf
        self.radius = None
        # sign changes are kinks of |K|; quadrature panels are cut there
        r = np.linspace(0.0, 20 * max(p.width for p in self.parts), 4001)
        v = self(r)
        roots = [optimize.brentq(self, a, b, xtol=1e-15) for a, b, fa, fb in zip(r[:-1], r[1:], v[:-1], v[1:])
                 if fa * fb < 0]
        self.breaks = tuple(sorted({*roots, *(-x for x in roots)}))

    def __call__(self, r):
        return sum(p(r) for p in self.parts)

    def moment(self, m):
        return sum(p.moment(m) for p in self.parts)

    def hat(self, nu):
        return sum(p.hat(nu) for p in self.parts)

    def params(self):
        return {"widths": [p.width for p in self.parts], "weights": [p.weight for p in self.parts]}


class _Tabulated:
    """Linear interpolation through (r, value) samples, zero outside."""

    family = "tabulated"

    def __init__(self, r, values, decay_rate):
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != values.shape or r.size < 2:
            raise ConfigError("tabulated kernel needs matching 1-D sample arrays")
        order = np.argsort(r)
        self.r = r[order]
        self.values = values[order]
        if np.any(np.diff(self.r) <= 0):
            raise ConfigError("tabulated sample positions must be distinct")
        self.decay_rate = float(decay_rate)
        self.scale = float(np.min(np.diff(self.r)))
        self.eta = self.decay_rate
        self.radius = float(max(abs(self.r[0]), abs(self.r[-1])))
        self.breaks = tuple(self.r)

    @classmethod
    def from_step(cls, samples, step, decay_rate):
        """Samples on r = 0, step, 2 step, ... extended evenly."""
        samples = np.asarray(samples, dtype=float)
        half = step * np.arange(samples.size)
        r = np.concatenate([-half[:0:-1], half])
        v = np.concatenate([samples[:0:-1], samples])
        return cls(r, v, decay_rate)

    def __call__(self, r):
        return np.interp(r, self.r, self.values, left=0.0, right=0.0)

    def moment(self, m):
        # exact: Gauss-Legendre of order 16 integrates r^m (linear) exactly for m <= 29
        x, w = gauss_panels(self.r[0], self.r[-1], np.inf, 16, self.breaks)
        return float(np.sum(w * x ** m * self(x)))

    hat = None

    def params(self):
        return {"r": self.r.tolist(), "values": self.values.tolist(), "decay_rate": self.decay_rate}


class _Scaled:
    """A profile multiplied by a constant factor."""

    def __init__(self, base, factor):
        self.base = base
        self.factor = float(factor)
        self.family = base.family
        for name in ("scale", "eta", "radius", "breaks"):
            setattr(self, name, getattr(base, name))
        self.hat = None if base.hat is None else (lambda nu: self.factor * base.hat(nu))

    def __call__(self, r):
        return self.factor * self.base(r)

    def moment(self, m):
        return self.factor * self.base.moment(m)

    def params(self):
        return {**self.base.params(), "factor": self.factor}


def make_profile(family, **params):
    if family == "gaussian":
        return _Gaussian(params["width"], params.get("weight", 1.0))
    if family == "exponential":
        return _Exponential(params["rate"], params.get("weight", 1.0))
    if family == "compact-bump":
        return _CompactBump(params["radius"], params.get("weight", 1.0))
    if family == "mexican-hat":
        return _MexicanHat(params["widths"], params["weights"])
    if family == "tabulated":
        if "samples" in params:
            return _Tabulated.from_step(params["samples"], params["grid_step"], params["decay_rate"])
        return _Tabulated(params["r"], params["values"], params["decay_rate"])
    raise ConfigError(f"unknown kernel family {family!r}")


class Kernel:
    """Even, symmetric, matrix-valued convolution kernel.

    Either `profile` (scalar times identity of size `dim`) or `entries`
    (a dim x dim nested list of scalar profiles) must be given.
    """

    def __init__(self, profile=None, dim=1, entries=None, eta0=None):
        if (profile is None) == (entries is None):
            raise ConfigError("give exactly one of profile or entries")
        if entries is not None:
            dim = len(entries)
            if any(len(row) != dim for row in entries):
                raise ConfigError("matrix kernel entries must be square")
        self.profile = profile
        self.entries = entries
        self.dim = int(dim)
        parts = [profile] if profile is not None else [p for row in entries for p in row]
        self._parts = parts
        self.scale = min(p.scale for p in parts)
        self.eta0 = float(eta0) if eta0 is not None else min(p.eta for p in parts)
        radii = [p.radius for p in parts]
        self.radius = None if any(rr is None for rr in radii) else max(radii)
        self.breaks = tuple(sorted({0.0, *[b for p in parts for b in p.breaks]}))

    @property
    def is_scalar(self):
        return self.profile is not None

    def __repr__(self):
        if self.is_scalar:
            return f"Kernel({self.profile.family}, {self.profile.params()}, dim={self.dim})"
        return f"Kernel(matrix {self.dim}x{self.dim})"

    def scalar(self, r):
        """Scalar profile values (scalar-times-identity kernels only)."""
        return self.profile(r)

    def matrix(self, r):
        """Kernel values with shape r.shape + (dim, dim)."""
        r = np.asarray(r, dtype=float)
        if self.is_scalar:
            return self.profile(r)[..., None, None] * np.eye(self.dim)
        out = np.empty(r.shape + (self.dim, self.dim))
        for i, row in enumerate(self.entries):
            for j, p in enumerate(row):
                out[..., i, j] = p(r)
        return out

    def norm(self, r):
        """Spectral norm of K(r)."""
        r = np.asarray(r, dtype=float)
        if self.is_scalar:
            return np.abs(self.profile(r))
        return np.linalg.norm(self.matrix(r), ord=2, axis=(-2, -1))

    def apply(self, r, w):
        """K(r_i) w_i for arrays r (n,) and w (n, dim)."""
        if self.is_scalar:
            return self.profile(r)[:, None] * w
        return np.einsum("nij,nj->ni", self.matrix(r), w)

    def entrywise(self, fn):
        """Apply fn(profile) to every scalar entry, returning a dim x dim array."""
        if self.is_scalar:
            return fn(self.profile) * np.eye(self.dim)
        return np.array([[fn(p) for p in row] for row in self.entries])


def read_table(path):
    """Two-column (r, value) CSV; a non-numeric first line is taken as a header."""
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(t) for t in first.split(",")]
        skip = 0
    except ValueError:
        skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)


def make_kernel(family, dim=1, eta0=None, **params):
    return Kernel(make_profile(family, **params), dim=dim, eta0=eta0)


def kernel_from_config(block):
    """Build a kernel from a config dict {family, params, d, eta0} or a matrix form."""
    if "matrix" in block:
        entries = [[make_profile(e["family"], **e.get("params", {})) for e in row] for row in block["matrix"]]
        return Kernel(entries=entries, eta0=block.get("eta0"))
    params = dict(block.get("params", {}))
    if block["family"] == "tabulated" and "csv" in params:
        data = read_table(params.pop("csv"))
        params["r"], params["values"] = data[:, 0], data[:, 1]
    return make_kernel(block["family"], dim=block.get("d", 1), eta0=block.get("eta0"), **params)


# ---------------------------------------------------------------- operations


def scaled(kernel, factor):
    """The kernel factor * K."""
    if factor == 1:
        return kernel
    if kernel.is_scalar:
        return Kernel(_Scaled(kernel.profile, factor), dim=kernel.dim, eta0=kernel.eta0)
    return Kernel(entries=[[_Scaled(p, factor) for p in row] for row in kernel.entries], eta0=kernel.eta0)


def evaluate(kernel, r):
    """K(r) as a dim x dim matrix (or stacked matrices for array r)."""
    return kernel.matrix(r)


def _quad(kernel, fn, R, breaks=()):
    """Integral of fn(r) over [-R, R] with panels tied to the kernel scale."""
    if R <= 0:
        return 0.0
    bk = [b for b in (*kernel.breaks, *breaks) if -R < b < R]
    x, w = gauss_panels(-R, R, kernel.scale / 2, 16, bk)
    vals = fn(x)
    return np.tensordot(w, vals, axes=(0, 0))


def _tail(kernel, R, weight, cap):
    if R >= cap:
        return 0.0
    bk = [b for b in kernel.breaks if R < b < cap]
    x, w = gauss_panels(R, cap, kernel.scale / 2, 16, bk)
    bk_neg = [-b for b in kernel.breaks if R < -b < cap]
    xn, wn = gauss_panels(R, cap, kernel.scale / 2, 16, bk_neg)
    return float(np.sum(w * weight(x) * kernel.norm(x)) + np.sum(wn * weight(xn) * kernel.norm(-xn)))


def truncation_radius(kernel, tol=DEFAULT_TOL, power=1, weight=None):
    """Smallest R with  integral over |r| > R of (1+|r|)^power ||K(r)|| below tol.

    A custom positive `weight(r)` (r >= 0) replaces (1 + r)^power.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if kernel.radius is not None:
        return kernel.radius
    if weight is None:
        def weight(r):
            return (1.0 + r) ** power
    cap = 40 * kernel.scale
    hard = HARD_CAP_SCALES * kernel.scale
    while _tail(kernel, cap, weight, 2 * cap) > 1e-3 * tol:
        cap *= 2
        if cap > hard:
            raise TruncationNotConverged(f"tail above {tol} beyond hard cap {hard}")
    cap *= 2
    if _tail(kernel, 0.0, weight, cap) < tol:
        return 0.0
    return optimize.brentq(lambda R: _tail(kernel, R, weight, cap) - tol, 0.0, cap, xtol=1e-12 * cap)


def moment(kernel, m, method="auto", tol=1e-14):
    """kappa_m = integral of r^m K(r) dr as a dim x dim matrix.

    method: "closed" (analytic/reference value per family), "quadrature"
    (truncated composite Gauss-Legendre, with a convergence check), or
    "auto" (closed when available).
    """
    if m < 0:
        raise ValueError("moment order must be nonnegative")
    if method in ("auto", "closed"):
        return kernel.entrywise(lambda p: p.moment(m))
    R1 = truncation_radius(kernel, tol, power=m + 1)
    vals = []
    for R in (R1, 1.5 * R1 if kernel.radius is None else R1):
        vals.append(_quad(kernel, lambda r: r[:, None, None] ** m * kernel.matrix(r), R))
    if np.max(np.abs(vals[0] - vals[1])) > max(tol, 1e-10 * np.max(np.abs(vals[1]))):
        raise TruncationNotConverged(f"moment {m} changes between radii {R1} and {1.5 * R1}")
    out = vals[1]
    if m % 2:
        out = np.zeros_like(out)  # exact zero for even kernels
    return out


def symbol_hat(kernel, nu, derivative=0, tol=1e-14):
    """Fourier-Laplace symbol  integral of e^{-nu x} K(x) dx  (or its nu-derivative)."""
    nu = complex(nu)
    if abs(nu.real) >= kernel.eta0:
        raise OutsideAnalyticStrip(f"|Re nu| = {abs(nu.real)} >= eta0 = {kernel.eta0}")
    if derivative == 0 and all(p.hat is not None for p in kernel._parts):
        return kernel.entrywise(lambda p: p.hat(nu)).astype(complex)
    grow = abs(nu.real)
    R = truncation_radius(kernel, tol, weight=lambda r: (1 + r) ** (derivative + 1) * np.exp(grow * r))

    def integrand(r):
        return ((-r) ** derivative * np.exp(-nu * r))[:, None, None] * kernel.matrix(r)

    return _quad(kernel, integrand, R)


@dataclass
class ValidationReport:
    entries: list = field(default_factory=list)

    def add(self, check, passed, detail=""):
        self.entries.append({"check": check, "passed": bool(passed), "detail": detail})

    @property
    def passed(self):
        return all(e["passed"] for e in self.entries)

    def as_dict(self):
        return {"passed": self.passed, "checks": self.entries}


def validate(kernel):
    """Check evenness, matrix symmetry, finite first moment and exponential decay."""
    rep = ValidationReport()
    try:
        Rchk = truncation_radius(kernel, 1e-12)
    except TruncationNotConverged as exc:
        rep.add("finite first moment", False, str(exc))
        return rep
    Rchk = max(Rchk, 4 * kernel.scale)
    r = np.linspace(0.0, Rchk, 2001)
    r = np.unique(np.concatenate([r, np.abs(kernel.breaks)]))
    kp, km = kernel.matrix(r), kernel.matrix(-r)
    big = max(float(np.max(np.abs(kp))), float(np.max(np.abs(km))), 1e-300)
    odd = float(np.max(np.abs(kp - km)))
    rep.add("evenness", odd <= 1e-12 * big, f"max |K(r)-K(-r)| = {odd:.3e}")
    asym = float(np.max(np.abs(kp - np.swapaxes(kp, -1, -2))))
    rep.add("matrix symmetry", asym <= 1e-12 * big, f"max |K - K^T| = {asym:.3e}")

    try:
        R = truncation_radius(kernel, 1e-10)
        one = _quad(kernel, lambda x: (1 + np.abs(x)) * kernel.norm(x), R)
        two = _quad(kernel, lambda x: (1 + np.abs(x)) * kernel.norm(x), 2 * R if kernel.radius is None else R)
        # |K| has kinks where a sign-changing kernel crosses zero, hence the loose bound
        ok = np.isfinite(two) and abs(one - two) <= 1e-6 * max(abs(two), 1e-300)
        rep.add("finite first moment", ok, f"int (1+|r|)||K|| = {two:.12g}")
    except TruncationNotConverged as exc:
        rep.add("finite first moment", False, str(exc))

    rep.add("exponential decay", *_decay_check(kernel))
    return rep


def _decay_check(kernel):
    if kernel.radius is not None:
        return True, f"compact support, radius {kernel.radius:g}"
    R = truncation_radius(kernel, 1e-12)
    slopes = []
    for lo, hi in ((0.5 * R, 0.75 * R), (0.75 * R, R)):
        x = np.linspace(lo, hi, 200)
        n = np.maximum(kernel.norm(x), 1e-300)
        slopes.append(np.polyfit(x, np.log(n), 1)[0])
    if np.isinf(kernel.eta0):
        ok = slopes[1] < slopes[0] < 0
        return ok, f"log-slopes {slopes[0]:.4g}, {slopes[1]:.4g} (faster than any exponential expected)"
    ok = max(slopes) <= -kernel.eta0 * (1 - 1e-6)
    return ok, f"log-slopes {slopes[0]:.6g}, {slopes[1]:.6g} vs -eta0 = {-kernel.eta0:g}"
