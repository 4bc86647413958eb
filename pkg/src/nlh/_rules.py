"""Quadrature rules shared by the quadrature code: composite Gauss-Legendre
panels and end-corrected trapezoid weights for uniform grids.

When NLH_CACHE_DIR is set, base Gauss-Legendre rules are stored there as
.npy tables and reused across processes.
"""
import os
from fractions import Fraction
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np


def _cached_leggauss(order):
    root = os.environ.get("NLH_CACHE_DIR")
    if not root:
        return np.polynomial.legendre.leggauss(order)
    path = Path(root) / f"legendre_{order}.npy"
    try:
        table = np.load(path)
        if table.shape == (2, order):
            return table[0], table[1]
    except (OSError, ValueError):
        pass
    nodes, weights = np.polynomial.legendre.leggauss(order)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp.npy")
        np.save(tmp, np.stack([nodes, weights]))
        os.replace(tmp, path)
    except OSError:
        pass  # an unwritable cache only costs time
    return nodes, weights


@lru_cache(maxsize=32)
def _legendre(order):
    nodes, weights = _cached_leggauss(order)
    nodes, weights = np.array(nodes), np.array(weights)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_panels(a, b, width, order=16, breaks=()):
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b].

    The interval is cut at every point of `breaks` lying strictly inside it,
    and each piece is split into panels no wider than `width`.
    """
    if b <= a:
        return np.zeros(0), np.zeros(0)
    cuts = [a] + sorted(c for c in breaks if a < c < b) + [b]
    t, w = _legendre(order)
    xs, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = 1 if not np.isfinite(width) else max(1, int(np.ceil((hi - lo) / width - 1e-12)))
        edges = np.linspace(lo, hi, n + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs.append((mid[:, None] + half[:, None] * t[None, :]).ravel())
        ws.append((half[:, None] * w[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def _bernoulli(n):
    B = [Fraction(1)]
    for m in range(1, n + 1):
        B.append(-sum(comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    return B


@lru_cache(maxsize=8)
def gregory_corrections(m):
    """Left-end corrections d_0..d_{m-1} to unit-step trapezoid weights.

    The trapezoid sum over nodes 0, 1, 2, ... with weights 1 + d_j integrates
    polynomials of degree < m exactly at the left end: by Euler-Maclaurin the
    corrections must reproduce -f(0)/2 + sum_k B_2k/(2k)! f^(2k-1)(0).
    Solved exactly in rationals.
    """
    B = _bernoulli(m + 1)
    rhs = [Fraction(-1, 2)] + [B[p + 1] / (p + 1) if p % 2 else Fraction(0) for p in range(1, m)]
    A = [[Fraction(j) ** p for j in range(m)] + [rhs[p]] for p in range(m)]
    for col in range(m):
        piv = next(r for r in range(col, m) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        for r in range(m):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[col])]
    return tuple(float(A[j][m] / A[j][j]) for j in range(m))


def gregory_weights(n, h, m=8):
    """Trapezoid weights on n uniform nodes with order-m end corrections
    (falls back to lower order on short grids)."""
    w = np.full(n, float(h))
    m = min(m, n // 2)
    if m < 1:
        return w
    d = np.asarray(gregory_corrections(m)) * h
    w[:m] += d
    w[n - m:] += d[::-1]
    return w
