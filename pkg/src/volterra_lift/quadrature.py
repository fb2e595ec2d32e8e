"""Fixed-order Gauss rules on geometric panels.

Small helpers shared by the kernel and weighted-space code.  Integrands
with an algebraic singularity at a panel end are handled by refining the
panels geometrically towards that end, and the innermost panel uses a
Gauss-Jacobi rule carrying the weight exponent.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=64)
def gauss_legendre(n):
    """Nodes and weights on [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=64)
def gauss_jacobi_left(n, beta):
    """Rule on [0, 1] for weight x**beta (exact for x**beta * poly)."""
    # roots_jacobi(n, alpha, beta) integrates (1-y)^alpha (1+y)^beta on [-1, 1]
    y, w = roots_jacobi(n, 0.0, beta)
    return 0.5 * (y + 1.0), w / 2.0 ** (1.0 + beta)


def panel_rule(edges, n=12):
    """Composite Gauss-Legendre nodes/weights over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x0, w0 = gauss_legendre(n)
    h = np.diff(edges)
    nodes = edges[:-1, None] + h[:, None] * x0[None, :]
    weights = h[:, None] * w0[None, :]
    return nodes.ravel(), weights.ravel()


def geometric_edges(lo, hi, first, ratio=2.0):
    """Panel edges lo, lo+first, lo+first*ratio, ... capped at hi."""
    if hi <= lo:
        return np.array([lo, hi])
    edges = [lo]
    step = first
    while edges[-1] + step < hi:
        edges.append(edges[-1] + step)
        step *= ratio
    edges.append(hi)
    return np.asarray(edges)


def singular_left_rule(a, b, beta=0.0, depth=40, n=12):
    """Rule for int_a^b g(x) (x-a)^beta-ish integrands singular at ``a``.

    The interval is split at a + (b-a) 2^-k, k = 1..depth; the innermost
    panel uses Gauss-Jacobi with exponent ``beta`` and the others plain
    Gauss-Legendre.  Returned weights already include nothing of the
    weight; callers multiply by the full integrand.
    """
    L = b - a
    cuts = a + L * 2.0 ** -np.arange(depth, -1, -1, dtype=float)
    x, w = panel_rule(cuts, n)
    xj, wj = gauss_jacobi_left(n, beta)
    h0 = cuts[0] - a
    # Gauss-Jacobi integrates (x-a)^beta g; divide the weight back out so the
    # caller can pass the full integrand f = (x-a)^beta g uniformly
    xj_abs = a + h0 * xj
    with np.errstate(divide="ignore"):
        wj_abs = h0 ** (1.0 + beta) * wj / np.where(xj_abs > a, (xj_abs - a) ** beta, 1.0)
    return np.concatenate([xj_abs, x]), np.concatenate([wj_abs, w])
