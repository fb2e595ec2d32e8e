"""Weighted spaces L^2_w and H^1_w on a truncated half line.

The weight is w(x) = x^beta exp(-c x).  Curves live on a ``SpaceGrid``
and either carry an analytic extension (exact evaluation anywhere, used for
kernel-derived curves) or are node values with linear interpolation.
Integrals use Gauss rules per cell; the cell touching 0 uses Gauss-Jacobi
with the x^beta factor, and analytic curves refine it geometrically so the
kernel singularity x^(2H-1) is resolved.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from . import quadrature as quad
from .errors import GridMismatch, OutOfDomain, WeightNotAdmissible
from .kernels import admissible_q_interval

X_MAX = 40.0


@dataclass(frozen=True)
class WeightSpec:
    """Weight w(x) = x^beta exp(-c x).

    Parameters
    ----------
    beta : float
        Exponent, must lie in (-1, 1) so that w and 1/w are locally
        integrable.
    c : float
        Decay rate (c >= 0; c = 0 is the unweighted analog on (0, L)).
    hurst : float, optional
        If given, beta must lie in the window ((1 - 2H) v 0, 1)
        (beta = 0 is allowed for H >= 1/2).
    """

    beta: float
    c: float = 1.0
    hurst: float = None

    def __post_init__(self):
        if not -1.0 < self.beta < 1.0:
            raise WeightNotAdmissible(f"beta={self.beta} outside (-1, 1): 1/w not integrable")
        if self.c < 0:
            raise WeightNotAdmissible("decay c must be nonnegative")
        if self.hurst is not None:
            lo = 1.0 - 2.0 * self.hurst
            ok = self.beta > lo if lo > 0 else self.beta >= 0.0
            if not ok:
                raise WeightNotAdmissible(
                    f"beta={self.beta} not in (({lo:.3g}) v 0, 1) for H={self.hurst}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.power(x, self.beta) * np.exp(-self.c * x)

    def admissible_q_interval(self, hurst):
        return admissible_q_interval(hurst, self.beta)


class SpaceGrid:
    """Strictly increasing nodes 0 = x_0 < ... < x_J = x_max."""

    def __init__(self, nodes, kind="custom"):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            raise ValueError("space grid must start at 0 and increase strictly")
        self.nodes = nodes
        self.kind = kind

    @classmethod
    def default(cls, x_max=X_MAX, first=1e-4, ratio=1.15, h_max=0.05):
        """Geometric near 0 (first node ``first``, ratio ``ratio``) until
        the spacing reaches ``h_max``, then uniform up to ``x_max``."""
        xs = [0.0, first]
        while xs[-1] * (ratio - 1.0) < h_max and xs[-1] < x_max:
            xs.append(xs[-1] * ratio)
        n_uni = int(np.ceil((x_max - xs[-1]) / h_max))
        uni = np.linspace(xs[-1], x_max, max(n_uni, 1) + 1)[1:]
        nodes = np.concatenate([np.asarray(xs)[np.asarray(xs) < x_max], uni])
        return cls(nodes, kind="geometric-uniform")

    @classmethod
    def lift_default(cls, n_nodes=64, x_max=X_MAX, first=1e-3):
        """Coarse geometric grid used to store lift curves."""
        return cls(np.concatenate([[0.0], np.geomspace(first, x_max, n_nodes - 1)]),
                   kind="geometric")

    @property
    def x_max(self):
        return float(self.nodes[-1])

    def __len__(self):
        return len(self.nodes)

    def same_as(self, other):
        return other is self or (len(other.nodes) == len(self.nodes)
                                 and np.array_equal(other.nodes, self.nodes))

    @cached_property
    def _cell_rule_cache(self):
        return {}

    def cell_rule(self, beta, c, n=8):
        """Points, w-weights and cell index for int_0^{x_max} f w."""
        key = (beta, c, n)
        if key not in self._cell_rule_cache:
            x = self.nodes
            x0, w0 = quad.gauss_legendre(n)
            h = np.diff(x)[1:]
            pts = x[1:-1, None] + h[:, None] * x0[None, :]
            wts = h[:, None] * w0[None, :] * (pts ** beta * np.exp(-c * pts))
            xj, wj = quad.gauss_jacobi_left(n, beta)
            p0 = x[1] * xj
            w0_ = x[1] ** (1.0 + beta) * wj * np.exp(-c * p0)
            points = np.concatenate([p0, pts.ravel()])
            weights = np.concatenate([w0_, wts.ravel()])
            cells = np.concatenate([np.zeros(n, int),
                                    np.repeat(np.arange(1, len(x) - 1), n)])
            self._cell_rule_cache[key] = (points, weights, cells)
        return self._cell_rule_cache[key]

    def singular_rule(self, beta, c, depth=48, n=12):
        """Geometric refinement of the first cell for analytic curves.

        Returns points, w-weights and a level index (0 = innermost panel).
        """
        key = ("sing", beta, c, depth, n)
        if key not in self._cell_rule_cache:
            x1 = self.nodes[1]
            cuts = x1 * 2.0 ** -np.arange(depth, -1, -1, dtype=float)
            pts, wts = quad.panel_rule(cuts, n)
            levels = np.repeat(np.arange(1, depth + 1), n)
            xj, wj = quad.gauss_jacobi_left(n, beta)
            p0 = cuts[0] * xj
            w0 = cuts[0] ** (1 + beta) * wj * np.exp(-c * p0)
            points = np.concatenate([p0, pts])
            weights = np.concatenate([w0, wts * pts ** beta * np.exp(-c * pts)])
            self._cell_rule_cache[key] = (points, weights,
                                          np.concatenate([np.zeros(n, int), levels]))
        return self._cell_rule_cache[key]


class Curve:
    """An R^d valued curve on a ``SpaceGrid``.

    Parameters
    ----------
    grid : SpaceGrid
    values : array (J+1, d), optional
        Node values (required unless ``func`` is given).
    derivative : array (J+1, d), optional
        Node values of f'; absent means piecewise-linear slopes.
    func, dfunc : callable, optional
        Analytic extension x -> (len(x), d) and its derivative, evaluated at
        ``offset + x``.  ``dfunc`` may be omitted only if derivatives are
        never needed.
    offset : float
        Accumulated shift for analytic curves.
    """

    def __init__(self, grid, values=None, derivative=None, func=None, dfunc=None,
                 offset=0.0):
        self.grid = grid
        self.func = func
        self.dfunc = dfunc
        self.offset = float(offset)
        if func is not None:
            values = self._call_func(func, grid.nodes)
            if dfunc is not None:
                with np.errstate(divide="ignore", invalid="ignore"):
                    derivative = self._call_func(dfunc, grid.nodes)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(grid):
            raise GridMismatch("curve values do not match the grid")
        self.values = values
        self.derivative = None if derivative is None else np.asarray(derivative, float).reshape(values.shape)

    def _call_func(self, fn, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(fn(self.offset + x), dtype=float)
        return out.reshape(len(x), -1)

    @property
    def analytic(self):
        return self.func is not None

    @property
    def dim(self):
        return self.values.shape[1]

    @classmethod
    def from_function(cls, grid, func, dfunc=None):
        return cls(grid, func=func, dfunc=dfunc)

    @classmethod
    def from_kernel(cls, grid, kernel, column=0, scale=1.0):
        """Column ``column`` of K (times ``scale``) as an analytic curve."""
        d = kernel.dim
        e = np.zeros(d)
        e[column] = scale

        def f(x):
            return kernel.diag(x) * e

        def df(x):
            return kernel.diag(x, order=1) * e
        return cls(grid, func=f, dfunc=df)

    # -- evaluation -----------------------------------------------------------
    def at(self, x):
        """Values at points x (zero beyond x_max for grid curves)."""
        x = np.asarray(x, dtype=float)
        if self.analytic:
            return self._call_func(self.func, x)
        return np.stack([np.interp(x, self.grid.nodes, self.values[:, i], right=0.0)
                         for i in range(self.dim)], axis=-1)

    def deriv_at(self, x, cells=None):
        """Derivative values at x; slope of the interpolant if none stored."""
        x = np.asarray(x, dtype=float)
        if self.analytic and self.dfunc is not None:
            return self._call_func(self.dfunc, x)
        if self.derivative is not None:
            return np.stack([np.interp(x, self.grid.nodes, self.derivative[:, i], right=0.0)
                             for i in range(self.dim)], axis=-1)
        slopes = np.diff(self.values, axis=0) / np.diff(self.grid.nodes)[:, None]
        if cells is None:
            cells = np.clip(np.searchsorted(self.grid.nodes, x, side="right") - 1,
                            0, len(slopes) - 1)
        out = slopes[cells]
        out[x > self.grid.x_max] = 0.0
        return out

    # -- linear structure -----------------------------------------------------
    def _combine(self, other, a, b):
        if not self.grid.same_as(other.grid):
            raise GridMismatch("curves live on different grids")
        if self.analytic and other.analytic:
            f, g = self, other
            func = (lambda x: a * f._call_func(f.func, x) + b * g._call_func(g.func, x))
            dfunc = None
            if f.dfunc is not None and g.dfunc is not None:
                dfunc = (lambda x: a * f._call_func(f.dfunc, x) + b * g._call_func(g.dfunc, x))
            return Curve(self.grid, func=func, dfunc=dfunc)
        der = None
        if self.derivative is not None and other.derivative is not None:
            der = a * self.derivative + b * other.derivative
        return Curve(self.grid, a * self.values + b * other.values, der)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, s):
        s = float(s)
        if self.analytic:
            f = self
            dfunc = None if f.dfunc is None else (lambda x: s * f._call_func(f.dfunc, x))
            return Curve(self.grid, func=lambda x: s * f._call_func(f.func, x), dfunc=dfunc)
        der = None if self.derivative is None else s * self.derivative
        return Curve(self.grid, s * self.values, der)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    # -- io -------------------------------------------------------------------
    def to_csv(self, path):
        cols = [self.grid.nodes, self.values]
        names = ["x"] + [f"f{i + 1}" for i in range(self.dim)]
        if self.derivative is not None:
            cols.append(self.derivative)
            names += [f"df{i + 1}" for i in range(self.dim)]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names),
                   comments="")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            names = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        grid = SpaceGrid(data[:, 0])
        nf = sum(1 for n in names if n.startswith("f"))
        der = data[:, 1 + nf:1 + 2 * nf] if len(names) > 1 + nf else None
        return cls(grid, data[:, 1:1 + nf], der)


# -- quadrature ---------------------------------------------------------------

def _weighted_sq_integral(fx_fn, w, grid, analytic, n=8):
    """int_0^{x_max} F(x) w(x) dx for F given pointwise by ``fx_fn``.

    ``fx_fn(points, cells)`` returns F at the quadrature points.  For
    analytic integrands the first cell is refined geometrically; a
    non-decaying innermost contribution signals divergence (returns inf).
    """
    pts, wts, cells = grid.cell_rule(w.beta, w.c, n)
    if not analytic:
        return float(wts @ fx_fn(pts, cells))
    body = wts[n:] @ fx_fn(pts[n:], cells[n:])
    sp, sw, lev = grid.singular_rule(w.beta, w.c)
    vals = fx_fn(sp, np.zeros(len(sp), int))
    contrib = np.bincount(lev, weights=sw * vals)
    if not np.all(np.isfinite(contrib)) or (
            contrib[2] != 0 and abs(contrib[1] / contrib[2]) >= 1.0 - 1e-9):
        return np.inf
    return float(body + contrib.sum())


def inner_l2w(f, g, w, grid):
    """<f, g>_{L^2_w} summed over components."""
    if not (f.grid.same_as(grid) and g.grid.same_as(grid)):
        raise GridMismatch("curves are not on the given grid")
    both = f.analytic and g.analytic

    def fg(x, cells):
        if both:
            return np.sum(f.at(x) * g.at(x), axis=-1)
        return np.sum(_interp_vals(f, x) * _interp_vals(g, x), axis=-1)
    return _weighted_sq_integral(fg, w, grid, both)


def _interp_vals(f, x):
    if f.analytic:
        return f.at(x)
    return np.stack([np.interp(x, f.grid.nodes, f.values[:, i], right=0.0)
                     for i in range(f.dim)], axis=-1)


def inner_h1w(f, g, w, grid):
    """<f, g>_{H^1_w} = <f, g>_w + <f', g'>_w."""
    both = f.analytic and g.analytic and f.dfunc is not None and g.dfunc is not None

    def dd(x, cells):
        return np.sum(f.deriv_at(x, None if both else cells) *
                      g.deriv_at(x, None if both else cells), axis=-1)
    return inner_l2w(f, g, w, grid) + _weighted_sq_integral(dd, w, grid, both)


def norm_l2w(f, w, grid):
    return float(np.sqrt(inner_l2w(f, f, w, grid)))


def norm_h1w(f, w, grid):
    """sqrt(|f|^2_{L^2_w} + |f'|^2_{L^2_w}); inf when the f' part diverges."""
    return float(np.sqrt(inner_h1w(f, f, w, grid)))


# -- semigroup and evaluation -------------------------------------------------

def shift(f, t, grid=None):
    """(S(t) f)(x) = f(t + x); exact for analytic curves."""
    if t < 0:
        raise ValueError("shift must be nonnegative")
    grid = f.grid if grid is None else grid
    if f.analytic:
        return Curve(grid, func=f.func, dfunc=f.dfunc, offset=f.offset + t)
    x = grid.nodes + t
    vals = f.at(x)
    der = None if f.derivative is None else np.stack(
        [np.interp(x, f.grid.nodes, f.derivative[:, i], right=0.0) for i in range(f.dim)], -1)
    return Curve(grid, vals, der)


def evaluate(f, x):
    """ev_x(f) = f(x) for 0 <= x <= x_max."""
    if x < 0 or x > f.grid.x_max:
        raise OutOfDomain(f"x={x} outside [0, {f.grid.x_max}]")
    return f.at(np.array([x]))[0]


def rkhs_constant(w, x, L=None, literal=False):
    """Constant C_x with |f(x)| <= C_x |f|_{H^1_w}.

    C_x^2 = 2 / |w|_{L^1(x,L)} * (|1/w|_{L^1(0,L)} |w|_{L^1(0,L)} + 1).
    With ``literal=True`` the |1/w| factor is squared.  When ``L`` is None
    the constant is minimized over L in x + {1/4, ..., 16}.
    """
    if w.beta >= 1.0:
        raise WeightNotAdmissible("1/w is not integrable at 0 for beta >= 1")
    if L is None:
        return min(rkhs_constant(w, x, x + s, literal) for s in 2.0 ** np.arange(-2, 5))
    if not L > x >= 0:
        raise ValueError("need L > x >= 0")
    c, b = w.c, w.beta
    w_0l = integrate.quad(lambda s: np.exp(-c * s), 0, L, weight="alg", wvar=(b, 0))[0]
    w_xl = w_0l if x == 0 else integrate.quad(w, x, L)[0]
    winv = integrate.quad(lambda s: np.exp(c * s), 0, L, weight="alg", wvar=(-b, 0))[0]
    if not np.isfinite(winv):
        raise WeightNotAdmissible("1/w not integrable")
    winv_f = winv ** 2 if literal else winv
    return float(np.sqrt(2.0 / w_xl * (winv_f * w_0l + 1.0)))


@dataclass
class AdmissibilityReport:
    t: np.ndarray
    sup_ratio: np.ndarray
    bound: np.ndarray

    @property
    def ratio_to_bound(self):
        return self.sup_ratio / self.bound

    @property
    def passed(self):
        return bool(np.all(np.isfinite(self.sup_ratio)) and
                    np.all(self.ratio_to_bound <= 1.0 + 1e-12))


def check_admissible(w, t_sweep, s_span=200.0, n_s=20000):
    """sup_{s > t} w(s - t) / w(s) on a fine s grid vs the bound e^{c t}."""
    ts = np.atleast_1d(np.asarray(t_sweep, dtype=float))
    sups = []
    for t in ts:
        if t == 0:
            sups.append(1.0)
            continue
        s = t + np.geomspace(1e-8, s_span, n_s)
        sups.append(float(np.max(w(s - t) / w(s))))
    return AdmissibilityReport(ts, np.asarray(sups), np.exp(w.c * ts))


# -- node-value calculus ------------------------------------------------------

def _hat_basis(grid, w, n=8):
    """Quadrature points with the two hat functions (and slopes) per cell."""
    pts, wts, cells = grid.cell_rule(w.beta, w.c, n)
    x = grid.nodes
    h = x[cells + 1] - x[cells]
    right = (pts - x[cells]) / h
    return pts, wts, cells, 1.0 - right, right, 1.0 / h


def gram_h1w(grid, w, n=8):
    """Gram matrix M with <f, g>_{H^1_w} = f^T M g for piecewise-linear curves."""
    pts, wts, cells, left, right, dh = _hat_basis(grid, w, n)
    J = len(grid)
    M = np.zeros((J, J))
    for a, pa, sa in ((cells, left, -dh), (cells + 1, right, dh)):
        for b, pb, sb in ((cells, left, -dh), (cells + 1, right, dh)):
            np.add.at(M, (a, b), wts * (pa * pb + sa * sb))
    return M


def hat_functional(grid, g, w, n=8):
    """Weights c (J+1, d) with <f, g>_{H^1_w} = sum_j c_j . f(x_j) for
    piecewise-linear f; ``g`` is a Curve (analytic or node values)."""
    pts, wts, cells, left, right, dh = _hat_basis(grid, w, n)
    gv = g.at(pts)
    gd = g.deriv_at(pts, cells)
    out = np.zeros((len(grid), gv.shape[1]))
    np.add.at(out, cells, wts[:, None] * (left[:, None] * gv - dh[:, None] * gd))
    np.add.at(out, cells + 1, wts[:, None] * (right[:, None] * gv + dh[:, None] * gd))
    return out


def node_norms_h1w(values, grid, w, M=None):
    """Discrete H^1_w norms of node-value curves ``values`` (..., J+1, d)."""
    M = gram_h1w(grid, w) if M is None else M
    sq = np.einsum("...id,ij,...jd->...", values, M, values)
    return np.sqrt(np.maximum(sq, 0.0))
