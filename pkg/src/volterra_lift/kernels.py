"""Convolution kernels, their shifts and derivatives, and resolvents.

Kernels are diagonal: a ``KernelSpec`` of dimension ``d`` acts as
``K(t) = diag(k_1(t), ..., k_d(t))``.  Scalar kinds replicate one scalar
kernel on the diagonal, ``diagonal-composite`` stores one scalar kernel per
entry.  Every kernel carries an analytic shift, so ``S(delta)K`` is again a
``KernelSpec`` and is never obtained by index shifting.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.linalg import solve_triangular
from scipy.special import gamma as gamma_fn

from . import quadrature as quad
from .errors import (GridTooCoarse, HypothesisViolated, NegativeKernel,
                     NonPositiveTime, SingularAtOrigin)

KINDS = ("power-law", "exponential", "tabulated", "diagonal-composite",
         "exp-mixture")


def _pow_diff(a, b, p):
    """b**p - a**p for 0 <= a <= b, p > 0, without cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    safe = np.where(a > 0, a, 1.0)
    rel = np.expm1(p * np.log1p((b - a) / safe)) * safe ** p
    return np.where(a > 0, rel, b ** p)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A diagonal convolution kernel with analytic shift.

    Parameters
    ----------
    kind : str
        One of ``power-law``, ``exponential``, ``tabulated``,
        ``diagonal-composite``, ``exp-mixture``.
    hurst : float, optional
        Hurst index H in (0, 1) for the power-law kernel t**(H - 1/2).
    rate : float, optional
        Decay rate c >= 0 of the exponential kernel exp(-c t).
    dim : int
        Matrix dimension d.
    gamma_normalized : bool
        Divide the power-law kernel by Gamma(H + 1/2).
    shift : float
        Accumulated analytic shift; the kernel evaluates k(shift + t).
    """

    kind: str
    hurst: float = None
    rate: float = None
    dim: int = 1
    gamma_normalized: bool = False
    shift: float = 0.0
    table_t: np.ndarray = field(default=None, repr=False)
    table_v: np.ndarray = field(default=None, repr=False)
    components: tuple = ()
    nodes: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "power-law" and not (0.0 < self.hurst < 1.0):
            raise ValueError("power-law kernel needs H in (0, 1)")
        if self.kind == "exponential" and not self.rate >= 0.0:
            raise ValueError("exponential kernel needs rate >= 0")
        if self.kind == "diagonal-composite":
            if any(c.kind == "diagonal-composite" or c.dim != 1 for c in self.components):
                raise ValueError("components must be scalar kernels")
            object.__setattr__(self, "dim", len(self.components))
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.dim < 1:
            raise ValueError("dim must be positive")

    # -- constructors -------------------------------------------------------
    @classmethod
    def power_law(cls, hurst, gamma_normalized=False, dim=1):
        return cls("power-law", hurst=float(hurst), dim=dim,
                   gamma_normalized=bool(gamma_normalized))

    @classmethod
    def exponential(cls, rate=1.0, dim=1):
        return cls("exponential", rate=float(rate), dim=dim)

    @classmethod
    def tabulated(cls, t, values, dim=1):
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or np.any(np.diff(t) <= 0):
            raise ValueError("tabulated kernel needs increasing 1-d nodes")
        return cls("tabulated", dim=dim, table_t=t, table_v=v)

    @classmethod
    def exp_mixture(cls, nodes, weights, dim=1):
        z = np.asarray(nodes, dtype=float)
        w = np.asarray(weights, dtype=float)
        if z.shape != w.shape or np.any(z < 0):
            raise ValueError("mixture needs matching nonnegative nodes")
        return cls("exp-mixture", dim=dim, nodes=z, weights=w)

    @classmethod
    def diagonal(cls, *components):
        return cls("diagonal-composite", components=tuple(components),
                   dim=len(components))

    # -- structure ------------------------------------------------------------
    def shifted(self, delta):
        """S(delta)K as a kernel: t -> K(delta + t)."""
        if delta < 0:
            raise NonPositiveTime("shift must be nonnegative")
        if self.kind == "diagonal-composite":
            return replace(self, components=tuple(c.shifted(delta) for c in self.components))
        return replace(self, shift=self.shift + delta)

    @property
    def scalars(self):
        """Scalar kernel of each diagonal entry."""
        if self.kind == "diagonal-composite":
            return self.components
        return (self,) * self.dim

    @property
    def norm_const(self):
        if self.kind == "power-law" and self.gamma_normalized:
            return float(gamma_fn(self.hurst + 0.5))
        return 1.0

    @property
    def alpha(self):
        return self.hurst - 0.5

    def is_singular(self):
        """True when some entry blows up at t = 0."""
        return any(c.kind == "power-law" and c.hurst < 0.5 and c.shift == 0.0
                   for c in self.scalars)

    def is_completely_monotone(self):
        return all(c.kind in ("exponential", "exp-mixture") or
                   (c.kind == "power-law" and c.hurst <= 0.5)
                   for c in self.scalars)

    # -- scalar primitives (single-entry kernels) -----------------------------
    def _k(self, tau, order=0):
        """Scalar kernel (or its derivative) at tau = shift + t >= 0."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "power-law":
            a = self.alpha
            coef = {0: 1.0, 1: a, 2: a * (a - 1.0)}[order]
            if coef == 0.0:
                return np.zeros_like(tau)
            with np.errstate(divide="ignore"):
                out = coef * np.power(tau, a - order) / self.norm_const
            return out
        if self.kind == "exponential":
            return (-self.rate) ** order * np.exp(-self.rate * tau)
        if self.kind == "exp-mixture":
            z = self.nodes
            e = np.exp(-np.multiply.outer(tau, z))
            return e @ (self.weights * (-z) ** order)
        # tabulated: linear interpolation, derivatives by central differences
        t, v = self.table_t, self.table_v
        for _ in range(order):
            v = np.gradient(v, t)
        return np.interp(tau, t, v, right=0.0)

    def _cell(self, a, b, s, power):
        """int_a^b k(u + s)**power du for power in {1, 2}; s includes shift."""
        lo = np.asarray(a, dtype=float) + s
        hi = np.asarray(b, dtype=float) + s
        if self.kind == "power-law":
            p = power * self.alpha + 1.0
            return _pow_diff(lo, hi, p) / p / self.norm_const ** power
        if self.kind == "exponential":
            c = power * self.rate
            if c == 0.0:
                return hi - lo
            return np.exp(-c * lo) * (-np.expm1(-c * (hi - lo))) / c
        if self.kind == "exp-mixture":
            z, w = self.nodes, self.weights
            if power == 1:
                zz, ww = z, w
            else:
                zz = (z[:, None] + z[None, :]).ravel()
                ww = (w[:, None] * w[None, :]).ravel()
            L = np.multiply.outer(lo, zz)
            U = np.multiply.outer(hi, zz)
            pos = zz > 0
            e = np.exp(-L) * (-np.expm1(L - U)) / np.where(pos, zz, 1.0)
            e = np.where(pos, e, (hi - lo)[..., None])
            return e @ ww
        # tabulated: adaptive quadrature of the interpolant
        f = (lambda u: self._k(u)) if power == 1 else (lambda u: self._k(u) ** 2)
        lo_b, hi_b = np.broadcast_arrays(lo, hi)
        out = np.empty(lo_b.shape)
        for idx in np.ndindex(lo_b.shape):
            pts = self.table_t[(self.table_t > lo_b[idx]) & (self.table_t < hi_b[idx])]
            out[idx] = integrate.quad(f, lo_b[idx], hi_b[idx], limit=200,
                                      points=pts[:100] if len(pts) else None)[0]
        return out

    def _moment(self, a, b, s):
        """int_a^b u k(u + s) du (first moment over a cell)."""
        lo = np.asarray(a, dtype=float)
        hi = np.asarray(b, dtype=float)
        if self.kind == "power-law":
            a_ = self.alpha
            v_lo, v_hi = lo + s, hi + s
            m2 = _pow_diff(v_lo, v_hi, a_ + 2.0) / (a_ + 2.0)
            m1 = _pow_diff(v_lo, v_hi, a_ + 1.0) / (a_ + 1.0)
            return (m2 - s * m1) / self.norm_const
        if self.kind == "exponential" and self.rate > 0:
            c = self.rate

            def prim(u):
                return -(u / c + 1.0 / c ** 2) * np.exp(-c * (u + s))
            return prim(hi) - prim(lo)
        if self.kind == "exponential":
            return 0.5 * (hi ** 2 - lo ** 2)
        lo_b, hi_b = np.broadcast_arrays(lo, hi)
        out = np.empty(lo_b.shape)
        for idx in np.ndindex(lo_b.shape):
            out[idx] = integrate.quad(lambda u: u * self._k(u + s), lo_b[idx], hi_b[idx])[0]
        return out

    # -- vectorized diagonal access -----------------------------------------
    def diag(self, t, order=0):
        """Diagonal entries k_i^{(order)}(t) with shape t.shape + (d,)."""
        t = np.asarray(t, dtype=float)
        return np.stack([c._k(c.shift + t, order) for c in self.scalars], axis=-1)

    def cell_integrals(self, a, b, x=0.0, power=1):
        """int_a^b k_i(u + x)**power du per diagonal entry, shape (..., d)."""
        return np.stack([c._cell(a, b, c.shift + x, power) for c in self.scalars], axis=-1)

    def cell_moments(self, a, b):
        """int_a^b u k_i(u) du per diagonal entry."""
        return np.stack([c._moment(a, b, c.shift) for c in self.scalars], axis=-1)

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise NonPositiveTime(f"kernel evaluated at negative time {t.min()}")
        if self.is_singular() and np.any(t == 0):
            raise SingularAtOrigin("singular kernel evaluated at t = 0")
        return t


# -- public operations ------------------------------------------------------

def eval(kernel, t):
    """K(t) as a d x d matrix (or stack of matrices for array t)."""
    t = kernel._check_time(t)
    return _as_matrix(kernel.diag(t))


def eval_shifted(kernel, delta, x):
    """(S(delta)K)(x) = K(delta + x); delta > 0."""
    if delta <= 0:
        raise NonPositiveTime("shift must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise NonPositiveTime("negative spatial argument")
    return _as_matrix(kernel.shifted(delta).diag(x))


def derivative(kernel, t):
    """Time derivative of K at t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise NonPositiveTime("negative time")
    if np.any(t == 0) and any(c.shift == 0.0 and c.kind == "power-law" and c.hurst != 0.5
                              for c in kernel.scalars):
        raise SingularAtOrigin("derivative of the power-law kernel at t = 0")
    return _as_matrix(kernel.diag(t, order=1))


def _as_matrix(diag):
    d = diag.shape[-1]
    out = np.zeros(diag.shape + (d,))
    idx = np.arange(d)
    out[..., idx, idx] = diag
    return out


# -- grids and resolvents ---------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n T / n_steps, n = 0..n_steps."""

    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and n_steps >= 1")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def nodes(self):
        return np.arange(self.n_steps + 1) * self.dt

    def refine(self, factor=2):
        return TimeGrid(self.T, self.n_steps * factor)

    def index(self, t, tol=1e-9):
        """Index of a grid node, raising if t is off-grid."""
        n = int(round(t / self.dt))
        if abs(n * self.dt - t) > tol * max(1.0, abs(t)) or not 0 <= n <= self.n_steps:
            raise ValueError(f"time {t} is not a grid node")
        return n


@dataclass(frozen=True, eq=False)
class ResolventGrid:
    """Resolvent values on a uniform grid.

    ``values[n]`` is a d x d matrix for the second kind and a scalar for
    the first-kind (Gronwall) resolvent.  ``values[0]`` may be infinite
    for singular kernels.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: str

    @property
    def t(self):
        return self.grid.nodes

    def to_csv(self, path):
        vals = self.values.reshape(len(self.values), -1)
        header = "t," + ",".join(f"value{i}" for i in range(vals.shape[1]))
        np.savetxt(path, np.column_stack([self.t, vals]), delimiter=",",
                   header=header, comments="")


STABILITY_THRESHOLD = 0.5


def _lag_integrals(kernel, grid):
    """A[j] = int_{j dt}^{(j+1) dt} K, j = 0..N-1, shape (N, d)."""
    dt = grid.dt
    j = np.arange(grid.n_steps)
    return kernel.cell_integrals(j * dt, (j + 1) * dt)


def _second_kind_from_lags(k_nodes, A, a, threshold):
    """Implicit right-endpoint product rule for aK - R = aK * R.

    k_nodes : (N+1, d) kernel diagonal at the nodes
    A       : (N, d) lag cell integrals
    a       : (d, d) matrix
    """
    N, d = A.shape
    R = np.zeros((N + 1, d, d))
    with np.errstate(invalid="ignore"):
        R[0] = a * k_nodes[0][None, :]  # a @ diag(k(0))
    lhs = np.eye(d) + a * A[0][None, :]
    if np.linalg.norm(a * A[0][None, :], 2) >= threshold:
        raise GridTooCoarse(
            f"|a| * int_0^dt K = {np.linalg.norm(a * A[0][None, :], 2):.3g} exceeds {threshold}")
    # column-scaled a: (a diag(A_j)) R_k
    aA = a[None, :, :] * A[:, None, :]  # (N, d, d)
    for n in range(1, N + 1):
        rhs = a * k_nodes[n][None, :]
        if n > 1:
            # sum_{k=1}^{n-1} a A_{n-k} R_k, lag index n-k in 1..n-1
            lags = aA[n - 1:0:-1]        # lag n-1 ... 1 for k = 1..n-1
            if d == 1:
                rhs = rhs - lags[:, 0, 0] @ R[1:n, 0, 0]
            else:
                rhs = rhs - np.einsum("kij,kjl->il", lags, R[1:n])
        R[n] = rhs / lhs if d == 1 else np.linalg.solve(lhs, rhs)
    return R


def resolvent_second_kind(kernel, a, grid, threshold=STABILITY_THRESHOLD):
    """Resolvent R_a of aK on a uniform grid: aK - R_a = aK * R_a.

    Forward substitution, implicit in the current node, with exact cell
    integrals of K and R taken piecewise constant (right endpoint) per
    cell.  First order in the step.

    Raises
    ------
    GridTooCoarse
        If ``|a| int_0^dt K`` reaches ``threshold``.
    """
    d = kernel.dim
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape == (1, 1) and d > 1:
        a = a[0, 0] * np.eye(d)
    if a.shape != (d, d):
        raise ValueError("a must be a d x d matrix")
    with np.errstate(divide="ignore"):
        k_nodes = kernel.diag(grid.nodes)
    A = _lag_integrals(kernel, grid)
    R = _second_kind_from_lags(k_nodes, A, a, threshold)
    return ResolventGrid(grid, R, "second-kind")


def scalar_resolvent(k, grid, cell_integrals=None, threshold=STABILITY_THRESHOLD):
    """Resolvent r of a nonnegative scalar kernel: r - k = r * k.

    ``k`` is either a scalar ``KernelSpec`` or an array of node values
    ``k(t_n)``.  For arrays the cell integrals default to the trapezoid
    rule (a non-finite endpoint value is replaced by its neighbour) unless
    ``cell_integrals`` is given.
    """
    if isinstance(k, KernelSpec):
        if k.dim != 1:
            raise ValueError("scalar resolvent needs a scalar kernel")
        with np.errstate(divide="ignore"):
            vals = k.diag(grid.nodes)[:, 0]
        A = _lag_integrals(k, grid)[:, 0]
    else:
        vals = np.asarray(k, dtype=float)
        if vals.shape != (grid.n_steps + 1,):
            raise ValueError("k must hold one value per grid node")
        if cell_integrals is None:
            lo, hi = vals[:-1].copy(), vals[1:].copy()
            lo[~np.isfinite(lo)] = hi[~np.isfinite(lo)]
            A = 0.5 * grid.dt * (lo + hi)
        else:
            A = np.asarray(cell_integrals, dtype=float)
    finite = vals[np.isfinite(vals)]
    if np.any(finite < 0) or np.any(A < 0) or np.any(np.isneginf(vals)):
        raise NegativeKernel("scalar resolvent needs k >= 0")
    R = _second_kind_from_lags(vals[:, None], A[:, None], -np.eye(1), threshold)
    return ResolventGrid(grid, -R[:, 0, 0], "first-kind")


def _conv_lags(weights, values):
    """c_n = sum_{k=0}^{n-1} weights[n-1-k] values[k] for n = 1..N."""
    N = len(weights)
    return np.convolve(weights, values[:N])[:N]


def resolvent_residual(kernel, a, res):
    """Sup-norm residual of aK - R - aK * R using a piecewise-linear R.

    The convolution is evaluated by exact product integration of K against
    the linear interpolant of the computed nodes, independently of the
    piecewise-constant rule used by the solver.  Scalar kernels and scalar
    ``a`` only; for the first-kind resolvent pass ``a = -1`` and ``-r``.
    """
    if kernel.dim != 1:
        raise ValueError("residual check is scalar")
    grid = res.grid
    dt, N = grid.dt, grid.n_steps
    vals = np.asarray(res.values, dtype=float).reshape(N + 1)
    if res.kind == "first-kind":
        vals = -vals
        a = -1.0
    a = float(np.asarray(a).reshape(-1)[0])
    j = np.arange(N)
    lo, hi = j * dt, (j + 1) * dt
    A = kernel.cell_integrals(lo, hi)[:, 0]
    M = kernel.cell_moments(lo, hi)[:, 0]
    C = (hi * A - M) / dt         # weight on the right node of each cell
    left = vals.copy()
    if not np.isfinite(left[0]):
        left[0] = left[1]
    conv = _conv_lags(A - C, left[:-1]) + _conv_lags(C, vals[1:])
    with np.errstate(divide="ignore"):
        k = kernel.diag(grid.nodes[1:])[:, 0]
    r = a * k - vals[1:] - a * conv
    return np.max(np.abs(r))


# -- Volterra-Gronwall --------------------------------------------------------

@dataclass(frozen=True)
class GronwallReport:
    passed: bool
    min_slack: float
    bound: np.ndarray


def _toeplitz_lower(A):
    N = len(A)
    idx = np.arange(N)
    lag = idx[:, None] - idx[None, :]
    T = np.where(lag >= 0, A[np.clip(lag, 0, N - 1)], 0.0)
    return T


def verify_gronwall(x, f, k, grid, tol=1e-12):
    """Check x <= f + r * f given x <= f + k * x on the grid.

    The convolution k * x at node n is the right-endpoint product rule
    sum_{i=1}^{n} A_{n-i+1} x_i with trapezoid cell integrals A of k; its
    resolvent operator is (I - T_A)^{-1} - I, which maps the precondition
    onto the conclusion exactly.  Node 0 is checked as x_0 <= f_0.

    Raises
    ------
    HypothesisViolated
        If the precondition fails at some node (beyond ``tol``).
    """
    x, f, k = (np.asarray(v, dtype=float) for v in (x, f, k))
    if np.any(k[np.isfinite(k)] < 0):
        raise NegativeKernel("Gronwall kernel must be nonnegative")
    lo, hi = k[:-1].copy(), k[1:].copy()
    lo[~np.isfinite(lo)] = hi[~np.isfinite(lo)]
    A = 0.5 * grid.dt * (lo + hi)
    if A[0] >= 1.0:
        raise GridTooCoarse("int_0^dt k >= 1: discrete resolvent not positive")
    T = _toeplitz_lower(A)
    scale = tol * (1.0 + np.abs(f) + np.abs(x))
    pre = f[1:] + T @ x[1:] - x[1:]
    if x[0] > f[0] + scale[0] or np.any(pre < -scale[1:]):
        n = int(np.argmin(np.concatenate([[f[0] - x[0]], pre])))
        raise HypothesisViolated(f"x <= f + k*x fails at node {n}")
    bound = np.empty_like(f)
    bound[0] = f[0]
    bound[1:] = solve_triangular(np.eye(len(A)) - T, f[1:], lower=True)
    slack = bound - x
    return GronwallReport(bool(np.all(slack >= -scale)), float(slack.min()), bound)


# -- kernel conditions --------------------------------------------------------

def admissible_q_interval(hurst, beta):
    """(2, 2/(2-2H-beta)) for the power-law kernel with weight x^beta e^{-x}.

    Returns ``None`` when the interval is empty; the upper end is ``inf``
    when 2 - 2H - beta <= 0 and for the constant kernel H = 1/2.
    """
    if hurst == 0.5:
        return (2.0, np.inf)
    nu = 2.0 - 2.0 * hurst - beta
    if nu >= 1.0:
        return None
    if nu <= 0.0:
        return (2.0, np.inf)
    return (2.0, 2.0 / nu)


def default_q(interval, fallback=8.0):
    """Midpoint of the admissible interval (``fallback`` if unbounded)."""
    if interval is None:
        raise ValueError("empty admissible interval")
    lo, hi = interval
    return 0.5 * (lo + hi) if np.isfinite(hi) else fallback


@dataclass
class KernelConditionReport:
    q: float
    T: float
    cond1: tuple
    cond2: tuple
    cond3: tuple
    admissible_q_interval: tuple
    cond2_exponent: float = None
    cond2_target: float = None

    @property
    def all_pass(self):
        return self.cond1[1] and self.cond2[1] and self.cond3[1]

    def rows(self):
        return [("cond_K1", self.cond1[0], self.cond1[1]),
                ("cond_K2_exponent", self.cond2[0], self.cond2[1]),
                ("cond_K3", self.cond3[0], self.cond3[1])]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("condition,value,pass\n")
            for name, v, ok in self.rows():
                fh.write(f"{name},{v!r},{int(ok)}\n")


def _x_rule(weight, x_max=40.0, x0=1e-14, n=12):
    """Quadrature over (0, x_max) with the weight folded into the weights."""
    edges = np.concatenate([[0.0], x0 * 2.0 ** np.arange(0, np.ceil(np.log2(x_max / x0)))])
    edges = np.append(edges[edges < x_max], x_max)
    nodes, w = quad.panel_rule(edges[1:], n)
    xj, wj = quad.gauss_jacobi_left(n, weight.beta)
    nodes = np.concatenate([x0 * xj, nodes])
    # innermost panel: Gauss-Jacobi carries x^beta, the rest carry w(x)
    w = np.concatenate([x0 ** (1 + weight.beta) * wj * np.exp(-weight.c * x0 * xj),
                        w * weight(nodes[n:])])
    return nodes, w


def _h1_sq(kernel, t, xs, wx, order=0):
    """|k^{(order)}(t + .)|^2_{H^1_w} for the first diagonal entry, t array."""
    k = kernel.scalars[0]
    arg = k.shift + np.add.outer(t, xs)
    f0 = k._k(arg, order)
    f1 = k._k(arg, order + 1)
    return (f0 ** 2 + f1 ** 2) @ wx


def _power_singular_integral(fun, T, depth=36, n=10):
    """int_0^T fun(t) dt for fun ~ t^-kappa near 0; returns (value, kappa).

    kappa is fitted from the two innermost panel edges; the innermost panel
    is integrated exactly for that power.  ``inf`` when kappa >= 1.
    """
    cuts = T * 2.0 ** -np.arange(depth, -1, -1, dtype=float)
    t1, t2 = cuts[0], cuts[2]
    f1, f2 = fun(np.array([t1, t2]))
    kappa = -np.log(f2 / f1) / np.log(t2 / t1) if f1 > 0 and f2 > 0 else 0.0
    if kappa >= 1.0:
        return np.inf, kappa
    x, w = quad.panel_rule(cuts, n)
    body = w @ fun(x)
    head = f1 * t1 / (1.0 - kappa) if f1 > 0 else 0.0
    return float(body + head), float(kappa)


def verify_assumptions(kernel, weight, q, T, x_max=40.0, h_sweep=None, tol=0.05):
    """Numerically check the three integrability conditions on K.

    1. int_0^T |K(t+.)|^q_{H^1_w} dt finite (local exponent of the
       integrand at 0 below 1).
    2. int_0^T |K(t+.) - K(t+h+.)|^2_{H^1_w} dt ~ h^e with fitted e at
       least 1 - 2/q - tol over a dyadic h sweep.
    3. int_0^T (int_0^T |K'(s+r+.)|^2_{H^1_w} ds)^{1/2} dr finite.

    Only the first diagonal entry is examined (entries are checked one at
    a time by the caller for composite kernels).  Failures are report
    entries, never exceptions.
    """
    if q <= 2:
        raise ValueError("q must exceed 2")
    xs, wx = _x_rule(weight, x_max)
    k0 = kernel.scalars[0]
    interval = None
    if k0.kind == "power-law":
        interval = admissible_q_interval(k0.hurst, weight.beta)
    elif k0.kind in ("exponential", "exp-mixture"):
        interval = (2.0, np.inf)

    # condition 1
    def g_q(t):
        return _h1_sq(kernel, t, xs, wx) ** (q / 2.0)
    v1, _ = _power_singular_integral(g_q, T)
    cond1 = (v1, bool(np.isfinite(v1)))

    # condition 2: fitted exponent over h = 2^-3 .. 2^-10 (times T)
    hs = T * 2.0 ** -np.arange(3, 11) if h_sweep is None else np.asarray(h_sweep)
    cuts = T * 2.0 ** -np.arange(40, -1, -1, dtype=float)
    tq, wq = quad.panel_rule(cuts, 10)
    E = []
    for h in hs:
        arg0 = k0.shift + np.add.outer(tq, xs)
        d0 = k0._k(arg0) - k0._k(arg0 + h)
        d1 = k0._k(arg0, 1) - k0._k(arg0 + h, 1)
        vals = (d0 ** 2 + d1 ** 2) @ wx
        E.append(wq @ vals + vals[0] * cuts[0])
    E = np.asarray(E)
    slope = np.polyfit(np.log(hs), np.log(E), 1)[0]
    target = 1.0 - 2.0 / q
    cond2 = (float(slope), bool(slope >= target - tol))

    # condition 3
    def inner(r):
        out = np.empty(len(r))
        for i, ri in enumerate(r):
            edges = quad.geometric_edges(0.0, T, max(ri, 1e-15) / 2.0)
            s, ws = quad.panel_rule(edges, 8)
            out[i] = ws @ _h1_sq(kernel, ri + s, xs, wx, order=1)
        return np.sqrt(out)
    v3, _ = _power_singular_integral(inner, T, depth=30, n=6)
    cond3 = (v3, bool(np.isfinite(v3)))
    return KernelConditionReport(q, T, cond1, cond2, cond3, interval, float(slope), target)
