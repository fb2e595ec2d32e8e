"""Monte Carlo solver for stochastic Volterra equations with singular kernels.

    X_t = X_0(t) + int_0^t K(t-s) b(X_s) ds + int_0^t K(t-s) sigma(X_s) dW_s

Left-point scheme: the drift uses exact cell integrals of K, the noise the
cell L^2-mean of K (``engine``).  Increments are drawn per path from a
counter-based generator, so a path's numbers depend only on
(seed, path index).
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from . import coefficients as coef
from . import parallel, rng
from .curves import (ConstantCurve, InitialCurve, StationaryOUCurve, TypeIFBmCurve)
from .engine import lag_weights, run_scheme
from .errors import GridMismatch, MissingLift
from .kernels import KernelSpec, TimeGrid
from .wspace import WeightSpec


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error."""

    mean: float
    std_error: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples):
        s = np.asarray(samples, dtype=float).ravel()
        if len(s) < 2:
            raise ValueError("an estimate needs at least two samples")
        return cls(float(s.mean()), float(s.std(ddof=1) / np.sqrt(len(s))), len(s))

    def z_score(self, target=0.0):
        if self.std_error == 0.0:
            return 0.0 if self.mean == target else np.inf
        return (self.mean - target) / self.std_error

    def within(self, target=0.0, k=3.0, extra=0.0):
        """|mean - target| <= k std_error + extra."""
        return abs(self.mean - target) <= k * self.std_error + extra

    def __sub__(self, other):
        """Difference of independent estimates."""
        return MCEstimate(self.mean - other.mean,
                          float(np.hypot(self.std_error, other.std_error)),
                          min(self.n_samples, other.n_samples))

    def as_dict(self):
        return {"estimate": self.mean, "std_error": self.std_error, "n_samples": self.n_samples}


@dataclass(frozen=True, eq=False)
class SVEModel:
    """Kernel, coefficients, initial curve and weight of an SVE."""

    kernel: KernelSpec
    coeffs: coef.Coefficients
    x0: InitialCurve
    weight: WeightSpec = None
    name: str = "custom"

    def __post_init__(self):
        if self.kernel.dim != self.coeffs.d or self.x0.dim != self.coeffs.d:
            raise ValueError("kernel, coefficients and initial curve disagree on d")

    @property
    def d(self):
        return self.coeffs.d

    @property
    def m(self):
        return self.coeffs.m

    def with_x0(self, x0):
        return SVEModel(self.kernel, self.coeffs, x0, self.weight, self.name)

    def with_coeffs(self, coeffs):
        return SVEModel(self.kernel, coeffs, self.x0, self.weight, self.name)

    def describe(self):
        k = self.kernel
        parts = [f"{c.kind}:{c.hurst}:{c.rate}:{c.gamma_normalized}:{c.shift!r}"
                 for c in k.scalars]
        w = None if self.weight is None else (self.weight.beta, self.weight.c)
        return f"{self.name}|{parts}|{self.coeffs.describe()}|{self.x0.describe()}|{w}"

    def fingerprint(self):
        return hashlib.sha256(self.describe().encode()).hexdigest()[:16]

    @property
    def hurst(self):
        hs = [c.hurst for c in self.kernel.scalars if c.kind == "power-law"]
        return min(hs) if hs else None


def default_beta(hurst):
    """Weight exponent in the middle of the admissible window."""
    if hurst is None or hurst >= 0.5:
        return 0.5
    return 1.0 - hurst


def preset(name, hurst=0.3, beta=None, x0=0.0, dt=1.0 / 64, **kw):
    """Models used throughout the package.

    brownian, fbm2 (Riemann-Liouville), fbm1 (Mandelbrot-van Ness, history
    discretized at ``dt``), stationary-ou, rbergomi, rbergomi-smooth,
    rheston, smooth, linear, gaussian.
    """
    H = 0.5 if name == "brownian" else float(hurst)
    pl = KernelSpec.power_law(H, gamma_normalized=True)
    if name in ("rbergomi", "rbergomi-smooth", "rheston"):
        kern = KernelSpec.diagonal(KernelSpec.power_law(0.5), pl)
        v0 = kw.pop("v0", np.log(0.2) if name != "rheston" else 0.04)
        curve = ConstantCurve([0.0, v0])
        c = {"rbergomi": coef.rough_bergomi, "rbergomi-smooth": coef.rough_bergomi_smooth,
             "rheston": coef.rough_heston}[name](**kw)
    elif name == "stationary-ou":
        kern = KernelSpec.exponential(kw.pop("rate", 1.0))
        c = coef.gaussian(kw.pop("sigma", 1.0))
        curve = StationaryOUCurve(kern.rate, c.sf.f(0.0).item())
        H = None
    else:
        kern = KernelSpec.power_law(0.5) if name == "brownian" else pl
        if name in ("brownian", "fbm2", "fbm1", "gaussian"):
            c = coef.gaussian(kw.pop("sigma", 1.0))
        elif name == "smooth":
            c = coef.smooth(**kw)
        elif name == "linear":
            c = coef.linear(kw.pop("a", -0.5), kw.pop("sigma", 1.0))
        else:
            raise ValueError(f"unknown preset {name!r}")
        curve = x0 if isinstance(x0, InitialCurve) else ConstantCurve([x0])
        if name == "fbm1":
            curve = TypeIFBmCurve(H, dt)
    if isinstance(x0, InitialCurve) and name not in ("fbm1", "stationary-ou"):
        curve = x0
    b = default_beta(H) if beta is None else beta
    w = WeightSpec(b, 1.0, H if (H is not None and H < 0.5) else None)
    return SVEModel(kern, c, curve, w, name)


@dataclass(eq=False)
class PathEnsemble:
    """Simulated paths X (P, N+1, d), increments dW (P, N, m) and sources."""

    grid: TimeGrid
    X: np.ndarray
    dW: np.ndarray
    seed: int
    fingerprint: str
    delta: float = 0.0
    D: np.ndarray = field(default=None, repr=False)
    G: np.ndarray = field(default=None, repr=False)

    @property
    def n_paths(self):
        return self.X.shape[0]

    def to_csv(self, path):
        P, T1, d = self.X.shape
        pi = np.repeat(np.arange(P), T1)
        t = np.tile(self.grid.nodes, P)
        cols = np.column_stack([pi, t, self.X.reshape(P * T1, d)])
        hdr = "path,t," + ",".join(f"X{i + 1}" for i in range(d))
        np.savetxt(path, cols, delimiter=",", header=hdr, comments="",
                   fmt=["%d", "%.17g"] + ["%.17g"] * d)


# -- scheme plumbing ----------------------------------------------------------

def model_step(coeffs, dW):
    """Source function (k, X_k) -> (b(X_k), sigma(X_k) dW_k)."""
    def step(k, x):
        return coeffs.b(x), np.einsum("pdm,pm->pd", coeffs.sigma(x), dW[:, k])
    return step


@dataclass(frozen=True, eq=False)
class SchemeWeights:
    A0: np.ndarray
    B0: np.ndarray
    Ax: np.ndarray = None
    Bx: np.ndarray = None
    x: np.ndarray = None

    @classmethod
    def build(cls, kernel, grid, x=None):
        A0, B0 = lag_weights(kernel, grid.dt, grid.n_steps, 0.0)
        if x is None:
            return cls(A0[:, 0], B0[:, 0])
        x = np.asarray(x, dtype=float)
        Ax, Bx = lag_weights(kernel, grid.dt, grid.n_steps, x)
        return cls(A0[:, 0], B0[:, 0], Ax, Bx, x)


def run_model(model, grid, weights, curve, paths, seed, dW, n0=0, store=(), step=None,
              prefix=None, first_state=None):
    """Run the scheme on a block of paths from (t_{n0}, curve).

    ``curve`` must already be restricted to the block; it is evaluated at
    t_n - t_{n0} (+ x) with ``paths`` and ``seed`` keying random curves.
    With ``prefix`` the free term is evaluated at absolute times instead
    and the prefix sources enter the sums (continuation of a run).
    """
    P = len(paths)
    t_rel = grid.nodes[n0:] - (0.0 if prefix is not None else grid.nodes[n0])
    free0 = curve.values(t_rel, paths, seed)
    free_x = None
    zero = ()
    if store:
        s_rel = grid.nodes[list(store)] - (0.0 if prefix is not None else grid.nodes[n0])
        zz = np.add.outer(s_rel, weights.x).ravel()
        free_x = curve.values(zz, paths, seed)
        free_x = free_x.reshape(free_x.shape[0], len(store), len(weights.x), -1)
        zero = tuple(np.flatnonzero(weights.x == 0.0))
    if step is None:
        step = model_step(model.coeffs, dW)
    if first_state is None and prefix is None and getattr(curve, "singular", False):
        # ev_0 of a singular curve is undefined: singular terms enter by cell mean
        first_state = np.broadcast_to(curve.start_value(grid.dt, paths, seed), (P, curve.dim))
    return run_scheme(weights.A0, weights.B0, free0, step, n0, grid.n_steps, P,
                      prefix=prefix, first_state=first_state, Ax=weights.Ax, Bx=weights.Bx,
                      free_x=free_x, store=store, x_zero=zero)


def _kernel(model, delta):
    return model.kernel.shifted(delta) if delta else model.kernel


def simulate(model, grid, n_paths, seed, threads=None, delta=0.0, keep_sources=True):
    """Simulate ``n_paths`` paths on a uniform grid.

    Returns a ``PathEnsemble``; with ``delta > 0`` the kernel is replaced by
    its shift S(delta)K while the increments stay the same.
    """
    if not isinstance(grid, TimeGrid):
        raise GridMismatch("simulate needs a uniform TimeGrid")
    N, m = grid.n_steps, model.m
    w = SchemeWeights.build(_kernel(model, delta), grid)

    def block(paths):
        dW = rng.brownian_increments(seed, paths, N, m, grid.dt)
        X, D, G, _ = run_model(model, grid, w, model.x0.for_paths(paths), paths, seed, dW)
        return X, dW, D, G

    res = parallel.map_blocks(block, n_paths, threads)
    D = parallel.concat(res, 2) if keep_sources else None
    G = parallel.concat(res, 3) if keep_sources else None
    return PathEnsemble(grid, parallel.concat(res, 0), parallel.concat(res, 1), seed,
                        model.fingerprint(), float(delta), D, G)


def simulate_mollified(model, delta, grid, n_paths, seed, threads=None):
    """Same scheme and increments with K replaced by S(delta)K, delta > 0."""
    if delta <= 0:
        raise ValueError("mollification needs delta > 0")
    return simulate(model, grid, n_paths, seed, threads, delta=delta)


# -- statistics ---------------------------------------------------------------

def moment_sup(ensemble, p):
    """Per-node estimates of E|X_t|^p and the largest of them."""
    if p < 1:
        raise ValueError("p must be at least 1")
    norms = np.linalg.norm(ensemble.X, axis=-1) ** p
    per = [MCEstimate.from_samples(norms[:, n]) for n in range(norms.shape[1])]
    return per, max(per, key=lambda e: e.mean)


def fbm2_variance(hurst, t):
    """Var of the Riemann-Liouville fBm: t^{2H} / (2H Gamma(H+1/2)^2)."""
    return t ** (2 * hurst) / (2 * hurst * gamma_fn(hurst + 0.5) ** 2)


def ito_formula_residual(ensemble, lift, f, s, t, component=0):
    """Per-path residual of the Ito formula for SVEs, as an estimate.

    f(X_t) - f(Y_s) - sum_k f'(Y_k) dY_k - 1/2 sum_k f''(Y_k) B_k^2 |sigma_k|^2 dt

    with Y_k = lambda(t_k, t - t_k) read from the coupled lift, dY_k the
    k-th scheme increment of X_t and B_k the noise weight of lag n_t - k.
    ``f`` is a ``Smooth1D`` acting on component ``component``.
    """
    if lift is None:
        raise MissingLift("the Ito residual needs the coupled lift ensemble")
    grid = ensemble.grid
    ns, nt = grid.index(s), grid.index(t)
    if nt < ns:
        raise ValueError("need s <= t")
    c = component
    Y = np.stack([lift.state(k).values(np.array([t - grid.nodes[k]]))[:, 0, c]
                  for k in range(ns, nt + 1)], axis=1)
    A, B = lag_weights(lift.kernel, grid.dt, max(nt, 1), 0.0)
    lag = nt - np.arange(ns, nt)
    a, bw = A[lag - 1, 0, c], B[lag - 1, 0, c]
    D, G = ensemble.D[:, ns:nt, c], ensemble.G[:, ns:nt, c]
    dY = a * D + bw * G
    coeffs_sigma2 = np.sum(lift.sigma_path[:, ns:nt, c, :] ** 2, axis=-1)
    X_t = ensemble.X[:, nt, c]
    r = (f(X_t) - f(Y[:, 0]) - np.sum(f.d1(Y[:, :-1]) * dY, axis=1)
         - 0.5 * np.sum(f.d2(Y[:, :-1]) * bw ** 2 * coeffs_sigma2 * grid.dt, axis=1))
    return MCEstimate.from_samples(r)


@dataclass
class MollificationRate:
    deltas: np.ndarray
    sup_errors: list
    slope: float


def mollification_rate(model, grid, deltas, n_paths, seed, threads=None):
    """sup_n E|X_{t_n} - X^delta_{t_n}|^2 per delta (shared increments) and
    the log-log regression slope against delta."""
    base = simulate(model, grid, n_paths, seed, threads, keep_sources=False)
    sups = []
    for delta in deltas:
        mol = simulate_mollified(model, delta, grid, n_paths, seed, threads)
        err = np.sum((base.X - mol.X) ** 2, axis=-1)
        per = [MCEstimate.from_samples(err[:, n]) for n in range(err.shape[1])]
        sups.append(max(per, key=lambda e: e.mean))
    d = np.asarray(deltas, dtype=float)
    slope = float(np.polyfit(np.log(d), np.log([e.mean for e in sups]), 1)[0])
    return MollificationRate(d, sups, slope)
