"""Ornstein-Uhlenbeck lift for completely monotone kernels.

A kernel K(t) = int exp(-t z) mu(dz) is replaced by a finite mixture
sum_i rho_i exp(-t z_i).  Each factor Y(z_i) is an OU process driven by
the common sources,

    Y_{n+1}(z) = exp(-z dt) Y_n(z) + a(z) b(X_n) + s(z) sigma(X_n) dW_n,

with a(z) = int_0^dt exp(-z u) du and s(z) = (int_0^dt exp(-2 z u) du / dt)^{1/2}
(exact exponential integrator), and X_n = X_0(t_n) + sum_i rho_i Y_n(z_i).
The forward curve is recovered as lambda(t, x) = X_0(t + x) + sum_i rho_i
exp(-z_i x) Y_t(z_i).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from . import parallel, rng
from .curves import ConstantCurve, ExponentialMixtureCurve, StationaryOUCurve
from .errors import (CouplingMismatch, GridMismatch, InitialCurveNotRepresentable,
                     UnsupportedKernel)
from .kernels import KernelSpec, TimeGrid


@dataclass(frozen=True, eq=False)
class CMQuadrature:
    """Nodes z_i >= 0 and weights rho_i > 0 of an exponential mixture.

    ``max_rel_error`` is the largest relative kernel error on ``t_ref``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    max_rel_error: float = 0.0
    t_ref: np.ndarray = field(default=None, repr=False)

    @property
    def count(self):
        return len(self.nodes)

    def kernel(self, t):
        """sum_i rho_i exp(-z_i t)."""
        return np.exp(-np.multiply.outer(np.asarray(t, dtype=float), self.nodes)) @ self.weights

    def shifted(self, t, x):
        """S(x) of the mixture at t: sum_i rho_i exp(-z_i (t + x))."""
        return self.kernel(np.add(t, x))

    def rel_error(self, kernel, t):
        t = np.asarray(t, dtype=float)
        k = kernel.diag(t)[..., 0]
        return float(np.max(np.abs(self.kernel(t) / k - 1.0)))

    def as_kernel(self):
        return KernelSpec.exp_mixture(self.nodes, self.weights)


def cm_quadrature(kernel, n=50, T=1.0, dt=1.0 / 64):
    """Exponential-mixture quadrature of a completely monotone scalar kernel.

    ``T`` is the largest time scale to resolve and ``dt`` the smallest.

    Power law t^{H-1/2} (H < 1/2): the Laplace density
    z^{-H-1/2} / (Gamma(1/2-H) c_K), with c_K the kernel's normalization,
    is split at n geometric points on [1/(10 T), 10/dt]; the n cells
    [0, z_min], ..., [z_{n-1}, z_max] each get their exact mass as weight
    and their density-weighted mean as node.  Exponential and mixture
    kernels are returned exactly.
    """
    if kernel.dim != 1:
        raise UnsupportedKernel("the OU lift is scalar")
    t_ref = np.geomspace(min(dt, 1e-2), 10.0 * T, 200)
    if kernel.kind == "exponential":
        z = np.array([kernel.rate])
        return CMQuadrature(z, np.exp(-z * kernel.shift), 0.0, t_ref)
    if kernel.kind == "exp-mixture":
        w = kernel.weights * np.exp(-kernel.nodes * kernel.shift)
        return CMQuadrature(kernel.nodes.copy(), w, 0.0, t_ref)
    if kernel.kind != "power-law" or kernel.hurst > 0.5:
        raise UnsupportedKernel(f"kernel kind {kernel.kind!r} has no Laplace representation")
    H = kernel.hurst
    if H == 0.5:
        return CMQuadrature(np.array([0.0]), np.array([1.0 / kernel.norm_const]), 0.0, t_ref)
    if n < 2:
        raise ValueError("need at least two nodes")
    s = 0.5 - H
    b = np.concatenate([[0.0], np.geomspace(1.0 / (10.0 * T), 10.0 / dt, n)])
    lo, hi = b[:-1], b[1:]
    m0 = (hi ** s - lo ** s) / s
    m1 = (hi ** (s + 1) - lo ** (s + 1)) / (s + 1)
    z = m1 / m0
    w = m0 / (gamma_fn(s) * kernel.norm_const) * np.exp(-z * kernel.shift)
    err = CMQuadrature(z, w).rel_error(kernel, t_ref)
    return CMQuadrature(z, w, err, t_ref)


def _free_term(x0):
    """Transported initial curve as a callable t -> (P|1, len(t)) for
    exponential-mixture curves; raises otherwise."""
    if isinstance(x0, (ConstantCurve, ExponentialMixtureCurve, StationaryOUCurve)):
        return x0
    raise InitialCurveNotRepresentable(
        f"initial curve {x0.describe()} is not a finite exponential mixture")


@dataclass(eq=False)
class OUField:
    """Factors Y (P, S, n) at stored steps, the projection X (P, N+1) and
    the increments the run was driven by."""

    grid: TimeGrid
    quad: CMQuadrature
    Y: np.ndarray
    X: np.ndarray
    store: tuple
    dW: np.ndarray
    seed: int
    fingerprint: str
    x0: object

    def projection(self, n):
        """sum_i rho_i Y(t_n, z_i) (stochastic part of X_{t_n})."""
        return self.Y[:, self.store.index(n)] @ self.quad.weights

    def curve(self, n, x):
        """lambda(t_n, x) = X_0(t_n + x) + sum_i rho_i exp(-z_i x) Y(t_n, z_i)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        E = np.exp(-np.multiply.outer(x, self.quad.nodes)) * self.quad.weights
        P = self.Y.shape[0]
        free = self.x0.values(self.grid.nodes[n] + x, np.arange(P), self.seed)[..., 0]
        return free + self.Y[:, self.store.index(n)] @ E.T

    def to_csv(self, path):
        P, S, n = self.Y.shape
        t = self.grid.nodes[list(self.store)]
        pi, ti, zi = np.meshgrid(np.arange(P), t, self.quad.nodes, indexing="ij")
        cols = np.column_stack([pi.ravel(), ti.ravel(), zi.ravel(), self.Y.ravel()])
        np.savetxt(path, cols, delimiter=",", header="path,t,z,Y", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%.17g"])


def simulate_ou(model, quad, grid, n_paths, seed, threads=None, dW=None, store=None):
    """Simulate the OU factors on ``grid`` with the model's coefficients.

    Increments are ``dW`` when given, else drawn like ``sve.simulate``
    from ``seed`` so both ensembles share them.
    """
    if model.d != 1:
        raise UnsupportedKernel("the OU lift is scalar")
    x0 = _free_term(model.x0)
    N, dt = grid.n_steps, grid.dt
    z, rho = quad.nodes, quad.weights
    decay = np.exp(-z * dt)
    pos = z > 0
    zz = np.where(pos, z, 1.0)
    a = np.where(pos, -np.expm1(-zz * dt) / zz, dt)
    s = np.sqrt(np.where(pos, -np.expm1(-2.0 * zz * dt) / (2.0 * zz), dt) / dt)
    store = tuple(range(N + 1)) if store is None else tuple(store)
    pos_s = {k: i for i, k in enumerate(store)}
    coeffs = model.coeffs

    def block(paths):
        inc = rng.brownian_increments(seed, paths, N, model.m, dt) if dW is None else dW[paths]
        P = len(paths)
        F = np.broadcast_to(x0.values(grid.nodes, paths, seed)[..., 0], (P, N + 1))
        Y = np.zeros((P, len(z)))
        X = np.empty((P, N + 1))
        Ys = np.empty((P, len(store), len(z)))
        for k in range(N + 1):
            X[:, k] = F[:, k] + Y @ rho
            if k in pos_s:
                Ys[:, pos_s[k]] = Y
            if k == N:
                break
            xk = X[:, k:k + 1]
            bk = coeffs.b(xk)[:, 0]
            gk = np.einsum("pm,pm->p", coeffs.sigma(xk)[:, 0], inc[:, k])
            Y = decay * Y + np.outer(bk, a) + np.outer(gk, s)
        return Ys, X, inc

    res = parallel.map_blocks(block, n_paths, threads)
    return OUField(grid, quad, parallel.concat(res, 0), parallel.concat(res, 1), store,
                   parallel.concat(res, 2), seed, model.fingerprint(), x0)


@dataclass
class EquivalenceReport:
    discrepancy: float
    x_discrepancy: float
    n_nodes: int


def ou_curve_equivalence(ou, lift, x_max=None):
    """sup over paths, shared stored steps and x nodes of
    |X_0(t+x) + sum_i rho_i exp(-z_i x) Y(t, z_i) - lambda(t, x)|.

    ``x_discrepancy`` is the sup restricted to x = 0 (the driving X).
    """
    if not isinstance(lift.grid, TimeGrid) or (lift.grid.T, lift.grid.n_steps) != (
            ou.grid.T, ou.grid.n_steps):
        raise GridMismatch("OU field and lift live on different time grids")
    if lift.n0 != 0 or ou.dW.shape != lift.paths.dW.shape or not np.array_equal(
            ou.dW, lift.paths.dW):
        raise CouplingMismatch("OU field and lift were driven by different increments")
    xs = lift.space.nodes if x_max is None else lift.space.nodes[lift.space.nodes <= x_max]
    J = len(xs)
    steps = [k for k in lift.store if k in ou.store]
    disc = 0.0
    for k in steps:
        d = np.abs(ou.curve(k, xs) - lift.at_step(k)[:, :J, 0])
        disc = max(disc, float(np.max(d)))
    xd = float(np.max(np.abs(ou.X - lift.paths.X[..., 0])))
    return EquivalenceReport(max(disc, xd), xd, ou.quad.count)
