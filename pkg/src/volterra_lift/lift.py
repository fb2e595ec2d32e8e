"""Forward-curve lift lambda(t, x) of the SVE.

lambda(t_n, x) = y(t_n - t_{n0} + x) + sum_k A(n-k, x) b(X_k) + B(n-k, x) sigma(X_k) dW_k

with X_k = lambda(t_k, 0).  Curves are stored at the nodes of a
``SpaceGrid``; the full state after any step is available exactly as a
``HistoryCurve`` built from the stored sources.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import parallel, rng
from .curves import HistoryCurve, InitialCurve
from .errors import IncrementMissing, NonlinearDrift
from .kernels import TimeGrid, resolvent_second_kind
from .sve import MCEstimate, PathEnsemble, SchemeWeights, run_model
from .wspace import SpaceGrid, gram_h1w, node_norms_h1w


@dataclass(eq=False)
class LiftEnsemble:
    """lambda on (path, stored time, x node) plus the coupled paths.

    ``lam[:, i]`` is the curve at absolute step ``store[i]``; ``paths``
    holds X = lambda(., 0) for steps n0..N and the increments of all N
    steps (absolute indexing).
    """

    model: object
    kernel: object
    grid: TimeGrid
    space: SpaceGrid
    lam: np.ndarray
    store: tuple
    paths: PathEnsemble
    x0: InitialCurve
    seed: int
    n0: int = 0
    path_ids: np.ndarray = field(default=None, repr=False)

    @property
    def n_paths(self):
        return self.lam.shape[0]

    def at_step(self, n):
        return self.lam[:, self.store.index(n)]

    def state(self, n, rows=None):
        """Exact state curve lambda(t_n, .) as a ``HistoryCurve``."""
        if not self.n0 <= n <= self.grid.n_steps:
            raise ValueError("step outside the simulated range")
        rows = np.arange(self.n_paths) if rows is None else np.asarray(rows)
        L = n - self.n0
        base = self.x0.for_paths(rows) if isinstance(self.x0, HistoryCurve) else self.x0
        return HistoryCurve(self.kernel, self.grid.dt, base, self.path_ids[rows], self.seed,
                            self.grid.nodes[n] - self.grid.nodes[self.n0],
                            self.paths.D[rows, :L], self.paths.G[rows, :L])

    @property
    def sigma_path(self):
        """sigma(X_k) for k = n0..N-1, shape (P, N - n0, d, m)."""
        X = self.paths.X[:, :-1]
        P, L, d = X.shape
        return self.model.coeffs.sigma(X.reshape(P * L, d)).reshape(P, L, d, -1)

    def to_csv(self, path):
        P, S, J, d = self.lam.shape
        t = self.grid.nodes[list(self.store)]
        pi, ti, xi = np.meshgrid(np.arange(P), t, self.space.nodes, indexing="ij")
        cols = np.column_stack([pi.ravel(), ti.ravel(), xi.ravel(), self.lam.reshape(-1, d)])
        hdr = "path,t,x," + ",".join(f"lambda{i + 1}" for i in range(d))
        np.savetxt(path, cols, delimiter=",", header=hdr, comments="",
                   fmt=["%d", "%.17g", "%.17g"] + ["%.17g"] * d)


def simulate_lift(model, grid, space=None, n_paths=1024, seed=0, threads=None, delta=0.0,
                  x0=None, n0=0, store=None, dW=None, increment_seed=None):
    """Simulate the lift from (t_{n0}, x0) on ``space`` nodes.

    Parameters
    ----------
    x0 : InitialCurve, optional
        Starting curve (defaults to the model's X_0).  A ``HistoryCurve``
        must have one row per path.
    store : iterable of absolute steps, optional
        Steps at which curves are kept (default: all steps n0..N).
    dW : array (n_paths, N, m), optional
        Increments to reuse; otherwise drawn from ``increment_seed``
        (default ``seed``) by absolute step.
    """
    space = SpaceGrid.lift_default() if space is None else space
    kernel = model.kernel.shifted(delta) if delta else model.kernel
    curve = model.x0 if x0 is None else x0
    N, m = grid.n_steps, model.m
    store = tuple(range(n0, N + 1)) if store is None else tuple(store)
    w = SchemeWeights.build(kernel, grid, space.nodes)
    iseed = seed if increment_seed is None else increment_seed

    def block(paths):
        inc = (rng.brownian_increments(iseed, paths, N, m, grid.dt) if dW is None
               else dW[paths])
        Z, D, G, lam = run_model(model, grid, w, curve.for_paths(paths), paths, seed, inc,
                                 n0=n0, store=store)
        return Z, inc, D, G, lam

    res = parallel.map_blocks(block, n_paths, threads)
    X = parallel.concat(res, 0)
    pe = PathEnsemble(grid, X, parallel.concat(res, 1), iseed, model.fingerprint(),
                      float(delta), parallel.concat(res, 2), parallel.concat(res, 3))
    return LiftEnsemble(model, kernel, grid, space, parallel.concat(res, 4), store, pe, curve,
                        seed, n0, np.arange(n_paths))


# -- flow and Markov checks ---------------------------------------------------

@dataclass
class FlowCheckReport:
    t: float
    discrepancy: float
    scale: float


def restart(lift, n, dW=None, increment_seed=None, threads=None, store=None):
    """Re-run the lift from (t_n, lambda(t_n)) with the given increments."""
    return simulate_lift(lift.model, lift.grid, lift.space, lift.n_paths, lift.seed, threads,
                         x0=lift.state(n), n0=n, store=store, dW=dW,
                         increment_seed=increment_seed,
                         delta=lift.paths.delta)


def flow_restart_check(lift, t, threads=None):
    """Sup discrepancy between the run and its restart from lambda(t) on
    reused increments, over paths, later stored steps and x nodes."""
    if lift.paths.dW is None:
        raise IncrementMissing("flow check needs the stored increments")
    n = lift.grid.index(t)
    later = tuple(k for k in lift.store if k >= n)
    if n == lift.n0:
        return FlowCheckReport(t, 0.0, float(np.max(np.abs(lift.lam))))
    re = restart(lift, n, dW=lift.paths.dW, threads=threads, store=later)
    a = np.stack([lift.at_step(k) for k in later], axis=1)
    disc = float(np.max(np.abs(a - re.lam)))
    disc = max(disc, float(np.max(np.abs(lift.paths.X[:, n - lift.n0:] - re.paths.X))))
    return FlowCheckReport(t, disc, float(np.max(np.abs(a))))


def continue_run(lift, n, dW, threads=None):
    """Continue the original recursion past step n with increments ``dW``
    (sources before n are reused, the free term stays the original one)."""
    grid, model = lift.grid, lift.model
    w = SchemeWeights.build(lift.kernel, grid)
    L = n - lift.n0
    if lift.n0 != 0:
        raise ValueError("continuation needs a run started at 0")

    def block(paths):
        prefix = (lift.paths.D[paths, :L], lift.paths.G[paths, :L])
        Z, _, _, _ = run_model(model, grid, w, lift.x0.for_paths(paths), paths, lift.seed,
                               dW[paths], n0=n, prefix=prefix)
        return Z
    return parallel.concat(parallel.map_blocks(block, lift.n_paths, threads))


@dataclass
class MarkovReport:
    statistic: float
    pvalue: float
    n: int


def markov_statistic(lift, t, fresh_seed=None, threads=None):
    """Two-sample KS statistic on ev_0(lambda(T)).

    With ``fresh_seed=None`` the run is continued on its own increments
    (statistic 0).  Otherwise the continued run is compared with the run
    restarted from the curve lambda(t) on increments from ``fresh_seed``.
    """
    n = lift.grid.index(t)
    N = lift.grid.n_steps
    if fresh_seed is None:
        XT = continue_run(lift, n, lift.paths.dW, threads)[:, -1, 0]
        res = stats.ks_2samp(lift.paths.X[:, -1, 0], XT)
        return MarkovReport(float(res.statistic), float(res.pvalue), lift.n_paths)
    re = restart(lift, n, increment_seed=fresh_seed, threads=threads, store=(N,))
    res = stats.ks_2samp(lift.paths.X[:, -1, 0], re.paths.X[:, -1, 0])
    return MarkovReport(float(res.statistic), float(res.pvalue), lift.n_paths)


# -- forward-curve identity ---------------------------------------------------

def mean_path(kernel, a, x0, u_max, dt_fine=2.0 ** -12):
    """E[X_u] on a fine grid for b(x) = a x (scalar), via the resolvent.

    E X_u = X_0(u) - int_0^u R(u - s) X_0(s) ds with R the resolvent of the
    second kind of -aK (aK - R_a = aK * R_a taken at -a); this sign
    convention reproduces exp(a u) for K = 1.
    """
    h = dt_fine
    n = int(np.ceil(u_max / h)) + 1
    grid = TimeGrid(n * h, n)
    R = resolvent_second_kind(kernel, -a, grid).values[:, 0, 0]
    # cell integrals of R: first cell from R ~ -aK near 0, then trapezoid
    first = -a * float(kernel.cell_integrals(0.0, h)[0])
    cells = np.concatenate([[first], 0.5 * h * (R[1:-1] + R[2:])])
    v = x0.values((np.arange(1, n + 1) - 0.5) * h)[0, :, 0]
    conv = np.convolve(cells, v)[:n]
    m = x0.values(grid.nodes)[0, :, 0].copy()
    m[1:] -= conv[:n]
    return grid.nodes, m


def mean_forward_curve(kernel, a, x0, u, dt_fine=2.0 ** -12):
    """E[X_u] at arbitrary u >= 0 (linear interpolation of ``mean_path``)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    t, m = mean_path(kernel, a, x0, u.max(), dt_fine)
    return np.interp(u, t, m)


def mean_lift_curve(kernel, a, x0, t, x, dt_fine=2.0 ** -12):
    """E[lambda(t, x)] = X_0(t+x) + a int_0^t K(t+x-s) E[X_s] ds."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tg, m = mean_path(kernel, a, x0, t + dt_fine, dt_fine)
    n = int(round(t / dt_fine))
    s_lo = np.arange(n) * dt_fine
    mid = np.interp(s_lo + 0.5 * dt_fine, tg, m)
    out = np.empty(len(x))
    for i, xi in enumerate(x):
        Kc = kernel.cell_integrals(t + xi - s_lo - dt_fine, t + xi - s_lo)[:, 0]
        out[i] = x0.values(np.array([t + xi]))[0, 0, 0] + a * Kc @ mid
    return out


def forward_curve_check(model, lift, x_max=2.0, target="conditional-forward",
                        dt_fine=2.0 ** -12):
    """MC mean of lambda(t_n, x_j) against a closed-form mean.

    target="conditional-forward" compares with E[X_{t+x}] from the
    variation-of-constants formula (the identity lambda(t, x) =
    E[X_{t+x} | F_t]); target="lift-mean" compares with
    X_0(t+x) + a int_0^t K(t+x-s) E[X_s] ds, the mean of the mild lift.
    The two agree at x = 0 and for a = 0.  Returns ``(t, x, estimates,
    exact)`` over stored steps and nodes x_j <= x_max.
    """
    a = model.coeffs.linear_drift
    if a is None:
        raise NonlinearDrift("forward-curve identity needs b(x) = a x")
    if model.d != 1 or model.x0.random:
        raise ValueError("forward-curve check is scalar with a deterministic X_0")
    a = float(a[0, 0])
    xs = lift.space.nodes[lift.space.nodes <= x_max]
    ts = lift.grid.nodes[list(lift.store)]
    if target == "conditional-forward":
        u = np.add.outer(ts, xs)
        exact = mean_forward_curve(lift.kernel, a, lift.x0, u.ravel(), dt_fine).reshape(u.shape)
    elif target == "lift-mean":
        exact = np.stack([mean_lift_curve(lift.kernel, a, lift.x0, t, xs, dt_fine) for t in ts])
    else:
        raise ValueError(f"unknown target {target!r}")
    est = [[MCEstimate.from_samples(lift.lam[:, i, j, 0]) for j in range(len(xs))]
           for i in range(len(ts))]
    return ts, xs, est, exact


def max_z_score(est, exact):
    """Largest |mean - exact| / std_error over a forward-curve table."""
    return max(abs(e.z_score(v)) for row, ex in zip(est, exact) for e, v in zip(row, ex))


# -- regularity and invariance spot checks ------------------------------------

def holder_exponent(lift, weight, lags=(1, 2, 4, 8)):
    """Fitted exponent of E|Y(t+h) - Y(t)|^2_{H^1_w} ~ h^{2 gamma} for
    Y(t) = lambda(t) - S(t) lambda_0 on the stored nodes."""
    grid, space = lift.grid, lift.space
    steps = np.asarray(lift.store)
    rel = grid.nodes[steps] - grid.nodes[lift.n0]
    z = np.add.outer(rel, space.nodes).ravel()
    S = lift.x0.values(z, lift.path_ids, lift.seed).reshape(-1, len(steps), len(space), lift.model.d)
    Y = lift.lam - S
    M = gram_h1w(space, weight)
    ms = []
    for h in lags:
        diff = Y[:, h:] - Y[:, :-h]
        ms.append(np.mean(node_norms_h1w(diff, space, weight, M) ** 2))
    slope = np.polyfit(np.log(np.asarray(lags) * grid.dt), np.log(ms), 1)[0]
    return 0.5 * slope, np.asarray(ms)


def invariance_spot_check(lift, weight, deltas, n=None, x_max=None, n_nodes=400):
    """|S(delta) d/dx lambda(T)|_{H^1_w} per path for each delta.

    Uses exact first and second x-derivatives of the state curve on a
    geometric quadrature grid; returns an array (len(deltas), P).
    """
    n = lift.grid.n_steps if n is None else n
    state = lift.state(n)
    x_max = lift.space.x_max if x_max is None else x_max
    g = SpaceGrid(np.concatenate([[0.0], np.geomspace(1e-5, x_max, n_nodes)]))
    pts, wts, _ = g.cell_rule(weight.beta, weight.c)
    out = []
    for dl in deltas:
        f1 = state.derivatives(dl + pts)
        f2 = state.second_derivatives(dl + pts)
        sq = np.einsum("q,pqd->p", wts, f1 ** 2 + f2 ** 2)
        out.append(np.sqrt(sq))
    return np.asarray(out)
