"""First and second variation processes of the lift.

For a direction h started at t_s the first variation solves

    zeta(t_n, x) = h(t_n - t_s + x) + sum_k A(n-k, x) Db(X_k) zeta_k
                                     + B(n-k, x) Dsigma(X_k) zeta_k dW_k,

with zeta_k = zeta(t_k, 0) and X_k the coupled lift's state, i.e. the exact
derivative of the discrete lift map in the direction of its initial curve.
The second variation has zero initial curve and sources
Db zeta_12 + D^2 b(zeta_1, zeta_2) (same for sigma).  Singular terms of a
direction (h = K with K infinite at 0) enter the first step through their
cell mean, exactly as the lift does for singular starting curves.
"""

from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .curves import ConstantCurve, HistoryCurve, InitialCurve, KernelCurve, LinearCombination
from .errors import HurstBelowThreshold, MissingLift
from .lift import simulate_lift
from .sve import MCEstimate, SchemeWeights, run_model
from .wspace import gram_h1w, node_norms_h1w

HURST_THRESHOLD = 0.25


# -- directions ---------------------------------------------------------------

def kernel_direction(kernel, component=0, delta=0.0, vector=None):
    """S(delta)K e_component (or S(delta)K v with an explicit vector v)."""
    if vector is None:
        vector = np.zeros(kernel.dim)
        vector[component] = 1.0
    return KernelCurve(kernel, vector, delta)


def combine(*terms):
    """Linear combination of directions given as (coefficient, curve) pairs."""
    return LinearCombination(list(terms))


# -- ensembles ----------------------------------------------------------------

@dataclass(eq=False)
class TangentEnsemble:
    """zeta on (path, stored step, x node, component) plus its sources.

    ``X0`` holds zeta(t_n, 0) for steps n_s..N (inf at n_s for singular
    directions).  ``state(n)`` returns the exact curve zeta(t_n, .).
    """

    values: np.ndarray
    X0: np.ndarray
    store: tuple
    n_s: int
    direction: InitialCurve
    lift: object
    D: np.ndarray = field(repr=False, default=None)
    G: np.ndarray = field(repr=False, default=None)
    order: int = 1

    @property
    def n_paths(self):
        return self.values.shape[0]

    def at_step(self, n):
        return self.values[:, self.store.index(n)]

    def state(self, n):
        L = n - self.n_s
        lf = self.lift
        return HistoryCurve(lf.kernel, lf.grid.dt, self.direction, None, lf.seed,
                            lf.grid.nodes[n] - lf.grid.nodes[self.n_s],
                            self.D[:, :L], self.G[:, :L])

    def __add__(self, other):
        return _combine_ensembles(self, other, 1.0, 1.0)

    def __sub__(self, other):
        return _combine_ensembles(self, other, 1.0, -1.0)

    def __mul__(self, s):
        return _combine_ensembles(self, self, float(s), 0.0)

    __rmul__ = __mul__

    def to_csv(self, path):
        P, S, J, d = self.values.shape
        t = self.lift.grid.nodes[list(self.store)]
        pi, ti, xi = np.meshgrid(np.arange(P), t, self.lift.space.nodes, indexing="ij")
        cols = np.column_stack([pi.ravel(), ti.ravel(), xi.ravel(), self.values.reshape(-1, d)])
        hdr = "path,t,x," + ",".join(f"zeta{i + 1}" for i in range(d))
        np.savetxt(path, cols, delimiter=",", header=hdr, comments="",
                   fmt=["%d", "%.17g", "%.17g"] + ["%.17g"] * d)


def _combine_ensembles(a, b, ca, cb):
    if a.store != b.store or a.n_s != b.n_s or a.lift is not b.lift:
        raise ValueError("ensembles must share the lift, start and stored steps")
    with np.errstate(invalid="ignore"):
        vals = ca * a.values + cb * b.values
        X0 = ca * a.X0 + cb * b.X0
    direction = (a.direction * ca if cb == 0.0 else
                 LinearCombination([(ca, a.direction), (cb, b.direction)]))
    return TangentEnsemble(vals, X0, a.store, a.n_s, direction, a.lift,
                           ca * a.D + cb * b.D, ca * a.G + cb * b.G, a.order)


# -- recursion plumbing -------------------------------------------------------

def _step_states(lift, rows):
    """States X_k actually used by the lift's steps (start value at a
    singular start), shape (len(rows), N + 1 - n0, d)."""
    X = lift.paths.X[rows]
    if getattr(lift.x0, "singular", False):
        X = X.copy()
        X[:, 0] = np.broadcast_to(
            lift.x0.for_paths(rows).start_value(lift.grid.dt, lift.path_ids[rows], lift.seed),
            X[:, 0].shape)
    return X


def _check_lift(lift):
    if lift is None:
        raise MissingLift("tangent processes need the coupled lift ensemble")


def _start_step(lift, s):
    n_s = lift.grid.index(s)
    if n_s < lift.n0:
        raise ValueError("tangent start precedes the lift start")
    return n_s


def _run(lift, n_s, curve, step_factory, store, threads, first):
    grid = lift.grid
    store = tuple(range(n_s, grid.n_steps + 1)) if store is None else tuple(store)
    w = SchemeWeights.build(lift.kernel, grid, lift.space.nodes)

    def block(rows):
        step = step_factory(rows)
        fs = None if first is None else first(rows)
        Z, D, G, lam = run_model(lift.model, grid, w, curve, rows, lift.seed, None,
                                 n0=n_s, store=store, step=step, first_state=fs)
        return Z, D, G, lam

    res = parallel.map_blocks(block, lift.n_paths, threads)
    return (parallel.concat(res, 0), parallel.concat(res, 1), parallel.concat(res, 2),
            parallel.concat(res, 3), store)


def first_variation(model, h, s, lift, store=None, threads=None):
    """zeta_h started at time s along the coupled lift.

    ``h`` is an InitialCurve direction (kernel, shifted kernel, smooth
    curve or linear combination); a singular ``h`` is allowed.
    """
    _check_lift(lift)
    model.coeffs.require_differentiable()
    n_s = _start_step(lift, s)
    coeffs = model.coeffs
    dW = lift.paths.dW
    k0 = lift.n0

    def factory(rows):
        X = _step_states(lift, rows)
        inc = dW[rows]

        def step(k, z):
            x = X[:, k - k0]
            D = np.einsum("pij,pj->pi", coeffs.db(x), z)
            G = np.einsum("piaj,pj,pa->pi", coeffs.dsigma(x), z, inc[:, k])
            return D, G
        return step

    def singular_start(rows):
        return np.broadcast_to(h.start_value(lift.grid.dt), (len(rows), h.dim))

    first = singular_start if getattr(h, "singular", False) else None
    Z, D, G, vals, store = _run(lift, n_s, h, factory, store, threads, first)
    return TangentEnsemble(vals, Z, store, n_s, h, lift, D, G, 1)


def _require_threshold(model):
    H = model.hurst
    if H is not None and H <= HURST_THRESHOLD and not model.coeffs.sigma_constant:
        raise HurstBelowThreshold(
            f"second-order objects need H > 1/4 with multiplicative noise (H = {H}); "
            "the threshold q > 4 is structural for non-constant sigma")


def _second_direct(model, z1, z2, lift, store=None, threads=None):
    """Direct recursion for zeta_{h1,h2} from first variations z1, z2."""
    coeffs = model.coeffs
    dW = lift.paths.dW
    k0 = lift.n0
    n_s = z1.n_s
    zero = ConstantCurve(np.zeros(model.d))

    def factory(rows):
        X = _step_states(lift, rows)
        a1, a2 = _first_states(z1, rows), _first_states(z2, rows)
        inc = dW[rows]

        def step(k, z):
            x = X[:, k - k0]
            u, v = a1[:, k - n_s], a2[:, k - n_s]
            D = (np.einsum("pij,pj->pi", coeffs.db(x), z)
                 + np.einsum("pijk,pj,pk->pi", coeffs.d2b(x), u, v))
            S = (np.einsum("piaj,pj->pia", coeffs.dsigma(x), z)
                 + np.einsum("piajk,pj,pk->pia", coeffs.d2sigma(x), u, v))
            return D, np.einsum("pia,pa->pi", S, inc[:, k])
        return step

    Z, D, G, vals, store = _run(lift, n_s, zero, factory, store, threads, None)
    return TangentEnsemble(vals, Z, store, n_s, zero, lift, D, G, 2)


def _first_states(z, rows):
    """zeta_k used in the steps of a first variation (start value at a singular start)."""
    X = z.X0[rows]
    if getattr(z.direction, "singular", False):
        X = X.copy()
        X[:, 0] = np.broadcast_to(z.direction.start_value(z.lift.grid.dt), X[:, 0].shape)
    return X


def second_variation(model, h1, h2, s, lift, z1=None, z2=None, method="polarization",
                     store=None, threads=None):
    """zeta_{h1,h2} at start s along the coupled lift.

    ``method="polarization"`` returns 1/4 (zeta_{h+,h+} - zeta_{h-,h-}) with
    h+- = h1 +- h2, each diagonal term from the direct recursion;
    ``method="direct"`` runs the bilinear recursion with z1, z2.
    """
    _check_lift(lift)
    model.coeffs.require_differentiable()
    _require_threshold(model)
    if method == "direct":
        n_s = _start_step(lift, s)
        z1 = z1 if z1 is not None else first_variation(model, h1, s, lift, store, threads)
        z2 = z2 if z2 is not None else first_variation(model, h2, s, lift, store, threads)
        if z1.n_s != n_s or z2.n_s != n_s:
            raise ValueError("first variations start at a different time")
        return _second_direct(model, z1, z2, lift, store, threads)
    if method != "polarization":
        raise ValueError(f"unknown method {method!r}")
    hp = LinearCombination([(1.0, h1), (1.0, h2)])
    hm = LinearCombination([(1.0, h1), (-1.0, h2)])
    zp = first_variation(model, hp, s, lift, store, threads)
    zm = first_variation(model, hm, s, lift, store, threads)
    pp = _second_direct(model, zp, zp, lift, store, threads)
    mm = _second_direct(model, zm, zm, lift, store, threads)
    return _combine_ensembles(pp, mm, 0.25, -0.25)


def polarization(zpp, zmm):
    """1/4 (zeta_{h+,h+} - zeta_{h-,h-})."""
    return _combine_ensembles(zpp, zmm, 0.25, -0.25)


# -- finite-difference oracles ------------------------------------------------

@dataclass
class BumpReport:
    eps: float
    rel_error: float
    norm: float


def _bumped(model, lift, h, eps, threads, n):
    y = LinearCombination([(1.0, lift.x0), (eps, h)])
    return simulate_lift(model, lift.grid, lift.space, lift.n_paths, lift.seed, threads,
                         delta=lift.paths.delta, x0=y, n0=lift.n0, store=(n,),
                         dW=lift.paths.dW)


def _rel_h1w(diff, ref, lift, weight):
    M = gram_h1w(lift.space, weight)
    e = node_norms_h1w(diff, lift.space, weight, M)
    r = node_norms_h1w(ref, lift.space, weight, M)
    e_rms, r_rms = float(np.sqrt(np.mean(e ** 2))), float(np.sqrt(np.mean(r ** 2)))
    # absolute error when the reference vanishes (e.g. zeta_{h,h} for linear coefficients)
    return (e_rms / r_rms if r_rms > 0.0 else e_rms), r_rms


def bump_first(model, lift, h, zeta, eps=1e-4, t=None, threads=None):
    """Common-random-numbers bump (lambda^{y+eps h}(t) - lambda^y(t)) / eps
    against zeta_h(t) in the discrete H^1_w norm (root mean square)."""
    n = lift.grid.n_steps if t is None else lift.grid.index(t)
    up = _bumped(model, lift, h, eps, threads, n)
    fd = (up.lam[:, 0] - lift.at_step(n)) / eps
    rel, norm = _rel_h1w(fd - zeta.at_step(n), zeta.at_step(n), lift, model.weight)
    return BumpReport(eps, rel, norm)


def bump_second(model, lift, h, zeta2, eps=1e-3, t=None, threads=None):
    """Central second difference (lambda^{y+eps h} - 2 lambda^y + lambda^{y-eps h}) / eps^2
    against zeta_{h,h}(t)."""
    n = lift.grid.n_steps if t is None else lift.grid.index(t)
    up = _bumped(model, lift, h, eps, threads, n)
    dn = _bumped(model, lift, h, -eps, threads, n)
    fd = (up.lam[:, 0] - 2.0 * lift.at_step(n) + dn.lam[:, 0]) / eps ** 2
    rel, norm = _rel_h1w(fd - zeta2.at_step(n), zeta2.at_step(n), lift, model.weight)
    return BumpReport(eps, rel, norm)


# -- bounds and mollification -------------------------------------------------

@dataclass
class MomentBoundReport:
    t: np.ndarray
    ratios: np.ndarray
    max_ratio: float


def moment_bound_check(zeta, p, h=None, weight=None):
    """E|zeta(t)|^p / |S(t - s) h|^p in the discrete H^1_w norm, per stored t > s."""
    lift = zeta.lift
    h = zeta.direction if h is None else h
    weight = lift.model.weight if weight is None else weight
    M = gram_h1w(lift.space, weight)
    ts, rs = [], []
    for n in zeta.store:
        if n == zeta.n_s:
            continue
        el = lift.grid.nodes[n] - lift.grid.nodes[zeta.n_s]
        sh = h.values(el + lift.space.nodes)
        den = node_norms_h1w(sh, lift.space, weight, M)[0] ** p
        num = np.mean(node_norms_h1w(zeta.at_step(n), lift.space, weight, M) ** p)
        ts.append(lift.grid.nodes[n])
        rs.append(num / den)
    rs = np.asarray(rs)
    return MomentBoundReport(np.asarray(ts), rs, float(rs.max()))


@dataclass
class MollificationRow:
    delta: float
    integrated: MCEstimate
    direction_gap: MCEstimate


def mollified_convergence_study(model, lift, deltas, component=0, r_stride=4, threads=None):
    """Rows (delta, int_s^T E|zeta^r_K(T) - zeta^r_{delta,K}(T)|^2 dr,
    E|zeta_{K_delta}(T) - zeta_K(T)|^2) in the discrete H^1_w norm.

    zeta^r_{delta,K} runs on the lift with kernel S(delta)K (same
    increments) in direction S(delta)K; the r-integral uses left points
    r = t_s, t_s + r_stride dt, ... < T.  zeta_{K_delta} runs on the
    original lift in direction S(delta)K from t_s.
    """
    _check_lift(lift)
    grid, N = lift.grid, lift.grid.n_steps
    w = model.weight
    M = gram_h1w(lift.space, w)
    n_s = lift.n0
    rs = list(range(n_s, N, r_stride))
    K = kernel_direction(lift.kernel, component)
    base = {r: first_variation(model, K, grid.nodes[r], lift, (N,), threads).at_step(N)
            for r in rs}
    rows = []
    for delta in deltas:
        if delta == 0.0:
            zero = MCEstimate(0.0, 0.0, lift.n_paths)
            rows.append(MollificationRow(0.0, zero, zero))
            continue
        mol = simulate_lift(model, grid, lift.space, lift.n_paths, lift.seed, threads,
                            delta=delta, x0=lift.x0, n0=lift.n0, store=(N,),
                            dW=lift.paths.dW)
        Kd = kernel_direction(lift.kernel, component, delta)
        acc = np.zeros(lift.n_paths)
        for r in rs:
            zd = first_variation(model, Kd, grid.nodes[r], mol, (N,), threads).at_step(N)
            acc += node_norms_h1w(base[r] - zd, lift.space, w, M) ** 2 * r_stride * grid.dt
        zKd = first_variation(model, Kd, grid.nodes[n_s], lift, (N,), threads).at_step(N)
        gap = node_norms_h1w(zKd - base[n_s], lift.space, w, M) ** 2
        rows.append(MollificationRow(float(delta), MCEstimate.from_samples(acc),
                                     MCEstimate.from_samples(gap)))
    return rows
