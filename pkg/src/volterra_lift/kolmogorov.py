"""Value function, singular derivatives and Kolmogorov/Fokker-Planck checks.

u(t, y) = E[phi(lambda^{t,y}(T))] is estimated by Monte Carlo on the lift
started at (t, y).  Payoffs are phi = f o l with l a linear functional of
the curve's node values (an H^1_w inner product with a curve g, or ev_0 of
a component), so

    D phi(y)(z) = f'(l(y)) l(z),   D^2 phi(y)(z1, z2) = f''(l(y)) l(z1) l(z2),

and the singular derivatives of u follow from the tangent processes:

    Du(t, y)(h)        = E[D phi(lambda(T))(zeta_h(T))],
    D^2u(t, y)(h1, h2) = E[D^2 phi(lambda(T))(zeta_1, zeta_2) + D phi(lambda(T))(zeta_12)].

All estimators return ``MCEstimate`` built from per-path samples, so sums
of terms computed on the same paths carry a correct combined error.
"""

from dataclasses import dataclass, field

import numpy as np

from . import parallel, rng
from .coefficients import Smooth1D
from .curves import DerivativeCurve, InitialCurve, ShiftedCurve
from .engine import lag_weights
from .errors import (DegenerateStencil, ModelNotCompliant, NestedBudgetExceeded,
                     TestFunctionNotCompliant)
from .kernels import TimeGrid
from .lift import simulate_lift
from .sve import MCEstimate, SchemeWeights, run_model
from .tangent import first_variation, kernel_direction, second_variation
from .wspace import SpaceGrid, hat_functional, node_norms_h1w

DEFAULT_INNER = 2 ** 9
DEFAULT_OUTER = 2 ** 12
DEFAULT_BUDGET = 2 ** 21


# -- payoffs ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PayoffSpec:
    """phi(y) = f(l(y)) with l either <y, g>_{H^1_w} or ev_0 of a component.

    kind: ``cylinder`` (f o <., g>), ``quadratic`` (<., g>^2) or
    ``pointwise`` (f o ev_0 of ``component``).
    """

    kind: str
    f: Smooth1D
    g: InitialCurve = None
    component: int = 0
    name: str = ""

    @classmethod
    def cylinder(cls, g, f=None):
        f = Smooth1D.tanh() if f is None else f
        return cls("cylinder", f, g, 0, f"cylinder[{f.name}]")

    @classmethod
    def quadratic(cls, g):
        return cls("quadratic", Smooth1D.square(), g, 0, "quadratic")

    @classmethod
    def pointwise(cls, f, component=0):
        return cls("pointwise", f, None, int(component), f"pointwise[{f.name},{component}]")

    def weights(self, space, weight, dim):
        """Node weights c (J, d) with l(y) = sum_j c_j . y(x_j)."""
        if self.kind == "pointwise":
            c = np.zeros((len(space), dim))
            c[0, self.component] = 1.0
            return c
        if self.g is None:
            raise ValueError("cylinder payoffs need a curve g")
        return hat_functional(space, self.g.to_curve(space), weight)

    def describe(self):
        g = "" if self.g is None else self.g.describe()
        return f"{self.kind}|{self.f.name}|{g}|{self.component}"


def _apply(c, values):
    """l(values) for node values (..., J, d)."""
    with np.errstate(invalid="ignore"):
        return np.einsum("...jd,jd->...", values, c)


def _require_compliant(model):
    if not model.coeffs.smooth_bounded:
        raise ModelNotCompliant(
            f"{model.coeffs.describe()}: coefficients must be C^2_b with Lipschitz second "
            "derivative (affine drifts and square-root diffusions are excluded)")


@dataclass(eq=False)
class _Setup:
    model: object
    payoff: PayoffSpec
    grid: TimeGrid
    space: SpaceGrid
    threads: int = None
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.c = self.payoff.weights(self.space, self.model.weight, self.model.d)

    @property
    def N(self):
        return self.grid.n_steps

    def ell(self, values):
        return _apply(self.c, values)

    def lift(self, y, n, n_paths, seed, store=None, **kw):
        store = (self.N,) if store is None else store
        return simulate_lift(self.model, self.grid, self.space, n_paths, seed, self.threads,
                             x0=y, n0=n, store=store, **kw)


def _setup(model, payoff, T, n_steps, space, threads, grid=None):
    _require_compliant(model)
    grid = TimeGrid(T, n_steps) if grid is None else grid
    space = SpaceGrid.lift_default() if space is None else space
    return _Setup(model, payoff, grid, space, threads)


# -- value and singular derivatives ------------------------------------------

def value_samples(setup, t, y, n_paths, seed):
    n = setup.grid.index(t)
    lf = setup.lift(y, n, n_paths, seed)
    return setup.payoff.f(setup.ell(lf.at_step(setup.N))), lf


def value(model, payoff, t, y, T=1.0, n_paths=4096, seed=0, n_steps=64, space=None,
          threads=None, grid=None):
    """Monte Carlo estimate of u(t, y) = E[phi(lambda^{t,y}(T))]."""
    st = _setup(model, payoff, T, n_steps, space, threads, grid)
    s, _ = value_samples(st, t, y, n_paths, seed)
    return MCEstimate.from_samples(s)


def shifted_direction(h, delta):
    """S(delta) h (the kernel stays analytic for kernel directions)."""
    if delta == 0.0:
        return h
    return ShiftedCurve(h, delta)


def _grad_samples(st, lf, ellT, h, t):
    z = first_variation(st.model, h, t, lf, store=(st.N,), threads=st.threads)
    return st.payoff.f.d1(ellT) * st.ell(z.at_step(st.N))


def _hess_samples(st, lf, ellT, h1, h2=None, t=0.0):
    z1 = first_variation(st.model, h1, t, lf, store=(st.N,), threads=st.threads)
    z2 = z1 if h2 is None else first_variation(st.model, h2, t, lf, store=(st.N,),
                                               threads=st.threads)
    z12 = second_variation(st.model, h1, h1 if h2 is None else h2, t, lf, z1, z2,
                           method="direct", store=(st.N,), threads=st.threads)
    f = st.payoff.f
    l1, l2 = st.ell(z1.at_step(st.N)), st.ell(z2.at_step(st.N))
    return f.d2(ellT) * l1 * l2 + f.d1(ellT) * st.ell(z12.at_step(st.N))


@dataclass
class SweepResult:
    """Estimates per delta and the Richardson value 2 v(d_min) - v(2 d_min)."""

    deltas: list
    estimates: list
    richardson: MCEstimate = None


def _richardson(samples, deltas):
    d = np.asarray(deltas, dtype=float)
    i = int(np.argmin(d))
    j = np.flatnonzero(np.isclose(d, 2.0 * d[i]))
    if d[i] == 0.0 or len(j) == 0:
        return None
    return MCEstimate.from_samples(2.0 * samples[i] - samples[j[0]])


def singular_gradient(model, payoff, t, y, h, delta, T=1.0, n_paths=4096, seed=0,
                      n_steps=64, space=None, threads=None, grid=None):
    """Du(t, y)(S(delta) h) for each delta (scalar or sequence)."""
    st = _setup(model, payoff, T, n_steps, space, threads, grid)
    _, lf = value_samples(st, t, y, n_paths, seed)
    ellT = st.ell(lf.at_step(st.N))
    deltas = np.atleast_1d(np.asarray(delta, dtype=float))
    samples = [_grad_samples(st, lf, ellT, shifted_direction(h, d), t) for d in deltas]
    est = [MCEstimate.from_samples(s) for s in samples]
    if np.ndim(delta) == 0:
        return est[0]
    return SweepResult(list(deltas), est, _richardson(samples, deltas))


def singular_hessian(model, payoff, t, y, delta, h1=None, h2=None, T=1.0, n_paths=4096,
                     seed=0, n_steps=64, space=None, threads=None, grid=None):
    """D^2u(t, y)(S(delta) h1, S(delta) h2), default h1 = h2 = K e_0."""
    st = _setup(model, payoff, T, n_steps, space, threads, grid)
    _, lf = value_samples(st, t, y, n_paths, seed)
    ellT = st.ell(lf.at_step(st.N))
    h1 = kernel_direction(model.kernel) if h1 is None else h1
    deltas = np.atleast_1d(np.asarray(delta, dtype=float))
    samples = [_hess_samples(st, lf, ellT, shifted_direction(h1, d),
                             None if h2 is None else shifted_direction(h2, d), t)
               for d in deltas]
    est = [MCEstimate.from_samples(s) for s in samples]
    if np.ndim(delta) == 0:
        return est[0]
    return SweepResult(list(deltas), est, _richardson(samples, deltas))


def gradient_bound_ratio(model, payoff, t, y, h, T=1.0, n_paths=4096, seed=0, n_steps=64,
                         space=None, threads=None):
    """|Du(t, y)(h)| / |S(T - t) h|_{H^1_w} (discrete norms)."""
    st = _setup(model, payoff, T, n_steps, space, threads)
    g = singular_gradient(model, payoff, t, y, h, 0.0, T, n_paths, seed, n_steps, st.space,
                          threads)
    sh = h.values(T - t + st.space.nodes)
    return abs(g.mean) / float(node_norms_h1w(sh, st.space, model.weight)[0])


# -- backward PDE -------------------------------------------------------------

@dataclass
class PDEResidualReport:
    t: float
    delta: object
    dt_fd: float
    dt: float
    terms: dict
    residual: MCEstimate
    sweep: SweepResult = None

    def as_record(self):
        return {"t": self.t, "delta": self.delta, "dt_fd": self.dt_fd, "dt": self.dt,
                "estimate": self.residual.mean, "std_error": self.residual.std_error,
                "per_term": {k: v.as_dict() for k, v in self.terms.items()}}


def _y0(y):
    return y.values(np.zeros(1))[0, 0]


def pde_residual(model, payoff, t, y, delta=None, dt_fd=None, T=1.0, n_paths=4096, seed=0,
                 n_steps=64, space=None, threads=None, grid=None):
    """Residual of d_t u + Du(d_x y + K b(y(0))) + 1/2 sum_i D^2u(K sigma e_i, K sigma e_i).

    d_t u is a central difference with step ``dt_fd`` (default 4 dt) on the
    same seed.  ``delta=None`` sweeps {8, 4, 2, 1} dt and uses the
    Richardson value of the last two for the singular terms; a number
    (0 allowed) uses that mollification only.
    """
    st = _setup(model, payoff, T, n_steps, space, threads, grid)
    g = st.grid
    dt = g.dt
    dt_fd = 4.0 * dt if dt_fd is None else float(dt_fd)
    n = g.index(t)
    mfd = int(round(dt_fd / dt))
    if mfd < 1 or n - mfd < 0 or n + mfd > st.N:
        raise DegenerateStencil(f"t +- {dt_fd} leaves [0, {g.T}]")
    f = payoff.f
    up = f(st.ell(st.lift(y, n + mfd, n_paths, seed).at_step(st.N)))
    dn = f(st.ell(st.lift(y, n - mfd, n_paths, seed).at_step(st.N)))
    d_t = (up - dn) / (2.0 * mfd * dt)

    _, lf = value_samples(st, t, y, n_paths, seed)
    ellT = st.ell(lf.at_step(st.N))
    dx = _grad_samples(st, lf, ellT, DerivativeCurve(y), t)
    y0 = _y0(y)[None]
    bvec = model.coeffs.b(y0)[0]
    sig = model.coeffs.sigma(y0)[0]

    def singular_terms(d):
        drift = np.zeros(n_paths)
        if np.any(bvec != 0.0):
            drift = _grad_samples(st, lf, ellT,
                                  kernel_direction(model.kernel, delta=d, vector=bvec), t)
        trace = np.zeros(n_paths)
        for i in range(model.m):
            if np.any(sig[:, i] != 0.0):
                hi = kernel_direction(model.kernel, delta=d, vector=sig[:, i])
                trace += 0.5 * _hess_samples(st, lf, ellT, hi, None, t)
        return drift, trace

    sweep = None
    if delta is None:
        deltas = [8 * dt, 4 * dt, 2 * dt, dt]
        parts = [singular_terms(d) for d in deltas]
        tot = [a + b for a, b in parts]
        rich = [2.0 * parts[-1][k] - parts[-2][k] for k in range(2)]
        sweep = SweepResult(deltas, [MCEstimate.from_samples(v) for v in tot],
                            MCEstimate.from_samples(2.0 * tot[-1] - tot[-2]))
        drift, trace = rich
    else:
        drift, trace = singular_terms(float(delta))
    res = d_t + dx + drift + trace
    terms = {"d_t u": MCEstimate.from_samples(d_t), "Du(d_x y)": MCEstimate.from_samples(dx),
             "Du(K b)": MCEstimate.from_samples(drift),
             "1/2 Tr D^2u": MCEstimate.from_samples(trace)}
    return PDEResidualReport(float(t), delta, dt_fd, dt, terms,
                             MCEstimate.from_samples(res), sweep)


@dataclass
class RefinementRow:
    n_steps: int
    n_paths: int
    mean_abs_residual: float
    residuals: list


def pde_refinement_study(model, payoff, t, y, levels=((32, 4096), (64, 16384)), reps=3,
                         seed=0, T=1.0, space=None, threads=None):
    """Mean |residual| over ``reps`` fixed seeds per (n_steps, n_paths)
    level; each level halves dt (hence delta and dt_fd) and should use 4x
    the paths of the previous one."""
    rows = []
    for n_steps, n_paths in levels:
        rs = [pde_residual(model, payoff, t, y, None, None, T, n_paths, seed + r, n_steps,
                           space, threads).residual for r in range(reps)]
        rows.append(RefinementRow(n_steps, n_paths, float(np.mean([abs(r.mean) for r in rs])),
                                  rs))
    return rows


# -- nested Monte Carlo -------------------------------------------------------

def _nested_increments(seed, key, n, N, m, dt, inner, stream):
    """Antithetic increments (inner, N, m) for steps n..N-1 (zeros before)."""
    half = inner // 2
    gen = rng.path_generator(seed, key, stream)
    z = gen.standard_normal((half, N - n, m)) * np.sqrt(dt)
    dW = np.zeros((inner, N, m))
    dW[:half, n:] = z
    dW[half:2 * half, n:] = -z
    if inner % 2:
        dW[-1, n:] = gen.standard_normal((N - n, m)) * np.sqrt(dt)
    return dW


def _stream(kind, n):
    """Counter high word for nested draws: NESTED tag, purpose and step."""
    return rng.NESTED | (kind << 8) | (n << 16)


def _check_budget(outer, inner, budget):
    if outer * inner > budget:
        raise NestedBudgetExceeded(f"nested budget {outer} x {inner} exceeds cap {budget}")


def _inner_value(st, curve, n, inner, seed, key, kind, w):
    """Mean and sample std of phi(lambda(T)) restarted from ``curve`` at t_n."""
    N, m = st.N, st.model.m
    dW = _nested_increments(seed, key, n, N, m, st.grid.dt, inner, _stream(kind, n))
    _, _, _, lam = run_model(st.model, st.grid, w, curve, np.zeros(inner, np.int64), seed, dW,
                             n0=n, store=(N,))
    return st.payoff.f(st.ell(lam[:, 0])).mean()


def gaussian_quadratic_value(model, grid, n, curve):
    """Closed form of E[X_T^2 | F_{t_n}] for b = 0, constant sigma, on the
    scheme: lambda(t_n, T - t_n)^2 + sigma^2 sum_{L <= N - n} B(L, 0)^2 dt."""
    N = grid.n_steps
    sig = float(model.coeffs.sigma(np.zeros((1, 1)))[0, 0, 0])
    mean = curve.values(np.array([grid.T - grid.nodes[n]]))[:, 0, 0]
    if N == n:
        return mean ** 2
    _, B = lag_weights(model.kernel, grid.dt, N - n, 0.0)
    return mean ** 2 + sig ** 2 * float(np.sum(B[:, 0, 0] ** 2)) * grid.dt


@dataclass
class MartingaleRow:
    t: float
    drift: MCEstimate
    mean_u: MCEstimate


def martingale_check(model, payoff, lift, checkpoints, inner=DEFAULT_INNER, outer=None,
                     budget=DEFAULT_BUDGET, closed_form=None, seed=None, threads=None):
    """E[u(t_n, lambda(t_n))] - u(0, lambda_0) at each checkpoint.

    u(t_n, lambda_i(t_n)) is a nested estimate (``inner`` antithetic paths
    restarted from the exact state of outer path i) or ``closed_form(n,
    curve)``.  The drift is estimated from the per-path differences
    u(t_n, lambda_i(t_n)) - phi(lambda_i(T)), whose mean is zero by the tower
    property.  The run must start at 0 and store step N.
    """
    _require_compliant(model)
    st = _Setup(model, payoff, lift.grid, lift.space, threads)
    N = st.N
    if lift.n0 != 0 or N not in lift.store:
        raise ValueError("martingale check needs a run from 0 storing step N")
    outer = lift.n_paths if outer is None else min(outer, lift.n_paths)
    if closed_form is None:
        _check_budget(outer, inner, budget)
    seed = lift.seed if seed is None else seed
    phiT = payoff.f(st.ell(lift.at_step(N)[:outer]))
    w = SchemeWeights.build(lift.kernel, lift.grid, lift.space.nodes)
    rows = []
    for t in checkpoints:
        n = lift.grid.index(t)
        if n == 0:
            zero = MCEstimate(0.0, 0.0, outer)
            rows.append(MartingaleRow(float(t), zero, MCEstimate.from_samples(phiT)))
            continue
        if closed_form is not None:
            u = closed_form(n, lift.state(n, np.arange(outer)))
        elif n == N:
            u = phiT.copy()
        else:
            def block(rows_):
                return np.array([_inner_value(st, lift.state(n, [i]), n, inner, seed, int(i),
                                              0, w) for i in rows_])
            u = parallel.concat(parallel.map_blocks(block, outer, threads, chunk=16))
        rows.append(MartingaleRow(float(t), MCEstimate.from_samples(u - phiT),
                                  MCEstimate.from_samples(u)))
    return rows


@dataclass
class ConditionalReport:
    t: float
    lhs: MCEstimate
    rhs: MCEstimate
    difference: MCEstimate
    closed_form: dict = None


def conditional_expectation(model, payoff, lift, t, inner=DEFAULT_INNER, outer=64,
                            budget=DEFAULT_BUDGET, closed_form=None, seed=None, threads=None):
    """E[phi(X_T) | F_t] two ways for the first ``outer`` paths of ``lift``.

    lhs: the original recursion continued past t_n with the path's own
    sources before t_n and fresh increments after (conditional law of X_T);
    rhs: u(t_n, lambda(t_n)) by restarting the lift from the exact state
    curve with independent increments.  ``closed_form(n, curve)`` adds
    comparisons of both sides with an exact value.
    """
    _require_compliant(model)
    if payoff.kind != "pointwise":
        raise ValueError("conditional expectations use pointwise payoffs phi(X_T)")
    if lift.n0 != 0:
        raise ValueError("conditional expectation needs a run from 0")
    st = _Setup(model, payoff, lift.grid, lift.space, threads)
    N, m, dt = st.N, model.m, lift.grid.dt
    outer = min(outer, lift.n_paths)
    _check_budget(outer, inner, budget)
    seed = lift.seed if seed is None else seed
    n = lift.grid.index(t)
    w0 = SchemeWeights.build(lift.kernel, lift.grid)
    wx = SchemeWeights.build(lift.kernel, lift.grid, lift.space.nodes)
    c = payoff.component
    if n == N:
        XT = payoff.f(lift.paths.X[:outer, -1, c])
        lhs = rhs = XT
    else:
        def block(rows_):
            out = []
            for i in rows_:
                dW = _nested_increments(seed, int(i), n, N, m, dt, inner, _stream(1, n))
                prefix = (np.repeat(lift.paths.D[i:i + 1, :n], inner, 0),
                          np.repeat(lift.paths.G[i:i + 1, :n], inner, 0))
                Z, _, _, _ = run_model(model, lift.grid, w0, lift.x0.for_paths([i]),
                                       np.full(inner, lift.path_ids[i]), lift.seed, dW,
                                       n0=n, prefix=prefix)
                a = payoff.f(Z[:, -1, c]).mean()
                b = _inner_value(st, lift.state(n, [i]), n, inner, seed, int(i), 2, wx)
                out.append((a, b))
            return np.array(out).reshape(-1, 2)
        res = parallel.concat(parallel.map_blocks(block, outer, threads, chunk=16))
        lhs, rhs = res[:, 0], res[:, 1]
    cf = None
    if closed_form is not None:
        exact = closed_form(n, lift.state(n, np.arange(outer)))
        cf = {"lhs - exact": MCEstimate.from_samples(lhs - exact),
              "rhs - exact": MCEstimate.from_samples(rhs - exact)}
    return ConditionalReport(float(t), MCEstimate.from_samples(lhs),
                             MCEstimate.from_samples(rhs),
                             MCEstimate.from_samples(lhs - rhs), cf)


# -- Fokker-Planck residuals --------------------------------------------------

@dataclass
class FPERow:
    t: float
    residual: MCEstimate
    lhs: MCEstimate
    rhs: float = None


def _step_state(lift, k):
    X = lift.paths.X[:, k - lift.n0]
    if k == lift.n0 and getattr(lift.x0, "singular", False):
        X = np.broadcast_to(lift.x0.start_value(lift.grid.dt), X.shape)
    return X


def fpe_mild_residual(model, payoff, lift, steps=None, threads=None):
    """<mu_t, phi> - phi(S(t) y) - int_0^t <mu_s, L_{t-s} phi> ds at stored steps.

    For cylinder payoffs L_r phi(z) = f'(l(S(r) z)) l(S(r) K b(z(0)))
    + 1/2 f''(l(S(r) z)) sum_i l(S(r) K sigma(z(0)) e_i)^2.  The s-integral
    is a left-point sum over steps with S(r) K replaced, per cell, by the
    scheme's weights A(L, .)/dt (drift) and B(L, .) (noise), so the
    identity is exact for the discrete scheme up to Monte Carlo error.
    """
    if payoff.kind == "pointwise":
        raise TestFunctionNotCompliant("mild FPE test functions are cylinder payoffs")
    st = _Setup(model, payoff, lift.grid, lift.space, threads)
    g, x = lift.grid, lift.space.nodes
    steps = [k for k in lift.store if k > lift.n0] if steps is None else list(steps)
    N = g.n_steps
    A, B = lag_weights(lift.kernel, g.dt, N, x)          # (N, J, d)
    f = payoff.f
    rows = []
    for n in steps:
        lhs = f(st.ell(lift.at_step(n)))
        el = g.nodes[n] - g.nodes[lift.n0]
        y_n = lift.x0.values(el + x, lift.path_ids, lift.seed)
        acc = np.zeros(lift.n_paths)
        for k in range(lift.n0, n):
            L = n - k
            z = lift.state(k) if k > lift.n0 else None
            shifted = (z.values(L * g.dt + x) if z is not None else
                       lift.x0.values(el + x, lift.path_ids, lift.seed))
            ls = st.ell(shifted)
            X = _step_state(lift, k)
            bk = model.coeffs.b(X)
            sk = model.coeffs.sigma(X)
            drift = np.einsum("jd,pd->p", st.c * A[L - 1] / g.dt, bk)
            noise = np.einsum("jd,pda->pa", st.c * B[L - 1], sk)
            acc += g.dt * (f.d1(ls) * drift + 0.5 * f.d2(ls) * np.sum(noise ** 2, axis=1))
        rhs0 = f(st.ell(y_n))
        rows.append(FPERow(float(g.nodes[n]), MCEstimate.from_samples(lhs - rhs0 - acc),
                           MCEstimate.from_samples(lhs)))
    return rows


def quadratic_cylinder_rhs(model, payoff, lift, n):
    """Closed form <S(t)y, g>^2 + sigma^2 sum_L l(B(L, .))^2 dt of the mild FPE
    for b = 0, constant sigma, quadratic cylinder payoff (scheme weights)."""
    st = _Setup(model, payoff, lift.grid, lift.space)
    g, x = lift.grid, lift.space.nodes
    el = g.nodes[n] - g.nodes[lift.n0]
    y_n = lift.x0.values(el + x)[0]
    sig = float(model.coeffs.sigma(np.zeros((1, 1)))[0, 0, 0])
    L = n - lift.n0
    if L == 0:
        return float(_apply(st.c, y_n)) ** 2
    _, B = lag_weights(lift.kernel, g.dt, L, x)
    return float(_apply(st.c, y_n)) ** 2 + sig ** 2 * g.dt * float(
        np.sum(_apply(st.c, B) ** 2))


@dataclass(frozen=True, eq=False)
class ShiftFunctional:
    """Phi_s(z) = f(l_s(z)),  l_s(z) = int_0^X z'(s + xi) . g'(xi) w(xi) dxi.

    Closed-form singular derivatives: DPhi_s(z)(h) = f'(l_s(z)) l_s(h) with
    l_s(K e_i) = int K_i'(s + xi) g_i'(xi) w(xi) dxi, finite for s >= 0 when
    the weight is admissible.
    """

    g: InitialCurve
    f: Smooth1D
    weight: object
    x_max: float = 10.0
    n_cells: int = 48

    def rule(self, singular=False):
        sp = SpaceGrid(np.concatenate([[0.0], np.geomspace(1e-3, self.x_max, self.n_cells)]))
        pts, wts, cells = sp.cell_rule(self.weight.beta, self.weight.c, 4)
        if not singular:
            return pts, wts
        spts, swts, _ = sp.singular_rule(self.weight.beta, self.weight.c)
        first = cells == 0
        return np.concatenate([spts, pts[~first]]), np.concatenate([swts, wts[~first]])

    def ell(self, curve_derivs, gd, wts):
        """sum_q w_q z'(s + xi_q) . g'(xi_q) for derivatives (P, Q, d)."""
        return np.einsum("pqd,qd,q->p", curve_derivs, gd, wts)


def fpe_singular_residual(model, functional, lift, steps=None, payoff=None, inner=DEFAULT_INNER,
                          outer=None, budget=DEFAULT_BUDGET, closed_form=None, threads=None):
    """Residual of <mu_t, Phi_t> - Phi_0(y) - int_0^t <mu_s, L Phi_s> ds.

    ``functional`` is a ``ShiftFunctional`` (generator with d_s, the
    transport d_x z, K b and the trace term, trapezoid in s on the grid)
    or the string ``"u"`` with a compliant ``payoff``: then Phi = u and the
    generator vanishes, so the residual is the martingale drift.
    """
    if isinstance(functional, str):
        if functional != "u" or payoff is None:
            raise TestFunctionNotCompliant("only Phi = u (with a payoff) or ShiftFunctional")
        ts = [lift.grid.nodes[k] for k in (lift.store if steps is None else steps)]
        rows = martingale_check(model, payoff, lift, ts, inner, outer, budget, closed_form,
                                threads=threads)
        return [FPERow(r.t, r.drift, r.mean_u) for r in rows]
    if not isinstance(functional, ShiftFunctional):
        raise TestFunctionNotCompliant(f"{type(functional).__name__} has no closed-form "
                                       "singular derivatives")
    g = lift.grid
    steps = [k for k in lift.store if k > lift.n0] if steps is None else list(steps)
    fn = functional
    f = fn.f
    pts, wts = fn.rule()
    spts, swts = fn.rule(singular=True)

    def gen(k):
        s = g.nodes[k]
        q, qw = (spts, swts) if s == 0.0 else (pts, wts)
        gd = fn.g.derivatives(q)[0]
        if k == lift.n0:
            d1 = lift.x0.derivatives(s + q, lift.path_ids, lift.seed)
            d2 = lift.x0.second_derivatives(s + q, lift.path_ids, lift.seed)
        else:
            z = lift.state(k)
            d1, d2 = z.derivatives(s + q), z.second_derivatives(s + q)
        lz = fn.ell(d1, gd, qw)
        l2 = fn.ell(d2, gd, qw)
        kd = model.kernel.diag(s + q, 1)                    # (Q, d)
        lK = np.einsum("qd,qd,q->d", kd, gd, qw)           # l_s(K e_i)
        X = _step_state(lift, k)
        bk, sk = model.coeffs.b(X), model.coeffs.sigma(X)
        first = 2.0 * l2 + bk @ lK
        tr = np.sum(np.einsum("d,pda->pa", lK, sk) ** 2, axis=1)
        return f(lz), f.d1(lz) * first + 0.5 * f.d2(lz) * tr

    cache = {}
    for k in range(lift.n0, max(steps) + 1):
        cache[k] = gen(k)
    rows = []
    phi0 = cache[lift.n0][0]
    for n in steps:
        vals = np.stack([cache[k][1] for k in range(lift.n0, n + 1)], axis=1)
        integral = g.dt * (vals.sum(axis=1) - 0.5 * (vals[:, 0] + vals[:, -1]))
        lhs = cache[n][0]
        rows.append(FPERow(float(g.nodes[n]), MCEstimate.from_samples(lhs - phi0 - integral),
                           MCEstimate.from_samples(lhs)))
    return rows
