"""Command-line entry point.

    volterra-lift GROUP ACTION [--config FILE] [--set section.key=value ...] [flags]
    volterra-lift run CONFIG

Every run writes its results (JSON record, CSV tables) and ``manifest.txt``
(the resolved configuration, itself a valid config) to ``output.dir``.
Exit codes: 0 success, 1 task failure, 2 configuration error.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, coefficients as coef, config as cfgmod, io, parallel
from .coefficients import Smooth1D
from .curves import ConstantCurve, GaussianBumpCurve, KernelCurve
from .errors import ConfigParse, TaskFailure, VolterraError
from .kernels import (KernelSpec, TimeGrid, admissible_q_interval, default_q,
                      verify_assumptions, verify_gronwall)
from .kolmogorov import (PayoffSpec, ShiftFunctional, conditional_expectation,
                         fpe_mild_residual, fpe_singular_residual, martingale_check,
                         pde_residual, singular_gradient, singular_hessian, value)
from .lift import (LiftEnsemble, flow_restart_check, forward_curve_check, max_z_score,
                   simulate_lift)
from .ou_lift import OUField, cm_quadrature, ou_curve_equivalence, simulate_ou
from .sve import (MCEstimate, PathEnsemble, SVEModel, default_beta, mollification_rate, preset,
                  simulate)
from .tangent import (_require_threshold, bump_first, bump_second, first_variation,
                      kernel_direction, second_variation)
from .wspace import SpaceGrid, WeightSpec, check_admissible, rkhs_constant

# flag -> config key
FLAGS = {
    "model": "model.preset", "H": "model.kernel.H", "beta": "model.weight.beta",
    "paths": "mc.paths", "steps": "grid.steps", "T": "grid.T", "seed": "mc.seed",
    "out": "output.dir", "payoff": "task.payoff", "t": "task.t", "delta": "task.delta",
    "nodes": "task.nodes", "dir": "task.direction", "target": "task.target",
}

NEEDS_H = ("fbm2", "fbm1", "rbergomi", "rbergomi-smooth", "rheston", "smooth", "linear",
           "gaussian")
COEF_KEYS = ("sigma", "a", "s", "sigma0", "sigma1", "nu", "rho", "rate", "v0")


# -- building objects from a config -------------------------------------------

def build_grid(cfg):
    return TimeGrid(cfg.get("grid.T"), cfg.get("grid.steps"))


def build_space(cfg):
    return SpaceGrid.lift_default(cfg.get("grid.space.nodes"), cfg.get("grid.space.x_max"),
                                  cfg.get("grid.space.first"))


def _x0(cfg, kernel):
    kind = cfg.get("model.x0")
    if kind == "constant":
        return ConstantCurve([cfg.get("model.x0.value")] * kernel.dim)
    if kind == "bump":
        return GaussianBumpCurve(cfg.get("model.x0.center"), cfg.get("model.x0.width"),
                                 cfg.get("model.x0.amp"), cfg.get("model.x0.value"))
    if kind == "kernel":
        return KernelCurve(kernel, delta=cfg.get("model.x0.delta"))
    raise ConfigParse(f"model.x0: unknown initial curve {kind!r}")


def build_model(cfg):
    """SVEModel from the [model] section (a preset or an explicit kernel)."""
    name = cfg.get("model.preset")
    kw = {k: cfg.get(f"model.coefficients.{k}") for k in COEF_KEYS}
    kw = {k: v for k, v in kw.items() if v is not None}
    beta = cfg.get("model.weight.beta")
    dt = cfg.get("grid.T") / cfg.get("grid.steps")
    if name:
        H = cfg.require("model.kernel.H") if name in NEEDS_H else 0.5
        x0 = (cfg.get("model.x0.value") if cfg.get("model.x0") == "constant"
              else _x0(cfg, KernelSpec.power_law(H, gamma_normalized=True)))
        try:
            m = preset(name, hurst=H, beta=beta, x0=x0, dt=dt, **kw)
        except TypeError as exc:
            raise ConfigParse(f"model.coefficients: {exc}") from None
        except ValueError as exc:
            raise ConfigParse(f"model.preset: {exc}") from None
        return _reweight(m, cfg)
    kind = cfg.require("model.kernel")
    if kind == "power-law":
        H = cfg.require("model.kernel.H")
        kern = KernelSpec.power_law(H, gamma_normalized=True)
    elif kind == "exponential":
        H, kern = None, KernelSpec.exponential(cfg.get("model.kernel.rate"))
    elif kind == "brownian":
        H, kern = 0.5, KernelSpec.power_law(0.5)
    else:
        raise ConfigParse(f"model.kernel: unknown kernel {kind!r}")
    fam = cfg.get("model.coefficients")
    try:
        c = {"gaussian": coef.gaussian, "linear": coef.linear, "smooth": coef.smooth}[fam](**kw)
    except KeyError:
        raise ConfigParse(f"model.coefficients: unknown family {fam!r}") from None
    except TypeError as exc:
        raise ConfigParse(f"model.coefficients: {exc}") from None
    b = (default_beta(H) if H is not None else 0.5) if beta is None else beta
    w = WeightSpec(b, cfg.get("model.weight.c"), H if (H is not None and H < 0.5) else None)
    return SVEModel(kern, c, _x0(cfg, kern), w, fam)


def _reweight(m, cfg):
    c = cfg.get("model.weight.c")
    if m.weight is None or m.weight.c == c:
        return m
    return SVEModel(m.kernel, m.coeffs, m.x0, WeightSpec(m.weight.beta, c, m.weight.hurst),
                    m.name)


def build_payoff(cfg):
    spec = cfg.get("task.payoff")
    kind, _, fname = spec.partition(":")
    fs = {"square": Smooth1D.square, "tanh": Smooth1D.tanh}
    if fname and fname not in fs:
        raise ConfigParse(f"task.payoff: unknown function {fname!r}")
    g = GaussianBumpCurve(cfg.get("task.g.center"), cfg.get("task.g.width"),
                          cfg.get("task.g.amp"))
    if kind == "pointwise":
        return PayoffSpec.pointwise(fs[fname or "square"](), cfg.get("task.component"))
    if kind == "cylinder":
        return PayoffSpec.cylinder(g, fs[fname or "tanh"]())
    if kind == "quadratic":
        return PayoffSpec.quadratic(g)
    raise ConfigParse(f"task.payoff: unknown payoff {spec!r}")


def _deltas(cfg, dt):
    raw = cfg.get("task.delta")
    if raw is None:
        return None
    try:
        vals = [float(v) for v in raw.split(",")]
    except ValueError:
        raise ConfigParse(f"task.delta: cannot parse {raw!r}") from None
    return vals[0] if len(vals) == 1 else vals


def _direction(cfg, model):
    d = cfg.get("task.direction")
    delta = _deltas(cfg, 0.0)
    delta = 0.0 if delta is None or isinstance(delta, list) else delta
    if d == "K":
        return kernel_direction(model.kernel, cfg.get("task.component"), delta)
    if d == "curve":
        return GaussianBumpCurve(cfg.get("task.g.center"), cfg.get("task.g.width"),
                                 cfg.get("task.g.amp"))
    raise ConfigParse(f"task.direction: expected K or curve, got {d!r}")


# -- tasks ---------------------------------------------------------------------

class Context:
    def __init__(self, cfg, threads, out):
        self.cfg, self.threads, self.out = cfg, threads, out
        self.model = build_model(cfg)
        self.grid = build_grid(cfg)
        self.space = build_space(cfg)
        self.paths = cfg.get("mc.paths")
        self.seed = cfg.get("mc.seed")
        self.csv_paths = cfg.get("output.csv_paths")

    def path(self, name):
        return os.path.join(self.out, name)

    def params(self, *keys):
        return {k: self.cfg.get(k) for k in keys}

    def lift(self, store=None, n_paths=None):
        return simulate_lift(self.model, self.grid, self.space,
                             self.paths if n_paths is None else n_paths, self.seed,
                             self.threads, store=store)


BASE = ("model.preset", "model.kernel.H", "grid.T", "grid.steps", "mc.paths", "mc.seed")


def task_sve_simulate(ctx):
    ens = simulate(ctx.model, ctx.grid, ctx.paths, ctx.seed, ctx.threads, keep_sources=False)
    io.write_svee(ctx.path("paths.svee"), ens.X)
    PathEnsemble(ens.grid, ens.X[:ctx.csv_paths], ens.dW[:ctx.csv_paths], ens.seed,
                 ens.fingerprint).to_csv(ctx.path("paths.csv"))
    XT = ens.X[:, -1, 0]
    var = MCEstimate.from_samples((XT - XT.mean()) ** 2 * len(XT) / (len(XT) - 1))
    return io.record("sve simulate", ctx.params(*BASE), MCEstimate.from_samples(XT),
                     per_term={"var X_T": var})


def task_lift_simulate(ctx):
    lf = ctx.lift()
    sub = LiftEnsemble(lf.model, lf.kernel, lf.grid, lf.space, lf.lam[:ctx.csv_paths],
                       lf.store, lf.paths, lf.x0, lf.seed)
    sub.to_csv(ctx.path("lift.csv"))
    lift_prop = float(np.max(np.abs(lf.lam[:, :, 0] - lf.paths.X)))
    return io.record("lift simulate", ctx.params(*BASE),
                     MCEstimate.from_samples(lf.at_step(ctx.grid.n_steps)[:, 0, 0]),
                     per_term={"lift property sup |lambda(t,0) - X_t|": lift_prop})


def task_lift_flow_check(ctx):
    lf = ctx.lift()
    rep = flow_restart_check(lf, ctx.cfg.get("task.t"), ctx.threads)
    return io.record("lift flow-check", ctx.params(*BASE, "task.t"), rep.discrepancy, None,
                     {"scale": rep.scale})


def task_lift_forward_check(ctx):
    lf = ctx.lift()
    target = ctx.cfg.get("task.target")
    ts, xs, est, exact = forward_curve_check(ctx.model, lf, ctx.cfg.get("task.x_max"), target)
    rows = [(t, x, e.mean, e.std_error, ex, e.z_score(ex))
            for t, row, erow in zip(ts, est, exact) for x, e, ex in zip(xs, row, erow)]
    io.write_table(ctx.path("forward.csv"), ["t", "x", "estimate", "std_error", "exact", "z"],
                   rows)
    return io.record("lift forward-check", ctx.params(*BASE, "task.target"),
                     max_z_score(est, exact), None, {"pass (|z| <= 3)": max_z_score(est, exact) <= 3})


def _ou(ctx):
    quad = cm_quadrature(ctx.model.kernel, ctx.cfg.get("task.nodes"), ctx.grid.T, ctx.grid.dt)
    return quad, simulate_ou(ctx.model, quad, ctx.grid, ctx.paths, ctx.seed, ctx.threads)


def task_oulift_simulate(ctx):
    quad, ou = _ou(ctx)
    OUField(ou.grid, quad, ou.Y[:ctx.csv_paths], ou.X[:ctx.csv_paths], ou.store,
            ou.dW[:ctx.csv_paths], ou.seed, ou.fingerprint, ou.x0).to_csv(ctx.path("ou.csv"))
    return io.record("oulift simulate", ctx.params(*BASE, "task.nodes"),
                     MCEstimate.from_samples(ou.X[:, -1]), None,
                     {"nodes": quad.count, "max_rel_kernel_error": quad.max_rel_error})


def task_oulift_compare(ctx):
    quad, ou = _ou(ctx)
    lf = simulate_lift(ctx.model, ctx.grid, ctx.space, ctx.paths, ctx.seed, ctx.threads,
                       dW=ou.dW)
    rep = ou_curve_equivalence(ou, lf)
    return io.record("oulift compare", ctx.params(*BASE, "task.nodes"), rep.discrepancy, None,
                     {"x0 discrepancy": rep.x_discrepancy, "nodes": rep.n_nodes,
                      "max_rel_kernel_error": quad.max_rel_error})


def task_tangent_first(ctx):
    N = ctx.grid.n_steps
    lf = ctx.lift(store=(N,))
    h = _direction(ctx.cfg, ctx.model)
    s = ctx.cfg.get("task.t")
    z = first_variation(ctx.model, h, s, lf, store=(N,), threads=ctx.threads)
    eps = ctx.cfg.get("task.eps") or 1e-4
    rep = bump_first(ctx.model, lf, h, z, eps=eps, threads=ctx.threads)
    _tangent_csv(ctx, z, N)
    return io.record("tangent first", ctx.params(*BASE, "task.direction", "task.delta",
                                                 "task.t"),
                     rep.rel_error, None, {"bump eps": rep.eps, "H1_w norm": rep.norm})


def _tangent_csv(ctx, z, N):
    vals = z.at_step(N)[:ctx.csv_paths]
    rows = [(p, ctx.grid.T, x, *vals[p, j]) for p in range(len(vals))
            for j, x in enumerate(ctx.space.nodes)]
    io.write_table(ctx.path("tangent.csv"), ["path", "t", "x"] +
                   [f"zeta{i + 1}" for i in range(ctx.model.d)], rows)


def task_tangent_second(ctx):
    N = ctx.grid.n_steps
    lf = ctx.lift(store=(N,))
    h = _direction(ctx.cfg, ctx.model)
    s = ctx.cfg.get("task.t")
    z1 = first_variation(ctx.model, h, s, lf, store=(N,), threads=ctx.threads)
    z2 = second_variation(ctx.model, h, h, s, lf, z1, z1, method="direct", store=(N,),
                          threads=ctx.threads)
    eps = ctx.cfg.get("task.eps") or 1e-3
    rep = bump_second(ctx.model, lf, h, z2, eps=eps, threads=ctx.threads)
    _tangent_csv(ctx, z2, N)
    return io.record("tangent second", ctx.params(*BASE, "task.direction", "task.delta",
                                                  "task.t"),
                     rep.rel_error, None, {"bump eps": rep.eps, "H1_w norm": rep.norm})


def task_tangent_rates(ctx):
    deltas = np.asarray(ctx.cfg.get("task.deltas")) * ctx.grid.dt
    rate = mollification_rate(ctx.model, ctx.grid, deltas, ctx.paths, ctx.seed, ctx.threads)
    io.write_table(ctx.path("rates.csv"), ["delta", "sup_mean_sq_error", "std_error"],
                   [(d, e.mean, e.std_error) for d, e in zip(rate.deltas, rate.sup_errors)])
    q = ctx.cfg.get("task.q")
    H = ctx.model.hurst
    if q is None and H is not None:
        q = default_q(admissible_q_interval(H, ctx.model.weight.beta))
    target = None if q is None else (q - 2.0) / q - 0.15
    return io.record("tangent rates", ctx.params(*BASE, "task.deltas"), rate.slope, None,
                     {"q": q, "slope threshold": target,
                      "pass": None if target is None else rate.slope >= target})


def _kolmo_common(ctx):
    return build_payoff(ctx.cfg), ctx.cfg.get("task.t"), ctx.model.x0


def _sweep_record(op, ctx, res, keys):
    if isinstance(res, MCEstimate):
        return io.record(op, ctx.params(*BASE, *keys), res)
    per = {f"delta={d!r}": e for d, e in zip(res.deltas, res.estimates)}
    est = res.richardson if res.richardson is not None else res.estimates[-1]
    return io.record(op, ctx.params(*BASE, *keys), est, per_term=per)


KOLMO_KEYS = ("task.payoff", "task.t", "task.delta")


def task_kolmo_value(ctx):
    pay, t, y = _kolmo_common(ctx)
    est = value(ctx.model, pay, t, y, n_paths=ctx.paths, seed=ctx.seed, space=ctx.space,
                threads=ctx.threads, grid=ctx.grid)
    return io.record("kolmo value", ctx.params(*BASE, *KOLMO_KEYS), est)


def _default_sweep(ctx):
    d = _deltas(ctx.cfg, ctx.grid.dt)
    return [8 * ctx.grid.dt, 4 * ctx.grid.dt, 2 * ctx.grid.dt, ctx.grid.dt] if d is None else d


def task_kolmo_grad(ctx):
    pay, t, y = _kolmo_common(ctx)
    h = kernel_direction(ctx.model.kernel, ctx.cfg.get("task.component"))
    if ctx.cfg.get("task.direction") == "curve":
        h = _direction(ctx.cfg, ctx.model)
    res = singular_gradient(ctx.model, pay, t, y, h, _default_sweep(ctx), n_paths=ctx.paths,
                            seed=ctx.seed, space=ctx.space, threads=ctx.threads, grid=ctx.grid)
    return _sweep_record("kolmo grad", ctx, res, KOLMO_KEYS + ("task.direction",))


def task_kolmo_hess(ctx):
    pay, t, y = _kolmo_common(ctx)
    res = singular_hessian(ctx.model, pay, t, y, _default_sweep(ctx), n_paths=ctx.paths,
                           seed=ctx.seed, space=ctx.space, threads=ctx.threads, grid=ctx.grid)
    return _sweep_record("kolmo hess", ctx, res, KOLMO_KEYS)


def task_kolmo_pde(ctx):
    pay, t, y = _kolmo_common(ctx)
    if not ctx.cfg.get("task.force"):
        _require_threshold(ctx.model)
    d = _deltas(ctx.cfg, ctx.grid.dt)
    if isinstance(d, list):
        raise ConfigParse("task.delta: pde takes one delta or none (default sweep)")
    rep = pde_residual(ctx.model, pay, t, y, d, ctx.cfg.get("task.dt_fd"), n_paths=ctx.paths,
                       seed=ctx.seed, space=ctx.space, threads=ctx.threads, grid=ctx.grid)
    r = rep.residual
    per = dict(rep.terms)
    per["within 3 std errors"] = r.within(0.0, 3.0)
    return io.record("kolmo pde", ctx.params(*BASE, *KOLMO_KEYS, "task.dt_fd"), r, per_term=per)


def _nested_lift(ctx):
    n = min(ctx.cfg.get("mc.outer"), ctx.paths)
    return simulate_lift(ctx.model, ctx.grid, ctx.space, n, ctx.seed, ctx.threads)


def _residual_rows(ctx, name, rows, attr):
    io.write_table(ctx.path(name), ["t", "estimate", "std_error"],
                   [(r.t, getattr(r, attr).mean, getattr(r, attr).std_error) for r in rows])
    worst = max(rows, key=lambda r: abs(getattr(r, attr).z_score(0.0)) if
                getattr(r, attr).std_error > 0 else 0.0)
    per = {f"t={r.t!r}": getattr(r, attr) for r in rows}
    per["all within 3 std errors"] = all(getattr(r, attr).within(0.0, 3.0) for r in rows)
    return getattr(worst, attr), per


NESTED_KEYS = ("mc.inner", "mc.outer", "mc.budget", "task.payoff", "task.checkpoints")


def task_kolmo_martingale(ctx):
    lf = _nested_lift(ctx)
    rows = martingale_check(ctx.model, build_payoff(ctx.cfg), lf, ctx.cfg.get("task.checkpoints"),
                            ctx.cfg.get("mc.inner"), None, ctx.cfg.get("mc.budget"),
                            threads=ctx.threads)
    worst, per = _residual_rows(ctx, "martingale.csv", rows, "drift")
    return io.record("kolmo martingale", ctx.params(*BASE, *NESTED_KEYS), worst, per_term=per)


def task_kolmo_condexp(ctx):
    lf = _nested_lift(ctx)
    rep = conditional_expectation(ctx.model, build_payoff(ctx.cfg), lf, ctx.cfg.get("task.t"),
                                  ctx.cfg.get("mc.inner"), lf.n_paths, ctx.cfg.get("mc.budget"),
                                  threads=ctx.threads)
    return io.record("kolmo condexp", ctx.params(*BASE, *NESTED_KEYS, "task.t"), rep.difference,
                     per_term={"continuation": rep.lhs, "restart": rep.rhs})


def _fpe_lift(ctx):
    steps = sorted({ctx.grid.index(t) for t in ctx.cfg.get("task.checkpoints")} - {0})
    return ctx.lift(), steps


def task_kolmo_fpe_mild(ctx):
    lf, steps = _fpe_lift(ctx)
    rows = fpe_mild_residual(ctx.model, build_payoff(ctx.cfg), lf, steps, ctx.threads)
    worst, per = _residual_rows(ctx, "fpe_mild.csv", rows, "residual")
    return io.record("kolmo fpe-mild", ctx.params(*BASE, "task.payoff", "task.checkpoints"),
                     worst, per_term=per)


def task_kolmo_fpe_singular(ctx):
    fam = ctx.cfg.get("task.functional")
    pay = build_payoff(ctx.cfg)
    if fam == "u":
        lf = _nested_lift(ctx)
        steps = [ctx.grid.index(t) for t in ctx.cfg.get("task.checkpoints")]
        rows = fpe_singular_residual(ctx.model, "u", lf, steps, pay, ctx.cfg.get("mc.inner"),
                                     None, ctx.cfg.get("mc.budget"), threads=ctx.threads)
    elif fam == "example":
        lf, steps = _fpe_lift(ctx)
        fn = ShiftFunctional(pay.g if pay.g is not None else GaussianBumpCurve(
            ctx.cfg.get("task.g.center"), ctx.cfg.get("task.g.width"), ctx.cfg.get("task.g.amp")),
            pay.f, ctx.model.weight)
        rows = fpe_singular_residual(ctx.model, fn, lf, steps)
    else:
        raise ConfigParse(f"task.functional: expected u or example, got {fam!r}")
    worst, per = _residual_rows(ctx, "fpe_singular.csv", rows, "residual")
    return io.record("kolmo fpe-singular",
                     ctx.params(*BASE, "task.functional", "task.payoff", "task.checkpoints"),
                     worst, per_term=per)


def task_verify_kernel(ctx):
    m = ctx.model
    k0 = m.kernel.scalars[-1]
    q = ctx.cfg.get("task.q")
    if q is None:
        interval = (admissible_q_interval(k0.hurst, m.weight.beta) if k0.kind == "power-law"
                    else (2.0, np.inf))
        if interval is None:
            raise TaskFailure("no admissible q for this kernel and weight")
        q = default_q(interval)
    rep = verify_assumptions(k0 if m.kernel.dim > 1 else m.kernel, m.weight, q, ctx.grid.T)
    rep.to_csv(ctx.path("kernel_conditions.csv"))
    return io.record("verify kernel", ctx.params(*BASE, "model.weight.beta", "task.q"),
                     rep.all_pass, None,
                     {name: {"value": v, "pass": p} for name, v, p in rep.rows()} |
                     {"q": q, "admissible_q_interval": list(rep.admissible_q_interval or ())})


def task_verify_weight(ctx):
    w = ctx.model.weight
    ts = np.linspace(0.0, 4.0, 17)
    rep = check_admissible(w, ts)
    io.write_table(ctx.path("weight.csv"), ["t", "sup_ratio", "bound", "pass"],
                   [(t, r, b, bool(r <= b * (1 + 1e-12)))
                    for t, r, b in zip(rep.t, rep.sup_ratio, rep.bound)])
    cx = {f"C_x(x={x!r})": rkhs_constant(w, x) for x in (0.0, 0.5, 1.0, 2.0)}
    return io.record("verify weight", ctx.params("model.weight.beta", "model.weight.c"),
                     rep.passed, None, cx)


def task_verify_gronwall(ctx):
    k = ctx.model.kernel.scalars[-1]
    g = ctx.grid
    kv = np.abs(k.diag(g.nodes)[..., 0])
    # x_n = f_n + sum_{j <= n} A_j (one Picard step from f = 1 with the check's
    # trapezoid cell weights) satisfies x <= f + k * x because k >= 0
    lo, hi = kv[:-1].copy(), kv[1:]
    lo[~np.isfinite(lo)] = hi[~np.isfinite(lo)]
    f = np.ones(len(g.nodes))
    x = f + np.concatenate([[0.0], np.cumsum(0.5 * g.dt * (lo + hi))])
    rep = verify_gronwall(x, f, kv, g)
    io.write_table(ctx.path("gronwall.csv"), ["t", "x", "bound"], zip(g.nodes, x, rep.bound))
    return io.record("verify gronwall", ctx.params(*BASE), rep.passed, None,
                     {"min_slack": rep.min_slack})


TASKS = {(grp, act): globals()[f"task_{grp}_{act.replace('-', '_')}"]
         for grp, acts in cfgmod.COMMANDS.items() for act in acts}


# -- driver --------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="volterra-lift", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="group", required=True)

    def common(sp):
        sp.add_argument("--config", help="sectioned key=value config file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default ${parallel.ENV_THREADS} or 1)")
        sp.add_argument("--dry-run", action="store_true", help="print the resolved plan only")
        sp.add_argument("--force", action="store_true",
                        help="run the PDE residual below the Hurst threshold")
        for flag in FLAGS:
            sp.add_argument(f"--{flag}", dest=f"flag_{flag}", default=None)

    run = sub.add_parser("run", help="run the task named in a config (or manifest)")
    run.add_argument("config_file")
    common(run)
    for grp, acts in cfgmod.COMMANDS.items():
        g = sub.add_parser(grp).add_subparsers(dest="action", required=True)
        for act in acts:
            common(g.add_parser(act))
    return p


def resolve(args):
    """Resolved ExperimentConfig from defaults, files and flags."""
    cfg = cfgmod.ExperimentConfig()
    path = getattr(args, "config_file", None) or args.config
    if path:
        cfgmod.load(path, cfg)
    if args.group != "run":
        cfg.set("task.command", f"{args.group} {args.action}")
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigParse(f"--set {item!r}: expected section.key=value")
        cfg.set(key.strip(), raw)
    for flag, key in FLAGS.items():
        v = getattr(args, f"flag_{flag}")
        if v is not None:
            cfg.set(key, v)
    if args.force:
        cfg.set("task.force", "true")
    cfg.command  # validates
    return cfg


def execute(cfg, threads=None, dry_run=False, stream=None):
    """Run a resolved config; returns the JSON record (None for dry runs)."""
    stream = sys.stdout if stream is None else stream
    grp, act = cfg.command
    out = cfg.get("output.dir")
    if dry_run:
        stream.write(f"# plan: {grp} {act} -> {out}\n{cfg.dump()}")
        build_model(cfg)
        return None
    os.makedirs(out, exist_ok=True)
    threads = parallel.resolve_threads(threads)
    start = time.perf_counter()
    ctx = Context(cfg, threads, out)
    rec = TASKS[(grp, act)](ctx)
    io.write_json(os.path.join(out, "result.json"), rec)
    wall = time.perf_counter() - start
    with open(os.path.join(out, "manifest.txt"), "w") as fh:
        fh.write(f"# volterra-lift {__version__}\n# seed = {cfg.get('mc.seed')}\n"
                 f"# wall_time_s = {wall:.3f}\n{cfg.dump()}")
    stream.write(f"{grp} {act}: estimate={rec['estimate']} std_error={rec['std_error']} "
                 f"-> {out}\n")
    return rec


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = resolve(args)
        execute(cfg, args.threads, args.dry_run)
    except ConfigParse as exc:
        print(f"ConfigParse: {exc}", file=sys.stderr)
        return 2
    except (VolterraError, ValueError, ArithmeticError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
