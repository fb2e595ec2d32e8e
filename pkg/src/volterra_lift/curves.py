"""Initial curves and directions of the lift.

An ``InitialCurve`` returns, for a set of arguments z >= 0 and a set of
path indices, the array of values of shape (P, len(z), d).  Deterministic
curves return a leading axis of length 1 that broadcasts over paths.
Random curves (type-I fBm history, stationary OU start) draw from the
``INITIAL_CURVE`` sub-stream of each path, so they are F_0-measurable and
reproducible from (seed, path).
"""

import hashlib

import numpy as np
from scipy.special import gamma as gamma_fn

from . import rng
from .engine import history_values
from .quadrature import singular_left_rule
from .kernels import KernelSpec, _pow_diff
from .wspace import Curve


class InitialCurve:
    """Base class: deterministic curves override ``_eval``."""

    dim = 1
    random = False
    singular = False

    def values(self, z, paths=None, seed=0):
        z = np.asarray(z, dtype=float)
        return self._eval(z, 0)[None]

    def derivatives(self, z, paths=None, seed=0):
        z = np.asarray(z, dtype=float)
        return self._eval(z, 1)[None]

    def second_derivatives(self, z, paths=None, seed=0):
        z = np.asarray(z, dtype=float)
        return self._eval(z, 2)[None]

    def _eval(self, z, order):
        raise NotImplementedError

    def cell_mean(self, dt, paths=None, seed=0, n=16):
        """(1/dt) int_0^dt y(z) dz, finite even for integrable singularities."""
        x, w = singular_left_rule(0.0, dt, 0.0, depth=40, n=n)
        return np.einsum("q,pqd->pd", w, self.values(x, paths, seed)) / dt

    def start_value(self, dt, paths=None, seed=0):
        """State used by the first scheme step: y(0), or the cell mean when
        y is singular at 0.  Linear in y term by term."""
        if self.singular:
            return self.cell_mean(dt, paths, seed)
        return self.values(np.zeros(1), paths, seed)[:, 0]

    def to_curve(self, grid):
        """Analytic ``wspace.Curve`` for deterministic curves."""
        if self.random:
            raise ValueError("random curves have no single H^1_w representative")
        return Curve(grid, func=lambda x: self._eval(np.asarray(x), 0),
                     dfunc=lambda x: self._eval(np.asarray(x), 1))

    def for_paths(self, paths):
        """The curve restricted to a block of paths (identity unless row-wise)."""
        return self

    def describe(self):
        return type(self).__name__

    def fingerprint(self):
        return hashlib.sha256(self.describe().encode()).hexdigest()[:16]

    # linear structure
    def __add__(self, other):
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return LinearCombination([(1.0, self), (-1.0, other)])

    def __mul__(self, s):
        return LinearCombination([(float(s), self)])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


class ConstantCurve(InitialCurve):
    """y(z) = x0 for all z."""

    def __init__(self, x0):
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.dim = len(self.x0)

    def _eval(self, z, order):
        base = self.x0 if order == 0 else np.zeros_like(self.x0)
        return np.broadcast_to(base, z.shape + (self.dim,)).copy()

    def describe(self):
        return f"constant{self.x0.tolist()}"


class FunctionCurve(InitialCurve):
    """Deterministic curve from callables f, f', f'' acting on arrays."""

    def __init__(self, f, df=None, d2f=None, dim=1, name="function"):
        self.fs = (f, df, d2f)
        self.dim = dim
        self.name = name

    def _eval(self, z, order):
        fn = self.fs[order]
        if fn is None:
            raise ValueError(f"derivative of order {order} unavailable for {self.name}")
        return np.asarray(fn(z), dtype=float).reshape(z.shape + (self.dim,))

    def describe(self):
        return self.name


class KernelCurve(InitialCurve):
    """y(z) = K(delta + z) v (+ base): a shifted kernel applied to a vector.

    With delta = 0 and a singular kernel the curve is infinite at z = 0;
    ``singular`` is then set and callers must avoid ev_0.
    """

    def __init__(self, kernel, vector=None, delta=0.0, base=None):
        self.kernel = kernel
        self.delta = float(delta)
        self.dim = kernel.dim
        self.vector = np.ones(self.dim) if vector is None else np.asarray(vector, float).reshape(self.dim)
        self.base = np.zeros(self.dim) if base is None else np.asarray(base, float).reshape(self.dim)
        self._shifted = kernel.shifted(self.delta)
        self.singular = self._shifted.is_singular()

    def _eval(self, z, order):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._shifted.diag(z, order) * self.vector
        if order == 0:
            out = out + self.base
        return out

    def describe(self):
        k = self.kernel
        return (f"kernel[{k.kind},H={k.hurst},rate={k.rate},norm={k.gamma_normalized},"
                f"d={k.dim}]delta={self.delta!r}v={self.vector.tolist()}base={self.base.tolist()}")


class GaussianBumpCurve(InitialCurve):
    """y(z) = base + amp exp(-(z - center)^2 / (2 width^2)) (scalar)."""

    def __init__(self, center=0.5, width=0.5, amp=1.0, base=0.0):
        self.center, self.width, self.amp, self.base = map(float, (center, width, amp, base))

    def _eval(self, z, order):
        u = (z - self.center) / self.width
        g = self.amp * np.exp(-0.5 * u * u)
        if order == 0:
            out = self.base + g
        elif order == 1:
            out = -u / self.width * g
        else:
            out = (u * u - 1.0) / self.width ** 2 * g
        return out[..., None]

    def describe(self):
        return f"gauss[{self.center},{self.width},{self.amp},{self.base}]"


class ExponentialMixtureCurve(InitialCurve):
    """y(z) = sum_i c_i exp(-z_i z) (scalar); representable by an OU lift."""

    def __init__(self, rates, coeffs):
        self.rates = np.asarray(rates, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)

    def _eval(self, z, order):
        e = np.exp(-np.multiply.outer(z, self.rates))
        return (e @ (self.coeffs * (-self.rates) ** order))[..., None]

    def describe(self):
        return f"expmix{self.rates.tolist()}{self.coeffs.tolist()}"


class LinearCombination(InitialCurve):
    """sum_i a_i y_i for curves of equal dimension."""

    def __init__(self, terms):
        flat = []
        for a, c in terms:
            if isinstance(c, LinearCombination):
                flat.extend((a * b, cc) for b, cc in c.terms)
            else:
                flat.append((a, c))
        self.terms = flat
        dims = {c.dim for _, c in flat}
        if len(dims) != 1:
            raise ValueError("curves of different dimension")
        self.dim = dims.pop()
        self.random = any(c.random for _, c in flat)
        self.singular = any(c.singular and a != 0 for a, c in flat)

    def _combine(self, method, z, paths, seed):
        out = None
        with np.errstate(invalid="ignore"):  # inf - inf at z = 0 for singular terms
            for a, c in self.terms:
                v = a * getattr(c, method)(z, paths, seed)
                out = v if out is None else out + v
        return out

    def values(self, z, paths=None, seed=0):
        return self._combine("values", z, paths, seed)

    def derivatives(self, z, paths=None, seed=0):
        return self._combine("derivatives", z, paths, seed)

    def second_derivatives(self, z, paths=None, seed=0):
        return self._combine("second_derivatives", z, paths, seed)

    def cell_mean(self, dt, paths=None, seed=0, n=16):
        out = None
        for a, c in self.terms:
            v = a * c.cell_mean(dt, paths, seed, n)
            out = v if out is None else out + v
        return out

    def start_value(self, dt, paths=None, seed=0):
        out = None
        for a, c in self.terms:
            v = a * c.start_value(dt, paths, seed)
            out = v if out is None else out + v
        return out

    def _eval(self, z, order):
        method = ("values", "derivatives", "second_derivatives")[order]
        return self._combine(method, z, None, 0)[0]

    def describe(self):
        return "+".join(f"{a!r}*{c.describe()}" for a, c in self.terms)


class StationaryOUCurve(InitialCurve):
    """y(z) = exp(-rate z) xi with xi ~ N(0, sigma^2 / (2 rate)) per path.

    This is int_{-inf}^0 exp(-rate (z - s)) sigma dW_s for the stationary
    Ornstein-Uhlenbeck preset.
    """

    random = True

    def __init__(self, rate=1.0, sigma=1.0):
        self.rate, self.sigma = float(rate), float(sigma)

    def _xi(self, paths, seed):
        z = rng.standard_normals(seed, paths, (1,), rng.INITIAL_CURVE)[:, 0]
        return z * self.sigma / np.sqrt(2.0 * self.rate)

    def _vals(self, z, paths, seed, order):
        xi = self._xi(paths, seed)
        e = (-self.rate) ** order * np.exp(-self.rate * np.asarray(z, float))
        return (xi[:, None] * e[None, :])[..., None]

    def values(self, z, paths=None, seed=0):
        return self._vals(z, paths, seed, 0)

    def derivatives(self, z, paths=None, seed=0):
        return self._vals(z, paths, seed, 1)

    def second_derivatives(self, z, paths=None, seed=0):
        return self._vals(z, paths, seed, 2)

    def cell_mean(self, dt, paths=None, seed=0, n=16):
        xi = self._xi(paths, seed)
        return (xi * (-np.expm1(-self.rate * dt)) / (self.rate * dt))[:, None]

    def describe(self):
        return f"stationary-ou[{self.rate},{self.sigma}]"


class TypeIFBmCurve(InitialCurve):
    """Mandelbrot-van Ness history term of a type-I fBm.

    y(z) = Gamma(H+1/2)^-1 int_{-T_hist}^0 [(z - s)^(H-1/2) - (-s)^(H-1/2)] dW_s,
    discretized with cell-mean integrands on cells of width ``dt``.
    """

    random = True

    def __init__(self, hurst, dt, t_hist=50.0):
        self.hurst, self.dt, self.t_hist = float(hurst), float(dt), float(t_hist)
        self.n_hist = int(np.ceil(t_hist / dt))

    def _weights(self, z, order):
        a = self.hurst - 0.5
        g = gamma_fn(self.hurst + 0.5)
        j = np.arange(self.n_hist)
        lo, hi = j * self.dt, (j + 1) * self.dt      # v = -s in [lo, hi]
        z = np.asarray(z, dtype=float)[:, None]
        if order == 0:
            p = a + 1.0
            w = (_pow_diff(z + lo, z + hi, p) - _pow_diff(lo, hi, p)) / p
        elif order == 1:
            w = (z + hi) ** a - (z + lo) ** a
        else:
            w = a * ((z + hi) ** (a - 1.0) - (z + lo) ** (a - 1.0))
        return w / (self.dt * g)

    def _noise(self, paths, seed):
        return rng.standard_normals(seed, paths, (self.n_hist,), rng.INITIAL_CURVE) * np.sqrt(self.dt)

    def _vals(self, z, paths, seed, order):
        W = self._weights(z, order)                    # (Z, n_hist)
        return (self._noise(paths, seed) @ W.T)[..., None]

    def values(self, z, paths=None, seed=0):
        return self._vals(z, paths, seed, 0)

    def derivatives(self, z, paths=None, seed=0):
        return self._vals(z, paths, seed, 1)

    def second_derivatives(self, z, paths=None, seed=0):
        return self._vals(z, paths, seed, 2)

    def cell_mean(self, dt, paths=None, seed=0, n=16):
        return self.values(np.array([0.5 * dt]), paths, seed)[:, 0]

    def describe(self):
        return f"type1-fbm[{self.hurst},{self.dt!r},{self.t_hist}]"


class ShiftedCurve(InitialCurve):
    """S(delta) y: z -> y(delta + z) for a deterministic curve y."""

    def __init__(self, curve, delta):
        if delta < 0:
            raise ValueError("shift must be nonnegative")
        self.curve, self.delta = curve, float(delta)
        self.dim = curve.dim
        self.singular = curve.singular and self.delta == 0.0

    def _eval(self, z, order):
        method = ("values", "derivatives", "second_derivatives")[order]
        return getattr(self.curve, method)(self.delta + z)[0]

    def describe(self):
        return f"shift[{self.delta!r}]{self.curve.describe()}"


class DerivativeCurve(InitialCurve):
    """z -> y'(z) for a deterministic curve y (the direction d/dx y)."""

    def __init__(self, curve):
        if curve.random:
            raise ValueError("derivative direction needs a deterministic curve")
        self.curve = curve
        self.dim = curve.dim

    def _eval(self, z, order):
        method = ("derivatives", "second_derivatives")[order] if order < 2 else None
        if method is None:
            raise ValueError("third derivative unavailable")
        return getattr(self.curve, method)(z)[0]

    def describe(self):
        return f"d/dx[{self.curve.describe()}]"


class HistoryCurve(InitialCurve):
    """State curve of a run after ``L`` steps, exactly evaluable at any z.

    lambda(t_n, z) = y(elapsed + z) + sum_i A(L - i, z) D_i + B(L - i, z) G_i

    with ``y`` the curve the run started from and (D, G) its sources.  One
    row per path; ``for_paths`` selects rows by position.
    """

    def __init__(self, kernel, dt, base, base_paths, seed, elapsed, D, G):
        self.kernel, self.dt = kernel, float(dt)
        self.base = base
        self.base_paths = None if base_paths is None else np.asarray(base_paths)
        self.seed = seed
        self.elapsed = float(elapsed)
        self.D = np.asarray(D, dtype=float)
        self.G = np.asarray(G, dtype=float)
        self.dim = self.D.shape[2]
        self.random = True

    @property
    def n_rows(self):
        return self.D.shape[0]

    def take(self, rows):
        rows = np.asarray(rows)
        base = self.base.take(rows) if isinstance(self.base, HistoryCurve) else self.base
        bp = None if self.base_paths is None else self.base_paths[rows]
        return HistoryCurve(self.kernel, self.dt, base, bp, self.seed, self.elapsed,
                            self.D[rows], self.G[rows])

    def for_paths(self, paths):
        return self.take(paths)

    def repeat(self, n):
        return self.take(np.repeat(np.arange(self.n_rows), n))

    def _values(self, z, order):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        method = ("values", "derivatives", "second_derivatives")[order]
        if isinstance(self.base, HistoryCurve):
            y = getattr(self.base, method)(self.elapsed + z)
        else:
            y = getattr(self.base, method)(self.elapsed + z, self.base_paths, self.seed)
        L = self.D.shape[1]
        return y + history_values(self.kernel, self.dt, L, self.D, self.G, z, order=order)

    def values(self, z, paths=None, seed=None):
        return self._values(z, 0)

    def derivatives(self, z, paths=None, seed=None):
        """Exact x-derivative (z > 0 where the kernel is singular)."""
        return self._values(z, 1)

    def second_derivatives(self, z, paths=None, seed=None):
        return self._values(z, 2)

    def describe(self):
        return f"history[L={self.D.shape[1]},rows={self.n_rows}]"


def kernel_preset(kernel, delta=1.0, scale=1.0, base=0.0):
    """S(delta)K preset (scale * K(delta + z) + base), scalar kernels."""
    return KernelCurve(kernel, np.full(kernel.dim, scale), delta, np.full(kernel.dim, base))


__all__ = ["InitialCurve", "ConstantCurve", "FunctionCurve", "KernelCurve",
           "GaussianBumpCurve", "ExponentialMixtureCurve", "LinearCombination",
           "StationaryOUCurve", "TypeIFBmCurve", "ShiftedCurve", "DerivativeCurve",
           "HistoryCurve", "kernel_preset", "KernelSpec"]
