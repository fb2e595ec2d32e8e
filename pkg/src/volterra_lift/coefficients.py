"""Drift and diffusion coefficients with their first and second derivatives.

Array conventions for a batch of P states x of shape (P, d):

    b(x)        (P, d)
    sigma(x)    (P, d, m)
    db(x)       (P, d, d)        db[p, i, j] = d b_i / d x_j
    d2b(x)      (P, d, d, d)     d2b[p, i, j, k] = d^2 b_i / d x_j d x_k
    dsigma(x)   (P, d, m, d)
    d2sigma(x)  (P, d, m, d, d)
"""

from dataclasses import dataclass

import numpy as np

from .errors import CoefficientsNotDifferentiable


@dataclass(frozen=True)
class Smooth1D:
    """Scalar function with its first two derivatives (vectorized)."""

    f: object
    d1: object
    d2: object
    name: str
    bounded: bool = True         # f, f', f'' bounded
    differentiable: bool = True

    def __call__(self, x):
        return self.f(x)

    @staticmethod
    def const(c):
        c = float(c)
        z = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return Smooth1D(lambda x: np.full_like(np.asarray(x, dtype=float), c), z, z,
                        f"const({c!r})")

    @staticmethod
    def linear(a, c0=0.0):
        a, c0 = float(a), float(c0)
        return Smooth1D(lambda x: a * np.asarray(x) + c0,
                        lambda x: np.full_like(np.asarray(x, dtype=float), a),
                        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                        f"linear({a!r},{c0!r})", bounded=(a == 0.0))

    @staticmethod
    def tanh_saturated(a, s, c0=0.0):
        """c0 + a s tanh(x / s): bounded, Lipschitz, slope a at 0."""
        a, s, c0 = float(a), float(s), float(c0)

        def f(x):
            return c0 + a * s * np.tanh(np.asarray(x) / s)

        def d1(x):
            return a / np.cosh(np.asarray(x) / s) ** 2

        def d2(x):
            u = np.asarray(x) / s
            return -2.0 * a / s * np.tanh(u) / np.cosh(u) ** 2
        return Smooth1D(f, d1, d2, f"tanhsat({a!r},{s!r},{c0!r})")

    @staticmethod
    def affine_tanh(c0, c1):
        """c0 + c1 tanh(x)."""
        c0, c1 = float(c0), float(c1)
        return Smooth1D(lambda x: c0 + c1 * np.tanh(x),
                        lambda x: c1 / np.cosh(x) ** 2,
                        lambda x: -2.0 * c1 * np.tanh(x) / np.cosh(x) ** 2,
                        f"affinetanh({c0!r},{c1!r})")

    @staticmethod
    def exp(scale=1.0):
        k = float(scale)
        e = lambda x: np.exp(k * np.asarray(x))
        return Smooth1D(e, lambda x: k * e(x), lambda x: k * k * e(x), f"exp({k!r})",
                        bounded=False)

    @staticmethod
    def exp_saturated(s):
        """exp(s tanh(x / s)): bounded with bounded derivatives."""
        s = float(s)

        def f(x):
            return np.exp(s * np.tanh(np.asarray(x) / s))

        def d1(x):
            u = np.asarray(x) / s
            return f(x) / np.cosh(u) ** 2

        def d2(x):
            u = np.asarray(x) / s
            sech2 = 1.0 / np.cosh(u) ** 2
            return f(x) * (sech2 ** 2 - 2.0 / s * np.tanh(u) * sech2)
        return Smooth1D(f, d1, d2, f"expsat({s!r})")

    @staticmethod
    def sqrt_eps(scale=1.0, eps=1e-8):
        """scale sqrt(max(x, 0) + eps); Lipschitz only away from 0."""
        k, e = float(scale), float(eps)
        return Smooth1D(lambda x: k * np.sqrt(np.maximum(x, 0.0) + e), None, None,
                        f"sqrt({k!r},{e!r})", bounded=False, differentiable=False)

    @staticmethod
    def square():
        return Smooth1D(lambda x: np.asarray(x) ** 2, lambda x: 2.0 * np.asarray(x),
                        lambda x: np.full_like(np.asarray(x, dtype=float), 2.0), "square",
                        bounded=False)

    @staticmethod
    def tanh():
        return Smooth1D(np.tanh, lambda x: 1.0 / np.cosh(x) ** 2,
                        lambda x: -2.0 * np.tanh(x) / np.cosh(x) ** 2, "tanh")

    @staticmethod
    def call_spread(k1, k2, s):
        """Smooth bounded call spread, ~ min(max(x - k1, 0), k2 - k1)."""
        k1, k2, s = float(k1), float(k2), float(s)

        def lc(u):
            u = np.abs(u)
            return u + np.log1p(np.exp(-2.0 * u)) - np.log(2.0)

        def f(x):
            x = np.asarray(x)
            return 0.5 * s * (lc((x - k1) / s) - lc((x - k2) / s)) + 0.5 * (k2 - k1)

        def d1(x):
            x = np.asarray(x)
            return 0.5 * (np.tanh((x - k1) / s) - np.tanh((x - k2) / s))

        def d2(x):
            x = np.asarray(x)
            return 0.5 / s * (1.0 / np.cosh((x - k1) / s) ** 2 - 1.0 / np.cosh((x - k2) / s) ** 2)
        return Smooth1D(f, d1, d2, f"callspread({k1!r},{k2!r},{s!r})")

    def compose(self, inner):
        """self o inner via the chain rule."""
        o, i = self, inner

        def f(x):
            return o.f(i.f(x))

        def d1(x):
            return o.d1(i.f(x)) * i.d1(x)

        def d2(x):
            v = i.f(x)
            return o.d2(v) * i.d1(x) ** 2 + o.d1(v) * i.d2(x)
        return Smooth1D(f, d1, d2, f"{o.name}o{i.name}", bounded=o.bounded and i.bounded,
                        differentiable=o.differentiable and i.differentiable)


class Coefficients:
    """Base class for (b, sigma) pairs."""

    d = 1
    m = 1
    smooth_bounded = False
    sigma_constant = False
    differentiable = True
    linear_drift = None          # matrix a when b(x) = a x
    name = "coefficients"

    def b(self, x):
        raise NotImplementedError

    def sigma(self, x):
        raise NotImplementedError

    def db(self, x):
        raise CoefficientsNotDifferentiable(f"{self.name} has no derivatives")

    d2b = dsigma = d2sigma = db

    def require_differentiable(self):
        if not self.differentiable:
            raise CoefficientsNotDifferentiable(
                f"{self.name} is not twice differentiable (needs smooth coefficients)")

    def describe(self):
        return self.name


class ScalarCoefficients(Coefficients):
    """d = m = 1 with b and sigma given as ``Smooth1D``."""

    def __init__(self, bfun, sfun, name=None):
        self.bf, self.sf = bfun, sfun
        self.d = self.m = 1
        self.differentiable = bfun.differentiable and sfun.differentiable
        self.smooth_bounded = self.differentiable and bfun.bounded and sfun.bounded
        self.sigma_constant = sfun.name.startswith("const")
        self.linear_drift = None
        if bfun.name.startswith("linear") and bfun.f(0.0) == 0.0:
            self.linear_drift = np.array([[float(bfun.d1(0.0))]])
        self.name = name or f"scalar[b={bfun.name},sigma={sfun.name}]"

    def b(self, x):
        return self.bf.f(x)

    def sigma(self, x):
        return self.sf.f(x)[..., None]

    def db(self, x):
        self.require_differentiable()
        return self.bf.d1(x)[..., None]

    def d2b(self, x):
        self.require_differentiable()
        return self.bf.d2(x)[..., None, None]

    def dsigma(self, x):
        self.require_differentiable()
        return self.sf.d1(x)[..., None, None]

    def d2sigma(self, x):
        self.require_differentiable()
        return self.sf.d2(x)[..., None, None, None]


class RoughVolCoefficients(Coefficients):
    """Joint log-price / variance coefficients, x = (log S/S_0, V).

    b = (-psi(x2)^2 / 2, theta(x2)),
    sigma = [[rho psi(x2), rhobar psi(x2)], [0, vs(x2)]],  rhobar = sqrt(1 - rho^2).
    """

    def __init__(self, psi, theta, vs, rho, name):
        self.psi, self.theta, self.vs = psi, theta, vs
        self.rho = float(rho)
        self.rhobar = float(np.sqrt(1.0 - rho * rho))
        self.d = self.m = 2
        self.differentiable = all(f.differentiable for f in (psi, theta, vs))
        self.smooth_bounded = self.differentiable and all(f.bounded for f in (psi, theta, vs))
        self.sigma_constant = False
        self.linear_drift = None
        self.name = name

    def b(self, x):
        v = x[..., 1]
        return np.stack([-0.5 * self.psi(v) ** 2, self.theta(v)], axis=-1)

    def sigma(self, x):
        v = x[..., 1]
        p = self.psi(v)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = self.rho * p
        out[..., 0, 1] = self.rhobar * p
        out[..., 1, 1] = self.vs(v)
        return out

    def db(self, x):
        self.require_differentiable()
        v = x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = -self.psi(v) * self.psi.d1(v)
        out[..., 1, 1] = self.theta.d1(v)
        return out

    def d2b(self, x):
        self.require_differentiable()
        v = x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = -(self.psi.d1(v) ** 2 + self.psi(v) * self.psi.d2(v))
        out[..., 1, 1, 1] = self.theta.d2(v)
        return out

    def dsigma(self, x):
        self.require_differentiable()
        v = x[..., 1]
        dp = self.psi.d1(v)
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 0, 1] = self.rho * dp
        out[..., 0, 1, 1] = self.rhobar * dp
        out[..., 1, 1, 1] = self.vs.d1(v)
        return out

    def d2sigma(self, x):
        self.require_differentiable()
        v = x[..., 1]
        d2p = self.psi.d2(v)
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        out[..., 0, 0, 1, 1] = self.rho * d2p
        out[..., 0, 1, 1, 1] = self.rhobar * d2p
        out[..., 1, 1, 1, 1] = self.vs.d2(v)
        return out


# -- presets ------------------------------------------------------------------

def gaussian(sigma=1.0):
    """b = 0, sigma constant."""
    return ScalarCoefficients(Smooth1D.const(0.0), Smooth1D.const(sigma),
                              f"gaussian[{float(sigma)!r}]")


def linear(a, sigma=1.0):
    """b(x) = a x with constant sigma (not bounded)."""
    return ScalarCoefficients(Smooth1D.linear(a), Smooth1D.const(sigma),
                              f"linear[{float(a)!r},{float(sigma)!r}]")


def smooth(a=-0.5, s=2.0, sigma0=0.6, sigma1=0.3):
    """b = a s tanh(x/s), sigma = sigma0 + sigma1 tanh(x): smooth and bounded."""
    return ScalarCoefficients(Smooth1D.tanh_saturated(a, s), Smooth1D.affine_tanh(sigma0, sigma1),
                              f"smooth[{a!r},{s!r},{sigma0!r},{sigma1!r}]")


def rough_bergomi(nu=1.0, rho=-0.7):
    """psi = exp, theta = 0, vol-of-vol nu."""
    return RoughVolCoefficients(Smooth1D.exp(), Smooth1D.const(0.0), Smooth1D.const(nu), rho,
                                f"rbergomi[{nu!r},{rho!r}]")


def rough_bergomi_smooth(nu=1.0, rho=-0.7, s=2.0):
    """psi = exp(s tanh(x/s)): tanh-saturated rough Bergomi."""
    return RoughVolCoefficients(Smooth1D.exp_saturated(s), Smooth1D.const(0.0),
                                Smooth1D.const(nu), rho, f"rbergomi-smooth[{nu!r},{rho!r},{s!r}]")


def rough_heston(a1=0.3, a2=-1.0, a3=0.3, rho=-0.7, eps=1e-8):
    """psi = sqrt(x+ + eps), theta = a1 + a2 x, vs = a3 sqrt(x+ + eps)."""
    return RoughVolCoefficients(Smooth1D.sqrt_eps(1.0, eps), Smooth1D.linear(a2, a1),
                                Smooth1D.sqrt_eps(a3, eps), rho,
                                f"rheston[{a1!r},{a2!r},{a3!r},{rho!r}]")
