"""Shared convolution recursion for the SVE, its lift and the tangent equations.

All processes in the package are of the form

    Z_n(x) = F_n(x) + sum_k A(n - k, x) D_k + B(n - k, x) G_k,

where F is a free (transported) term, D_k a drift source and G_k a noise
source already multiplied by the Brownian increment.  ``A`` holds exact
cell integrals of the shifted kernel and ``B`` the signed cell L^2-means

    A(L, x) = int_{(L-1)dt}^{L dt} K(u + x) du,
    B(L, x) = sign(A) (int_{(L-1)dt}^{L dt} K(u + x)^2 du / dt)^{1/2}.

Both are evaluated for every shift x with the same formula, so the state
curve after n steps is an exact function of x (see ``HistoryCurve``) and
restarting from it reproduces the continued recursion.
"""

import numpy as np

from .errors import UnstableConfig


def lag_weights(kernel, dt, n_lags, x=0.0):
    """Weights A, B of shape (n_lags, len(x), d) for lags 1..n_lags."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lags = np.arange(1, n_lags + 1, dtype=float)
    lo = ((lags - 1.0) * dt)[:, None]
    hi = (lags * dt)[:, None]
    A = kernel.cell_integrals(lo, hi, x=x[None, :])
    S = kernel.cell_integrals(lo, hi, x=x[None, :], power=2)
    B = np.sign(A) * np.sqrt(S / dt)
    return A, B


def lag_weight_derivatives(kernel, dt, n_lags, x, order=1):
    """d^order/dx^order of A(L, x) and B(L, x), x > 0, order in {1, 2}."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lags = np.arange(1, n_lags + 1, dtype=float)
    lo = ((lags - 1.0) * dt)[:, None] + x[None, :]
    hi = (lags * dt)[:, None] + x[None, :]
    A, B = lag_weights(kernel, dt, n_lags, x)
    absB = np.abs(B)
    k_lo, k_hi = kernel.diag(lo), kernel.diag(hi)
    dS = k_hi ** 2 - k_lo ** 2
    dB1 = dS / (2.0 * dt * absB)
    if order == 1:
        return k_hi - k_lo, np.sign(A) * dB1
    d_lo, d_hi = kernel.diag(lo, 1), kernel.diag(hi, 1)
    d2S = 2.0 * (k_hi * d_hi - k_lo * d_lo)
    d2B = d2S / (2.0 * dt * absB) - dS ** 2 / (4.0 * dt ** 2 * absB ** 3)
    return d_hi - d_lo, np.sign(A) * d2B


def run_scheme(A0, B0, free0, step, n0, n_steps, n_rows, prefix=None, first_state=None,
               Ax=None, Bx=None, free_x=None, store=(), x_zero=()):
    """Run the recursion for absolute steps n0..n_steps.

    Parameters
    ----------
    A0, B0 : (N, d) weights at x = 0 for lags 1..N.
    free0 : (P or 1, N + 1 - n0, d) free term at x = 0.
    n_rows : number of paths P.
    step : callable (k, Z_k) -> (D_k, G_k), each (P, d).
    prefix : tuple (D, G) of (P, n0, d), optional
        Sources for steps k < n0 (continuation of an earlier run).
    first_state : (P, d), optional
        Replaces Z_{n0} inside ``step`` (used when F is singular at 0).
    Ax, Bx : (N, J, d) weights at stored points; free_x : (P or 1, S, J, d).
    store : absolute indices at which the curve is recorded.
    x_zero : indices j with x_j = 0; those columns are set to Z_n.

    Returns
    -------
    Z : (P, N + 1 - n0, d)
    D, G : (P, N - n0, d) sources for steps n0..N-1
    lam : (P, len(store), J, d) or None
    """
    N = n_steps
    d = A0.shape[1]
    P = n_rows
    kmin = 0 if prefix is not None else n0
    Dh = np.zeros((d, P, N))
    Gh = np.zeros((d, P, N))
    if prefix is not None and n0 > 0:
        Dh[:, :, :n0] = np.moveaxis(np.broadcast_to(prefix[0], (P, n0, d)), 2, 0)
        Gh[:, :, :n0] = np.moveaxis(np.broadcast_to(prefix[1], (P, n0, d)), 2, 0)
    Arev, Brev = A0[::-1], B0[::-1]
    store = list(store)
    pos = {n: i for i, n in enumerate(store)}
    lam = None
    if store:
        Axr, Bxr = Ax[::-1], Bx[::-1]
        J = Ax.shape[1]
        lam = np.empty((P, len(store), J, d))
    Z = np.empty((P, N + 1 - n0, d))
    for n in range(n0, N + 1):
        L = n - kmin
        z = np.array(np.broadcast_to(free0[:, n - n0], (P, d)))
        if L > 0:
            for c in range(d):
                z[:, c] += Dh[c, :, kmin:n] @ Arev[N - L:, c] + Gh[c, :, kmin:n] @ Brev[N - L:, c]
        Z[:, n - n0] = z
        if n in pos:
            s = pos[n]
            lam[:, s] = np.broadcast_to(free_x[:, s], lam.shape[:1] + lam.shape[2:])
            if L > 0:
                for c in range(d):
                    lam[:, s, :, c] += (Dh[c, :, kmin:n] @ Axr[N - L:, :, c]
                                        + Gh[c, :, kmin:n] @ Bxr[N - L:, :, c])
            if not (n == n0 and first_state is not None):
                for j in x_zero:
                    lam[:, s, j] = z
        if n == N:
            break
        zs = first_state if (n == n0 and first_state is not None) else z
        if not np.all(np.isfinite(zs)):
            raise UnstableConfig(f"non-finite state at step {n}")
        D, G = step(n, zs)
        Dh[:, :, n] = np.broadcast_to(D, (P, d)).T
        Gh[:, :, n] = np.broadcast_to(G, (P, d)).T
    D = np.moveaxis(Dh[:, :, n0:], 0, 2)
    G = np.moveaxis(Gh[:, :, n0:], 0, 2)
    return Z, D, G, lam


def history_values(kernel, dt, n_lags, D, G, z, weights=None, order=0):
    """sum_{i<L} A(L - i, z) D_i + B(L - i, z) G_i for sources D, G (R, L, d).

    Returns (R, len(z), d).  This is the stochastic part of the state curve
    after L steps evaluated at arbitrary z >= 0.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    R, L, d = D.shape
    if L == 0:
        return np.zeros((R, len(z), d))
    if weights is not None:
        A, B = weights
    elif order == 0:
        A, B = lag_weights(kernel, dt, L, z)
    else:
        A, B = lag_weight_derivatives(kernel, dt, L, z, order)
    # lag L - i for source i
    Ar, Br = A[::-1], B[::-1]
    return np.einsum("lzd,rld->rzd", Ar, D) + np.einsum("lzd,rld->rzd", Br, G)
