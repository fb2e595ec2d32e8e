import numpy as np
import pytest
from scipy import integrate

from volterra_lift import rng as vrng
from volterra_lift.coefficients import Smooth1D
from volterra_lift.errors import MissingLift
from volterra_lift.kernels import KernelSpec, TimeGrid
from volterra_lift.lift import simulate_lift
from volterra_lift.sve import (MCEstimate, fbm2_variance, ito_formula_residual, moment_sup,
                               preset, simulate, simulate_mollified)
from volterra_lift.wspace import SpaceGrid

# mpmath: 1 / (0.6 Gamma(0.8)^2), the RL-fBm variance at T = 1 for H = 0.3
FBM2_VAR_03 = 1.2296213383242614206


def test_mc_estimate_contract():
    e = MCEstimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert e.mean == 2.5 and e.n_samples == 4
    assert e.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)
    with pytest.raises(ValueError):
        MCEstimate.from_samples([1.0])


def test_fbm2_variance_oracle():
    assert fbm2_variance(0.3, 1.0) == pytest.approx(FBM2_VAR_03, rel=1e-12)


def test_brownian_case_exact_paths():
    m = preset("brownian", x0=0.7)
    g = TimeGrid(1.0, 32)
    ens = simulate(m, g, 64, seed=3)
    W = np.concatenate([np.zeros((64, 1)), np.cumsum(ens.dW[:, :, 0], axis=1)], axis=1)
    np.testing.assert_allclose(ens.X[:, :, 0], 0.7 + W, atol=1e-13)


def test_increments_reproducible_per_path():
    dW = vrng.brownian_increments(5, [3, 7], 10, 2, 0.01)
    again = vrng.brownian_increments(5, [7], 10, 2, 0.01)
    np.testing.assert_array_equal(dW[1], again[0])


@pytest.mark.parametrize("H", [0.1, 0.3, 0.45])
def test_fbm2_variance(H):
    m = preset("fbm2", hurst=H)
    ens = simulate(m, TimeGrid(1.0, 32), 20000, seed=11)
    XT = ens.X[:, -1, 0]
    var = MCEstimate.from_samples((XT - XT.mean()) ** 2 * len(XT) / (len(XT) - 1))
    assert var.within(fbm2_variance(H, 1.0), 3.0)


def test_moment_sup_brownian_and_fourth_moment():
    m = preset("brownian", x0=0.5)
    ens = simulate(m, TimeGrid(1.0, 16), 20000, seed=2)
    _, sup = moment_sup(ens, 2)
    assert sup.within(0.25 + 1.0, 3.0)
    g = preset("fbm2", hurst=0.3)
    ens = simulate(g, TimeGrid(1.0, 16), 20000, seed=4)
    _, sup2 = moment_sup(ens, 2)
    assert sup2.within(FBM2_VAR_03, 3.0)
    _, sup4 = moment_sup(ens, 4)
    assert sup4.within(3.0 * FBM2_VAR_03 ** 2, 3.0)
    with pytest.raises(ValueError):
        moment_sup(ens, 0.5)


def test_mollified_coupling_and_isometry():
    m = preset("fbm2", hurst=0.35)
    g = TimeGrid(1.0, 64)
    delta = 4 * g.dt
    a = simulate(m, g, 8192, seed=9)
    b = simulate_mollified(m, delta, g, 8192, seed=9)
    np.testing.assert_array_equal(a.dW, b.dW)
    err = MCEstimate.from_samples((a.X[:, -1, 0] - b.X[:, -1, 0]) ** 2)
    K = KernelSpec.power_law(0.35, gamma_normalized=True)

    def k(s):
        return K.diag(np.array([s]))[0, 0]
    exact = integrate.quad(lambda s: (k(s) - k(s + delta)) ** 2, 0, 1, limit=200,
                           points=[1e-6, 1e-3])[0]
    # the scheme uses cell L^2-means of K and K_delta, so allow the cell bias
    assert abs(err.mean - exact) <= 3 * err.std_error + 0.15 * exact


def test_mollified_large_delta_freezes():
    m = preset("stationary-ou").with_x0(preset("brownian").x0)
    ens = simulate_mollified(m, 40.0, TimeGrid(1.0, 16), 256, seed=1)
    assert np.max(np.abs(ens.X)) < 1e-12


def test_mollified_needs_positive_delta():
    with pytest.raises(ValueError):
        simulate_mollified(preset("brownian"), 0.0, TimeGrid(1.0, 4), 4, 0)


def test_determinism_across_threads():
    m = preset("smooth", hurst=0.3)
    g = TimeGrid(1.0, 16)
    a = simulate(m, g, 1100, seed=4, threads=1)
    b = simulate(m, g, 1100, seed=4, threads=4)
    np.testing.assert_array_equal(a.X, b.X)


def test_rough_bergomi_small_vol_of_vol():
    nu, v0 = 0.05, np.log(0.2)
    m = preset("rbergomi", hurst=0.3, nu=nu, v0=v0)
    g = TimeGrid(1.0, 32)
    ens = simulate(m, g, 20000, seed=6)
    K = m.kernel.scalars[1]
    s = g.nodes[:-1]
    # E[psi(V_s)^2] = exp(2 v0 + 2 nu^2 int_0^s K^2), left-point sum as in the scheme
    ik2 = np.array([integrate.quad(lambda u: K.diag(np.array([u]))[0, 0] ** 2, 0, t)[0]
                    if t > 0 else 0.0 for t in s])
    exact = -0.5 * np.sum(np.exp(2 * v0 + 2 * nu ** 2 * ik2)) * g.dt
    est = MCEstimate.from_samples(ens.X[:, -1, 0])
    assert est.within(exact, 3.0)


def test_ito_residual_identity_and_quadratic():
    g = TimeGrid(1.0, 16)
    space = SpaceGrid.lift_default()
    for name in ("brownian", "fbm2"):
        m = preset(name, hurst=0.3)
        lf = simulate_lift(m, g, space, 4096, seed=8)
        r1 = ito_formula_residual(lf.paths, lf, Smooth1D.linear(1.0), 0.0, 1.0)
        assert abs(r1.mean) < 1e-12
        r2 = ito_formula_residual(lf.paths, lf, Smooth1D.square(), 0.25, 1.0)
        assert r2.within(0.0, 3.0)
    with pytest.raises(MissingLift):
        ito_formula_residual(lf.paths, None, Smooth1D.square(), 0.0, 1.0)


def test_csv_export(tmp_path):
    ens = simulate(preset("brownian"), TimeGrid(1.0, 4), 3, seed=0)
    ens.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "path,t,X1" and len(lines) == 1 + 3 * 5
