import numpy as np
import pytest

from volterra_lift.coefficients import gaussian, linear
from volterra_lift.curves import GaussianBumpCurve
from volterra_lift.errors import IncrementMissing, NonlinearDrift
from volterra_lift.kernels import KernelSpec, TimeGrid
from volterra_lift.lift import (flow_restart_check, forward_curve_check, holder_exponent,
                                markov_statistic, max_z_score, mean_forward_curve,
                                simulate_lift)
from volterra_lift.sve import preset, simulate
from volterra_lift.wspace import SpaceGrid

G = TimeGrid(1.0, 16)


def _space():
    return SpaceGrid.lift_default(24, 4.0)


@pytest.mark.parametrize("name", ["brownian", "fbm2", "smooth", "rbergomi"])
def test_lift_property_bitwise(name):
    m = preset(name, hurst=0.3)
    lf = simulate_lift(m, G, _space(), 300, seed=5)
    ens = simulate(m, G, 300, seed=5)
    np.testing.assert_array_equal(lf.lam[:, :, 0, :], ens.X)
    np.testing.assert_array_equal(lf.paths.X, ens.X)


def test_pure_transport_exact():
    bump = GaussianBumpCurve(center=0.7, width=0.3, amp=1.0, base=0.2)
    m = preset("fbm2", hurst=0.3).with_coeffs(gaussian(0.0)).with_x0(bump)
    sp = _space()
    lf = simulate_lift(m, G, sp, 8, seed=1)
    for i, n in enumerate(lf.store):
        exact = bump.values(G.nodes[n] + sp.nodes)[0, :, 0]
        np.testing.assert_allclose(lf.lam[:, i, :, 0], np.broadcast_to(exact, (8, len(sp))),
                                   rtol=0, atol=1e-14)


def test_state_curve_matches_stored_nodes():
    m = preset("smooth", hurst=0.35)
    sp = _space()
    lf = simulate_lift(m, G, sp, 50, seed=2)
    n = 9
    vals = lf.state(n).values(sp.nodes)
    np.testing.assert_allclose(vals, lf.at_step(n), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
def test_flow_restart(t):
    m = preset("smooth", hurst=0.35)
    lf = simulate_lift(m, G, _space(), 200, seed=7)
    rep = flow_restart_check(lf, t)
    assert rep.discrepancy <= 1e-10


def test_flow_restart_needs_increments():
    m = preset("brownian")
    lf = simulate_lift(m, G, _space(), 4, seed=0)
    lf.paths.dW = None
    with pytest.raises(IncrementMissing):
        flow_restart_check(lf, 0.5)


def test_markov_continuation_and_fresh_restart():
    m = preset("smooth", hurst=0.35)
    lf = simulate_lift(m, G, _space(), 2000, seed=3)
    assert markov_statistic(lf, 0.5).statistic == 0.0
    rep = markov_statistic(lf, 0.5, fresh_seed=99)
    assert rep.pvalue > 1e-3


def test_mean_forward_curve_exponential_for_constant_kernel():
    K = KernelSpec.power_law(0.5)
    x0 = GaussianBumpCurve(center=0.0, width=1.0, amp=0.0, base=1.0)
    u = np.array([0.0, 0.3, 1.0])
    np.testing.assert_allclose(mean_forward_curve(K, -0.7, x0, u), np.exp(-0.7 * u),
                               rtol=1e-3)


def test_forward_curve_lift_mean_target():
    m = preset("fbm2", hurst=0.35).with_coeffs(linear(-0.5)).with_x0(
        GaussianBumpCurve(center=0.0, width=1.0, amp=0.0, base=1.0))
    lf = simulate_lift(m, G, _space(), 4096, seed=4, store=(8, 16))
    ts, xs, est, exact = forward_curve_check(m, lf, x_max=1.0, target="lift-mean")
    assert max_z_score(est, exact) < 4.0
    # at x = 0 both targets coincide
    _, _, est2, exact2 = forward_curve_check(m, lf, x_max=0.0)
    assert max_z_score(est2, exact2) < 4.0


def test_forward_curve_needs_linear_drift():
    m = preset("smooth", hurst=0.35)
    lf = simulate_lift(m, G, _space(), 4, seed=0)
    with pytest.raises(NonlinearDrift):
        forward_curve_check(m, lf)


def test_holder_exponent_positive():
    m = preset("fbm2", hurst=0.35)
    lf = simulate_lift(m, TimeGrid(1.0, 32), _space(), 512, seed=6)
    gamma, ms = holder_exponent(lf, m.weight)
    assert np.all(np.diff(ms) > 0) and 0.0 < gamma < 1.0
