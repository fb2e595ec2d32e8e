import numpy as np
import pytest

from volterra_lift.curves import GaussianBumpCurve, LinearCombination
from volterra_lift.errors import HurstBelowThreshold, MissingLift
from volterra_lift.kernels import TimeGrid
from volterra_lift.lift import simulate_lift
from volterra_lift.sve import preset
from volterra_lift.tangent import (bump_first, bump_second, first_variation,
                                   kernel_direction, moment_bound_check, polarization,
                                   second_variation, _second_direct)
from volterra_lift.wspace import SpaceGrid

G = TimeGrid(1.0, 16)
SPACE = SpaceGrid.lift_default(32, 8.0)
H1 = GaussianBumpCurve(center=0.5, width=0.4, amp=1.0)
H2 = GaussianBumpCurve(center=1.0, width=0.6, amp=0.5)


@pytest.fixture(scope="module")
def smooth_lift():
    m = preset("smooth", hurst=0.35, x0=0.2)
    return m, simulate_lift(m, G, SPACE, 512, seed=12)


def test_first_variation_vs_bump(smooth_lift):
    m, lf = smooth_lift
    z = first_variation(m, H1, 0.0, lf)
    assert bump_first(m, lf, H1, z, eps=1e-4).rel_error <= 0.01


def test_first_variation_kernel_direction_vs_mollified_bump(smooth_lift):
    m, lf = smooth_lift
    h = kernel_direction(lf.kernel, 0, delta=G.dt)
    z = first_variation(m, h, 0.0, lf)
    assert bump_first(m, lf, h, z, eps=1e-4).rel_error <= 0.01


def test_second_variation_vs_central_difference(smooth_lift):
    m, lf = smooth_lift
    z2 = second_variation(m, H1, H1, 0.0, lf)
    assert bump_second(m, lf, H1, z2, eps=1e-3).rel_error <= 0.03


def test_polarization_bitwise(smooth_lift):
    m, lf = smooth_lift
    z = second_variation(m, H1, H2, 0.0, lf)
    hp = LinearCombination([(1.0, H1), (1.0, H2)])
    hm = LinearCombination([(1.0, H1), (-1.0, H2)])
    zp, zm = first_variation(m, hp, 0.0, lf), first_variation(m, hm, 0.0, lf)
    again = polarization(_second_direct(m, zp, zp, lf), _second_direct(m, zm, zm, lf))
    np.testing.assert_array_equal(z.values, again.values)
    direct = second_variation(m, H1, H2, 0.0, lf, method="direct")
    np.testing.assert_allclose(z.values, direct.values, rtol=1e-9, atol=1e-9)


def test_sigma_constant_transport():
    m = preset("gaussian", hurst=0.3)
    lf = simulate_lift(m, G, SPACE, 16, seed=1)
    s = 0.25
    z = first_variation(m, H1, s, lf)
    n_s = G.index(s)
    for n in z.store:
        exact = H1.values(G.nodes[n] - G.nodes[n_s] + SPACE.nodes)[0, :, 0]
        np.testing.assert_allclose(z.at_step(n)[..., 0], np.broadcast_to(exact, (16, len(SPACE))),
                                   atol=1e-12)


def test_singular_direction_starts_from_cell_mean(smooth_lift):
    m, lf = smooth_lift
    K = kernel_direction(lf.kernel)
    z = first_variation(m, K, 0.5, lf)
    assert np.all(np.isinf(z.X0[:, 0])) and np.all(np.isfinite(z.X0[:, 1:]))


def test_linearity_in_direction(smooth_lift):
    m, lf = smooth_lift
    a = first_variation(m, H1, 0.0, lf)
    b = first_variation(m, H2, 0.0, lf)
    c = first_variation(m, LinearCombination([(2.0, H1), (-3.0, H2)]), 0.0, lf)
    np.testing.assert_allclose(c.values, (a * 2.0 - b * 3.0).values, atol=1e-12)


def test_moment_bound_ratio_finite(smooth_lift):
    m, lf = smooth_lift
    z = first_variation(m, H1, 0.0, lf)
    rep = moment_bound_check(z, 2)
    assert np.all(np.isfinite(rep.ratios)) and rep.max_ratio < 10.0


def test_guard_rails():
    rough = preset("smooth", hurst=0.2)
    lf = simulate_lift(rough, G, SPACE, 8, seed=0)
    with pytest.raises(HurstBelowThreshold):
        second_variation(rough, H1, H1, 0.0, lf)
    flat = preset("gaussian", hurst=0.2)
    lf = simulate_lift(flat, G, SPACE, 8, seed=0)
    second_variation(flat, H1, H1, 0.0, lf)
    with pytest.raises(MissingLift):
        first_variation(flat, H1, 0.0, None)
