import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_lift.curves import GaussianBumpCurve
from volterra_lift.errors import (CouplingMismatch, InitialCurveNotRepresentable,
                                  UnsupportedKernel)
from volterra_lift.kernels import KernelSpec, TimeGrid
from volterra_lift.lift import simulate_lift
from volterra_lift.ou_lift import cm_quadrature, ou_curve_equivalence, simulate_ou
from volterra_lift.sve import preset
from volterra_lift.wspace import SpaceGrid

G = TimeGrid(1.0, 32)
SPACE = SpaceGrid.lift_default(24, 4.0)


def test_exponential_kernel_exact():
    m = preset("stationary-ou", rate=1.5)
    q = cm_quadrature(m.kernel, dt=G.dt)
    assert q.count == 1 and q.max_rel_error == 0.0
    lf = simulate_lift(m, G, SPACE, 256, seed=2)
    ou = simulate_ou(m, q, G, 256, seed=2)
    assert ou_curve_equivalence(ou, lf).discrepancy <= 1e-10


@given(st.floats(0.05, 0.45))
def test_power_law_weights_positive_and_mass(H):
    K = KernelSpec.power_law(H, gamma_normalized=True)
    q = cm_quadrature(K, n=40, dt=1.0 / 64)
    assert np.all(q.weights > 0) and np.all(np.diff(q.nodes) > 0)
    # mixture at t = 1 within a few percent in the resolved range
    assert abs(q.kernel(1.0) / K.diag(np.array([1.0]))[0, 0] - 1.0) < 0.05


def test_quadrature_error_decreases_with_nodes():
    K = KernelSpec.power_law(0.3, gamma_normalized=True)
    errs = [cm_quadrature(K, n, dt=1.0 / 64).max_rel_error for n in (10, 25, 50)]
    assert errs[0] > errs[1] > errs[2]


def test_power_law_discrepancy_monotone():
    # full default x-range: the large-x truncation error dominates and shrinks with n
    m = preset("fbm2", hurst=0.3)
    lf = simulate_lift(m, G, SpaceGrid.lift_default(), 256, seed=3)
    disc = []
    for n in (25, 50, 100):
        q = cm_quadrature(m.kernel, n, T=G.T, dt=G.dt)
        disc.append(ou_curve_equivalence(simulate_ou(m, q, G, 256, seed=3), lf).discrepancy)
    assert disc[0] > disc[1] > disc[2]


def test_rejects_unsupported_inputs():
    with pytest.raises(UnsupportedKernel):
        cm_quadrature(KernelSpec.power_law(0.7))
    m = preset("fbm2", hurst=0.3).with_x0(GaussianBumpCurve())
    q = cm_quadrature(m.kernel, 10)
    with pytest.raises(InitialCurveNotRepresentable):
        simulate_ou(m, q, G, 4, seed=0)


def test_coupling_mismatch():
    m = preset("stationary-ou")
    q = cm_quadrature(m.kernel)
    lf = simulate_lift(m, G, SPACE, 16, seed=1)
    with pytest.raises(CouplingMismatch):
        ou_curve_equivalence(simulate_ou(m, q, G, 16, seed=2), lf)


def test_threads_determinism():
    m = preset("smooth", hurst=0.3, x0=0.1)
    q = cm_quadrature(m.kernel, 20)
    a = simulate_ou(m, q, G, 1030, seed=5, threads=1)
    b = simulate_ou(m, q, G, 1030, seed=5, threads=3)
    np.testing.assert_array_equal(a.Y, b.Y)
