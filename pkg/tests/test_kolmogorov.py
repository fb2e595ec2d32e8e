import numpy as np
import pytest

from volterra_lift.coefficients import Smooth1D, gaussian
from volterra_lift.curves import ConstantCurve, GaussianBumpCurve
from volterra_lift.errors import (DegenerateStencil, ModelNotCompliant, NestedBudgetExceeded,
                                  TestFunctionNotCompliant)
from volterra_lift.kernels import TimeGrid
from volterra_lift.kolmogorov import (PayoffSpec, ShiftFunctional, conditional_expectation,
                                      fpe_mild_residual, fpe_singular_residual,
                                      gaussian_quadratic_value, martingale_check,
                                      pde_residual, quadratic_cylinder_rhs, singular_gradient,
                                      singular_hessian, value)
from volterra_lift.lift import simulate_lift
from volterra_lift.sve import preset
from volterra_lift.tangent import kernel_direction
from volterra_lift.wspace import SpaceGrid

SPACE = SpaceGrid.lift_default(32, 8.0)
SQUARE = PayoffSpec.pointwise(Smooth1D.square())
TANH = PayoffSpec.pointwise(Smooth1D.tanh())
BUMP = GaussianBumpCurve(center=1.0, width=1.0, amp=0.5)


@pytest.fixture(scope="module")
def gauss():
    return preset("gaussian", hurst=0.35, x0=0.3)


def test_value_gaussian_closed_form(gauss):
    g = TimeGrid(1.0, 32)
    est = value(gauss, SQUARE, 0.0, gauss.x0, n_paths=8192, seed=1, grid=g, space=SPACE)
    assert est.within(gaussian_quadratic_value(gauss, g, 0, gauss.x0)[0], 3.0)


def test_gradient_and_hessian_gaussian_exact(gauss):
    # zeta_h(T) = S(T) h, so Du(h) = 2 y(T) h(T) and D^2u(h, h) = 2 h(T)^2
    hT = BUMP.values(np.array([1.0]))[0, 0, 0]
    kw = dict(n_paths=2048, seed=2, n_steps=16, space=SPACE)
    gr = singular_gradient(gauss, SQUARE, 0.0, gauss.x0, BUMP, 0.0, **kw)
    assert gr.within(2 * 0.3 * hT, 3.0, 1e-12)
    he = singular_hessian(gauss, SQUARE, 0.0, gauss.x0, 0.0, BUMP, BUMP, **kw)
    assert he.mean == pytest.approx(2 * hT ** 2, rel=1e-10)


def test_gradient_sweep_richardson(gauss):
    K = kernel_direction(gauss.kernel)
    g = TimeGrid(1.0, 16)
    sw = singular_gradient(gauss, SQUARE, 0.0, gauss.x0, K, [4 * g.dt, 2 * g.dt, g.dt],
                           n_paths=512, seed=3, grid=g, space=SPACE)
    assert len(sw.estimates) == 3 and np.isfinite(sw.richardson.mean)


def test_pde_transport_case():
    y = GaussianBumpCurve(center=0.8, width=0.5, amp=1.0)
    m = preset("gaussian", hurst=0.35).with_coeffs(gaussian(0.0)).with_x0(y)
    rep = pde_residual(m, TANH, 0.5, y, n_paths=16, n_steps=64, space=SPACE)
    # u(t, y) = f(y(T - t)); the time stencil error is O(dt_fd^2)
    assert abs(rep.residual.mean) < 5 * rep.dt_fd ** 2


def test_pde_gaussian_quadratic(gauss):
    rep = pde_residual(gauss, SQUARE, 0.5, gauss.x0, n_paths=4096, seed=4, n_steps=32,
                       space=SPACE)
    assert rep.residual.within(0.0, 3.0)
    assert set(rep.terms) == {"d_t u", "Du(d_x y)", "Du(K b)", "1/2 Tr D^2u"}


def test_pde_smooth_multiplicative():
    m = preset("smooth", hurst=0.35, x0=0.2)
    rep = pde_residual(m, TANH, 0.5, m.x0, n_paths=4096, seed=5, n_steps=32, space=SPACE)
    assert rep.residual.within(0.0, 3.0)
    assert rep.sweep is not None and len(rep.sweep.deltas) == 4


def test_pde_degenerate_stencil(gauss):
    with pytest.raises(DegenerateStencil):
        pde_residual(gauss, SQUARE, 0.0, gauss.x0, n_paths=8, n_steps=16, space=SPACE)


def test_noncompliant_model():
    m = preset("linear", hurst=0.35)
    with pytest.raises(ModelNotCompliant):
        value(m, SQUARE, 0.0, m.x0, n_paths=8, n_steps=8, space=SPACE)


def test_martingale_closed_form_and_nested(gauss):
    g = TimeGrid(1.0, 16)
    lf = simulate_lift(gauss, g, SPACE, 4096, seed=6)

    def closed(n, curve):
        return gaussian_quadratic_value(gauss, g, n, curve)
    for r in martingale_check(gauss, SQUARE, lf, (0.25, 0.5, 1.0), closed_form=closed):
        assert r.drift.within(0.0, 3.0)
    m = preset("smooth", hurst=0.35, x0=0.2)
    lf = simulate_lift(m, g, SPACE, 256, seed=7)
    for r in martingale_check(m, TANH, lf, (0.25, 0.5), inner=64, threads=2):
        assert r.drift.within(0.0, 3.0)


def test_nested_budget(gauss):
    lf = simulate_lift(gauss, TimeGrid(1.0, 8), SPACE, 64, seed=0)
    with pytest.raises(NestedBudgetExceeded):
        martingale_check(gauss, SQUARE, lf, (0.5,), inner=512, budget=1000)


def test_conditional_expectation_gaussian(gauss):
    g = TimeGrid(1.0, 16)
    lf = simulate_lift(gauss, g, SPACE, 128, seed=8)

    def closed(n, curve):
        return gaussian_quadratic_value(gauss, g, n, curve)
    rep = conditional_expectation(gauss, SQUARE, lf, 0.5, inner=256, outer=128,
                                  closed_form=closed)
    assert rep.difference.within(0.0, 3.0)
    assert rep.closed_form["rhs - exact"].within(0.0, 3.0)
    with pytest.raises(ValueError):
        conditional_expectation(gauss, PayoffSpec.quadratic(BUMP), lf, 0.5)


def test_fpe_mild_quadratic(gauss):
    g = TimeGrid(1.0, 16)
    pay = PayoffSpec.quadratic(BUMP)
    lf = simulate_lift(gauss, g, SPACE, 4096, seed=9, store=(0, 4, 8, 16))
    for row, n in zip(fpe_mild_residual(gauss, pay, lf), (4, 8, 16)):
        assert row.residual.within(0.0, 3.0)
        assert row.lhs.within(quadratic_cylinder_rhs(gauss, pay, lf, n), 3.0)
    with pytest.raises(TestFunctionNotCompliant):
        fpe_mild_residual(gauss, SQUARE, lf)


def test_fpe_singular_shift_functional():
    m = preset("smooth", hurst=0.35, x0=0.2)
    g = TimeGrid(1.0, 16)
    lf = simulate_lift(m, g, SPACE, 2048, seed=10)
    fn = ShiftFunctional(BUMP, Smooth1D.tanh(), m.weight)
    for row in fpe_singular_residual(m, fn, lf, steps=(4, 8, 16)):
        assert row.residual.within(0.0, 3.0)
    with pytest.raises(TestFunctionNotCompliant):
        fpe_singular_residual(m, "v", lf)
    with pytest.raises(TestFunctionNotCompliant):
        fpe_singular_residual(m, ConstantCurve([0.0]), lf)


def test_fpe_singular_discretization_order():
    # non-flat start: the residual is the O(dt^2) bias of the trapezoid in s
    y = GaussianBumpCurve(center=1.0, width=0.5, amp=1.0, base=0.2)
    m = preset("smooth", hurst=0.35, x0=y)
    fn = ShiftFunctional(BUMP, Smooth1D.tanh(), m.weight)
    res = []
    for N in (16, 32):
        lf = simulate_lift(m, TimeGrid(1.0, N), SpaceGrid.lift_default(), 16384, 901)
        res.append(fpe_singular_residual(m, fn, lf, steps=(N // 2,))[0].residual)
    assert abs(res[0].mean) > 10 * res[0].std_error
    assert 2.5 < res[0].mean / res[1].mean < 6.0
