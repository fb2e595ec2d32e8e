import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_lift import wspace as ws
from volterra_lift.errors import GridMismatch, OutOfDomain, WeightNotAdmissible
from volterra_lift.kernels import KernelSpec
from volterra_lift.wspace import Curve, SpaceGrid, WeightSpec

# mpmath (30 digits)
GAMMA_1_1 = 0.95135076986687314782       # Gamma(2H + beta) for the three pairs below
GAMMA_1_5 = 0.88622692545275801365       # Gamma(3/2)


@pytest.fixture(scope="module")
def grid():
    return SpaceGrid.default()


@pytest.mark.parametrize("H,beta", [(0.3, 0.5), (0.4, 0.3), (0.45, 0.2)])
def test_power_law_self_inner_product(grid, H, beta):
    K = Curve.from_kernel(grid, KernelSpec.power_law(H))
    val = ws.inner_l2w(K, K, WeightSpec(beta, 1.0, H), grid)
    assert val == pytest.approx(GAMMA_1_1, rel=1e-6)


def test_constant_curve_norms(grid):
    w = WeightSpec(0.5, 1.0)
    one = Curve(grid, np.ones(len(grid)))
    assert ws.inner_l2w(one, one, w, grid) == pytest.approx(GAMMA_1_5, rel=1e-8)
    assert ws.norm_h1w(one, w, grid) == pytest.approx(np.sqrt(GAMMA_1_5), rel=1e-8)
    zero = Curve(grid, np.zeros(len(grid)))
    assert ws.inner_l2w(zero, zero, w, grid) == 0.0


def test_shifted_kernel_finite_and_kernel_derivative_infinite(grid):
    w = WeightSpec(0.5, 1.0, 0.3)
    K = Curve.from_kernel(grid, KernelSpec.power_law(0.3))
    for t in (1e-3, 0.1, 1.0):
        assert np.isfinite(ws.norm_h1w(ws.shift(K, t), w, grid))
    assert ws.norm_h1w(K, w, grid) == np.inf
    assert np.isfinite(ws.norm_l2w(K, w, grid))


def test_grid_mismatch(grid):
    other = SpaceGrid.lift_default()
    f = Curve(grid, np.ones(len(grid)))
    g = Curve(other, np.ones(len(other)))
    with pytest.raises(GridMismatch):
        ws.inner_l2w(f, g, WeightSpec(0.5), grid)


def test_shift_identity_and_semigroup(grid):
    K = Curve.from_kernel(grid, KernelSpec.power_law(0.3))
    np.testing.assert_array_equal(ws.shift(K, 0.0).values, K.values)
    a = ws.shift(ws.shift(K, 0.2), 0.3)
    b = ws.shift(K, 0.5)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-15)


def test_evaluate_shifted_kernel(grid):
    K = Curve.from_kernel(grid, KernelSpec.power_law(0.3))
    assert ws.evaluate(ws.shift(K, 0.7), 0.0)[0] == pytest.approx(0.7 ** -0.2, rel=1e-15)
    f = Curve(grid, np.sin(grid.nodes))
    assert ws.evaluate(f, grid.nodes[7])[0] == f.values[7, 0]
    with pytest.raises(OutOfDomain):
        ws.evaluate(f, grid.x_max + 1.0)


def _random_curve(grid, rng):
    """Smooth random curve: a few Gaussian bumps plus a decaying constant."""
    x = grid.nodes
    v = rng.normal() * np.exp(-0.1 * x)
    for _ in range(3):
        c, s, a = rng.uniform(0, 5), rng.uniform(0.2, 2), rng.normal()
        v = v + a * np.exp(-0.5 * ((x - c) / s) ** 2)
    return Curve(grid, v)


@given(st.integers(0, 2 ** 31), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0),
       st.floats(0.0, 5.0))
def test_evaluation_linear(seed, a, b, x):
    grid = SpaceGrid.lift_default()
    rng = np.random.default_rng(seed)
    f, g = _random_curve(grid, rng), _random_curve(grid, rng)
    lhs = ws.evaluate(a * f + b * g, x)
    rhs = a * ws.evaluate(f, x) + b * ws.evaluate(g, x)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_rkhs_bound_random_curves(rng):
    grid = SpaceGrid.lift_default()
    w = WeightSpec(0.5, 1.0)
    consts = {x: ws.rkhs_constant(w, x) for x in (0.0, 0.5, 2.0)}
    for _ in range(100):
        f = _random_curve(grid, rng)
        n = ws.norm_h1w(f, w, grid)
        for x, c in consts.items():
            assert abs(ws.evaluate(f, x)[0]) <= c * n


def test_shift_bound_random_curves(rng):
    grid = SpaceGrid.lift_default()
    w = WeightSpec(0.5, 1.0)
    for _ in range(100):
        f = _random_curve(grid, rng)
        n0 = ws.norm_l2w(f, w, grid)
        for t in (0.25, 1.0, 3.0):
            assert ws.norm_l2w(ws.shift(f, t), w, grid) <= np.exp(w.c * t) * n0 * (1 + 1e-9)


def test_shift_strong_continuity_first_order():
    grid = SpaceGrid.default()
    w = WeightSpec(0.5, 1.0)
    f = Curve.from_function(grid, lambda x: np.exp(-((x - 2.0) ** 2))[:, None],
                            lambda x: (-2.0 * (x - 2.0) * np.exp(-((x - 2.0) ** 2)))[:, None])
    errs = [ws.norm_l2w(ws.shift(f, t) - f, w, grid) for t in (0.02, 0.01, 0.005)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_rkhs_constant_unit_weight_analog():
    w = WeightSpec(0.0, 0.0)
    for L in (0.5, 2.0, 4.0):
        assert ws.rkhs_constant(w, 0.0, L) == pytest.approx(np.sqrt(2 * (L * L + 1) / L),
                                                             rel=1e-10)


def test_rkhs_constant_grows_as_beta_to_one():
    cs = [ws.rkhs_constant(WeightSpec(b, 1.0), 0.5) for b in (0.9, 0.95, 0.99)]
    assert cs[0] < cs[1] < cs[2]


def test_weight_admissibility():
    with pytest.raises(WeightNotAdmissible):
        WeightSpec(0.3, 1.0, 0.3)          # beta must exceed 1 - 2H = 0.4
    with pytest.raises(WeightNotAdmissible):
        WeightSpec(1.0, 1.0)
    w = WeightSpec(0.5, 1.0)
    rep = ws.check_admissible(w, [0.0, 1.0])
    assert rep.sup_ratio[0] == 1.0 and rep.sup_ratio[1] <= np.e
    rep = ws.check_admissible(w, np.linspace(0.1, 2.0, 20))
    assert rep.passed


def test_hat_functional_matches_gram(rng):
    grid = SpaceGrid.lift_default()
    w = WeightSpec(0.5, 1.0)
    M = ws.gram_h1w(grid, w)
    f, g = _random_curve(grid, rng), _random_curve(grid, rng)
    c = ws.hat_functional(grid, g, w)
    assert np.sum(c * f.values) == pytest.approx(f.values[:, 0] @ M @ g.values[:, 0],
                                                  rel=1e-10)
    assert np.sum(c * f.values) == pytest.approx(ws.inner_h1w(f, g, w, grid), rel=1e-6)


def test_curve_csv_roundtrip(tmp_path):
    grid = SpaceGrid.lift_default()
    f = Curve(grid, np.cos(grid.nodes), -np.sin(grid.nodes))
    f.to_csv(tmp_path / "c.csv")
    g = Curve.from_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(g.values, f.values)
    np.testing.assert_array_equal(g.derivative, f.derivative)
