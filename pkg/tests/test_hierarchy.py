import numpy as np
import pytest

from soft_annihilation.errors import MissingDataError, UnsupportedError
from soft_annihilation.hierarchy import (HierarchyResidual, bbgky_residual,
                                         finite_residual, limiting_residual)
from soft_annihilation.kernel import GridFunction
from soft_annihilation.particles import SimConfig
from soft_annihilation.pde import mild_residual, solve_mild
from soft_annihilation.stats import simulate_ensemble


def bump(resolution):
    return GridFunction.cosine_profile([1.0, 0.5], resolution)


def test_first_equation_is_the_mild_residual():
    u = solve_mild(bump(101), 0.3, 5e-3)
    residual = limiting_residual(u, 1, 0.3)
    assert residual.t == pytest.approx(0.3)
    assert residual.sup_residual == pytest.approx(np.max(mild_residual(u)),
                                                  rel=1e-12, abs=1e-15)
    assert residual.values is None and residual.max_abs_zscore == 0.0
    halfway = limiting_residual(u, 1, 0.15)
    assert halfway.sup_residual <= residual.sup_residual


def test_limiting_orders():
    u = solve_mild(bump(51), 0.2, 1e-2)
    with pytest.raises(UnsupportedError):
        limiting_residual(u, 3, 0.2)
    assert limiting_residual(u, 2, 0.0).sup_residual == 0.0


def test_zero_density_solves_every_equation():
    u = solve_mild(GridFunction.constant(0.0, 51), 0.2, 1e-2)
    for k in (1, 2):
        assert limiting_residual(u, k, 0.2).sup_residual == 0.0


def test_second_equation_residual():
    u = solve_mild(bump(51), 0.2, 1e-3)
    residual = limiting_residual(u, 2, 0.2)
    assert 0 <= residual.sup_residual <= 1e-3


@pytest.mark.parametrize('k', [1, 2])
def test_limiting_residual_is_second_order(k):
    u0 = bump(51)
    coarse, fine = (limiting_residual(solve_mild(u0, 0.4, dt), k, 0.4).sup_residual
                    for dt in (0.02, 0.01))
    assert fine > 0
    assert np.log2(coarse / fine) >= 1.7


def test_bbgky_without_collisions_is_transport():
    f1 = np.ones((2, 3, 5))
    f2 = np.ones((2, 3, 5, 5))
    residuals = bbgky_residual(f1, f2, [0.0, 0.05, 0.1], 100,
                               annihilation=False)
    assert residuals.shape == (2, 5)
    assert np.allclose(residuals, 0.0, rtol=0, atol=1e-10)


def test_bbgky_constant_solution():
    # u_t = 1 / (1 + t) with F2 = F1 (x) F1 satisfies the equation up to
    # the trapezoid error in time
    times = np.linspace(0.0, 0.2, 41)
    values = 1.0 / (1.0 + times)
    f1 = np.broadcast_to(values[None, :, None], (1, 41, 4)).copy()
    f2 = np.broadcast_to((values ** 2)[None, :, None, None], (1, 41, 4, 4)).copy()
    residuals = bbgky_residual(f1, f2, times, 400)
    assert np.max(np.abs(residuals)) <= 1e-4


def test_finite_residual_edge_cases():
    config = SimConfig(N=20, u0=GridFunction.constant(1.0, 101), T=0.02)
    ensemble = simulate_ensemble(config, 3)
    at_zero = finite_residual(ensemble, 1, 0.0, bins=5)
    assert isinstance(at_zero, HierarchyResidual)
    assert np.all(at_zero.values == 0) and at_zero.sup_residual == 0.0
    with pytest.raises(UnsupportedError):
        finite_residual(ensemble, 2, 0.02)
    with pytest.raises(MissingDataError):
        finite_residual(ensemble, 1, 0.02)
    with pytest.raises(MissingDataError):
        finite_residual(ensemble, 1, 0.01)


def test_free_motion_residual():
    config = SimConfig(N=100, u0=GridFunction.constant(1.0, 101), T=0.1,
                       record_times=np.linspace(0.0, 0.1, 6),
                       annihilation=False, seed=5)
    residual = finite_residual(simulate_ensemble(config, 100), 1, 0.1, bins=10)
    assert residual.values.shape == (10,)
    assert residual.max_abs_zscore <= 4


def test_annihilating_residual():
    config = SimConfig(N=50, u0=bump(101), T=0.2,
                       record_times=np.linspace(0.0, 0.2, 11), seed=8)
    residual = finite_residual(simulate_ensemble(config, 100), 1, 0.2, bins=10)
    assert residual.t == pytest.approx(0.2)
    assert residual.max_abs_zscore <= 4
