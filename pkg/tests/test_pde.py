import numpy as np
import pytest

from soft_annihilation.errors import DomainError
from soft_annihilation.kernel import GridFunction
from soft_annihilation.pde import (CovarianceState, cosine_coefficients,
                                   feynman_kac_estimate, mild_residual,
                                   picard_solve, sampling_covariance,
                                   solve_fluctuation_covariance, solve_mild,
                                   solve_smoothed)
from soft_annihilation.report import process_csv_data


def bump(resolution=401):
    return GridFunction.cosine_profile([1.0, 0.5], resolution)


def test_constant_closed_form():
    u = solve_mild(GridFunction.constant(1.0), 1.0, 1e-3)
    assert len(u.times) == len(u.slices) == 1001
    assert np.max(np.abs(u.slices[-1].values - 0.5)) <= 1e-5


def test_zero_is_fixed():
    u = solve_mild(GridFunction.constant(0.0, 101), 0.5, 1e-2)
    assert np.all(u.as_array() == 0.0)


def test_small_data():
    u = solve_mild(GridFunction.constant(1e-4), 1.0, 1e-3)
    assert np.allclose(u.slices[-1].values, 1e-4 / (1 + 1e-4), rtol=0, atol=1e-9)


def test_domain_errors():
    with pytest.raises(DomainError):
        solve_mild(GridFunction([1.0, -0.1, 1.0]), 1.0, 0.1)
    with pytest.raises(DomainError):
        solve_mild(GridFunction.constant(1.0, 11), 1.0, 0.0)
    with pytest.raises(DomainError):
        solve_mild(GridFunction.constant(1.0, 11), 1.0, 2.0)
    with pytest.raises(DomainError):
        solve_smoothed(GridFunction.constant(1.0, 11), 1.0, 0.1, 1)
    with pytest.raises(DomainError):
        solve_fluctuation_covariance(
            solve_mild(GridFunction.constant(1.0, 11), 0.1, 0.01), 0, 0.01)


def test_second_order_splitting():
    u0 = bump(101)
    reference = solve_mild(u0, 1.0, 0.02 / 32).slices[-1].values
    coarse, fine = (np.max(np.abs(solve_mild(u0, 1.0, dt).slices[-1].values
                                  - reference))
                    for dt in (0.02, 0.01))
    assert np.log2(coarse / fine) >= 1.7


def test_mass_dissipation():
    u = solve_mild(bump(), 1.0, 1e-3)
    masses = u.masses()
    assert np.all(np.diff(masses) <= 1e-12)
    squares = np.array([GridFunction(s.values ** 2).integral() for s in u.slices])
    decrease = masses[:-1] - masses[1:]
    expected = 1e-3 * 0.5 * (squares[:-1] + squares[1:])
    assert np.allclose(decrease, expected, rtol=0.1)


def test_comparison_principle():
    lower = solve_mild(bump(201), 0.5, 1e-3).as_array()
    upper = solve_mild(GridFunction.cosine_profile([1.5, 0.5], 201), 0.5,
                       1e-3).as_array()
    assert np.all(lower <= upper + 1e-10)
    assert np.min(lower) >= 0


def test_mild_residual():
    u = solve_mild(GridFunction.constant(1.0), 1.0, 1e-3)
    residual = mild_residual(u)
    assert residual[0] == 0.0
    assert np.max(residual) <= 5 * (1e-3 ** 2 + (1 / 400) ** 2)


def test_picard_agrees_with_splitting():
    u0 = bump(51)
    split = solve_mild(u0, 0.5, 2.5e-3).slices[-1].values
    fixed_point = picard_solve(u0, 0.5, 2.5e-3).slices[-1].values
    assert np.max(np.abs(split - fixed_point)) <= 1e-4


def test_feynman_kac():
    u = solve_mild(bump(101), 0.2, 5e-3)
    estimate, stderr = feynman_kac_estimate(u, 0.3, 0.2, 20000,
                                            np.random.default_rng(5))
    assert abs(estimate - u.slices[-1](0.3)) <= 4 * stderr + 2e-3
    assert feynman_kac_estimate(u, 0.3, 0.0, 10, None) == (u.slices[0](0.3), 0.0)


def test_solution_access(tmp_path):
    u = solve_mild(bump(11), 0.1, 0.01)
    assert u.index_of(0.05) == 5
    assert np.array_equal(u.slice_at(0.05).values, u.slices[5].values)
    middle = u.interpolate(0.055)
    assert np.allclose(middle, 0.5 * (u.slices[5].values + u.slices[6].values))
    with pytest.raises(DomainError):
        u.index_of(0.0512)
    with pytest.raises(DomainError):
        u.interpolate(0.2)
    u.write_csv(tmp_path / 'u.csv', every=5)
    header, rows = process_csv_data(tmp_path / 'u.csv')
    assert header == ('t', 'x', 'u')
    assert len(rows) == 3 * 11
    assert (tmp_path / 'u.csv').read_text().startswith('# schema=1\n')


def test_smoothed_constant():
    u = solve_smoothed(GridFunction.constant(1.0), 1.0, 1e-3, 200)
    assert np.max(np.abs(u.slices[-1].values - 0.5)) <= 0.01


def test_smoothed_zero():
    u = solve_smoothed(GridFunction.constant(0.0, 51), 0.2, 1e-2, 100)
    assert np.all(u.as_array() == 0.0)


def test_smoothed_approaches_limit():
    u0 = bump(201)
    limit = solve_mild(u0, 0.5, 1e-3).as_array()
    gaps = [np.max(np.abs(solve_smoothed(u0, 0.5, 1e-3, N).as_array() - limit))
            for N in (100, 200, 400)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_fluctuation_variance_closed_form():
    u = solve_mild(GridFunction.constant(1.0), 1.0, 1e-3)
    one = GridFunction.constant(1.0)
    narrow = solve_fluctuation_covariance(u, 16, 1e-3)
    wide = solve_fluctuation_covariance(u, 32, 1e-3)
    assert abs(narrow[-1].time - 1.0) <= 1e-12
    assert abs(narrow[-1].variance_of(one) - 7 / 48) <= 1e-4
    assert abs(narrow[-1].variance_of(one) - wide[-1].variance_of(one)) <= 1e-6
    assert min(state.min_eigenvalue() for state in narrow) >= -1e-10
    assert all(np.array_equal(s.cov, s.cov.T) for s in narrow)


def test_fluctuation_without_density():
    u = solve_mild(GridFunction.constant(0.0, 101), 0.5, 1e-2)
    cov0 = np.diag(np.arange(1.0, 5.0))
    trajectory = solve_fluctuation_covariance(u, 4, 1e-2, cov0)
    decay = np.exp(-(np.pi * np.arange(4)) ** 2 / 2 * 0.5)
    assert np.allclose(trajectory[-1].cov, cov0 * np.outer(decay, decay),
                       rtol=1e-12, atol=1e-14)
    assert np.all(solve_fluctuation_covariance(u, 4, 1e-2)[-1].cov == 0.0)


def test_sampling_covariance():
    cov = sampling_covariance(GridFunction.constant(1.0), 3)
    assert np.allclose(cov, np.diag([0.0, 1.0, 1.0]), rtol=0, atol=1e-10)
    state = CovarianceState(0.0, cov)
    cosine = GridFunction.cosine_profile([0.0, np.sqrt(2.0)])
    assert state.basis_size == 3
    assert abs(state.variance_of(cosine) - 1.0) <= 1e-8


def test_cosine_coefficients():
    phi = GridFunction.cosine_profile([2.0, 0.0, 3.0])
    assert np.allclose(cosine_coefficients(phi, 4),
                       [2.0, 0.0, 3.0 / np.sqrt(2.0), 0.0], rtol=0, atol=1e-10)
