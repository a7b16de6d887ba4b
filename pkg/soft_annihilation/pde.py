'''Deterministic solvers for the hydrodynamic limit and its fluctuations.

* ``solve_mild``: du/dt = (1/2) u'' - u^2 on [0, 1], Neumann, by Strang
  splitting of the exact reaction flow and the heat semigroup.
* ``solve_smoothed``: the same equation with the reaction u * (K_N u), where
  K_N smooths with p(2/N^2); products of its solution solve the closed
  hierarchy without the O(1/N) collision terms.
* ``solve_fluctuation_covariance``: covariance of the linear fluctuation
  equation projected on Neumann cosine modes.
'''
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SimulationError
from .kernel import (DEFAULT_PARAMS, GridFunction, KernelParams,
                     hat_kernel_matrix, kernel_matrix, reflect,
                     trapezoid_weights)
from . import report

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 401
DEFAULT_DT = 1e-3


@dataclass
class PdeSolution:
    '''Grid solution u(t_n, x_i) on a uniform time grid starting at 0.'''
    times: np.ndarray
    slices: list
    dt: float
    params: KernelParams = field(default=DEFAULT_PARAMS, repr=False)

    def __post_init__(self):
        assert len(self.times) == len(self.slices), \
            f'{len(self.times)} times for {len(self.slices)} slices'

    @property
    def resolution(self):
        return self.slices[0].resolution

    @property
    def horizon(self):
        return float(self.times[-1])

    def index_of(self, t: float):
        index = int(round(t / self.dt))
        if index < 0 or index >= len(self.times) \
                or abs(self.times[index] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f'time {t} is not on the solution time grid')
        return index

    def slice_at(self, t: float):
        return self.slices[self.index_of(t)]

    def interpolate(self, t: float):
        '''Values at time t, linear in time between slices.'''
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise DomainError(f'time {t} is outside [0, {self.horizon}]')
        position = min(t / self.dt, len(self.times) - 1)
        lower = min(int(np.floor(position)), len(self.times) - 2)
        weight = position - lower
        return ((1.0 - weight) * self.slices[lower].values
                + weight * self.slices[lower + 1].values)

    def masses(self):
        return np.array([s.integral() for s in self.slices])

    def as_array(self):
        return np.stack([s.values for s in self.slices])

    def write_csv(self, path, every: int = 1):
        '''Writes the (t, x, u) table, keeping every ``every``-th time slice.'''
        nodes = self.slices[0].nodes

        def rows():
            for t, s in zip(self.times[::every], self.slices[::every]):
                for x, u in zip(nodes, s.values):
                    yield (t, x, u)

        report.write_csv(path, ('t', 'x', 'u'), rows())


def _check_problem(u0: GridFunction, T: float, dt: float):
    if u0.dim != 1:
        raise DomainError('initial data must be a 1d grid function')
    if not u0.is_nonnegative():
        raise DomainError('initial data must be nonnegative')
    if not dt > 0:
        raise DomainError(f'time step must be positive, got {dt}')
    if not T > 0:
        raise DomainError(f'horizon must be positive, got {T}')
    if dt > T * (1 + 1e-12):
        raise DomainError(f'time step {dt} exceeds the horizon {T}')
    steps = max(1, int(round(T / dt)))
    return steps, T / steps


def solve_mild(u0: GridFunction, T: float, dt: float = DEFAULT_DT,
               params: KernelParams = DEFAULT_PARAMS):
    '''Solves du/dt = (1/2) u'' - u^2 with Neumann boundary conditions.

    Each step is a half step of the exact reaction flow u / (1 + u s), one
    application of the heat semigroup and another reaction half step. The
    step is adjusted so that T is an integer number of steps.

    Returns
    -------
    PdeSolution: slices at every time step
    '''
    steps, dt = _check_problem(u0, T, dt)
    diffusion = kernel_matrix(dt, u0.resolution, params)
    half = 0.5 * dt
    u = np.array(u0.values)
    slices = [GridFunction(u)]
    for _ in range(steps):
        u = u / (1.0 + half * u)
        u = diffusion @ u
        u = u / (1.0 + half * u)
        slices.append(GridFunction(u))
    logger.debug('mild solve: %d steps of %g at resolution %d',
                 steps, dt, u0.resolution)
    return PdeSolution(np.linspace(0.0, T, steps + 1), slices, dt, params)


def solve_smoothed(u0: GridFunction, T: float, dt: float, N: int,
                   params: KernelParams = DEFAULT_PARAMS):
    '''Solves du_N/dt = (1/2) u_N'' - u_N (K_N u_N), (K_N f)(x) the integral of
    p(2/N^2, x, z) f(z).

    The reaction half steps use u / (1 + s K_N u) with the smoothed field
    frozen over the half step; for K_N the identity this is the reaction flow
    of ``solve_mild``. K_N integrates the kernel exactly against the linear
    interpolant, so the grid may be coarser than the kernel width.
    '''
    steps, dt = _check_problem(u0, T, dt)
    if int(N) != N or N < 2:
        raise DomainError(f'N must be an integer >= 2, got {N}')
    diffusion = kernel_matrix(dt, u0.resolution, params)
    smoothing = hat_kernel_matrix(2.0 / N ** 2, u0.resolution, params)
    half = 0.5 * dt
    u = np.array(u0.values)
    slices = [GridFunction(u)]
    for _ in range(steps):
        u = u / (1.0 + half * (smoothing @ u))
        u = diffusion @ u
        u = u / (1.0 + half * (smoothing @ u))
        slices.append(GridFunction(u))
    logger.debug('smoothed solve: N=%d, %d steps of %g', N, steps, dt)
    return PdeSolution(np.linspace(0.0, T, steps + 1), slices, dt, params)


def duhamel_residuals(states, sources, dt, propagate):
    '''Sup-norm residuals of gamma_n = P_{t_n} gamma_0 - int_0^{t_n}
    P_{t_n - s} source(s) ds along a uniform time grid.

    The time integral is the trapezoid rule. P_{k dt} is applied as k
    repetitions of ``propagate`` (one step of the semigroup), so each time
    level costs a constant number of propagations.

    Parameters
    ----------
    states: sequence of numpy.ndarray
        gamma at the time levels 0, dt, 2 dt, ...
    sources: sequence of numpy.ndarray
        the integrand before propagation at the same levels
    dt: float
        Time step
    propagate: callable
        Applies P_dt to an array shaped like the states

    Returns
    -------
    numpy.ndarray: the residual at every time level (0 at t = 0)
    '''
    free = states[0]
    first = sources[0]
    accumulated = sources[0]
    residuals = [0.0]
    for state, source in zip(states[1:], sources[1:]):
        free = propagate(free)
        first = propagate(first)
        accumulated = propagate(accumulated) + source
        integral = dt * (accumulated - 0.5 * first - 0.5 * source)
        residuals.append(float(np.max(np.abs(state - free + integral))))
    return np.array(residuals)


def mild_residual(solution: PdeSolution, params: KernelParams = None):
    '''Residual of the mild equation u = P_t u0 - int P_{t-s} u^2 ds at every
    time level of ``solution``.'''
    params = params or solution.params
    matrix = kernel_matrix(solution.dt, solution.resolution, params)
    states = [s.values for s in solution.slices]
    return duhamel_residuals(states, [u * u for u in states], solution.dt,
                             lambda f: matrix @ f)


def picard_solve(u0: GridFunction, T: float, dt: float,
                 params: KernelParams = DEFAULT_PARAMS, tol: float = 1e-10,
                 max_iter: int = 200):
    '''Fixed-point iteration of the mild equation, trapezoid rule in time.

    Independent of the splitting scheme and meant as an oracle at coarse
    resolution. The iteration is of Volterra type and converges on any
    finite horizon.
    '''
    steps, dt = _check_problem(u0, T, dt)
    matrix = kernel_matrix(dt, u0.resolution, params)
    free = np.empty((steps + 1, u0.resolution))
    free[0] = u0.values
    for n in range(1, steps + 1):
        free[n] = matrix @ free[n - 1]
    current = free.copy()
    for iteration in range(1, max_iter + 1):
        source = current * current
        updated = np.empty_like(current)
        updated[0] = u0.values
        first = source[0]
        accumulated = source[0]
        for n in range(1, steps + 1):
            first = matrix @ first
            accumulated = matrix @ accumulated + source[n]
            updated[n] = free[n] - dt * (accumulated - 0.5 * first
                                         - 0.5 * source[n])
        change = float(np.max(np.abs(updated - current)))
        current = updated
        if change <= tol:
            logger.debug('picard converged after %d iterations', iteration)
            break
    else:
        raise SimulationError(
            f'Picard iteration did not reach {tol} in {max_iter} iterations '
            f'(last change {change})')
    slices = [GridFunction(row) for row in current]
    return PdeSolution(np.linspace(0.0, T, steps + 1), slices, dt, params)


def feynman_kac_estimate(solution: PdeSolution, x: float, t: float,
                         samples: int, rng):
    '''Monte Carlo value of E^x[u0(X_t) exp(-int_0^t u(t - s, X_s) ds)] for a
    reflected Brownian motion X sampled on the solution time grid.

    The path integral uses the trapezoid rule. Returns (estimate, stderr).
    '''
    n = solution.index_of(t)
    if n == 0:
        return float(solution.slices[0](x)), 0.0
    dt = solution.dt
    positions = np.full(samples, float(x))
    exponent = 0.5 * dt * solution.slices[n](positions)
    for j in range(1, n + 1):
        positions = reflect(positions
                            + np.sqrt(dt) * rng.standard_normal(samples))
        weight = 0.5 if j == n else 1.0
        exponent += weight * dt * solution.slices[n - j](positions)
    values = solution.slices[0](positions) * np.exp(-exponent)
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(samples))


def cosine_basis(resolution: int, size: int):
    '''Rows e_0 = 1, e_n = sqrt(2) cos(n pi x) and their derivatives on the grid.'''
    nodes = np.linspace(0.0, 1.0, resolution)
    k = np.pi * np.arange(size)[:, None]
    scale = np.where(np.arange(size) == 0, 1.0, np.sqrt(2.0))[:, None]
    return scale * np.cos(k * nodes), -scale * k * np.sin(k * nodes)


def cosine_coefficients(phi: GridFunction, size: int):
    '''L^2 coefficients of phi on the first ``size`` Neumann modes.'''
    basis, _ = cosine_basis(phi.resolution, size)
    return basis @ (phi.values * trapezoid_weights(phi.resolution))


@dataclass
class CovarianceState:
    '''Covariance C[m, n] = Cov(Y_t(e_m), Y_t(e_n)) of the fluctuation field.'''
    time: float
    cov: np.ndarray

    @property
    def basis_size(self):
        return self.cov.shape[0]

    def variance_of(self, phi: GridFunction):
        coefficients = cosine_coefficients(phi, self.basis_size)
        return float(coefficients @ self.cov @ coefficients)

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.cov)[0])


def sampling_covariance(u0: GridFunction, basis_size: int):
    '''Covariance of the fluctuation field at time 0 when round(N * mass)
    particles are placed i.i.d. with density u0 / mass.'''
    mass = u0.integral()
    if not mass > 0:
        raise DomainError('initial density has no mass')
    basis, _ = cosine_basis(u0.resolution, basis_size)
    weighted = basis * (u0.values * trapezoid_weights(u0.resolution) / mass)
    means = weighted.sum(axis=1)
    second = weighted @ basis.T
    return mass * (second - np.outer(means, means))


def solve_fluctuation_covariance(u: PdeSolution, basis_size: int,
                                 dt: float = DEFAULT_DT, cov0=None):
    '''Evolves C' = A C + C A^T + Q along the solution u.

    A = -Lambda - 2 U with Lambda = diag(n^2 pi^2 / 2) and U the Galerkin
    matrix of multiplication by u; Q[m, n] = <e_m' e_n', u> + <e_m e_n, u^2>.
    The stiff diagonal part is integrated exactly (Lawson form of Heun's
    method), the rest explicitly; second order in dt.

    Parameters
    ----------
    u: PdeSolution
        The hydrodynamic solution on [0, T]
    basis_size: int
        Number of cosine modes
    dt: float
        Time step of the covariance integration
    cov0: numpy.ndarray
        Initial covariance, zero by default

    Returns
    -------
    list: CovarianceState at every step, starting at time 0
    '''
    if int(basis_size) != basis_size or basis_size < 1:
        raise DomainError(f'basis_size must be >= 1, got {basis_size}')
    if not dt > 0:
        raise DomainError(f'time step must be positive, got {dt}')
    basis, gradients = cosine_basis(u.resolution, basis_size)
    weights = trapezoid_weights(u.resolution)
    rates = 0.5 * (np.pi * np.arange(basis_size)) ** 2
    steps = max(1, int(round(u.horizon / dt)))
    dt = u.horizon / steps
    decay = np.exp(-rates * dt)
    damping = np.outer(decay, decay)

    def operators(t):
        g = u.interpolate(t) * weights
        multiplication = (basis * g) @ basis.T
        noise = (gradients * g) @ gradients.T \
            + (basis * (g * u.interpolate(t))) @ basis.T
        return multiplication, noise

    def drift(cov, multiplication, noise):
        product = multiplication @ cov
        return noise - 2.0 * (product + product.T)

    cov = np.zeros((basis_size, basis_size)) if cov0 is None \
        else np.array(cov0, dtype=float)
    if cov.shape != (basis_size, basis_size):
        raise DomainError(f'initial covariance must be {basis_size}x{basis_size}')
    trajectory = [CovarianceState(0.0, cov)]
    current = operators(0.0)
    for n in range(1, steps + 1):
        following = operators(n * dt)
        k1 = drift(cov, *current)
        predicted = damping * (cov + dt * k1)
        k2 = drift(predicted, *following)
        cov = damping * (cov + 0.5 * dt * k1) + 0.5 * dt * k2
        cov = 0.5 * (cov + cov.T)
        trajectory.append(CovarianceState(n * dt, cov))
        current = following
    logger.debug('covariance solve: %d modes, %d steps', basis_size, steps)
    return trajectory
