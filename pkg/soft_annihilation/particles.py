'''Reflected Brownian particles on [0, 1] with soft pairwise annihilation.

Every unordered pair {i, j} of alive particles disappears with intensity
(1/N) p(2/N^2, x_i, x_j). Time is discretized: each step moves every
particle by an exact reflected Gaussian increment, then marks each close pair
with probability 1 - exp(-rate dt) and removes the marked pairs in random
order, skipping pairs that lost a member earlier in the same step.
'''
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DomainError, MissingDataError
from .kernel import DEFAULT_PARAMS, GridFunction, KernelParams, image_sum, reflect
from .rng import ReplicaStreams
from . import report

logger = logging.getLogger(__name__)

DEFAULT_STEP_FRACTION = 0.5
MAX_DT = 1e-3
CUTOFF_WIDTHS = 8.0


def heat_kernel_rate(xi, xj, N: int, params: KernelParams = DEFAULT_PARAMS):
    '''Pair intensity (1/N) p(2/N^2, xi, xj), always by the image sum.'''
    return image_sum(2.0 / N ** 2, xi, xj, params.image_terms) / N


@dataclass
class SimConfig:
    '''Parameters of one particle system.

    :param N: scaling parameter; the initial count is round(N * mass(u0))
    :param u0: initial density on the grid
    :param T: horizon
    :param dt: step, by default min(step_fraction * 2 / N^2, 1e-3), shortened
        so that T is a whole number of steps
    :param cutoff_radius: pairs farther apart are not considered, default 8/N
    :param seed: 64-bit experiment seed
    :param record_times: snapshot times, default (0, T)
    :param annihilation: False turns the system into free reflected motion
    :param rate_function: pair intensity (xi, xj, N, params) -> rate
    '''
    N: int
    u0: GridFunction
    T: float = 1.0
    dt: float = None
    cutoff_radius: float = None
    seed: int = 0
    record_times: tuple = None
    annihilation: bool = True
    kernel: KernelParams = DEFAULT_PARAMS
    rate_function: Callable = field(default=heat_kernel_rate, repr=False)
    step_fraction: float = DEFAULT_STEP_FRACTION

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f'N must be an integer >= 2, got {self.N}')
        self.N = int(self.N)
        if self.u0.dim != 1:
            raise DomainError('u0 must be a 1d grid function')
        if not self.T > 0:
            raise DomainError(f'horizon must be positive, got {self.T}')
        if self.dt is None:
            self.dt = min(self.step_fraction * 2.0 / self.N ** 2, MAX_DT)
        if not self.dt > 0:
            raise DomainError(f'time step must be positive, got {self.dt}')
        # whole number of steps, the last one landing on T
        steps = max(1, int(np.ceil(self.T / self.dt - 1e-9)))
        self.dt = self.T / steps
        if self.cutoff_radius is None:
            self.cutoff_radius = min(CUTOFF_WIDTHS / self.N, 1.0)
        if not 0 < self.cutoff_radius <= 1:
            raise DomainError(
                f'cutoff_radius must lie in (0, 1], got {self.cutoff_radius}')
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError(f'seed must be a 64-bit integer, got {self.seed}')
        if self.record_times is None:
            self.record_times = (0.0, float(self.T))
        self.record_times = tuple(float(t) for t in self.record_times)
        if list(self.record_times) != sorted(self.record_times) \
                or any(t < 0 or t > self.T for t in self.record_times):
            raise DomainError('record_times must be sorted and lie in [0, T]')

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def step_of(self, t: float):
        '''Step boundary a record time is aligned to.'''
        return min(int(round(t / self.dt)), self.steps)


@dataclass
class ParticleState:
    '''Alive particles, kept sorted by position.'''
    positions: np.ndarray
    time: float = 0.0
    initial_count: int = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.positions.flags.writeable = False
        if self.initial_count is None:
            self.initial_count = len(self.positions)

    @property
    def alive_count(self):
        return len(self.positions)

    def copy(self):
        return ParticleState(np.array(self.positions), self.time,
                             self.initial_count)


@dataclass
class PairEvents:
    '''What a step saw after diffusion: positions, candidate pairs, rates.'''
    positions: np.ndarray
    first: np.ndarray
    second: np.ndarray
    rates: np.ndarray


_NO_PAIRS = np.zeros(0, dtype=np.intp)


def init_particles(config: SimConfig, rng):
    '''Places round(N * mass) particles i.i.d. with density u0 / mass.

    Inverse-CDF sampling: the CDF is the cumulative trapezoid rule on the
    grid, inverted linearly within each cell.
    '''
    u0 = config.u0
    mass = u0.integral()
    if not u0.is_nonnegative() or not mass > 0:
        raise DomainError('u0 must be nonnegative and not identically zero')
    count = int(round(config.N * mass))
    nodes = u0.nodes
    cdf = cumulative_trapezoid(u0.values, nodes, initial=0.0)
    cdf = cdf / cdf[-1]
    draws = rng.random(count)
    cell = np.clip(np.searchsorted(cdf, draws, side='right') - 1,
                   0, u0.resolution - 2)
    fraction = (draws - cdf[cell]) / (cdf[cell + 1] - cdf[cell])
    positions = nodes[cell] + fraction * u0.spacing
    return ParticleState(np.sort(positions), 0.0, count)


def neighbor_pairs(positions, cutoff: float):
    '''Index pairs (i, j), i < j, of sorted positions with x_j - x_i <= cutoff.

    Scans growing index offsets and stops at the first offset without close
    pairs, which is exact for sorted input.
    '''
    firsts, seconds = [], []
    for offset in range(1, len(positions)):
        gaps = positions[offset:] - positions[:-offset]
        close = np.flatnonzero(gaps <= cutoff)
        if close.size == 0:
            break
        firsts.append(close)
        seconds.append(close + offset)
    if not firsts:
        return _NO_PAIRS, _NO_PAIRS
    return np.concatenate(firsts), np.concatenate(seconds)


def pair_rates(positions, config: SimConfig):
    '''Candidate pairs within the cutoff radius and their intensities.'''
    first, second = neighbor_pairs(positions, config.cutoff_radius)
    rates = config.rate_function(positions[first], positions[second],
                                 config.N, config.kernel)
    return first, second, rates


def brute_force_pair_rates(positions, config: SimConfig):
    '''All m(m-1)/2 pairs and their intensities, no pruning.'''
    first, second = np.triu_indices(len(positions), 1)
    rates = config.rate_function(positions[first], positions[second],
                                 config.N, config.kernel)
    return first, second, rates


def _annihilate(count, first, second, rates, dt, rng):
    marked = np.flatnonzero(rng.random(len(rates)) < -np.expm1(-rates * dt))
    alive = np.ones(count, dtype=bool)
    for k in rng.permutation(marked):
        i, j = first[k], second[k]
        if alive[i] and alive[j]:
            alive[i] = alive[j] = False
    return alive


def advance(state: ParticleState, config: SimConfig, rng):
    '''One step; returns the new state and the PairEvents it was drawn from.'''
    count = state.alive_count
    moved = np.sort(reflect(state.positions
                            + np.sqrt(config.dt) * rng.standard_normal(count)))
    if config.annihilation and count >= 2:
        first, second, rates = pair_rates(moved, config)
        survivors = moved[_annihilate(count, first, second, rates,
                                      config.dt, rng)]
    else:
        first = second = _NO_PAIRS
        rates = np.zeros(0)
        survivors = moved
    events = PairEvents(moved, first, second, rates)
    return ParticleState(survivors, state.time + config.dt,
                         state.initial_count), events


def step(state: ParticleState, config: SimConfig, rng):
    '''Diffusion then annihilation over one time step.'''
    return advance(state, config, rng)[0]


def half_laplacian(phi: GridFunction):
    '''(1/2) phi'' by centered differences, Neumann ghost points at 0 and 1.'''
    values = phi.values
    h2 = phi.spacing ** 2
    second = np.empty_like(values)
    second[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h2
    second[0] = 2.0 * (values[1] - values[0]) / h2
    second[-1] = 2.0 * (values[-2] - values[-1]) / h2
    return GridFunction(0.5 * second)


def squared_gradient(phi: GridFunction):
    return GridFunction(np.gradient(phi.values, phi.spacing, edge_order=2) ** 2)


class DensePath(object):
    '''Dynkin martingales of one replica, sampled at the record times.

    For every registered test function phi the path keeps running sums of
    the generator drift integrand (left point for diffusion, post-diffusion
    positions for annihilation) and of the quadratic-variation integrand of
    the chain. Only M_t and <M>_t at the record times are stored, so memory
    does not grow with the number of steps.
    '''

    def __init__(self, config: SimConfig, observables: dict):
        self.N = config.N
        self.dt = config.dt
        self.annihilation = config.annihilation
        self.observables = {
            name: (phi, half_laplacian(phi), squared_gradient(phi))
            for name, phi in observables.items()}
        self.wanted = {}
        for t in config.record_times:
            self.wanted.setdefault(config.step_of(t), []).append(t)
        self.step = 0
        self.initial = {}
        self.drift = dict.fromkeys(observables, 0.0)
        self.qv = dict.fromkeys(observables, 0.0)
        self.martingales = {name: {} for name in observables}
        self.variations = {name: {} for name in observables}

    @property
    def recorded_times(self):
        return tuple(sorted(t for times in self.wanted.values() for t in times))

    def observe(self, state: ParticleState):
        for name, (phi, _, _) in self.observables.items():
            pairing = float(np.sum(phi(state.positions))) / self.N
            if self.step == 0:
                self.initial[name] = pairing
            for t in self.wanted.get(self.step, ()):
                self.martingales[name][t] = \
                    pairing - self.initial[name] - self.drift[name] * self.dt
                self.variations[name][t] = self.qv[name] * self.dt

    def record_step(self, state: ParticleState, events: PairEvents):
        x = state.positions
        for name, (phi, laplacian, gradient) in self.observables.items():
            drift = float(np.sum(laplacian(x))) / self.N
            qv = float(np.sum(gradient(x))) / self.N ** 2
            if events.rates.size:
                values = phi(events.positions)
                jump = (values[events.first] + values[events.second]) / self.N
                drift -= float(np.sum(events.rates * jump))
                qv += float(np.sum(events.rates * jump * jump))
            self.drift[name] += drift
            self.qv[name] += qv
        self.step += 1

    def _recorded(self, t: float):
        for recorded in self.recorded_times:
            if abs(recorded - t) <= 1e-9 * max(1.0, abs(t)):
                return recorded
        raise MissingDataError(f'time {t} was not recorded '
                               f'(recorded: {self.recorded_times})')

    def martingale(self, name: str, t: float):
        '''M_t = <X_t, phi> - <X_0, phi> - dt * sum_{k<n} drift_k.'''
        return self.martingales[name][self._recorded(t)]

    def quadratic_variation(self, name: str, t: float):
        return self.variations[name][self._recorded(t)]


def _simulate(config: SimConfig, streams: ReplicaStreams, path=None):
    state = init_particles(config, streams.initial())
    wanted = {}
    for t in config.record_times:
        wanted.setdefault(config.step_of(t), []).append(t)
    snapshots = {t: state for t in wanted.get(0, ())}
    if path is not None:
        path.observe(state)
    for n in range(1, config.steps + 1):
        following, events = advance(state, config, streams.generator(n))
        if path is not None:
            path.record_step(state, events)
            path.observe(following)
        state = following
        for t in wanted.get(n, ()):
            snapshots[t] = state
    logger.debug('replica %d: %d -> %d particles over %d steps',
                 streams.replica, state.initial_count, state.alive_count,
                 config.steps)
    return snapshots


def run(config: SimConfig, rng):
    '''Simulates one replica and returns {record_time: ParticleState}.

    ``rng`` is the replica's ReplicaStreams (or an int replica index), so the
    result depends only on (config, seed, replica).
    '''
    if not isinstance(rng, ReplicaStreams):
        rng = ReplicaStreams(config.seed, int(rng))
    return _simulate(config, rng)


def run_dense(config: SimConfig, rng, observables: dict):
    '''Like ``run``, also returning the DensePath of the given test functions.'''
    if not isinstance(rng, ReplicaStreams):
        rng = ReplicaStreams(config.seed, int(rng))
    path = DensePath(config, observables)
    return _simulate(config, rng, path), path


def step_cost(N: int, repeats: int = 3):
    '''Mean wall time of one pruned step for round(N) particles spread
    uniformly on [0, 1].'''
    config = SimConfig(N=N, u0=GridFunction.constant(1.0, 101), T=1.0)
    streams = ReplicaStreams(0)
    state = init_particles(config, streams.initial())
    started = time.perf_counter()
    for n in range(repeats):
        advance(state, config, streams.generator(n + 1))
    return (time.perf_counter() - started) / repeats


def step_cost_exponent(small: int = 1000, large: int = 10000, trials: int = 3):
    '''Median over trials of the log-log slope of the step cost between
    ``small`` and ``large`` particles; close to 1 when pruning works.

    Returns (exponent, cost at small, cost at large) of the median trial.
    '''
    measured = []
    for _ in range(trials):
        cheap, expensive = step_cost(small), step_cost(large)
        slope = float(np.log(expensive / cheap) / np.log(large / small))
        measured.append((slope, cheap, expensive))
    measured.sort()
    return measured[len(measured) // 2]


def write_snapshots_csv(path, replicas):
    '''Dumps a list of {t: ParticleState} (one per replica) as
    (replica, t, particle_index, x) rows.'''
    def rows():
        for replica, snapshots in enumerate(replicas):
            for t in sorted(snapshots):
                for index, x in enumerate(snapshots[t].positions):
                    yield (replica, t, index, x)

    report.write_csv(path, report.SNAPSHOT_HEADER, rows())
