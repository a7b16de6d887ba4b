'''Monte Carlo estimators over replica ensembles.'''
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MissingDataError, UnsupportedError
from .kernel import DEFAULT_PARAMS, GridFunction, KernelParams, cell_transition_matrix
from .particles import ParticleState, SimConfig, run, run_dense

logger = logging.getLogger(__name__)

DEFAULT_BINS = 20


@dataclass
class ReplicaEnsemble:
    '''Snapshots of independent replicas sharing one SimConfig.

    :param snapshots: per replica, {record_time: ParticleState}
    :param paths: per replica DensePath, when recorded
    '''
    config: SimConfig
    snapshots: list
    paths: list = None

    @property
    def replica_count(self):
        return len(self.snapshots)

    @property
    def record_times(self):
        return self.config.record_times

    def record_time(self, t: float):
        '''The recorded time matching t.'''
        for recorded in self.record_times:
            if abs(recorded - t) <= 1e-9 * max(1.0, abs(t)):
                return recorded
        raise MissingDataError(f'time {t} was not recorded '
                               f'(recorded: {self.record_times})')

    def states_at(self, t: float):
        recorded = self.record_time(t)
        return [snapshots[recorded] for snapshots in self.snapshots]


def _run_replica(task):
    config, replica, observables = task
    if observables:
        return run_dense(config, replica, observables)
    return run(config, replica), None


def simulate_ensemble(config: SimConfig, replicas: int, workers: int = 1,
                      observables: dict = None):
    '''Runs ``replicas`` independent replicas, serially or in a process pool.

    Results are merged by replica index and every replica draws from its own
    counter-based streams, so the ensemble does not depend on ``workers``.
    '''
    if replicas < 1:
        raise DomainError(f'need at least one replica, got {replicas}')
    tasks = [(config, replica, observables) for replica in range(replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replica, tasks,
                                    chunksize=max(1, replicas // (4 * workers))))
    else:
        results = [_run_replica(task) for task in tasks]
    logger.info('simulated %d replicas at N=%d (%d steps each)',
                replicas, config.N, config.steps)
    paths = [path for _, path in results] if observables else None
    return ReplicaEnsemble(config, [snapshots for snapshots, _ in results], paths)


def zscore(mean: float, stderr: float, scale: float = 1.0):
    '''mean / stderr, with discrepancies at rounding level reported as 0.'''
    if abs(mean) <= 1e-12 * max(1.0, scale):
        return 0.0
    if not stderr > 0:
        return float(np.copysign(np.inf, mean))
    return float(mean / stderr)


def replica_mean(samples):
    '''Mean and standard error over the first axis.'''
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    if len(samples) < 2:
        return mean, np.full(np.shape(mean), np.nan)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(len(samples))


def normalizer(N: int, k: int, exact: bool = True):
    '''N (N-1) ... (N-k+1) when exact, otherwise N^k.'''
    if not exact:
        return float(N) ** k
    return float(np.prod([N - i for i in range(k)]))


def empirical_pairing(state: ParticleState, phi: GridFunction, N: int):
    '''<X^N_t, phi> = (1/N) sum_i phi(x_i), zero for the empty state.'''
    if state.alive_count == 0:
        return 0.0
    return float(np.sum(phi(state.positions))) / N


def replica_histograms(states, bins: int, k: int):
    '''Counts of ordered k-tuples of distinct particles per cell, per replica.'''
    counts = np.array([np.histogram(s.positions, bins=bins, range=(0.0, 1.0))[0]
                       for s in states], dtype=float)
    if k == 1:
        return counts
    pairs = counts[:, :, None] * counts[:, None, :]
    diagonal = np.arange(bins)
    pairs[:, diagonal, diagonal] -= counts
    return pairs


@dataclass
class CorrelationEstimate:
    '''Histogram estimate of F^(k)_t; cell values at the cell midpoints.'''
    k: int
    t: float
    bins: int
    values: np.ndarray
    standard_errors: np.ndarray
    replica_values: np.ndarray

    @property
    def midpoints(self):
        return (np.arange(self.bins) + 0.5) / self.bins

    @property
    def cell_volume(self):
        return (1.0 / self.bins) ** self.k


def estimate_correlation(ensemble: ReplicaEnsemble, k: int, t: float,
                         bins: int = DEFAULT_BINS, exact_normalizer: bool = True):
    '''Histogram estimator of the k-correlation function at a recorded time.

    Each ordered k-tuple of distinct alive particles adds
    1 / (N^(k) * cell volume) to its cell; values are replica averages and
    the errors replica-wise standard errors.
    '''
    if k not in (1, 2):
        raise UnsupportedError(f'correlation order {k} is not supported')
    states = ensemble.states_at(t)
    scale = normalizer(ensemble.config.N, k, exact_normalizer) * bins ** -k
    per_replica = replica_histograms(states, bins, k) / scale
    values, errors = replica_mean(per_replica)
    return CorrelationEstimate(k, ensemble.record_time(t), bins, values,
                               errors, per_replica)


@dataclass
class MomentReport:
    lhs: float
    rhs: float
    stderr: float
    zscore: float


def moment_identity_check(ensemble: ReplicaEnsemble, phi: GridFunction,
                          t: float, bins: int = DEFAULT_BINS,
                          exact_normalizer: bool = True):
    '''Compares E[<X, phi>^2] with its expression through F^(1) and F^(2).

    The right side is assembled per replica from the histograms by midpoint
    quadrature, so the z-score uses the paired differences.
    '''
    N = ensemble.config.N
    states = ensemble.states_at(t)
    lhs = np.array([empirical_pairing(s, phi, N) ** 2 for s in states])
    first = estimate_correlation(ensemble, 1, t, bins, exact_normalizer)
    second = estimate_correlation(ensemble, 2, t, bins, exact_normalizer)
    values = phi(first.midpoints)
    h = 1.0 / bins
    single = first.replica_values @ (values ** 2) * h
    double = np.einsum('rab,a,b->r', second.replica_values, values, values) * h * h
    rhs = (normalizer(N, 1, exact_normalizer) / N ** 2 * single
           + normalizer(N, 2, exact_normalizer) / N ** 2 * double)
    difference, stderr = replica_mean(lhs - rhs)
    scale = float(np.max(np.abs(lhs))) if len(lhs) else 0.0
    return MomentReport(float(lhs.mean()), float(rhs.mean()), float(stderr),
                        zscore(float(difference), float(stderr), scale))


@dataclass
class FluctuationReport:
    variance: float
    standard_error: float


def fluctuation_variance(ensemble: ReplicaEnsemble, phi: GridFunction,
                         t: float, mean: float = None):
    '''Variance of Y^N_t(phi) = sqrt(N) (<X_t, phi> - E<X_t, phi>).

    Without ``mean`` the expectation is the replica mean and the sample
    variance carries the R/(R-1) correction; its standard error comes from
    the fourth central moment. With ``mean`` (e.g. from a larger auxiliary
    ensemble) the squared deviations are averaged directly.
    '''
    R = ensemble.replica_count
    if R < 2:
        raise DomainError(f'variance needs at least 2 replicas, got {R}')
    N = ensemble.config.N
    pairings = np.array([empirical_pairing(s, phi, N)
                         for s in ensemble.states_at(t)])
    if np.ptp(pairings) == 0 and (mean is None or mean == pairings[0]):
        return FluctuationReport(0.0, 0.0)
    if mean is not None:
        deviations = (pairings - mean) ** 2
        return FluctuationReport(
            N * float(deviations.mean()),
            N * float(deviations.std(ddof=1) / np.sqrt(R)))
    centered = pairings - pairings.mean()
    second = float(np.mean(centered ** 2))
    fourth = float(np.mean(centered ** 4))
    spread = max(fourth - second ** 2 * (R - 3) / (R - 1), 0.0)
    return FluctuationReport(N * float(np.var(pairings, ddof=1)),
                             N * float(np.sqrt(spread / R)))


@dataclass
class MartingaleReport:
    mean_M: float
    var_M: float
    qv_mean: float
    zscores: tuple


def martingale_check(ensemble: ReplicaEnsemble, phi: str, t: float):
    '''Checks that M^phi has mean zero and E[M^2] = E<M> at time t.

    ``phi`` names a test function registered when the dense paths were
    recorded. Returns the z-scores of mean(M) and of mean(M^2 - <M>).
    '''
    if not ensemble.paths or any(path is None or phi not in path.observables
                                 for path in ensemble.paths):
        raise MissingDataError(f'no dense paths recorded for {phi!r}')
    config = ensemble.config
    recorded = ensemble.record_time(t)
    if abs(config.step_of(recorded) * config.dt - recorded) \
            > 1e-9 * max(1.0, recorded):
        raise MissingDataError(f'time {t} is not on the step grid (dt={config.dt})')
    values = np.array([path.martingale(phi, recorded)
                       for path in ensemble.paths])
    variations = np.array([path.quadratic_variation(phi, recorded)
                           for path in ensemble.paths])
    mean, stderr = replica_mean(values)
    excess, excess_stderr = replica_mean(values ** 2 - variations)
    scale = float(np.max(variations)) if len(variations) else 0.0
    var = float(np.var(values, ddof=1)) if len(values) > 1 else 0.0
    return MartingaleReport(
        float(mean), var, float(variations.mean()),
        (zscore(float(mean), float(stderr), float(np.max(np.abs(values)))),
         zscore(float(excess), float(excess_stderr), scale)))


def semigroup_domination(ensemble: ReplicaEnsemble, t: float,
                         bins: int = DEFAULT_BINS,
                         params: KernelParams = DEFAULT_PARAMS):
    '''z-scores of the cell-wise excess of F^(1)_t over P_t F^(1)_0.

    Annihilation only removes particles, so every score should be small or
    negative.
    '''
    initial = estimate_correlation(ensemble, 1, 0.0, bins).replica_values
    current = estimate_correlation(ensemble, 1, t, bins).replica_values
    transported = initial @ cell_transition_matrix(t, bins, params).T
    excess, stderr = replica_mean(current - transported)
    return np.array([zscore(e, s) for e, s in zip(excess, stderr)])
