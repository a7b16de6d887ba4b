'''Residuals of the correlation hierarchy, in the limit and at finite N.

The limiting hierarchy is solved by products of the hydrodynamic solution:
gamma^(k)_t = u_t^{(x)k}. Its mild form reads

    gamma^(k)_t = P^(k)_t gamma^(k)_0
                  - int_0^t P^(k)_{t-s} sum_i gamma^(k)_s u_s(z_i) ds

At finite N the first equation of the hierarchy couples F^(1) to F^(2)
through the collision kernel p(2/N^2), which is evaluated cell-wise against
the histogram estimates of the ensemble.
'''
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MissingDataError, UnsupportedError
from .kernel import (DEFAULT_PARAMS, KernelParams, cell_transition_matrix,
                     kernel_matrix)
from .pde import PdeSolution, duhamel_residuals
from .stats import (DEFAULT_BINS, ReplicaEnsemble, replica_mean, normalizer,
                    replica_histograms, zscore)

logger = logging.getLogger(__name__)


@dataclass
class HierarchyResidual:
    '''Residual of the k-th hierarchy equation at time t.

    ``values``, ``standard_errors`` and ``zscores`` are per cell for the
    finite-N residual and None for the limiting one.
    '''
    k: int
    t: float
    sup_residual: float
    values: np.ndarray = None
    standard_errors: np.ndarray = None
    zscores: np.ndarray = None

    @property
    def max_abs_zscore(self):
        if self.zscores is None or len(self.zscores) == 0:
            return 0.0
        return float(np.max(np.abs(self.zscores)))


def limiting_residual(u: PdeSolution, k: int, t: float,
                      params: KernelParams = None):
    '''Sup-norm residual over [0, t] of the k-th limiting hierarchy equation
    with gamma^(k) = u^{(x)k}, for k in {1, 2}.'''
    if k not in (1, 2):
        raise UnsupportedError(f'hierarchy order {k} is not supported')
    params = params or u.params
    n = u.index_of(t)
    states = [s.values for s in u.slices[:n + 1]]
    matrix = kernel_matrix(u.dt, u.resolution, params)
    if n == 0:
        return HierarchyResidual(k, float(u.times[0]), 0.0)
    if k == 1:
        gammas = states
        sources = [v * v for v in states]

        def propagate(f):
            return matrix @ f
    else:
        gammas = [np.outer(v, v) for v in states]
        sources = [np.outer(v, v) * (v[:, None] + v[None, :]) for v in states]

        def propagate(f):
            return matrix @ f @ matrix.T
    residuals = duhamel_residuals(gammas, sources, u.dt, propagate)
    logger.debug('limiting residual k=%d up to t=%g: %g', k, t, residuals.max())
    return HierarchyResidual(k, float(u.times[n]), float(np.max(residuals)))


def _trapezoid_weights(times):
    gaps = np.diff(times)
    weights = np.zeros(len(times))
    weights[:-1] += 0.5 * gaps
    weights[1:] += 0.5 * gaps
    return weights


def bbgky_residual(f1, f2, times, N: int, params: KernelParams = DEFAULT_PARAMS,
                   annihilation: bool = True, interaction: float = 1.0):
    '''Cell-wise residual of the first finite-N hierarchy equation

        F1_t - P_t F1_0 + interaction * int_0^t P_{t-s} R F2_s ds

    with (R F2)(x) = int F2(x, z) p(2/N^2, x, z) dz. Histogram values are
    treated as piecewise constant, so both P and R reduce to bin-averaged
    kernel matrices. The time integral is the trapezoid rule on ``times``.

    Parameters
    ----------
    f1: numpy.ndarray
        F^(1) cell values shaped (replicas, len(times), bins)
    f2: numpy.ndarray
        F^(2) cell values shaped (replicas, len(times), bins, bins)
    times: sequence of float
        Increasing times starting at 0
    interaction: float
        Prefactor of the collision integral

    Returns
    -------
    numpy.ndarray: per-replica residuals shaped (replicas, bins) at times[-1]
    '''
    times = np.asarray(times, dtype=float)
    bins = f1.shape[-1]
    t = times[-1]
    free = f1[:, 0] @ cell_transition_matrix(t, bins, params).T
    integral = np.zeros_like(free)
    # the k = 1 equation has no pair term from inside the 1-tuple
    if annihilation:
        collision = cell_transition_matrix(2.0 / N ** 2, bins, params)
        collided = interaction * np.sum(f2 * collision, axis=-1)
        for j, w in enumerate(_trapezoid_weights(times)):
            transport = cell_transition_matrix(t - times[j], bins, params)
            integral += w * (collided[:, j] @ transport.T)
    return f1[:, -1] - free + integral


def finite_residual(ensemble: ReplicaEnsemble, k: int, t: float,
                    bins: int = DEFAULT_BINS, params: KernelParams = DEFAULT_PARAMS,
                    exact_normalizer: bool = True):
    '''Monte Carlo residual of the first hierarchy equation at time t.

    Needs the histogram estimates at every recorded time in [0, t], with at
    least two intervals when t > 0. The z-scores are per cell, over the
    replica-wise residuals.
    '''
    if k != 1:
        raise UnsupportedError(f'finite-N residual of order {k} is not supported')
    config = ensemble.config
    t = ensemble.record_time(t)
    times = [s for s in ensemble.record_times if s <= t]
    bins = int(bins)
    if bins < 1:
        raise DomainError(f'bins must be >= 1, got {bins}')
    if t == 0:
        zeros = np.zeros(bins)
        return HierarchyResidual(1, 0.0, 0.0, zeros, zeros, zeros)
    if times[0] != 0.0 or len(times) < 3:
        raise MissingDataError(
            f'residual at t={t} needs snapshots at 0 and at least one '
            f'intermediate time, recorded: {ensemble.record_times}')
    N = config.N
    first = normalizer(N, 1, exact_normalizer) / bins
    second = normalizer(N, 2, exact_normalizer) / bins ** 2
    f1 = np.stack([replica_histograms(ensemble.states_at(s), bins, 1) / first
                   for s in times], axis=1)
    f2 = np.stack([replica_histograms(ensemble.states_at(s), bins, 2) / second
                   for s in times], axis=1)
    interaction = normalizer(N, 2, exact_normalizer) \
        / (N * normalizer(N, 1, exact_normalizer))
    residuals = bbgky_residual(f1, f2, times, N, params, config.annihilation,
                               interaction)
    values, errors = replica_mean(residuals)
    scale = float(np.max(np.abs(f1))) if f1.size else 0.0
    scores = np.array([zscore(v, e, scale) for v, e in zip(values, errors)])
    return HierarchyResidual(1, t, float(np.max(np.abs(values))), values,
                             errors, scores)
