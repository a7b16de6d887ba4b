'''The canned studies behind the ``softann`` subcommands.

Each study takes an ExperimentSpec and returns a StudyResult holding report
rows per N, raw per-replica observables, named checks and extra writers.
Nothing is written here; ``cli.run_experiment`` does the output.
'''
import logging
from collections import namedtuple
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from .hierarchy import finite_residual, limiting_residual
from .kernel import (GridFunction, apply_semigroup, cosine_series, eval_kernel,
                     grid_nodes, image_sum)
from .particles import (brute_force_pair_rates, pair_rates, step_cost_exponent,
                        write_snapshots_csv)
from .pde import (mild_residual, picard_solve, sampling_covariance,
                  solve_fluctuation_covariance,
                  solve_mild, solve_smoothed)
from .report import ReportRow
from .rng import ReplicaStreams
from .stats import (estimate_correlation, fluctuation_variance, martingale_check,
                    moment_identity_check, replica_mean, semigroup_domination,
                    simulate_ensemble, zscore)

logger = logging.getLogger(__name__)

PDE_DT = 1e-3
BASIS_SIZE = 16
LIMITING_RESOLUTION = 201
LIMITING_TOLERANCE = 1e-3
HIERARCHY_INTERVALS = 10
POC_BIN_FRACTION = 0.99
PRUNING_SE = 2.0
STEP_COST_SMALL = 1000
STEP_COST_LARGE = 10000
STEP_COST_EXPONENT = 1.2

Check = namedtuple('Check', ('name', 'passed', 'value', 'tolerance'))


@dataclass
class StudyResult:
    '''Everything a study produced.

    :param rows: N (None for N-free studies) -> list of ReportRow
    :param replica_rows: N -> list of (replica, quantity, t, value)
    :param checks: list of Check
    :param writers: list of (file name, callable taking the output path)
    :param manifest: extra manifest entries
    '''
    study: str
    rows: dict = field(default_factory=dict)
    replica_rows: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    writers: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def add_rows(self, N, rows):
        self.rows.setdefault(N, []).extend(rows)

    def check(self, name, value, tolerance, passed=None):
        if passed is None:
            passed = bool(value <= tolerance)
        self.checks.append(Check(name, bool(passed), value, tolerance))
        logger.info('%s: %s (%g vs %g)', name, 'pass' if passed else 'FAIL',
                    value, tolerance)


def _test_functions(resolution):
    return {
        'one': GridFunction.constant(1.0, resolution),
        'cos': GridFunction.cosine_profile([0.0, 1.0], resolution),
    }


def _strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def _pde_dt(spec, T):
    return min(spec.dt or PDE_DT, T)


def kernel_study(spec):
    '''Symmetry, conservation, method agreement, Chapman-Kolmogorov and the
    closed-form values of the heat kernel.'''
    result = StudyResult('kernel')
    params = spec.config.kernel_params()
    rng = ReplicaStreams(spec.seed_value).auxiliary()
    rows = []

    t = 10.0 ** rng.uniform(-3.0, 0.5, 200)
    x = rng.random(200)
    y = rng.random(200)
    forward = np.array([eval_kernel(*a, params) for a in zip(t, x, y)])
    backward = np.array([eval_kernel(*a, params) for a in zip(t, y, x)])
    symmetry = float(np.max(np.abs(forward - backward)))
    rows.append(ReportRow('symmetry', symmetry, target=1e-12))
    result.check('kernel symmetry', symmetry, 1e-12)

    nodes = grid_nodes(2001)
    worst = 0.0
    for s in (1e-4, 1e-3, 1e-2, 0.1, 1.0):
        error = max(abs(trapezoid(eval_kernel(s, x0, nodes, params), nodes) - 1.0)
                    for x0 in (0.0, 0.3, 0.5, 1.0))
        rows.append(ReportRow('conservation', error, t=s, target=1e-8))
        worst = max(worst, error)
    result.check('kernel conservation', worst, 1e-8)

    worst = 0.0
    xs, ys = rng.random(25), rng.random(25)
    for s in np.geomspace(0.01, 1.0, 10):
        error = float(np.max(np.abs(image_sum(s, xs, ys, params.image_terms)
                                    - cosine_series(s, xs, ys,
                                                    params.spectral_terms))))
        rows.append(ReportRow('method_agreement', error, t=s, target=1e-8))
        worst = max(worst, error)
    result.check('image/spectral agreement', worst, 1e-8)

    worst = 0.0
    for _ in range(20):
        s, u = rng.uniform(0.01, 0.5, 2)
        x0, y0 = rng.random(2)
        composed = trapezoid(eval_kernel(s, x0, nodes, params)
                             * eval_kernel(u, nodes, y0, params), nodes)
        worst = max(worst, abs(composed - eval_kernel(s + u, x0, y0, params)))
    rows.append(ReportRow('chapman_kolmogorov', worst, target=1e-6))
    result.check('Chapman-Kolmogorov', worst, 1e-6)

    cosine = GridFunction.cosine_profile([0.0, 1.0])
    evolved = apply_semigroup(0.1, cosine, params)
    error = float(np.max(np.abs(evolved.values
                                - np.exp(-np.pi ** 2 * 0.05) * cosine.values)))
    rows.append(ReportRow('eigenfunction', error, t=0.1, target=1e-6))
    result.check('cos(pi x) eigenfunction', error, 1e-6)

    bumps = GridFunction.from_callable(
        lambda z: np.maximum(np.sin(7.0 * np.pi * z), 0.0))
    lowest = min(float(np.min(apply_semigroup(s, bumps, params).values))
                 for s in (1e-3, 0.05, 0.5))
    rows.append(ReportRow('positivity', lowest, target=-1e-12))
    result.check('positivity', -lowest, 1e-12)

    for s, x0, y0, expected, tolerance in ((0.02, 0.5, 0.5, 2.820948, 1e-5),
                                           (10.0, 0.3, 0.7, 1.0, 1e-8)):
        value = eval_kernel(s, x0, y0, params)
        rows.append(ReportRow('value', value, t=s, target=expected))
        result.check(f'p({s}, {x0}, {y0})', abs(value - expected), tolerance)
    result.add_rows(None, rows)
    return result


def _order_of_convergence(resolution, dt, T, params):
    u0 = GridFunction.cosine_profile([1.0, 0.5], resolution)
    reference = solve_mild(u0, T, dt / 32, params).slices[-1].values
    errors = [float(np.max(np.abs(solve_mild(u0, T, step, params).slices[-1].values
                                  - reference)))
              for step in (dt, dt / 2)]
    return errors, float(np.log2(errors[0] / errors[1]))


def pde_study(spec):
    '''Closed-form, order, Picard, residual, covariance and smoothed-solution
    checks of the deterministic solvers.'''
    result = StudyResult('pde')
    params = spec.config.kernel_params()
    dt = spec.dt or PDE_DT
    rows = []

    constant = GridFunction.constant(1.0)
    u = solve_mild(constant, 1.0, dt, params)
    error = float(np.max(np.abs(u.slices[-1].values - 0.5)))
    rows.append(ReportRow('closed_form', error, t=1.0, target=1e-5))
    result.check('u0 = 1 closed form', error, 1e-5)
    result.writers.append(('pde_solution.csv',
                           lambda path: u.write_csv(path, every=100)))

    residual = float(np.max(u.masses()[1:] - u.masses()[:-1]))
    result.check('mass nonincreasing', residual, 1e-12)

    mild = float(np.max(mild_residual(u)))
    tolerance = 5.0 * (u.dt ** 2 + constant.spacing ** 2)
    rows.append(ReportRow('mild_residual', mild, t=1.0, target=tolerance))
    result.check('mild residual', mild, tolerance)

    errors, order = _order_of_convergence(101, 0.02, 1.0, params)
    rows.append(ReportRow('splitting_error', errors[0], t=1.0))
    rows.append(ReportRow('splitting_error', errors[1], t=1.0))
    rows.append(ReportRow('splitting_order', order, target=2.0))
    result.check('splitting order', order, 1.7, passed=order >= 1.7)

    coarse = GridFunction.cosine_profile([1.0, 0.5], 51)
    split = solve_mild(coarse, 0.5, 2.5e-3, params).slices[-1].values
    fixed_point = picard_solve(coarse, 0.5, 2.5e-3, params).slices[-1].values
    gap = float(np.max(np.abs(split - fixed_point)))
    rows.append(ReportRow('picard_gap', gap, t=0.5, target=1e-4))
    result.check('Picard agreement', gap, 1e-4)

    lower = solve_mild(GridFunction.cosine_profile([1.0, 0.5]), 1.0, dt, params)
    upper = solve_mild(GridFunction.cosine_profile([1.5, 0.5]), 1.0, dt, params)
    excess = float(np.max(lower.as_array() - upper.as_array()))
    result.check('comparison principle', excess, 1e-10)

    trajectory = solve_fluctuation_covariance(u, BASIS_SIZE, dt)
    wide = solve_fluctuation_covariance(u, 2 * BASIS_SIZE, dt)
    variance = trajectory[-1].variance_of(constant)
    rows.append(ReportRow('fluctuation_variance', variance, t=1.0,
                          target=7.0 / 48.0))
    result.check('covariance 7/48', abs(variance - 7.0 / 48.0), 1e-4)
    result.check('basis 16 vs 32',
                 abs(variance - wide[-1].variance_of(constant)), 1e-6)
    lowest = min(state.min_eigenvalue() for state in trajectory)
    result.check('covariance PSD', -lowest, 1e-10)

    u0 = GridFunction.cosine_profile([1.0, 0.5], 201)
    limit = solve_mild(u0, 1.0, dt, params).as_array()
    gaps = []
    for N in (100, 200, 400):
        smoothed = solve_smoothed(u0, 1.0, dt, N, params).as_array()
        gaps.append(float(np.max(np.abs(smoothed - limit))))
        rows.append(ReportRow('smoothed_gap', gaps[-1], N=N))
    result.check('smoothed gap decreasing', gaps[-1], gaps[0],
                 passed=_strictly_decreasing(gaps))
    result.add_rows(None, rows)
    return result


def lln_study(spec):
    '''F^(1)_T and the surviving mass against u(T), along the N ladder.'''
    result = StudyResult('lln')
    distances = []
    for N in spec.n_ladder:
        config = spec.sim_config(N)
        T = config.T
        ensemble = simulate_ensemble(config, spec.replicas, spec.workers)
        u = solve_mild(config.u0, T, _pde_dt(spec, T), config.kernel).slices[-1]
        target = u.bin_averages(spec.bins)
        estimate = estimate_correlation(ensemble, 1, T, spec.bins)
        rows = []
        scores = []
        for b, (value, error, goal) in enumerate(
                zip(estimate.values, estimate.standard_errors, target)):
            scores.append(zscore(value - goal, error))
            rows.append(ReportRow('F1', value, N=N, t=T, bin_x=b, stderr=error,
                                  target=goal, zscore=scores[-1]))
        distances.append(float(np.sum(np.abs(estimate.values - target)))
                         / spec.bins)
        rows.append(ReportRow('L1', distances[-1], N=N, t=T))

        fractions = [s.alive_count / N for s in ensemble.states_at(T)]
        mean, error = replica_mean(fractions)
        score = zscore(mean - u.integral(), error)
        rows.append(ReportRow('alive_fraction', mean, N=N, t=T, stderr=error,
                              target=u.integral(), zscore=score))
        result.check(f'alive fraction N={N}', abs(score), spec.z_threshold)
        domination = semigroup_domination(ensemble, T, spec.bins, config.kernel)
        result.check(f'semigroup domination N={N}', float(np.max(domination)),
                     spec.z_threshold)
        if N == spec.n_ladder[-1]:
            result.check(f'F1 bins N={N}', float(np.max(np.abs(scores))),
                         spec.z_threshold)
        result.add_rows(N, rows)
        result.replica_rows[N] = [(r, 'alive_fraction', T, f)
                                  for r, f in enumerate(fractions)]
    result.check('L1 decreasing in N', distances[-1], distances[0],
                 passed=_strictly_decreasing(distances))
    return result


def poc_study(spec):
    '''F^(2)_T against u(T) (x) u(T) and the second-moment identity.'''
    result = StudyResult('poc')
    discrepancies = []
    functions = _test_functions(spec.config.initial_density().resolution)
    for N in spec.n_ladder:
        config = spec.sim_config(N)
        T = config.T
        times = (0.0, 0.25 * T, 0.5 * T, T)
        config = replace(config, record_times=times)
        ensemble = simulate_ensemble(config, spec.replicas, spec.workers)
        u = solve_mild(config.u0, T, _pde_dt(spec, T), config.kernel).slices[-1]
        averages = u.bin_averages(spec.bins)
        target = np.outer(averages, averages)
        estimate = estimate_correlation(ensemble, 2, T, spec.bins)
        rows = []
        scores = np.zeros(target.shape)
        for (a, b), goal in np.ndenumerate(target):
            value = estimate.values[a, b]
            error = estimate.standard_errors[a, b]
            scores[a, b] = zscore(value - goal, error)
            rows.append(ReportRow('F2', value, N=N, t=T, bin_x=a, bin_y=b,
                                  stderr=error, target=goal,
                                  zscore=scores[a, b]))
        inside = float(np.mean(np.abs(scores) <= spec.z_threshold))
        discrepancies.append(float(np.max(np.abs(estimate.values - target))))
        rows.append(ReportRow('F2_sup_discrepancy', discrepancies[-1], N=N, t=T))
        rows.append(ReportRow('F2_fraction_within', inside, N=N, t=T,
                              target=POC_BIN_FRACTION))
        result.check(f'F2 bins N={N}', inside, POC_BIN_FRACTION,
                     passed=inside >= POC_BIN_FRACTION)
        for t in times[1:]:
            for name, phi in functions.items():
                report = moment_identity_check(ensemble, phi, t, spec.bins)
                rows.append(ReportRow(f'moment_{name}', report.lhs, N=N, t=t,
                                      stderr=report.stderr, target=report.rhs,
                                      zscore=report.zscore))
                result.check(f'moment identity {name} N={N} t={t}',
                             abs(report.zscore), spec.z_threshold)
        result.add_rows(N, rows)
    result.check('F2 discrepancy decreasing in N', discrepancies[-1],
                 discrepancies[0], passed=_strictly_decreasing(discrepancies))
    return result


def fluct_study(spec):
    '''N Var<X_t, phi> against the covariance of the linear fluctuation
    equation, at 0 and T.'''
    result = StudyResult('fluct')
    for N in spec.n_ladder:
        config = spec.sim_config(N)
        T = config.T
        ensemble = simulate_ensemble(config, spec.replicas, spec.workers)
        u = solve_mild(config.u0, T, _pde_dt(spec, T), config.kernel)
        trajectory = solve_fluctuation_covariance(
            u, BASIS_SIZE, u.dt, sampling_covariance(config.u0, BASIS_SIZE))
        functions = _test_functions(config.u0.resolution)
        functions['cos'] = GridFunction(np.sqrt(2.0) * functions['cos'].values)
        rows = []
        for name, phi in functions.items():
            for t, state in ((0.0, trajectory[0]), (T, trajectory[-1])):
                report = fluctuation_variance(ensemble, phi, t)
                target = state.variance_of(phi)
                score = zscore(report.variance - target, report.standard_error)
                rows.append(ReportRow(f'variance_{name}', report.variance, N=N,
                                      t=t, stderr=report.standard_error,
                                      target=target, zscore=score))
                result.check(f'variance {name} N={N} t={t}', abs(score),
                             spec.z_threshold)
        result.add_rows(N, rows)
        result.replica_rows[N] = [
            (r, 'pairing_one', T, s.alive_count / N)
            for r, s in enumerate(ensemble.states_at(T))]
    return result


def martingale_study(spec):
    '''Mean and quadratic variation of the Dynkin martingales of 1 and
    cos(pi x), from dense paths.'''
    result = StudyResult('martingale')
    for N in spec.n_ladder:
        config = spec.sim_config(N)
        T = config.T
        functions = _test_functions(config.u0.resolution)
        ensemble = simulate_ensemble(config, spec.replicas, spec.workers,
                                     observables=functions)
        rows = []
        for name in functions:
            report = martingale_check(ensemble, name, T)
            mean_score, qv_score = report.zscores
            rows.append(ReportRow(f'M_{name}', report.mean_M, N=N, t=T,
                                  target=0.0, zscore=mean_score))
            rows.append(ReportRow(f'var_M_{name}', report.var_M, N=N, t=T,
                                  target=report.qv_mean, zscore=qv_score))
            result.check(f'martingale mean {name} N={N}', abs(mean_score),
                         spec.z_threshold)
            result.check(f'quadratic variation {name} N={N}', abs(qv_score),
                         spec.z_threshold)
        result.add_rows(N, rows)
        result.replica_rows[N] = [
            (r, f'M_{name}', T, path.martingale(name, T))
            for r, path in enumerate(ensemble.paths) for name in functions]
    return result


def hierarchy_study(spec):
    '''Limiting hierarchy residuals for k = 1, 2 and the finite-N residual of
    the first equation along the N ladder.'''
    result = StudyResult('hierarchy')
    params = spec.config.kernel_params()
    T = spec.horizon
    u0 = spec.config.initial_density(LIMITING_RESOLUTION)
    u = solve_mild(u0, T, _pde_dt(spec, T), params)
    for k in (1, 2):
        residual = limiting_residual(u, k, u.horizon, params)
        result.add_rows(None, [ReportRow(f'limiting_residual_{k}',
                                         residual.sup_residual, t=residual.t,
                                         target=LIMITING_TOLERANCE)])
        result.check(f'limiting residual k={k}', residual.sup_residual,
                     LIMITING_TOLERANCE)
    times = tuple(np.linspace(0.0, T, HIERARCHY_INTERVALS + 1))
    for N in spec.n_ladder:
        config = replace(spec.sim_config(N), record_times=times)
        ensemble = simulate_ensemble(config, spec.replicas, spec.workers)
        residual = finite_residual(ensemble, 1, config.T, spec.bins, config.kernel)
        rows = [ReportRow('finite_residual', value, N=N, t=residual.t, bin_x=b,
                          stderr=error, target=0.0, zscore=score)
                for b, (value, error, score) in enumerate(
                    zip(residual.values, residual.standard_errors,
                        residual.zscores))]
        result.add_rows(N, rows)
        result.check(f'finite residual N={N}', residual.max_abs_zscore,
                     spec.z_threshold)
    return result


def _pruning_check(config, state):
    positions = state.positions
    first, second, rates = pair_rates(positions, config)
    all_first, all_second, all_rates = brute_force_pair_rates(positions, config)
    m = len(positions)
    full = np.zeros((m, m))
    full[all_first, all_second] = all_rates
    mismatch = float(np.max(np.abs(full[first, second] - rates), initial=0.0))
    kept = np.zeros((m, m), dtype=bool)
    kept[first, second] = True
    omitted = full[all_first, all_second][~kept[all_first, all_second]]
    t = 2.0 / config.N ** 2
    bound = 2.0 / config.N * np.exp(-config.cutoff_radius ** 2 / (2.0 * t)) \
        / np.sqrt(2.0 * np.pi * t)
    return mismatch, float(np.max(omitted, initial=0.0)), float(bound)


def simulate_study(spec):
    '''Plain simulation: snapshot dumps, alive fractions, pruning
    equivalence, and the measured step-cost exponent.'''
    result = StudyResult('simulate')
    for N in spec.n_ladder:
        config = spec.sim_config(N)
        functions = _test_functions(config.u0.resolution) \
            if spec.dense_paths else None
        ensemble = simulate_ensemble(config, spec.replicas, spec.workers,
                                     observables=functions)
        rows = []
        replica_rows = []
        for t in config.record_times:
            fractions = [s.alive_count / N for s in ensemble.states_at(t)]
            mean, error = replica_mean(fractions)
            rows.append(ReportRow('alive_fraction', mean, N=N, t=t, stderr=error))
            replica_rows.extend((r, 'alive_fraction', t, f)
                                for r, f in enumerate(fractions))
        if functions:
            for name in functions:
                for t in config.record_times:
                    values = [path.martingale(name, t) for path in ensemble.paths]
                    mean, error = replica_mean(values)
                    rows.append(ReportRow(f'M_{name}', mean, N=N, t=t,
                                          stderr=error, target=0.0,
                                          zscore=zscore(mean, error)))

        mismatch, omitted, bound = _pruning_check(
            config, ensemble.snapshots[0][config.record_times[0]])
        rows.append(ReportRow('pruning_rate_mismatch', mismatch, N=N,
                              target=1e-12))
        rows.append(ReportRow('pruning_omitted_rate', omitted, N=N, target=bound))
        result.check(f'pruned rates exact N={N}', mismatch, 1e-12)
        result.check(f'pruned pairs negligible N={N}', omitted, bound)

        unpruned = simulate_ensemble(replace(config, cutoff_radius=1.0),
                                     spec.replicas, spec.workers)
        T = config.record_times[-1]
        pruned_mean, pruned_error = replica_mean(
            [s.alive_count / N for s in ensemble.states_at(T)])
        full_mean, full_error = replica_mean(
            [s.alive_count / N for s in unpruned.states_at(T)])
        pooled = float(np.hypot(pruned_error, full_error))
        score = zscore(pruned_mean - full_mean, pooled)
        rows.append(ReportRow('pruning_effect', pruned_mean - full_mean, N=N,
                              t=T, stderr=pooled, target=0.0, zscore=score))
        result.check(f'pruning statistics N={N}', abs(score), PRUNING_SE)

        result.add_rows(N, rows)
        result.replica_rows[N] = replica_rows
        snapshots = ensemble.snapshots
        result.writers.append(
            (f'simulate_{N}_snapshots.csv',
             lambda path, snapshots=snapshots: write_snapshots_csv(path, snapshots)))

    exponent, small, large = step_cost_exponent(STEP_COST_SMALL, STEP_COST_LARGE)
    result.manifest[f'step_cost_{STEP_COST_SMALL}'] = small
    result.manifest[f'step_cost_{STEP_COST_LARGE}'] = large
    result.manifest['step_cost_exponent'] = exponent
    result.check('step cost exponent', exponent, STEP_COST_EXPONENT)
    return result


STUDIES = {
    'kernel': kernel_study,
    'pde': pde_study,
    'simulate': simulate_study,
    'lln': lln_study,
    'poc': poc_study,
    'fluct': fluct_study,
    'martingale': martingale_study,
    'hierarchy': hierarchy_study,
}

# studies that draw replicas
STATISTICAL = ('simulate', 'lln', 'poc', 'fluct', 'martingale', 'hierarchy')
