#!/usr/bin/env python3
import argparse
import logging
import platform
import re
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from .configfile import ConfigFile
from .errors import DomainError, SimulationError
from .report import (REPLICA_HEADER, REPORT_HEADER, write_csv, write_manifest)
from .studies import STATISTICAL, STUDIES

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

SUBCOMMANDS = {
    'kernel-check': 'kernel',
    'pde': 'pde',
    'simulate': 'simulate',
    'lln': 'lln',
    'poc': 'poc',
    'fluct': 'fluct',
    'martingale': 'martingale',
    'hierarchy': 'hierarchy',
}

DEFAULT_LADDER = (100, 400, 1600)


@dataclass
class ExperimentSpec:
    '''What to run and where to put it.

    :param study: one of the keys of ``studies.STUDIES``
    :param n_ladder: strictly increasing N values
    :param replicas: replicas per N (>= 2 for statistical studies)
    :param seed: overrides the configured seed when given
    :param dt: overrides the configured time step when given
    :param T: overrides the configured horizon when given
    :param config: key=value overlay of SimConfig fields
    '''
    study: str
    n_ladder: tuple = DEFAULT_LADDER
    replicas: int = 200
    seed: int = None
    dt: float = None
    bins: int = 20
    out: Path = Path('reports')
    z_threshold: float = 4.0
    dense_paths: bool = False
    workers: int = 1
    T: float = None
    config: ConfigFile = field(default_factory=ConfigFile)

    def __post_init__(self):
        if self.study not in STUDIES:
            raise DomainError(f'unknown study {self.study!r}')
        self.n_ladder = tuple(int(N) for N in self.n_ladder)
        if not self.n_ladder or any(N < 2 for N in self.n_ladder) \
                or any(b <= a for a, b in zip(self.n_ladder, self.n_ladder[1:])):
            raise DomainError(
                f'N ladder must be strictly increasing and >= 2, '
                f'got {self.n_ladder}')
        if self.study in STATISTICAL and self.replicas < 2:
            raise DomainError(f'{self.study} needs at least 2 replicas')
        if self.bins < 1:
            raise DomainError(f'bins must be >= 1, got {self.bins}')
        if not self.z_threshold > 0:
            raise DomainError(f'z threshold must be positive, got {self.z_threshold}')
        if self.workers < 1:
            raise DomainError(f'workers must be >= 1, got {self.workers}')
        self.out = Path(self.out)
        # fails early on bad values in the file
        self.sim_config(self.n_ladder[0])

    def _values(self):
        values = ConfigFile(self.config)
        values.update_values(seed=self.seed, dt=self.dt, T=self.T)
        return values

    @property
    def seed_value(self):
        return self.sim_config(self.n_ladder[0]).seed

    @property
    def horizon(self):
        return self.sim_config(self.n_ladder[0]).T

    def sim_config(self, N: int, **overrides):
        config = self._values().sim_config(N)
        if overrides:
            config = replace(config, **overrides)
        return config


def _check_key(name):
    return 'check.' + re.sub(r'[^\w.]+', '_', name).strip('_')


def _file_stem(study, N):
    return study if N is None else f'{study}_{N}'


def run_experiment(spec: ExperimentSpec):
    '''Runs the study and writes its CSV reports and the manifest.

    Returns
    -------
    int: 0 when every check passed, 1 otherwise
    '''
    spec.out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    logger.info('running %s with N ladder %s', spec.study, spec.n_ladder)
    result = STUDIES[spec.study](spec)
    elapsed = time.perf_counter() - clock

    for N, rows in result.rows.items():
        write_csv(spec.out / f'{_file_stem(spec.study, N)}.csv',
                  REPORT_HEADER, rows)
    for N, rows in result.replica_rows.items():
        write_csv(spec.out / f'{_file_stem(spec.study, N)}_replicas.csv',
                  REPLICA_HEADER, rows)
    for name, writer in result.writers:
        writer(spec.out / name)

    entries = {
        'study': spec.study,
        'n_ladder': ' '.join(str(N) for N in spec.n_ladder),
        'replicas': spec.replicas,
        'seed': spec.seed_value,
        'bins': spec.bins,
        'z_threshold': spec.z_threshold,
        'workers': spec.workers,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'started': started.isoformat(timespec='seconds'),
        'elapsed_seconds': round(elapsed, 3),
    }
    entries.update(result.manifest)
    for check in result.checks:
        entries[_check_key(check.name)] = 'pass' if check.passed else 'fail'
    entries['verdict'] = 'pass' if result.passed else 'fail'
    write_manifest(spec.out / 'manifest.txt', entries)

    for check in result.checks:
        if not check.passed:
            print(f'FAILED {check.name}: {check.value} (tolerance {check.tolerance})')
    print(f'{spec.study}: {len(result.checks)} checks, '
          f'{"all passed" if result.passed else "some failed"} ({spec.out})')
    return EXIT_OK if result.passed else EXIT_FAILED


def _ladder(text):
    try:
        return tuple(int(v) for v in text.replace(',', ' ').split())
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a list of integers: {text!r}')


def build_parser():
    parser = argparse.ArgumentParser(
        description="Simulates annihilating reflected Brownian particles on "
                    "[0, 1] and checks them against the hydrodynamic limit",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )

    common = argparse.ArgumentParser(add_help=False)

    common.add_argument(
        "--n-ladder",
        type=_ladder,
        default=DEFAULT_LADDER,
        help="Increasing N values, e.g. '100,400,1600'"
    )

    common.add_argument(
        "--replicas",
        type=int,
        default=200,
        help="Number of independent replicas per N"
    )

    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Experiment seed (def. the config file value, or 0)"
    )

    common.add_argument(
        "--dt",
        type=float,
        default=None,
        help="Time step (def. min(2/N^2 / 2, 1e-3) for particles, 1e-3 for PDEs)"
    )

    common.add_argument(
        "--T",
        type=float,
        default=None,
        help="Horizon (def. the config file value, or 1)"
    )

    common.add_argument(
        "--bins",
        type=int,
        default=20,
        help="Histogram cells per axis"
    )

    common.add_argument(
        "--out",
        type=Path,
        default=Path('reports'),
        help="Output directory for the CSV reports and manifest.txt"
    )

    common.add_argument(
        "--z-threshold",
        type=float,
        default=4.0,
        help="Largest accepted |z| of a Monte Carlo check"
    )

    common.add_argument(
        "--dense-paths",
        action="store_true",
        help="Record per-step martingale data (memory heavy)"
    )

    common.add_argument(
        "--config",
        type=Path,
        default=None,
        help="key = value file with SimConfig fields (N, u0, T, dt, seed, ...)"
    )

    common.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Worker processes for the replicas"
    )

    common.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Logs progress of the replicas and solvers"
    )

    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    for name, study in SUBCOMMANDS.items():
        subparsers.add_parser(
            name, parents=[common],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
            help=(STUDIES[study].__doc__ or '').split('\n')[0])
    return parser


def main(argv=None):

    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s')

    config = ConfigFile()
    if args.config is not None:
        if not args.config.is_file():
            print(f"The config file {args.config} does not exist")
            sys.exit(EXIT_USAGE)
        try:
            config.parse(args.config)
        except DomainError as error:
            print(f"Invalid config file: {error}")
            sys.exit(EXIT_USAGE)

    if args.out.exists() and not args.out.is_dir():
        print("The output path is not a directory")
        sys.exit(EXIT_USAGE)

    try:
        spec = ExperimentSpec(
            study=SUBCOMMANDS[args.command],
            n_ladder=args.n_ladder,
            replicas=args.replicas,
            seed=args.seed,
            dt=args.dt,
            bins=args.bins,
            out=args.out,
            z_threshold=args.z_threshold,
            dense_paths=args.dense_paths,
            workers=args.workers,
            T=args.T,
            config=config)
    except DomainError as error:
        print(f"Invalid experiment: {error}")
        sys.exit(EXIT_USAGE)

    try:
        status = run_experiment(spec)
    except SimulationError as error:
        print(f"{spec.study} failed: {error}")
        status = EXIT_FAILED
    sys.exit(status)


if __name__ == "__main__":
    main()
