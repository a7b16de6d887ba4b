#!/usr/bin/env python3
import argparse
import filecmp
import os
import random
import sys
import tempfile
from subprocess import call


parser = argparse.ArgumentParser(
    description="softann reproducibility fuzz test: random small experiments "
                "are run serially, again serially and in parallel, and the "
                "CSV outputs must be byte-identical")
parser.add_argument("-o", "--outdir", help="Where to store generated files")
args = parser.parse_args()


MIN_N = 2
MAX_N = 200
MAX_REPLICAS = 8
MAX_T = 0.05

CHECKED_SUFFIXES = ('.csv',)

tmpdir = None
tmpdir_obj = None
if not args.outdir:
    tmpdir_obj = tempfile.TemporaryDirectory(prefix='softann-fuzzer-')
    tmpdir = tmpdir_obj.name
else:
    if os.path.isdir(args.outdir):
        tmpdir = args.outdir
        os.makedirs(os.path.join(tmpdir, 'failed'), exist_ok=True)
        os.makedirs(os.path.join(tmpdir, 'passed'), exist_ok=True)
    else:
        raise NotADirectoryError


def random_config(config_name):
    coefficients = [random.uniform(0.5, 2.0)]
    coefficients += [random.uniform(-0.4, 0.4) * coefficients[0]
                     for _ in range(random.randint(0, 2))]
    T = round(random.uniform(0.005, MAX_T), 4)
    with open(config_name, 'w') as config_file:
        print(f'u0 = {", ".join(repr(a) for a in coefficients)}', file=config_file)
        print(f'T = {T}', file=config_file)
        print(f'record_times = 0, {T / 2}, {T}', file=config_file)
        print(f'seed = {random.randint(0, 2 ** 63)}', file=config_file)
        if random.random() < 0.2:
            print('annihilation = off', file=config_file)


def run_softann(config_name, out, ladder, replicas, workers):
    return call([
        sys.executable, '-m', 'soft_annihilation.cli', 'simulate',
        '--config', config_name,
        '--n-ladder', ladder,
        '--replicas', str(replicas),
        '--workers', str(workers),
        '--out', out])


def same_outputs(first, second):
    names = sorted(n for n in os.listdir(first)
                   if n.endswith(CHECKED_SUFFIXES))
    if names != sorted(n for n in os.listdir(second)
                       if n.endswith(CHECKED_SUFFIXES)):
        return False
    match, mismatch, errors = filecmp.cmpfiles(first, second, names,
                                               shallow=False)
    return not mismatch and not errors


def do_test(id):
    base = os.path.join(tmpdir, f'{id:06d}')
    config_name = base + '.cfg'
    outs = [f'{base}.{kind}' for kind in ('serial', 'rerun', 'parallel')]

    random_config(config_name)
    ladder = ','.join(str(N) for N in sorted(random.sample(
        range(MIN_N, MAX_N + 1), random.randint(1, 2))))
    replicas = random.randint(2, MAX_REPLICAS)

    statuses = [
        run_softann(config_name, outs[0], ladder, replicas, 1),
        run_softann(config_name, outs[1], ladder, replicas, 1),
        run_softann(config_name, outs[2], ladder, replicas,
                    random.randint(2, 4))]
    # 1 only flags a failed statistical check
    success = all(status in (0, 1) for status in statuses) \
        and same_outputs(outs[0], outs[1]) and same_outputs(outs[0], outs[2])

    if args.outdir:
        move_to = 'passed' if success else 'failed'
        for name in [config_name] + outs:
            if os.path.exists(name):
                os.rename(name,
                          os.path.join(tmpdir, move_to, os.path.basename(name)))
    return success


print('\rRunning...\033[K', end='')

num_failed = 0
num_tests = 0
while True:
    if not do_test(num_tests):
        num_failed += 1
    num_tests += 1
    print(f'\rFailed tests: {num_failed}/{num_tests}\033[K', end='')
