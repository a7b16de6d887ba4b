#!/usr/bin/env python3
'''CSV report writing and reading.

Every CSV starts with the schema comment line. Floats are written with
``repr`` so that reruns with the same seed are byte-identical.
'''
import csv
import numbers
from collections import namedtuple
from pathlib import Path

SCHEMA_VERSION = 1
SCHEMA_LINE = f'# schema={SCHEMA_VERSION}'

REPORT_HEADER = ('quantity', 'N', 't', 'bin_x', 'bin_y', 'value', 'stderr',
                 'target', 'zscore')

SNAPSHOT_HEADER = ('replica', 't', 'particle_index', 'x')

REPLICA_HEADER = ('replica', 'quantity', 't', 'value')


class ReportRow(namedtuple('ReportRow', REPORT_HEADER)):
    '''Single line of a study report. Unused fields stay empty.'''

    def __new__(cls, quantity, value, N=None, t=None, bin_x=None, bin_y=None,
                stderr=None, target=None, zscore=None):
        return super().__new__(cls, quantity, N, t, bin_x, bin_y, value,
                               stderr, target, zscore)


def format_value(value):
    if value is None:
        return ''
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    '''Writes ``rows`` under ``header`` after the schema line.

    Parameters
    ----------
    path: str or Path
        Output file
    header: sequence of str
        Column names
    rows: iterable of sequences
        Row values, formatted with ``format_value``
    '''
    with open(path, 'w', newline='') as output:
        output.write(SCHEMA_LINE + '\n')
        writer = csv.writer(output, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            assert len(row) == len(header), \
                f'len(row) = {len(row)}; header = {header}'
            writer.writerow([format_value(v) for v in row])


def process_csv_data(inputfile):
    '''Reads a report CSV back.

    Returns
    -------
    tuple: (header, rows), rows as lists of strings; comment lines skipped
    '''
    with open(inputfile, 'r', newline='') as f:
        reader = csv.reader(line for line in f if not line.startswith('#'))
        rows = list(reader)
    if not rows:
        return (), []
    return tuple(rows[0]), rows[1:]


def write_manifest(path, entries: dict):
    '''Writes a plain ``key=value`` manifest, one entry per line.'''
    with open(path, 'w') as output:
        for key, value in entries.items():
            output.write(f'{key}={format_value(value)}\n')


def read_manifest(path):
    entries = {}
    for line in Path(path).read_text().splitlines():
        if '=' in line:
            key, value = line.split('=', 1)
            entries[key.strip()] = value.strip()
    return entries
