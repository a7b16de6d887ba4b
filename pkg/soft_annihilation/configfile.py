#!/usr/bin/env python3
'''Flat ``key = value`` experiment configuration files.'''
from .errors import DomainError
from .kernel import GridFunction, KernelParams
from .particles import SimConfig


class ConfigEntry(object):
    '''Single ``key = value`` line of a configuration file'''

    def __init__(self, key, value, line_number):
        self.key = key.strip()
        self.value = value.strip()
        self.line_number = int(line_number)

    def as_floats(self):
        '''Comma-separated floats, e.g. "0, 0.5, 1".'''
        return [float(v) for v in self.value.split(',') if v.strip()]

    def as_bool(self):
        lowered = self.value.lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise DomainError(f'line {self.line_number}: {self.key} expects a '
                          f'boolean, got {self.value!r}')

    def __repr__(self):
        args = [f'{k}={repr(v)}' for k, v in self.__dict__.items()]
        return f'{__class__.__name__}({", ".join(args)})'


class ConfigFile(dict):
    '''key -> ConfigEntry mapping; the later of repeated keys wins'''

    KEYS = ('N', 'u0', 'u0_resolution', 'T', 'dt', 'cutoff_radius', 'seed',
            'record_times', 'annihilation', 'image_terms', 'spectral_terms',
            'crossover_time')

    def parse(self, file_name):
        with open(file_name, 'r') as f:
            for number, line in enumerate(f, 1):
                line = line.split('#', 1)[0].strip()
                if not line:
                    continue
                if '=' not in line:
                    raise DomainError(
                        f'{file_name}:{number}: expected key = value, '
                        f'got {line!r}')
                key, value = line.split('=', 1)
                entry = ConfigEntry(key, value, number)
                if entry.key not in self.KEYS:
                    raise DomainError(
                        f'{file_name}:{number}: unknown key {entry.key!r}')
                self[entry.key] = entry
        return self

    def update_values(self, **overrides):
        '''Overrides entries with the given non-None values.'''
        for key, value in overrides.items():
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ', '.join(str(v) for v in value)
            self[key] = ConfigEntry(key, str(value), 0)

    def _get(self, key, convert, default):
        entry = self.get(key)
        if entry is None:
            return default
        try:
            return convert(entry)
        except ValueError as error:
            raise DomainError(f'line {entry.line_number}: bad value for '
                              f'{key}: {entry.value!r}') from error

    def kernel_params(self):
        defaults = KernelParams()
        return KernelParams(
            image_terms=self._get('image_terms', lambda e: int(e.value),
                                  defaults.image_terms),
            spectral_terms=self._get('spectral_terms', lambda e: int(e.value),
                                     defaults.spectral_terms),
            crossover_time=self._get('crossover_time', lambda e: float(e.value),
                                     defaults.crossover_time))

    def initial_density(self, resolution: int = None):
        '''u0 as a cosine profile a0 + a1 cos(pi x) + ...; default u0 = 1.'''
        if resolution is None:
            resolution = self._get('u0_resolution', lambda e: int(e.value), 401)
        coefficients = self._get('u0', ConfigEntry.as_floats, [1.0])
        if not coefficients:
            raise DomainError('u0 needs at least one coefficient')
        return GridFunction.cosine_profile(coefficients, resolution)

    def sim_config(self, N: int = None):
        '''Builds a SimConfig; ``N`` overrides the file value.'''
        if N is None:
            N = self._get('N', lambda e: int(e.value), None)
        if N is None:
            raise DomainError('N is neither configured nor given')
        T = self._get('T', lambda e: float(e.value), 1.0)
        return SimConfig(
            N=N,
            u0=self.initial_density(),
            T=T,
            dt=self._get('dt', lambda e: float(e.value), None),
            cutoff_radius=self._get('cutoff_radius', lambda e: float(e.value),
                                    None),
            seed=self._get('seed', lambda e: int(e.value), 0),
            record_times=self._get('record_times', ConfigEntry.as_floats, None),
            annihilation=self._get('annihilation', ConfigEntry.as_bool, True),
            kernel=self.kernel_params())
