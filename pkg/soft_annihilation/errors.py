class SimulationError(Exception):
    '''Base class for errors raised by the soft_annihilation package.'''


class DomainError(SimulationError, ValueError):
    '''An argument lies outside the domain of the operation (negative time,
    point outside [0, 1], negative density, non-positive step, ...).'''


class UnsupportedError(SimulationError, NotImplementedError):
    '''The requested variant (e.g. correlation order k > 2) is not built.'''


class MissingDataError(SimulationError, LookupError):
    '''A quantity was requested at a time, or in a recording mode, that the
    ensemble does not hold.'''
