import numpy as np

from .errors import DomainError


class ReplicaStreams(object):
    '''Counter-based random streams for a single replica.

    Every stream is a Philox generator sharing the replica key and started at
    counter (0, 0, step, substream). Philox only advances the lowest counter
    word while drawing, so streams with different (step, substream) never
    overlap and any step of any replica can be regenerated on its own.

    Parameters
    ----------
    seed: int
        The experiment seed (64-bit)
    replica: int
        Index of the replica
    '''

    INITIAL = 0
    DYNAMICS = 1
    AUXILIARY = 2

    def __init__(self, seed: int, replica: int = 0):
        if seed < 0 or replica < 0:
            raise DomainError(f'seed and replica must be nonnegative, '
                              f'got {seed} and {replica}')
        self.seed = seed
        self.replica = replica
        self.key = np.random.SeedSequence(
            [seed, replica]).generate_state(2, np.uint64)

    def generator(self, step: int, substream: int = DYNAMICS):
        counter = np.array([0, 0, step, substream], dtype=np.uint64)
        return np.random.Generator(
            np.random.Philox(key=self.key, counter=counter))

    def initial(self):
        return self.generator(0, self.INITIAL)

    def auxiliary(self, index: int = 0):
        return self.generator(index, self.AUXILIARY)

    def __repr__(self):
        return f'{__class__.__name__}(seed={self.seed}, replica={self.replica})'
