'''Transition density of reflected Brownian motion on [0, 1].

The generator is one half of the Laplacian with Neumann boundary conditions,
so the Gaussian images have variance ``t`` and the cosine modes decay as
``exp(-n**2 * pi**2 * t / 2)``. Short times are evaluated with the method of
images, long times with the cosine series; ``KernelParams.crossover_time``
picks the method.
'''
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import ndtr

from .errors import DomainError

logger = logging.getLogger(__name__)

# Series terms whose exponent exceeds this are below double precision.
NEGLIGIBLE_EXPONENT = 40.0

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelParams:
    '''Configuration of the heat kernel evaluator.

    :param image_terms: truncation |n| <= image_terms of the image sum
    :param spectral_terms: number of cosine modes of the spectral series
    :param crossover_time: times below use images, times above the series
    '''
    image_terms: int = 8
    spectral_terms: int = 400
    crossover_time: float = 0.1

    def __post_init__(self):
        if int(self.image_terms) < 1:
            raise DomainError(f'image_terms must be >= 1, got {self.image_terms}')
        if int(self.spectral_terms) < 1:
            raise DomainError(
                f'spectral_terms must be >= 1, got {self.spectral_terms}')
        if not self.crossover_time > 0:
            raise DomainError(
                f'crossover_time must be positive, got {self.crossover_time}')


DEFAULT_PARAMS = KernelParams()


class GridFunction(object):
    '''A real function sampled on the uniform grid of [0, 1] (or [0, 1]^2)
    that includes both endpoints.

    The values are stored read-only; every operation returns a new object.
    '''

    def __init__(self, values):
        values = np.array(values, dtype=float)
        if values.ndim not in (1, 2):
            raise DomainError(f'grid functions have dim 1 or 2, got {values.ndim}')
        if values.ndim == 2 and values.shape[0] != values.shape[1]:
            raise DomainError(f'2d grid must be square, got {values.shape}')
        if values.shape[0] < 2:
            raise DomainError('resolution must be at least 2')
        if not np.all(np.isfinite(values)):
            raise DomainError('grid function values must be finite')
        values.flags.writeable = False
        self.values = values

    @classmethod
    def constant(cls, value: float, resolution: int = 401, dim: int = 1):
        return cls(np.full((resolution,) * dim, float(value)))

    @classmethod
    def from_callable(cls, func, resolution: int = 401, dim: int = 1):
        '''Samples ``func`` on the grid. For dim 2 the function receives two
        broadcastable coordinate arrays.'''
        nodes = grid_nodes(resolution)
        if dim == 1:
            return cls(np.broadcast_to(func(nodes), nodes.shape))
        x1, x2 = np.meshgrid(nodes, nodes, indexing='ij')
        return cls(np.broadcast_to(func(x1, x2), x1.shape))

    @classmethod
    def cosine_profile(cls, coefficients, resolution: int = 401):
        '''a0 + a1 cos(pi x) + a2 cos(2 pi x) + ... on the grid.'''
        nodes = grid_nodes(resolution)
        values = np.zeros(resolution)
        for n, a in enumerate(coefficients):
            values += float(a) * np.cos(n * np.pi * nodes)
        return cls(values)

    @property
    def dim(self):
        return self.values.ndim

    @property
    def resolution(self):
        return self.values.shape[0]

    @property
    def nodes(self):
        return grid_nodes(self.resolution)

    @property
    def spacing(self):
        return 1.0 / (self.resolution - 1)

    def __call__(self, x):
        '''Linear interpolation of a 1d grid function.'''
        if self.dim != 1:
            raise DomainError('point evaluation is only defined for dim 1')
        return np.interp(x, self.nodes, self.values)

    def integral(self):
        '''Composite trapezoid rule over [0, 1]^dim.'''
        total = self.values
        for _ in range(self.dim):
            total = trapezoid(total, dx=self.spacing, axis=-1)
        return float(total)

    def bin_averages(self, bins: int):
        '''Averages of the piecewise-linear interpolant over ``bins`` equal
        cells of [0, 1].'''
        if self.dim != 1:
            raise DomainError('bin averages are only defined for dim 1')
        cumulative = cumulative_trapezoid(self.values, self.nodes, initial=0.0)
        edges = np.linspace(0.0, 1.0, bins + 1)
        return np.diff(np.interp(edges, self.nodes, cumulative)) * bins

    def is_nonnegative(self):
        return bool(np.all(self.values >= 0))

    def __repr__(self):
        return (f'{__class__.__name__}(dim={self.dim}, '
                f'resolution={self.resolution})')


@lru_cache(maxsize=32)
def grid_nodes(resolution: int):
    nodes = np.linspace(0.0, 1.0, resolution)
    nodes.flags.writeable = False
    return nodes


@lru_cache(maxsize=32)
def trapezoid_weights(resolution: int):
    weights = np.full(resolution, 1.0 / (resolution - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    weights.flags.writeable = False
    return weights


def reflect(x):
    '''Folds the real line onto [0, 1] by the period-2 triangle wave.

    ``reflect(x0 + sqrt(t) * xi)`` with standard normal ``xi`` is distributed
    as reflected Brownian motion started at x0 and observed at time t.
    '''
    y = np.mod(x, 2.0)
    return np.where(y > 1.0, 2.0 - y, y)


def _image_count(t: float, terms: int):
    # |x + y - 2n| >= 2(n - 1) for x, y in [0, 1]
    needed = int(np.floor(1.0 + np.sqrt(2.0 * NEGLIGIBLE_EXPONENT * t) / 2.0))
    return min(int(terms), needed)


def _cosine_count(t: float, terms: int):
    needed = int(np.ceil(np.sqrt(2.0 * NEGLIGIBLE_EXPONENT / (np.pi ** 2 * t))))
    return max(1, min(int(terms), needed))


def image_sum(t: float, x, y, terms: int = DEFAULT_PARAMS.image_terms):
    '''Method of images, sum over |n| <= terms of
    phi_t(x - y - 2n) + phi_t(x + y - 2n).

    Images n and -n are added pairwise, which keeps the result exactly
    symmetric in (x, y).
    '''
    d = np.subtract(x, y, dtype=float)
    s = np.add(x, y, dtype=float)
    two_t = 2.0 * t
    total = np.exp(-d ** 2 / two_t) + np.exp(-s ** 2 / two_t)
    for n in range(1, _image_count(t, terms) + 1):
        shift = 2.0 * n
        total = total + (np.exp(-(d - shift) ** 2 / two_t)
                         + np.exp(-(d + shift) ** 2 / two_t))
        total = total + (np.exp(-(s - shift) ** 2 / two_t)
                         + np.exp(-(s + shift) ** 2 / two_t))
    return total / np.sqrt(two_t * np.pi)


def cosine_series(t: float, x, y, terms: int = DEFAULT_PARAMS.spectral_terms):
    '''Spectral expansion 1 + 2 sum_n exp(-n^2 pi^2 t / 2) cos(n pi x) cos(n pi y).'''
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total = np.ones(np.broadcast(x, y).shape)
    for n in range(1, _cosine_count(t, terms) + 1):
        decay = 2.0 * np.exp(-0.5 * (n * np.pi) ** 2 * t)
        total = total + decay * (np.cos(n * np.pi * x) * np.cos(n * np.pi * y))
    return total


def _check_points(*points):
    for p in points:
        p = np.asarray(p, dtype=float)
        if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
            raise DomainError('kernel arguments must lie in [0, 1]')


def eval_kernel(t: float, x, y, params: KernelParams = DEFAULT_PARAMS):
    '''Transition density p(t, x, y) of reflected Brownian motion on [0, 1].

    Parameters
    ----------
    t: float
        Positive time
    x, y: float or array_like
        Points of [0, 1], broadcast against each other
    params: KernelParams
        Truncations and the method crossover time

    Returns
    -------
    float or numpy.ndarray: the density, scalar when x and y are scalars
    '''
    if not t > 0:
        raise DomainError(f'kernel time must be positive, got {t}')
    _check_points(x, y)
    if t < params.crossover_time:
        value = image_sum(t, x, y, params.image_terms)
    else:
        value = cosine_series(t, x, y, params.spectral_terms)
    if np.ndim(value) == 0:
        return float(value)
    return value


@lru_cache(maxsize=64)
def kernel_matrix(t: float, resolution: int,
                  params: KernelParams = DEFAULT_PARAMS):
    '''Matrix W with (W @ f)[i] the trapezoid rule for int p(t, x_i, y) f(y) dy.'''
    nodes = grid_nodes(resolution)
    matrix = eval_kernel(t, nodes[:, None], nodes[None, :], params)
    matrix = matrix * trapezoid_weights(resolution)[None, :]
    matrix.flags.writeable = False
    logger.debug('built %dx%d kernel matrix for t=%g', resolution, resolution, t)
    return matrix


def apply_semigroup(t: float, f: GridFunction,
                    params: KernelParams = DEFAULT_PARAMS):
    '''Grid sampling of P_t f by composite trapezoid quadrature.

    Dim-2 inputs get the tensor kernel p(t, x1, y1) p(t, x2, y2).
    '''
    if t < 0:
        raise DomainError(f'semigroup time must be nonnegative, got {t}')
    if t == 0:
        return GridFunction(f.values)
    matrix = kernel_matrix(float(t), f.resolution, params)
    if f.dim == 1:
        return GridFunction(matrix @ f.values)
    return GridFunction(matrix @ f.values @ matrix.T)


def _std_pdf(z):
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def _gaussian_cell_moments(a, b, c, sigma):
    '''Integrals over [a, b] of g and of (z - c) g, where g is the
    N(c, sigma^2) density.'''
    za = (a - c) / sigma
    zb = (b - c) / sigma
    mass = np.where(za > 0, ndtr(-za) - ndtr(-zb), ndtr(zb) - ndtr(za))
    first = sigma * (_std_pdf(za) - _std_pdf(zb))
    return mass, first


@lru_cache(maxsize=16)
def hat_kernel_matrix(t: float, resolution: int,
                      params: KernelParams = DEFAULT_PARAMS):
    '''Matrix W with (W @ f)[i] = int p(t, x_i, z) f_h(z) dz exactly, where
    f_h is the piecewise-linear interpolant of the grid values.

    Meant for kernels narrower than the grid spacing, such as p(2/N^2).
    Always evaluated with the image sum.
    '''
    if not t > 0:
        raise DomainError(f'kernel time must be positive, got {t}')
    nodes = grid_nodes(resolution)
    h = 1.0 / (resolution - 1)
    sigma = np.sqrt(t)
    a = nodes[None, :-1]
    b = nodes[None, 1:]
    x = nodes[:, None]
    matrix = np.zeros((resolution, resolution))
    count = _image_count(t, params.image_terms)
    for n in range(-count, count + 1):
        for c in (x - 2.0 * n, 2.0 * n - x):
            mass, first = _gaussian_cell_moments(a, b, c, sigma)
            matrix[:, :-1] += ((b - c) * mass - first) / h
            matrix[:, 1:] += (first + (c - a) * mass) / h
    matrix.flags.writeable = False
    return matrix


def _second_antiderivative(w, sigma):
    # w Phi(w / sigma) + sigma^2 phi_sigma(w), split as max(w, 0) plus a tail
    aw = np.abs(w)
    return (np.maximum(w, 0.0) - aw * ndtr(-aw / sigma)
            + sigma * _std_pdf(aw / sigma))


def _box_integral(a1, a2, b1, b2, shift, sigma):
    '''int_{a1}^{a2} int_{b1}^{b2} phi_sigma(x - y - shift) dy dx'''
    g = _second_antiderivative
    return (g(a2 - b1 - shift, sigma) - g(a1 - b1 - shift, sigma)
            - g(a2 - b2 - shift, sigma) + g(a1 - b2 - shift, sigma))


def _cell_sines(n, lo, hi):
    k = n * np.pi
    return (np.sin(k * hi) - np.sin(k * lo)) / k


def cell_transition_matrix(t: float, bins: int,
                           params: KernelParams = DEFAULT_PARAMS):
    '''Bin-averaged kernel M[a, b] = (1/h) int_{A} int_{B} p(t, x, y) dy dx
    over ``bins`` equal cells.

    For a piecewise-constant density with cell values f, ``M @ f`` is the
    vector of cell averages of P_t f. Rows sum to one.
    '''
    if t < 0:
        raise DomainError(f'semigroup time must be nonnegative, got {t}')
    if t == 0:
        return np.eye(bins)
    edges = np.linspace(0.0, 1.0, bins + 1)
    lo, hi = edges[:-1], edges[1:]
    h = 1.0 / bins
    if t < params.crossover_time:
        sigma = np.sqrt(t)
        a1, a2 = lo[:, None], hi[:, None]
        b1, b2 = lo[None, :], hi[None, :]
        total = np.zeros((bins, bins))
        count = _image_count(t, params.image_terms)
        for n in range(-count, count + 1):
            total += _box_integral(a1, a2, b1, b2, 2.0 * n, sigma)
            total += _box_integral(a1, a2, -b2, -b1, 2.0 * n, sigma)
        return total / h
    total = np.full((bins, bins), h * h)
    for n in range(1, _cosine_count(t, params.spectral_terms) + 1):
        s = _cell_sines(n, lo, hi)
        total += 2.0 * np.exp(-0.5 * (n * np.pi) ** 2 * t) * np.outer(s, s)
    return total / h


def cell_probabilities(t: float, x: float, bins: int,
                       params: KernelParams = DEFAULT_PARAMS):
    '''Probabilities that the RBM started at x lies in each of ``bins`` equal
    cells at time t.'''
    if not t > 0:
        raise DomainError(f'kernel time must be positive, got {t}')
    _check_points(x)
    edges = np.linspace(0.0, 1.0, bins + 1)
    lo, hi = edges[:-1], edges[1:]
    if t < params.crossover_time:
        sigma = np.sqrt(t)
        total = np.zeros(bins)
        count = _image_count(t, params.image_terms)
        for n in range(-count, count + 1):
            shift = 2.0 * n
            total += ndtr((x - lo - shift) / sigma) - ndtr((x - hi - shift) / sigma)
            total += ndtr((x + hi - shift) / sigma) - ndtr((x + lo - shift) / sigma)
        return total
    total = np.full(bins, 1.0 / bins)
    for n in range(1, _cosine_count(t, params.spectral_terms) + 1):
        total += (2.0 * np.exp(-0.5 * (n * np.pi) ** 2 * t)
                  * np.cos(n * np.pi * x) * _cell_sines(n, lo, hi))
    return total
