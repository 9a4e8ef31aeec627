"""
Torus lattice for the dissipative sandpile

Geometria do toro de período ímpar 2L+1, indexação de sítios e a matriz
de toppling Δ_L como operador (com espectro exato via Fourier).

Sites are addressed by coordinate tuples with entries in [-L, L]. The flat
index is row-major over (x_1 + L, ..., x_d + L): the first coordinate is the
most significant digit.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from src.Modules.errors import InputError, SizeGuardError

logger = logging.getLogger(__name__)

DENSE_SITE_LIMIT = 10_000

Coords = Tuple[int, ...]
SiteLike = Union[int, Sequence[int]]


@dataclass(frozen=True)
class ModelParams:
    """Model parameters (d, L, n, m) with exact derived quantities."""
    d: int
    L: int
    n: int = 1
    m: int = 1

    def __post_init__(self):
        for name in ('d', 'L', 'n', 'm'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InputError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.d < 2:
            raise InputError(f"dimension d must be >= 2, got {self.d}")
        if self.L < 1:
            raise InputError(f"half-width L must be >= 1 (odd period >= 3), got {self.L}")
        if self.n < 1:
            raise InputError(f"granularity n must be >= 1, got {self.n}")
        if self.m < 1:
            raise InputError(f"dissipation m must be >= 1, got {self.m}")

    @property
    def a(self) -> Fraction:
        return Fraction(self.m, 2 * self.d * self.n)

    @property
    def h_c(self) -> Fraction:
        return 2 * self.d * (1 + self.a)

    @property
    def threshold(self) -> int:
        """Toppling threshold in grains (units of 1/n)."""
        return 2 * self.d * self.n + self.m

    @property
    def period(self) -> int:
        return 2 * self.L + 1

    @property
    def sites(self) -> int:
        return self.period ** self.d

    def as_dict(self) -> dict:
        return {
            'd': self.d, 'L': self.L, 'n': self.n, 'm': self.m,
            'a': float(self.a), 'h_c': float(self.h_c),
            'threshold': self.threshold, 'sites': self.sites,
        }


class TorusLattice:
    """Index arithmetic and neighbour tables for one ModelParams."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.d = params.d
        self.L = params.L
        self.N = params.period
        self.sites = params.sites
        self._strides = tuple(self.N ** (self.d - 1 - i) for i in range(self.d))
        self.neighbor_table = self._build_neighbor_table()
        # listas Python para os laços quentes da dinâmica
        self.neighbor_lists: List[Tuple[int, ...]] = [tuple(row) for row in self.neighbor_table.tolist()]

    def _build_neighbor_table(self) -> np.ndarray:
        idx = np.arange(self.sites)
        digits = np.stack([(idx // s) % self.N for s in self._strides], axis=1)
        table = np.empty((self.sites, 2 * self.d), dtype=np.int64)
        for sign_block, sign in enumerate((1, -1)):
            for i in range(self.d):
                shifted = digits.copy()
                shifted[:, i] = (shifted[:, i] + sign) % self.N
                table[:, sign_block * self.d + i] = shifted @ np.array(self._strides)
        return table

    def index(self, coords: Sequence[int]) -> int:
        if len(coords) != self.d:
            raise InputError(f"expected {self.d} coordinates, got {len(coords)}")
        flat = 0
        for c, stride in zip(coords, self._strides):
            c = int(c)
            if not -self.L <= c <= self.L:
                raise InputError(f"coordinate {c} outside [-{self.L}, {self.L}]")
            flat += (c + self.L) * stride
        return flat

    def coords(self, index: int) -> Coords:
        if not 0 <= index < self.sites:
            raise InputError(f"flat index {index} outside [0, {self.sites})")
        return tuple(int((index // s) % self.N) - self.L for s in self._strides)

    def resolve(self, site: SiteLike) -> int:
        """Accept either a flat index or a coordinate tuple."""
        if isinstance(site, (int, np.integer)):
            if not 0 <= int(site) < self.sites:
                raise InputError(f"flat index {site} outside [0, {self.sites})")
            return int(site)
        return self.index(site)

    def min_image(self, displacement: Sequence[int]) -> Coords:
        """Reduce a displacement to its unique representative in [-L, L]^d."""
        return tuple(((int(c) + self.L) % self.N) - self.L for c in displacement)

    def translate(self, index: int, displacement: Sequence[int]) -> int:
        base = self.coords(index)
        return self.index(self.min_image([b + s for b, s in zip(base, displacement)]))

    def graph(self) -> nx.Graph:
        """Simple torus graph; nodes are flat indices with a `coords` attribute."""
        g = nx.Graph()
        for i in range(self.sites):
            g.add_node(i, coords=self.coords(i))
        for i, row in enumerate(self.neighbor_lists):
            for j in row:
                g.add_edge(i, j)
        return g


@lru_cache(maxsize=64)
def get_lattice(params: ModelParams) -> TorusLattice:
    return TorusLattice(params)


def neighbors(x: SiteLike, p: ModelParams) -> List[Coords]:
    """The 2d neighbours of x in the order +e_1..+e_d, -e_1..-e_d."""
    lattice = get_lattice(p)
    flat = lattice.resolve(x)
    return [lattice.coords(j) for j in lattice.neighbor_lists[flat]]


def delta_apply(f, p: ModelParams, exact: bool = False) -> np.ndarray:
    """Apply Δ_L: g(z) = h_c f(z) - sum of f over the 2d neighbours of z.

    With exact=True the vector is treated as an object array and h_c is kept
    as a Fraction, so rational inputs give rational outputs.
    """
    lattice = get_lattice(p)
    if exact:
        vec = np.asarray(f, dtype=object)
        h_c = p.h_c
    else:
        vec = np.asarray(f, dtype=float)
        h_c = float(p.h_c)
    if vec.shape != (p.sites,):
        raise InputError(f"vector length {vec.shape} does not match {p.sites} sites")
    out = vec * h_c
    for k in range(2 * p.d):
        out = out - vec[lattice.neighbor_table[:, k]]
    return out


def mode_eigenvalue(k: Sequence[int], p: ModelParams) -> float:
    if len(k) != p.d:
        raise InputError(f"mode vector must have {p.d} entries")
    a = float(p.a)
    mean_cos = sum(math.cos(2.0 * math.pi * ki / p.period) for ki in k) / p.d
    return 2 * p.d * ((1.0 + a) - mean_cos)


def _cos_sum_grid(N: int, dims: int) -> np.ndarray:
    cos1d = np.cos(2.0 * np.pi * np.arange(N) / N)
    total = np.zeros((N,) * dims)
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = N
        total = total + cos1d.reshape(shape)
    return total


def mode_eigenvalue_grid(p: ModelParams) -> np.ndarray:
    """All eigenvalues as an array of shape (2L+1,)*d in FFT ordering (k mod N)."""
    return 2.0 * p.d * (1.0 + float(p.a)) - 2.0 * _cos_sum_grid(p.period, p.d)


def log_det_delta(p: ModelParams) -> float:
    """log det Δ_L as the sum of log eigenvalues over all modes."""
    N = p.period
    if N ** p.d <= 4_000_000:
        return float(np.sum(np.log(mode_eigenvalue_grid(p))))
    # first axis handled in a loop to bound memory
    h_c = 2.0 * p.d * (1.0 + float(p.a))
    rest = _cos_sum_grid(N, p.d - 1)
    total = 0.0
    for c in np.cos(2.0 * np.pi * np.arange(N) / N):
        total += float(np.sum(np.log(h_c - 2.0 * c - 2.0 * rest)))
    return total


def delta_dense(p: ModelParams) -> np.ndarray:
    """Dense Δ_L assembled from the torus graph Laplacian (verification only)."""
    if p.sites > DENSE_SITE_LIMIT:
        raise SizeGuardError(f"dense Δ_L refused for {p.sites} sites", p.sites, DENSE_SITE_LIMIT)
    g = get_lattice(p).graph()
    lap = nx.laplacian_matrix(g, nodelist=range(p.sites)).toarray().astype(float)
    return lap + 2.0 * p.d * float(p.a) * np.eye(p.sites)
