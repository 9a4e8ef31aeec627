"""
Recurrence tests for the dissipative sandpile

Subconfigurações proibidas (FSC), algoritmo de queima (burning), enumeração
por força bruta e contagem pelo teorema matriz-árvore.

The burning multigraph G_L has every torus edge with multiplicity n and m
edges from each site to an extra root vertex. Candidate edges for the
spanning-tree rule are ordered +e_1..+e_d, -e_1..-e_d (copies 0..n-1 each),
then the m root edges.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Set, Tuple

import networkx as nx
import numpy as np
from tqdm import tqdm

from src.Modules.errors import BurningRuleError, SizeGuardError
from src.Modules.Lattice.torus import ModelParams, get_lattice, log_det_delta
from src.Modules.Simulation.engine import GrainConfig

logger = logging.getLogger(__name__)

ROOT = "root"
FSC_SITE_LIMIT = 16
ENUMERATION_LIMIT = 10_000_000


class TreeEdge(NamedTuple):
    """Edge e(y) of G_L: `direction` indexes the neighbour table, None is the root."""
    site: int
    direction: Optional[int]
    copy: int


@dataclass
class BurnResult:
    allowed: bool
    burn_order: List[Tuple[int, int]]
    tree_edges: List[TreeEdge]
    unburnt: Set[int]
    params: ModelParams = field(repr=False, default=None)

    def tree_graph(self) -> nx.MultiGraph:
        """The chosen edges as a multigraph on sites plus the root."""
        lattice = get_lattice(self.params)
        g = nx.MultiGraph()
        g.add_node(ROOT)
        g.add_nodes_from(range(self.params.sites))
        for edge in self.tree_edges:
            if edge.direction is None:
                g.add_edge(edge.site, ROOT, key=('root', edge.copy))
            else:
                target = lattice.neighbor_lists[edge.site][edge.direction]
                g.add_edge(edge.site, target, key=(edge.site, edge.direction, edge.copy))
        return g

    def is_spanning_tree(self) -> bool:
        g = self.tree_graph()
        return g.number_of_edges() == g.number_of_nodes() - 1 and nx.is_connected(g)


# --- forbidden subconfigurations -------------------------------------------

@lru_cache(maxsize=16)
def _subset_tables(params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Membership matrix (masks x sites) and F-neighbour counts for every nonempty F."""
    sites = params.sites
    masks = np.arange(1, 2 ** sites, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(sites)[None, :]) & 1).astype(bool)
    adjacency = np.zeros((sites, sites), dtype=np.int64)
    for y, row in enumerate(get_lattice(params).neighbor_lists):
        for x in row:
            adjacency[y, x] += 1
    f_neighbors = member.astype(np.int64) @ adjacency.T
    return member, f_neighbors


def _check_fsc_size(params: ModelParams):
    if params.sites > FSC_SITE_LIMIT:
        raise SizeGuardError(
            f"subset FSC search refused for {params.sites} sites (limit {FSC_SITE_LIMIT}); use burning_allowed",
            params.sites, FSC_SITE_LIMIT)


def fsc_exhaustive(h: GrainConfig) -> bool:
    """True iff some nonempty F has H(y) < n * #(F-neighbours of y) for all y in F."""
    p = h.params
    _check_fsc_size(p)
    member, f_neighbors = _subset_tables(p)
    violated = h.H[None, :] < p.n * f_neighbors
    return bool(np.any(np.all(violated | ~member, axis=1)))


def fsc_exhaustive_batch(H: np.ndarray, params: ModelParams) -> np.ndarray:
    """Vectorized FSC search over a batch of configurations (rows of H)."""
    _check_fsc_size(params)
    member, f_neighbors = _subset_tables(params)
    H = np.asarray(H, dtype=np.int64)
    found = np.zeros(H.shape[0], dtype=bool)
    for mask_row, counts in zip(member, f_neighbors):
        sites = np.flatnonzero(mask_row)
        bound = params.n * counts[sites]
        found |= np.all(H[:, sites] < bound, axis=1)
    return found


# --- burning -----------------------------------------------------------------

def burning_allowed(h: GrainConfig) -> BurnResult:
    """Greedy burning; when every site burns, also build the spanning tree."""
    p = h.params
    lattice = get_lattice(p)
    nbrs = lattice.neighbor_lists
    H = h.H.tolist()
    n, m = p.n, p.m
    degree = 2 * p.d

    unburnt_nbrs = [degree] * p.sites
    burn_time: Dict[int, int] = {}
    unburnt = set(range(p.sites))
    burn_order: List[Tuple[int, int]] = []
    tree_edges: List[TreeEdge] = []
    t = 0

    while unburnt:
        layer = sorted(y for y in unburnt if H[y] >= n * unburnt_nbrs[y])
        if not layer:
            break
        t += 1
        for y in layer:
            s = H[y] - n * unburnt_nbrs[y]
            if t == 1:
                candidates = [TreeEdge(y, None, c) for c in range(m)]
            else:
                candidates = [TreeEdge(y, k, c)
                              for k, w in enumerate(nbrs[y]) if burn_time.get(w) == t - 1
                              for c in range(n)]
            if s + 1 > len(candidates):
                raise BurningRuleError(
                    f"site {y} at round {t}: s={s} but only {len(candidates)} candidate edges")
            tree_edges.append(candidates[s])
        for y in layer:
            burn_time[y] = t
            burn_order.append((y, t))
            unburnt.discard(y)
            for w in nbrs[y]:
                unburnt_nbrs[w] -= 1
        logger.debug("burn round %d: %d sites", t, len(layer))

    allowed = not unburnt
    return BurnResult(
        allowed=allowed,
        burn_order=burn_order,
        tree_edges=tree_edges if allowed else [],
        unburnt=unburnt,
        params=p,
    )


def burn_allowed_batch(H: np.ndarray, params: ModelParams) -> np.ndarray:
    """Vectorized greedy burning over rows of H; returns the allowed mask."""
    H = np.asarray(H, dtype=np.int64)
    table = get_lattice(params).neighbor_table
    burnt = np.zeros(H.shape, dtype=bool)
    for _ in range(params.sites):
        unburnt_count = np.zeros(H.shape, dtype=np.int64)
        for k in range(table.shape[1]):
            unburnt_count += ~burnt[:, table[:, k]]
        newly = ~burnt & (H >= params.n * unburnt_count)
        if not newly.any():
            break
        burnt |= newly
    return burnt.all(axis=1)


# --- enumeration and counting -----------------------------------------------

def _decode_chunk(start: int, stop: int, params: ModelParams) -> np.ndarray:
    """Configurations with mixed-radix indices in [start, stop); site 0 is most significant."""
    idx = np.arange(start, stop, dtype=np.int64)
    thr = params.threshold
    H = np.empty((idx.size, params.sites), dtype=np.int64)
    for j in range(params.sites - 1, -1, -1):
        H[:, j] = idx % thr
        idx = idx // thr
    return H


def _count_range(args) -> int:
    params, start, stop, chunk = args
    total = 0
    for lo in range(start, stop, chunk):
        hi = min(lo + chunk, stop)
        total += int(burn_allowed_batch(_decode_chunk(lo, hi, params), params).sum())
    return total


def enumerate_allowed_count(p: ModelParams, chunk: int = 1 << 18,
                            size_guard: int = ENUMERATION_LIMIT,
                            workers: int = 1, progress: bool = False) -> int:
    """Count allowed configurations over all threshold^sites stable ones."""
    total_states = p.threshold ** p.sites
    if total_states > size_guard:
        raise SizeGuardError(
            f"brute-force enumeration of {total_states} states exceeds guard {size_guard}",
            total_states, size_guard)

    if workers > 1:
        bounds = np.linspace(0, total_states, workers + 1).astype(np.int64)
        tasks = [(p, int(lo), int(hi), chunk) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(_count_range, tasks))

    count = 0
    for lo in tqdm(range(0, total_states, chunk), disable=not progress, desc="enumerate"):
        count += _count_range((p, lo, min(lo + chunk, total_states), chunk))
    return count


def recurrent_log_count(p: ModelParams) -> float:
    """log |R_L| = sites * log n + log det Δ_L."""
    return p.sites * math.log(p.n) + log_det_delta(p)


def enumeration_report(p: ModelParams, **kwargs) -> dict:
    started = time.perf_counter()
    count = enumerate_allowed_count(p, **kwargs)
    elapsed = time.perf_counter() - started
    log_det = log_det_delta(p)
    logger.info("Enumerated %d allowed of %d states in %.2fs", count, p.threshold ** p.sites, elapsed)
    return {
        'params': p.as_dict(),
        'total_states': p.threshold ** p.sites,
        'allowed_count': count,
        'log_det': log_det,
        'expected_count': int(round(math.exp(recurrent_log_count(p)))),
        'elapsed_s': elapsed,
    }
