"""
Simulation engine for the dissipative abelian sandpile

Motor principal da cadeia de Markov: depósito de grãos, toppling,
avalanches, ondas (waves) e a álgebra dos operadores de avalanche.

Heights are stored as integer grain counts H = n·h, so every comparison
against the threshold 2dn + m is an exact integer comparison.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.Modules.errors import InputError, NotFound
from src.Modules.Lattice.torus import ModelParams, SiteLike, get_lattice

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DASM"
SNAPSHOT_VERSION = 1


class GrainConfig:
    """Per-site integer grain counts on the torus (flat-index order)."""

    def __init__(self, heights, params: ModelParams, check_stable: bool = True):
        H = np.array(heights, dtype=np.int64).reshape(-1)
        if H.shape != (params.sites,):
            raise InputError(f"expected {params.sites} grain counts, got {H.size}")
        if np.any(H < 0):
            raise InputError("grain counts must be non-negative")
        if check_stable and np.any(H >= params.threshold):
            raise InputError(f"configuration is not stable (threshold {params.threshold})")
        self.H = H
        self.params = params

    @classmethod
    def max_stable(cls, params: ModelParams) -> "GrainConfig":
        """h̄: every site at threshold - 1 (recurrent)."""
        return cls(np.full(params.sites, params.threshold - 1), params)

    @classmethod
    def zeros(cls, params: ModelParams) -> "GrainConfig":
        return cls(np.zeros(params.sites, dtype=np.int64), params)

    @classmethod
    def random(cls, params: ModelParams, rng: np.random.Generator) -> "GrainConfig":
        return cls(rng.integers(0, params.threshold, size=params.sites), params)

    @classmethod
    def from_coords(cls, params: ModelParams, values: Dict[Tuple[int, ...], int], fill: int = 0) -> "GrainConfig":
        lattice = get_lattice(params)
        H = np.full(params.sites, fill, dtype=np.int64)
        for coords, value in values.items():
            H[lattice.index(coords)] = value
        return cls(H, params)

    def copy(self) -> "GrainConfig":
        return GrainConfig(self.H.copy(), self.params, check_stable=False)

    def is_stable(self) -> bool:
        return bool(np.all(self.H < self.params.threshold))

    def total_grains(self) -> int:
        return int(self.H.sum())

    def at(self, site: SiteLike) -> int:
        return int(self.H[get_lattice(self.params).resolve(site)])

    def key(self) -> bytes:
        return self.H.astype('<i4').tobytes()

    def __eq__(self, other):
        if not isinstance(other, GrainConfig):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.H, other.H)

    def __hash__(self):
        return hash((self.params, self.key()))

    def __repr__(self):
        return f"GrainConfig(params={self.params}, total={self.total_grains()})"

    # --- snapshot ------------------------------------------------------
    def to_bytes(self) -> bytes:
        p = self.params
        header = SNAPSHOT_MAGIC + np.array([SNAPSHOT_VERSION], dtype='<u2').tobytes()
        header += np.array([p.d, p.L, p.n, p.m], dtype='<u4').tobytes()
        return header + self.H.astype('<i4').tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GrainConfig":
        if blob[:4] != SNAPSHOT_MAGIC:
            raise InputError("not a sandpile snapshot (bad magic)")
        version = int(np.frombuffer(blob[4:6], dtype='<u2')[0])
        if version != SNAPSHOT_VERSION:
            raise InputError(f"unsupported snapshot version {version}")
        d, L, n, m = (int(v) for v in np.frombuffer(blob[6:22], dtype='<u4'))
        params = ModelParams(d, L, n, m)
        H = np.frombuffer(blob[22:], dtype='<i4').astype(np.int64)
        return cls(H, params)

    def save(self, path: str):
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "GrainConfig":
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read())


@dataclass
class AvalancheRecord:
    """Outcome of one deposit: toppling counts T(x, ., h) and diagnostics."""
    seed: int
    topplings: np.ndarray
    waves: int
    dissipated: int
    total_topplings: int
    rounds: int = 1
    wave_sizes: Optional[List[int]] = None

    @property
    def toppled_sites(self) -> np.ndarray:
        return np.flatnonzero(self.topplings)


class SandpileEngine:
    """Mutable stabilizer used by the Markov chain hot loop.

    The state lives in a Python list; toppling counts are returned as sparse
    dictionaries so that a step with no toppling costs O(1).
    """

    def __init__(self, config: GrainConfig):
        self.params = config.params
        self.lattice = get_lattice(self.params)
        self.threshold = self.params.threshold
        self.n = self.params.n
        self.m = self.params.m
        self.heights: List[int] = config.H.tolist()
        self.steps = 0

    def snapshot(self) -> GrainConfig:
        return GrainConfig(np.array(self.heights, dtype=np.int64), self.params)

    def _relax(self, stack: List[int], counts: Dict[int, int], frozen: Optional[int] = None) -> int:
        """Topple until stable; `frozen` never topples (used for waves)."""
        H = self.heights
        nbrs = self.lattice.neighbor_lists
        thr = self.threshold
        n = self.n
        total = 0
        while stack:
            z = stack.pop()
            hz = H[z]
            if hz < thr or z == frozen:
                continue
            k = hz // thr
            H[z] = hz - k * thr
            counts[z] = counts.get(z, 0) + k
            total += k
            add = k * n
            for y in nbrs[z]:
                H[y] += add
                if H[y] >= thr:
                    stack.append(y)
        return total

    def deposit(self, x: int) -> Tuple[Dict[int, int], int]:
        """Add one grain at flat index x and stabilize (work-queue order)."""
        self.steps += 1
        self.heights[x] += 1
        counts: Dict[int, int] = {}
        total = 0
        if self.heights[x] >= self.threshold:
            total = self._relax([x], counts)
        return counts, total

    def deposit_rounds(self, x: int) -> Tuple[Dict[int, int], int, int]:
        """Parallel-round stabilization; returns (counts, total, rounds τ)."""
        self.steps += 1
        H = self.heights
        nbrs = self.lattice.neighbor_lists
        thr = self.threshold
        n = self.n
        H[x] += 1
        counts: Dict[int, int] = {}
        total = 0
        rounds = 1
        current = [x] if H[x] >= thr else []
        while current:
            rounds += 1
            for z in current:
                H[z] -= thr
                counts[z] = counts.get(z, 0) + 1
                for y in nbrs[z]:
                    H[y] += n
            total += len(current)
            touched = set(current)
            for z in current:
                touched.update(nbrs[z])
            current = sorted(w for w in touched if H[w] >= thr)
        return counts, total, rounds

    def deposit_waves(self, x: int) -> Tuple[Dict[int, int], int, List[int]]:
        """Wave-by-wave stabilization: topple the seed once, then relax the rest."""
        self.steps += 1
        H = self.heights
        nbrs = self.lattice.neighbor_lists
        thr = self.threshold
        H[x] += 1
        counts: Dict[int, int] = {}
        wave_sizes: List[int] = []
        while H[x] >= thr:
            H[x] -= thr
            counts[x] = counts.get(x, 0) + 1
            stack = []
            for y in nbrs[x]:
                H[y] += self.n
                if H[y] >= thr:
                    stack.append(y)
            wave_sizes.append(1 + self._relax(stack, counts, frozen=x))
        return counts, sum(wave_sizes), wave_sizes


def _record(seed: int, counts: Dict[int, int], total: int, params: ModelParams,
            rounds: int = 1, wave_sizes: Optional[List[int]] = None) -> AvalancheRecord:
    topplings = np.zeros(params.sites, dtype=np.int64)
    for site, k in counts.items():
        topplings[site] = k
    return AvalancheRecord(
        seed=seed,
        topplings=topplings,
        waves=int(topplings[seed]),
        dissipated=params.m * total,
        total_topplings=total,
        rounds=rounds,
        wave_sizes=wave_sizes,
    )


def deposit_and_stabilize(h: GrainConfig, x: SiteLike, mode: str = "queue",
                          debug_waves: bool = False) -> Tuple[GrainConfig, AvalancheRecord]:
    """Add one grain at x and stabilize.

    mode="queue" uses a work stack (fast); mode="rounds" topples every
    unstable site once per round. debug_waves=True records the size of each
    wave. All three give the same final configuration and the same per-site
    toppling counts. The record always carries τ (parallel rounds plus the
    final stable check); outside mode="rounds" it costs a second relaxation,
    so hot loops drive SandpileEngine directly.
    """
    if not h.is_stable():
        raise InputError("deposit requires a stable configuration")
    lattice = get_lattice(h.params)
    seed = lattice.resolve(x)
    engine = SandpileEngine(h)
    if mode not in ("queue", "rounds"):
        raise InputError(f"unknown stabilization mode {mode!r}")
    wave_sizes = None
    if debug_waves:
        counts, total, wave_sizes = engine.deposit_waves(seed)
    elif mode == "queue":
        counts, total = engine.deposit(seed)
    else:
        counts, total, rounds = engine.deposit_rounds(seed)
    if debug_waves or mode == "queue":
        # τ is defined by parallel rounds; replay on a fresh engine
        _, _, rounds = SandpileEngine(h).deposit_rounds(seed)
    return engine.snapshot(), _record(seed, counts, total, h.params, rounds, wave_sizes)


def make_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Generator for replica `replica` of a run seeded with `seed`.

    Streams are split with numpy's SeedSequence: replica r uses child r of
    SeedSequence(seed).spawn(r + 1).
    """
    children = np.random.SeedSequence(int(seed)).spawn(replica + 1)
    return np.random.Generator(np.random.PCG64(children[replica]))


def chain_step(h: GrainConfig, rng: np.random.Generator, mode: str = "queue") -> Tuple[GrainConfig, AvalancheRecord]:
    """One Markov chain step: uniform site, then deposit_and_stabilize."""
    x = int(rng.integers(0, h.params.sites))
    return deposit_and_stabilize(h, x, mode=mode)


def apply_operator_word(h: GrainConfig, word: Sequence[SiteLike]) -> GrainConfig:
    """Apply a(x_1), a(x_2), ... in order."""
    if not h.is_stable():
        raise InputError("operator word requires a stable configuration")
    lattice = get_lattice(h.params)
    engine = SandpileEngine(h)
    for x in word:
        engine.deposit(lattice.resolve(x))
    return engine.snapshot()


def operator_period(h: GrainConfig, x: SiteLike, cap: int):
    """Smallest k <= cap with a(x)^k h = h, or NotFound."""
    if cap < 1:
        raise InputError("cap must be positive")
    lattice = get_lattice(h.params)
    seed = lattice.resolve(x)
    engine = SandpileEngine(h)
    target = h.H.tolist()
    for k in range(1, cap + 1):
        engine.deposit(seed)
        if engine.heights == target:
            return k
    logger.debug("No return to the start configuration within %d applications", cap)
    return NotFound


def inverse_operator(h: GrainConfig, x: SiteLike, cap: int) -> GrainConfig:
    """a(x)^{-1} h for recurrent h, realized as a(x)^{k-1} h."""
    k = operator_period(h, x, cap)
    if k is NotFound:
        raise InputError("configuration did not return within cap; it may be transient")
    return apply_operator_word(h, [x] * (k - 1))
