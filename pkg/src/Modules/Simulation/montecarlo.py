"""
Monte Carlo sampling of the stationary sandpile

Amostragem da cadeia de Markov a partir de h̄ (recorrente), com estimadores
por médias de lotes (batch means) para alturas, pares de alturas,
propagador, número médio de topplings e de ondas.

A replica stream stores per-batch sums, so pooling replicas is a plain
concatenation of batches and does not depend on how the samples were split.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.Modules.config import worker_count
from src.Modules.errors import InputError
from src.Modules.Lattice.torus import Coords, ModelParams, get_lattice
from src.Modules.Recurrence.burning import burning_allowed
from src.Modules.Simulation.engine import GrainConfig, SandpileEngine, make_rng

logger = logging.getLogger(__name__)

MIN_BATCHES = 20
Z_FLAG = 3.0


def default_pair_displacements(p: ModelParams, max_diagonal: int = 6) -> List[Coords]:
    """±e_i and the diagonal points (k, ..., k) for k <= max_diagonal that fit on the torus."""
    out: List[Coords] = []
    for sign in (1, -1):
        for i in range(p.d):
            v = [0] * p.d
            v[i] = sign
            out.append(tuple(v))
    for k in range(1, min(max_diagonal, p.L) + 1):
        out.append((k,) * p.d)
    return out


@dataclass(frozen=True)
class ChainConfig:
    params: ModelParams
    seed: int
    samples: int
    burn_in: Optional[int] = None
    thinning: int = 1
    replicas: int = 1
    batches: int = MIN_BATCHES
    pair_displacements: Optional[Tuple[Coords, ...]] = None
    check_every: int = 1000
    timeseries: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise InputError("samples must be positive")
        if self.replicas < 1:
            raise InputError("replicas must be >= 1")
        if self.thinning < 1:
            raise InputError("thinning must be >= 1")
        if self.batches < 1:
            raise InputError("batches must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise InputError("burn_in must be non-negative")
        if self.pair_displacements is None:
            object.__setattr__(self, 'pair_displacements', tuple(default_pair_displacements(self.params)))
        for x in self.pair_displacements:
            if len(x) != self.params.d:
                raise InputError(f"pair displacement {x} has wrong dimension")

    @property
    def effective_burn_in(self) -> int:
        return 10 * self.params.sites if self.burn_in is None else self.burn_in


@dataclass
class ReplicaStream:
    """Raw measurements of one replica, summed per batch."""
    replica: int
    seed: int
    params: ModelParams
    displacements: Tuple[Coords, ...]
    batch_sizes: np.ndarray
    height_sums: np.ndarray      # (B, threshold): site-averaged height histogram
    pair_sums: np.ndarray        # (B, X, threshold, threshold)
    topplings_sums: np.ndarray   # (B,)
    waves_sums: np.ndarray       # (B,)
    propagator_sums: np.ndarray  # (B, sites), indexed by displacement mod (2L+1)
    site_zero_sums: np.ndarray   # (B, sites): per-site indicator H == 0
    checks_done: int = 0
    checks_failed: int = 0
    timeseries: Optional[pd.DataFrame] = None

    @property
    def samples(self) -> int:
        return int(self.batch_sizes.sum())


@dataclass
class Estimator:
    mean: float
    stderr: float
    n_samples: int
    batches: int

    @property
    def reliable(self) -> bool:
        return self.batches >= MIN_BATCHES and not math.isnan(self.stderr)

    def as_dict(self) -> dict:
        return {'mean': self.mean, 'stderr': None if math.isnan(self.stderr) else self.stderr,
                'n_samples': self.n_samples, 'batches': self.batches, 'reliable': self.reliable}


def batch_estimate(sums: np.ndarray, sizes: np.ndarray) -> Estimator:
    """Batch-means estimator; stderr is NaN with fewer than MIN_BATCHES batches."""
    sums = np.asarray(sums, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    keep = sizes > 0
    sums, sizes = sums[keep], sizes[keep]
    total = float(sizes.sum())
    mean = float(sums.sum() / total) if total else float('nan')
    batches = int(sizes.size)
    if batches >= MIN_BATCHES:
        means = sums / sizes
        stderr = float(np.std(means, ddof=1) / math.sqrt(batches))
    else:
        stderr = float('nan')
    return Estimator(mean=mean, stderr=stderr, n_samples=int(total), batches=batches)


def _displacement_tables(p: ModelParams, displacements: Sequence[Coords]) -> np.ndarray:
    """For each displacement x, the flat index of z + x for every site z."""
    lattice = get_lattice(p)
    tables = np.empty((len(displacements), p.sites), dtype=np.int64)
    for row, x in enumerate(displacements):
        tables[row] = [lattice.translate(z, x) for z in range(p.sites)]
    return tables


def run_replica(cfg: ChainConfig, replica_id: int, progress: bool = False) -> ReplicaStream:
    """Sample one replica from h̄; returns the per-batch measurement stream."""
    p = cfg.params
    lattice = get_lattice(p)
    thr = p.threshold
    N = p.period
    rng = make_rng(cfg.seed, replica_id)
    engine = SandpileEngine(GrainConfig.max_stable(p))

    for _ in range(cfg.effective_burn_in):
        engine.deposit(int(rng.integers(0, p.sites)))
    logger.debug("replica %d: burn-in of %d steps done", replica_id, cfg.effective_burn_in)

    displacements = tuple(cfg.pair_displacements)
    shift = _displacement_tables(p, displacements)
    digits = (np.array([lattice.coords(i) for i in range(p.sites)]) + p.L) % N
    strides = np.array([N ** (p.d - 1 - k) for k in range(p.d)], dtype=np.int64)

    batches = min(cfg.batches, cfg.samples)
    sizes = np.array([len(chunk) for chunk in np.array_split(np.arange(cfg.samples), batches)], dtype=np.int64)
    height_sums = np.zeros((batches, thr))
    pair_sums = np.zeros((batches, len(displacements), thr, thr))
    topplings_sums = np.zeros(batches)
    waves_sums = np.zeros(batches)
    propagator_sums = np.zeros((batches, p.sites))
    site_zero_sums = np.zeros((batches, p.sites))
    rows = [] if cfg.timeseries else None
    checks_done = checks_failed = 0

    batch = 0
    filled = 0
    bar = tqdm(total=cfg.samples, disable=not progress, desc=f"replica {replica_id}")
    for sample in range(cfg.samples):
        for _ in range(cfg.thinning):
            x = int(rng.integers(0, p.sites))
            counts, total = engine.deposit(x)
        H = np.fromiter(engine.heights, dtype=np.int64, count=p.sites)

        height_sums[batch] += np.bincount(H, minlength=thr) / p.sites
        for row in range(len(displacements)):
            joint = H * thr + H[shift[row]]
            pair_sums[batch, row] += np.bincount(joint, minlength=thr * thr).reshape(thr, thr) / p.sites
        topplings_sums[batch] += total
        waves = counts.get(x, 0)
        waves_sums[batch] += waves
        if counts:
            toppled = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
            amounts = np.fromiter(counts.values(), dtype=np.int64, count=len(counts))
            disp = ((digits[toppled] - digits[x]) % N) @ strides
            np.add.at(propagator_sums[batch], disp, amounts)
        site_zero_sums[batch] += (H == 0)

        if cfg.check_every and sample % cfg.check_every == 0:
            checks_done += 1
            if not burning_allowed(GrainConfig(H, p)).allowed:
                checks_failed += 1
                logger.error("replica %d: sample %d is not an allowed configuration", replica_id, sample)
        if rows is not None:
            rows.append({'sample': sample, 'site': x, 'total_topplings': total,
                         'waves': waves, 'grains': int(H.sum())})

        filled += 1
        if filled == sizes[batch]:
            batch += 1
            filled = 0
        bar.update(1)
    bar.close()

    return ReplicaStream(
        replica=replica_id, seed=cfg.seed, params=p, displacements=displacements,
        batch_sizes=sizes, height_sums=height_sums, pair_sums=pair_sums,
        topplings_sums=topplings_sums, waves_sums=waves_sums,
        propagator_sums=propagator_sums, site_zero_sums=site_zero_sums,
        checks_done=checks_done, checks_failed=checks_failed,
        timeseries=pd.DataFrame(rows) if rows is not None else None,
    )


@dataclass
class MergedEstimates:
    params: ModelParams
    P_alpha: Dict[int, Estimator]
    P_pair: Dict[Tuple[int, int, Coords], Estimator]
    mean_topplings: Estimator
    mean_waves: Estimator
    G_hat: Dict[Coords, Estimator]
    samples: int
    checks_done: int = 0
    checks_failed: int = 0
    site_zero: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)


def merge_estimates(streams: Sequence[ReplicaStream]) -> MergedEstimates:
    """Pool replicas batch by batch and build every estimator."""
    if not streams:
        raise InputError("merge_estimates needs at least one stream")
    p = streams[0].params
    displacements = streams[0].displacements
    for s in streams[1:]:
        if s.params != p or s.displacements != displacements:
            raise InputError("streams come from different chain configurations")

    sizes = np.concatenate([s.batch_sizes for s in streams])
    heights = np.concatenate([s.height_sums for s in streams])
    pairs = np.concatenate([s.pair_sums for s in streams])
    topplings = np.concatenate([s.topplings_sums for s in streams])
    waves = np.concatenate([s.waves_sums for s in streams])
    propagator = np.concatenate([s.propagator_sums for s in streams])
    site_zero = np.concatenate([s.site_zero_sums for s in streams])

    thr = p.threshold
    lattice = get_lattice(p)
    N = p.period
    P_alpha = {alpha: batch_estimate(heights[:, alpha], sizes) for alpha in range(thr)}
    P_pair = {}
    for row, x in enumerate(displacements):
        for alpha in range(thr):
            for beta in range(thr):
                P_pair[(alpha, beta, x)] = batch_estimate(pairs[:, row, alpha, beta], sizes)
    G_hat = {}
    for flat in range(p.sites):
        y = lattice.min_image(lattice.coords(flat))
        digit_index = sum(((c % N) * N ** (p.d - 1 - k)) for k, c in enumerate(y))
        G_hat[y] = batch_estimate(propagator[:, digit_index], sizes)

    return MergedEstimates(
        params=p, P_alpha=P_alpha, P_pair=P_pair,
        mean_topplings=batch_estimate(topplings, sizes),
        mean_waves=batch_estimate(waves, sizes),
        G_hat=G_hat, samples=int(sizes.sum()),
        checks_done=sum(s.checks_done for s in streams),
        checks_failed=sum(s.checks_failed for s in streams),
        site_zero=(site_zero, sizes),
    )


@dataclass
class Comparison:
    mean: float
    stderr: float
    exact: float
    z: float
    flagged: bool

    def as_dict(self) -> dict:
        return {'mean': self.mean, 'stderr': self.stderr, 'exact': self.exact, 'z': self.z, 'flagged': self.flagged}


def compare_to_exact(est: Estimator, exact_value: float) -> Comparison:
    """z = (mean - exact)/stderr, flagged when |z| > 3."""
    if not est.reliable:
        raise InputError(f"estimator has {est.batches} batches; at least {MIN_BATCHES} are needed")
    diff = est.mean - exact_value
    if est.stderr == 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / est.stderr
    return Comparison(est.mean, est.stderr, float(exact_value), z, abs(z) > Z_FLAG)


def translation_chi2(merged: MergedEstimates) -> Tuple[float, int]:
    """Homogeneity of per-site P(H = 0) against the site average, using batch stderrs.

    Returns (statistic, degrees of freedom); statistic/dof near 1 means the
    per-site estimates differ by statistical error only.
    """
    sums, sizes = merged.site_zero
    per_site = [batch_estimate(sums[:, s], sizes) for s in range(sums.shape[1])]
    if not all(e.reliable for e in per_site):
        raise InputError("per-site estimates need at least 20 batches")
    means = np.array([e.mean for e in per_site])
    errs = np.array([e.stderr for e in per_site])
    keep = errs > 0
    pooled = float(means.mean())
    stat = float(np.sum(((means[keep] - pooled) / errs[keep]) ** 2))
    return stat, int(keep.sum()) - 1


def _replica_task(args):
    cfg, replica, progress = args
    return run_replica(cfg, replica, progress)


def run_chain(cfg: ChainConfig, workers: Optional[int] = None, progress: bool = False) -> Tuple[MergedEstimates, List[ReplicaStream]]:
    """All replicas (in parallel when allowed), then a single merge."""
    workers = min(worker_count(workers), cfg.replicas)
    logger.info("Sampling %d replica(s) of %d samples on %d worker(s)", cfg.replicas, cfg.samples, workers)
    tasks = [(cfg, r, progress and workers == 1) for r in range(cfg.replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            streams = list(pool.map(_replica_task, tasks))
    else:
        streams = [_replica_task(t) for t in tasks]
    merged = merge_estimates(streams)
    if merged.checks_failed:
        logger.error("%d of %d spot checks found non-allowed configurations", merged.checks_failed, merged.checks_done)
    return merged, streams


def simulation_report(merged: MergedEstimates, exact: Optional[Dict[str, float]] = None) -> dict:
    """JSON-ready summary; `exact` may hold P0, G00 and mean_topplings references."""
    p = merged.params
    report = {
        'samples': merged.samples,
        'P_alpha': [dict(alpha=alpha, **est.as_dict()) for alpha, est in sorted(merged.P_alpha.items())],
        'mean_topplings': merged.mean_topplings.as_dict(),
        'mean_waves': merged.mean_waves.as_dict(),
        'pair_table': [
            dict(alpha=alpha, beta=beta, x=list(x), **est.as_dict())
            for (alpha, beta, x), est in merged.P_pair.items() if alpha < p.n and beta < p.n
        ],
        'G_hat': [dict(y=list(y), **est.as_dict()) for y, est in sorted(merged.G_hat.items())
                  if max(abs(c) for c in y) <= 3],
        'burning_checks': {'done': merged.checks_done, 'failed': merged.checks_failed},
    }
    if exact:
        comparisons = {}
        checks = [('P0', merged.P_alpha[0]), ('mean_topplings', merged.mean_topplings),
                  ('mean_waves', merged.mean_waves)]
        for name, est in checks:
            if name in exact and est.reliable:
                comparisons[name] = compare_to_exact(est, exact[name]).as_dict()
        report['comparisons'] = comparisons
    return report
