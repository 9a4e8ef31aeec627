"""
Avalanche propagators G(x)

Funções de Green da rede: soma de Fourier em volume finito, integral de
Bessel em volume infinito (quadratura adaptativa), verificação por
quadratura tensorial e assintótica de ponto de sela (ξ, λ, c₁, Ḡ).

Infinite-volume values use the one-dimensional representation

    G(x) = 1/(2dn) ∫_0^∞ e^{-as} ∏_i [e^{-s/d} I_{|x_i|}(s/d)] ds,

integrated with adaptive composite 15-point Gauss-Legendre panels.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from src.Modules.errors import InputError, ToleranceError
from src.Modules.Lattice.torus import ModelParams, mode_eigenvalue_grid
from src.Modules.Propagators.bessel import scaled_bessel_table

logger = logging.getLogger(__name__)

FINITE_FOURIER = "finite_fourier"
INFINITE_BESSEL = "infinite_bessel"
INFINITE_TENSOR = "infinite_tensor_quadrature"
METHODS = (FINITE_FOURIER, INFINITE_BESSEL, INFINITE_TENSOR)

MIN_TOL = 1e-12
PANEL_POINTS = 15
PANEL_BUDGET = 4000

Key = Tuple[int, ...]


def canonical_key(x: Sequence[int]) -> Key:
    """Sorted absolute coordinates; G is invariant under permutations and sign flips."""
    return tuple(sorted(abs(int(c)) for c in x))


def keys_within(d: int, radius: int) -> List[Key]:
    """All canonical displacements with max |x_i| <= radius."""
    keys: List[Key] = []

    def extend(prefix, low):
        if len(prefix) == d:
            keys.append(tuple(prefix))
            return
        for c in range(low, radius + 1):
            extend(prefix + [c], c)

    extend([], 0)
    return keys


@dataclass(frozen=True)
class GreenTable:
    """Propagator values keyed by canonical displacement."""
    entries: Dict[Key, float]
    errors: Dict[Key, float]
    method: str
    d: int
    a: float
    n: int
    L: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown Green-function method {self.method!r}")

    def _key(self, x: Sequence[int]) -> Key:
        if self.L is not None:
            # torus table: reduce to the minimal image first
            period = 2 * self.L + 1
            x = [((int(c) + self.L) % period) - self.L for c in x]
        return canonical_key(x)

    def __contains__(self, x) -> bool:
        return len(x) == self.d and self._key(x) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def value(self, x: Sequence[int]) -> float:
        if len(x) != self.d:
            raise InputError(f"displacement {tuple(x)} has wrong dimension (d={self.d})")
        key = self._key(x)
        try:
            return self.entries[key]
        except KeyError:
            raise InputError(f"displacement {tuple(x)} not covered by this {self.method} table") from None

    def error(self, x: Sequence[int]) -> float:
        return self.errors.get(self._key(x), 0.0)

    def n_value(self, x: Sequence[int]) -> float:
        """n·G(x), the quantity the height formulas use."""
        return self.n * self.value(x)

    def merged(self, other: "GreenTable") -> "GreenTable":
        if (other.method, other.d, other.n, other.L) != (self.method, self.d, self.n, self.L) or other.a != self.a:
            raise InputError("cannot merge tables with different parameters")
        return GreenTable({**self.entries, **other.entries}, {**self.errors, **other.errors},
                          self.method, self.d, self.a, self.n, self.L)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for key in sorted(self.entries):
            row = {f"x{i + 1}": c for i, c in enumerate(key)}
            row.update(value=self.entries[key], est_abs_error=self.errors.get(key, 0.0), method=self.method)
            rows.append(row)
        return pd.DataFrame(rows, columns=[f"x{i + 1}" for i in range(self.d)] + ['value', 'est_abs_error', 'method'])


# --- finite volume -----------------------------------------------------------

def green_finite_array(p: ModelParams) -> np.ndarray:
    """G_L(0, x) for every x, indexed by x mod (2L+1) along each axis."""
    return np.fft.ifftn(1.0 / mode_eigenvalue_grid(p)).real / p.n


def green_finite(p: ModelParams, x: Sequence[int]) -> float:
    """Direct Fourier sum for one displacement (minimal image)."""
    if len(x) != p.d:
        raise InputError(f"displacement must have {p.d} coordinates")
    if any(abs(int(c)) > p.L for c in x):
        raise InputError(f"displacement {tuple(x)} is not a minimal image for L={p.L}")
    N = p.period
    phase = np.zeros((N,) * p.d)
    for axis, c in enumerate(x):
        shape = [1] * p.d
        shape[axis] = N
        phase = phase + (int(c) * np.arange(N)).reshape(shape)
    kernel = np.cos(2.0 * np.pi * phase / N) / mode_eigenvalue_grid(p)
    return float(kernel.sum()) / (p.n * N ** p.d)


def green_finite_table(p: ModelParams) -> GreenTable:
    """All canonical displacements of the torus from one inverse FFT."""
    grid = green_finite_array(p)
    entries = {key: float(grid[key]) for key in keys_within(p.d, p.L)}
    return GreenTable(entries, {key: 0.0 for key in entries}, FINITE_FOURIER,
                      p.d, float(p.a), p.n, L=p.L)


# --- infinite volume ---------------------------------------------------------

@lru_cache(maxsize=8)
def gauss_legendre(points: int = PANEL_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(points)


def _panel_nodes(lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for [lo, hi] followed by its two halves (3 x 15 nodes)."""
    t, w = gauss_legendre()
    mid = 0.5 * (lo + hi)
    nodes, weights = [], []
    for a, b in ((lo, hi), (lo, mid), (mid, hi)):
        nodes.append(0.5 * (b - a) * t + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _integrand(s: np.ndarray, orders: np.ndarray, a: float, d: int) -> np.ndarray:
    """Values (len(s), len(orders)) of e^{-as} ∏ e^{-s/d} I_{x_i}(s/d)."""
    table = scaled_bessel_table(int(orders.max()), s / d)
    return np.exp(-a * s)[:, None] * np.prod(table[:, orders], axis=2)


def _tail_bound(S: float, a: float, d: int) -> float:
    return math.exp(-a * S) / (a * S ** (d / 2.0))


def integration_range(a: float, d: int, tol: float) -> float:
    S = max(50.0, 40.0 / a)
    while _tail_bound(S, a, d) >= tol:
        S *= 2.0
    return S


def _initial_panels(S: float) -> List[Tuple[float, float]]:
    panels = [(0.0, 1.0)]
    lo = 1.0
    while lo < S:
        hi = min(2.0 * lo, S)
        panels.append((lo, hi))
        lo = hi
    return panels


def _check_infinite_args(d: int, a: float, n: int, tol: float):
    if d < 2:
        raise InputError(f"dimension d must be >= 2, got {d}")
    if not a > 0:
        raise InputError(f"dissipation a must be positive, got {a}")
    if n < 1:
        raise InputError(f"granularity n must be >= 1, got {n}")
    if tol < MIN_TOL:
        raise InputError(f"tolerance {tol} below the supported minimum {MIN_TOL}")


def _integrate_keys(keys: Sequence[Key], d: int, a: float, n: int, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    orders = np.array(keys, dtype=np.int64).reshape(len(keys), d)
    scale = 2.0 * d * n
    S = integration_range(a, d, tol)
    tail = _tail_bound(S, a, d)
    pending = list(reversed(_initial_panels(S)))
    total = np.zeros(len(keys))
    err = np.zeros(len(keys))
    evaluations = 0
    eps = np.finfo(float).eps
    while pending:
        evaluations += 1
        if evaluations > PANEL_BUDGET:
            achieved = float((err.max() + tail) / scale) if len(keys) else 0.0
            raise ToleranceError(
                f"Bessel quadrature exceeded {PANEL_BUDGET} panels (a={a}, d={d})",
                estimate=float(total.max() / scale), achieved=achieved)
        lo, hi = pending.pop()
        nodes, weights = _panel_nodes(lo, hi)
        f = _integrand(nodes, orders, a, d) * weights[:, None]
        whole = f[:PANEL_POINTS].sum(axis=0)
        halves = f[PANEL_POINTS:].sum(axis=0)
        diff = np.abs(whole - halves)
        allowance = np.maximum(tol * scale * (hi - lo) / S, 50.0 * eps * np.abs(halves))
        if np.all(diff <= allowance):
            total += halves
            err += diff
        else:
            mid = 0.5 * (lo + hi)
            pending.append((mid, hi))
            pending.append((lo, mid))
    logger.debug("Bessel quadrature: %d panels, range %.3g, %d displacements", evaluations, S, len(keys))
    return total / scale, (err + tail) / scale


def green_infinite(d: int, a: float, n: int, x: Sequence[int], tol: float = 1e-10) -> Tuple[float, float]:
    """Infinite-volume G(x) and an absolute error estimate."""
    _check_infinite_args(d, a, n, tol)
    if len(x) != d:
        raise InputError(f"displacement must have {d} coordinates")
    values, errors = _integrate_keys([canonical_key(x)], d, float(a), n, tol)
    return float(values[0]), float(errors[0])


def _table_chunk(args):
    keys, d, a, n, tol = args
    return keys, _integrate_keys(keys, d, a, n, tol)


def green_infinite_many(d: int, a: float, n: int, displacements: Iterable[Sequence[int]],
                        tol: float = 1e-10, workers: int = 1) -> GreenTable:
    """One quadrature pass for many displacements (vector-valued integrand)."""
    _check_infinite_args(d, a, n, tol)
    keys = sorted({canonical_key(x) for x in displacements})
    if any(len(k) != d for k in keys):
        raise InputError(f"every displacement must have {d} coordinates")
    if not keys:
        return GreenTable({}, {}, INFINITE_BESSEL, d, float(a), n)

    if workers > 1 and len(keys) > 1:
        chunks = [keys[i::workers] for i in range(workers) if keys[i::workers]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(_table_chunk, [(c, d, float(a), n, tol) for c in chunks]))
    else:
        results = [_table_chunk((keys, d, float(a), n, tol))]

    entries, errors = {}, {}
    for chunk_keys, (values, errs) in results:
        for key, v, e in zip(chunk_keys, values, errs):
            entries[key] = float(v)
            errors[key] = float(e)
    return GreenTable(entries, errors, INFINITE_BESSEL, d, float(a), n)


def green_tensor_quadrature(d: int, a: float, n: int, x: Sequence[int],
                            panels: int = 8, points: int = 32) -> Tuple[float, float]:
    """Cross-check: composite Gauss-Legendre over [-π, π]^d of the Fourier integral.

    Only d = 2 and d = 3 are supported. The error estimate compares against
    the same rule with half the nodes per panel.
    """
    if d not in (2, 3):
        raise InputError("tensor quadrature is available for d = 2 and d = 3 only")
    if len(x) != d:
        raise InputError(f"displacement must have {d} coordinates")
    if not a > 0:
        raise InputError(f"dissipation a must be positive, got {a}")

    def rule(npts):
        t, w = gauss_legendre(npts)
        edges = np.linspace(-np.pi, np.pi, panels + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[1:] + edges[:-1])
        theta = (mids[:, None] + half[:, None] * t[None, :]).ravel()
        weight = (half[:, None] * w[None, :]).ravel()
        denom = np.full((theta.size,) * d, 1.0 + a)
        phase = np.zeros((theta.size,) * d)
        weights = np.ones((theta.size,) * d)
        for axis in range(d):
            shape = [1] * d
            shape[axis] = theta.size
            denom = denom - np.cos(theta).reshape(shape) / d
            phase = phase + int(x[axis]) * theta.reshape(shape)
            weights = weights * weight.reshape(shape)
        integral = float(np.sum(weights * np.cos(phase) / denom))
        return integral / ((2.0 * np.pi) ** d * 2.0 * d * n)

    fine = rule(points)
    coarse = rule(max(points // 2, 2))
    return fine, abs(fine - coarse)


# --- asymptotics -------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticParams:
    """Correlation length ξ, diagonal decay rate λ and amplitude c₁.

    λ is the per-coordinate rate: along x(r) = (r/√d, ..., r/√d) the
    exponent λ·Σx_i equals r/ξ, so λ = 1/(√d ξ).
    """
    xi: float
    lam: float
    c1: float
    d: int
    a: float

    def as_dict(self) -> dict:
        return {'xi': self.xi, 'lambda': self.lam, 'c1': self.c1, 'd': self.d, 'a': self.a}


def decay_rate(a: float) -> float:
    """asinh √(a(a+2)), written as log(1 + a + √(a(a+2)))."""
    return math.log1p(a + math.sqrt(a * (a + 2.0)))


def asymptotic_params(d: int, a: float) -> AsymptoticParams:
    if d < 2:
        raise InputError(f"dimension d must be >= 2, got {d}")
    if not a > 0:
        raise InputError(f"dissipation a must be positive, got {a}")
    a = float(a)
    lam = decay_rate(a)
    xi = 1.0 / (math.sqrt(d) * lam)
    root = math.sqrt(a * (a + 2.0) * d)
    c1 = (1.0 / (4.0 * math.pi * (a + 1.0))) * (root / (2.0 * math.pi * (a + 1.0))) ** ((d - 3) / 2.0)
    return AsymptoticParams(xi=xi, lam=lam, c1=c1, d=d, a=a)


def diagonal_point(r: float, d: int) -> Tuple[float, ...]:
    """x(r) = (r/√d, ..., r/√d)."""
    return (r / math.sqrt(d),) * d


def gbar(r: float, ap: AsymptoticParams, n: int = 1) -> float:
    """Ḡ(r) = (c₁/n) e^{-r/ξ} / r^{(d-1)/2}."""
    if not r > 0:
        raise InputError("r must be positive")
    return ap.c1 / n * math.exp(-r / ap.xi) / r ** ((ap.d - 1) / 2.0)


def gbar_offset(r: float, eps: Sequence[float], ap: AsymptoticParams, n: int = 1) -> float:
    """Asymptotic G at x(r) + eps for bounded offsets eps."""
    if len(eps) != ap.d:
        raise InputError(f"offset must have {ap.d} entries")
    return gbar(r, ap, n) * math.exp(-ap.lam * float(sum(eps)))


def saddle_residual(x: Sequence[float], d: int, a: float, s: float) -> float:
    """g⁽¹⁾(x, s) = (1+a) - (1/d) Σ √(1 + (d x_i / s)²)."""
    x = np.abs(np.asarray(x, dtype=float))
    return (1.0 + a) - float(np.sum(np.sqrt(1.0 + (d * x / s) ** 2))) / d


def _saddle_curvature(x: np.ndarray, d: int, s: float) -> float:
    """g⁽²⁾(x, s) = (d/s³) Σ x_i² / √(1 + (d x_i / s)²)."""
    return d / s ** 3 * float(np.sum(x ** 2 / np.sqrt(1.0 + (d * x / s) ** 2)))


def saddle_point(x: Sequence[float], d: int, a: float) -> float:
    """Unique positive root s₀ of g⁽¹⁾(x, s) = 0."""
    xs = np.abs(np.asarray(x, dtype=float))
    if xs.size != d:
        raise InputError(f"displacement must have {d} coordinates")
    if not a > 0:
        raise InputError(f"dissipation a must be positive, got {a}")
    top = float(xs.max())
    if top == 0.0:
        raise InputError("saddle point is undefined at x = 0")
    lo = top / (1.0 + a)
    hi = 2.0 * d * top / math.sqrt(a * (a + 2.0))
    s0 = brentq(lambda s: saddle_residual(xs, d, a, s), lo, hi, xtol=1e-14 * hi, rtol=4 * np.finfo(float).eps)
    # g⁽¹⁾ is increasing in s with slope g⁽²⁾
    slope = _saddle_curvature(xs, d, s0)
    if slope > 0:
        polished = s0 - saddle_residual(xs, d, a, s0) / slope
        if lo < polished < hi and abs(saddle_residual(xs, d, a, polished)) <= abs(saddle_residual(xs, d, a, s0)):
            s0 = polished
    return float(s0)


def green_saddle_estimate(x: Sequence[float], d: int, a: float, n: int = 1) -> float:
    """Leading saddle-point approximation of G(x) from the uniform Bessel asymptotics."""
    xs = np.abs(np.asarray(x, dtype=float))
    s0 = saddle_point(xs, d, a)
    q = s0 / d
    exponent = (1.0 + a) * s0 - float(np.sum(np.sqrt(xs ** 2 + q ** 2))) + float(np.sum(xs * np.arcsinh(xs / q)))
    amplitude = (2.0 * math.pi) ** (-d / 2.0) * float(np.prod((xs ** 2 + q ** 2) ** -0.25))
    laplace = math.sqrt(2.0 * math.pi / _saddle_curvature(xs, d, s0))
    return amplitude * math.exp(-exponent) * laplace / (2.0 * d * n)
