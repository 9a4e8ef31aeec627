"""
Scaling analysis for the dissipative sandpile

Varreduras em a, extração do expoente ν_a a partir de ξ(d, a), ajustes de
taxas de decaimento (propagador e C₀₀) e verificação das funções de escala
ℱ_G e ℱ_C.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from src.Modules.errors import InputError
from src.Modules.Heights.determinants import (GValues, HeightModel, c2_from_overlap, c2_small_a_limit,
                                              p00_c00, p0_determinantal, required_displacements)
from src.Modules.Propagators.green import (asymptotic_params, decay_rate, green_infinite_many)

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 4


def _grid_float(token: str, text: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise InputError(f"invalid a-grid {text!r}") from None


def parse_a_grid(text: str, points: int = 17) -> List[float]:
    """`start:stop:log` (or `:lin`) into a descending list, or a comma list of values."""
    text = str(text).strip()
    if ':' not in text:
        values = [_grid_float(v, text) for v in text.split(',') if v.strip()]
        if not values:
            raise InputError(f"invalid a-grid {text!r}")
    else:
        parts = text.split(':')
        if len(parts) != 3:
            raise InputError(f"a-grid must look like start:stop:log|lin, got {text!r}")
        start, stop = _grid_float(parts[0], text), _grid_float(parts[1], text)
        spacing = parts[2].strip()
        if start <= 0 or stop <= 0:
            raise InputError("a-grid bounds must be positive")
        if spacing == 'log':
            values = list(np.logspace(math.log10(start), math.log10(stop), points))
        elif spacing == 'lin':
            values = list(np.linspace(start, stop, points))
        else:
            raise InputError(f"unknown grid spacing {spacing!r}")
    return sorted((float(v) for v in values), reverse=True)


@dataclass
class SweepSpec:
    d: int
    a_values: List[float]
    fit_window: Optional[Tuple[float, float]] = None
    outputs: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.d < 2:
            raise InputError(f"dimension d must be >= 2, got {self.d}")
        if not self.a_values or any(not a > 0 for a in self.a_values):
            raise InputError("a values must be strictly positive")
        self.a_values = sorted(set(float(a) for a in self.a_values), reverse=True)
        if self.fit_window is not None:
            lo, hi = sorted(float(v) for v in self.fit_window)
            if lo < min(self.a_values) * (1 - 1e-12) or hi > max(self.a_values) * (1 + 1e-12):
                raise InputError(f"fit window {self.fit_window} lies outside the sweep")
            self.fit_window = (lo, hi)

    @classmethod
    def from_granularities(cls, d: int, m: int, n_list: Sequence[int], **kwargs) -> "SweepSpec":
        """a = m/(2dn) for a series with increasing n."""
        return cls(d, [m / (2.0 * d * n) for n in n_list], **kwargs)

    def fit_values(self) -> List[float]:
        if self.fit_window is None:
            return list(self.a_values)
        lo, hi = self.fit_window
        return [a for a in self.a_values if lo * (1 - 1e-12) <= a <= hi * (1 + 1e-12)]


@dataclass
class FitResult:
    nu_a: float
    prefactor: float
    r_squared: float
    residuals: np.ndarray
    a_values: List[float]
    xi_values: List[float]
    lambda_identity_max_dev: float = 0.0

    def as_dict(self) -> dict:
        return {
            'nu_a': self.nu_a,
            'prefactor': self.prefactor,
            'r_squared': self.r_squared,
            'points': len(self.a_values),
            'lambda_identity_max_dev': self.lambda_identity_max_dev,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'a': self.a_values, 'xi': self.xi_values, 'residual': self.residuals})


def fit_power_law(a_values: Sequence[float], xi_values: Sequence[float]) -> FitResult:
    """Least squares of log ξ on log a."""
    if len(a_values) < MIN_FIT_POINTS:
        raise InputError(f"power-law fit needs at least {MIN_FIT_POINTS} points, got {len(a_values)}")
    x = np.log(np.asarray(a_values, dtype=float))
    y = np.log(np.asarray(xi_values, dtype=float))
    fit = stats.linregress(x, y)
    residuals = y - (fit.intercept + fit.slope * x)
    return FitResult(nu_a=-fit.slope, prefactor=math.exp(fit.intercept), r_squared=fit.rvalue ** 2,
                     residuals=residuals, a_values=list(a_values), xi_values=list(xi_values))


def _xi_point(args) -> Tuple[float, float, float]:
    d, a = args
    ap = asymptotic_params(d, a)
    identity = abs(math.asinh(math.sqrt(a * (a + 2.0))) - decay_rate(a))
    return a, ap.xi, identity


def xi_sweep_and_fit(spec: SweepSpec, workers: int = 1) -> FitResult:
    tasks = [(spec.d, a) for a in spec.fit_values()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_xi_point, tasks))
    else:
        points = [_xi_point(t) for t in tasks]
    result = fit_power_law([p[0] for p in points], [p[1] for p in points])
    result.lambda_identity_max_dev = max(p[2] for p in points)
    logger.info("d=%d: nu_a=%.6f prefactor=%.6f over %d points", spec.d, result.nu_a, result.prefactor, len(points))
    return result


# --- decay fits -----------------------------------------------------------------

@dataclass
class DecayFit:
    rate: float
    log_prefactor: float
    r_squared: float
    points: int


def fit_decay_rate(r: Sequence[float], values: Sequence[float], power: float) -> DecayFit:
    """Fit log(|value|·r^power) = c - rate·r."""
    r = np.asarray(r, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if r.size < MIN_FIT_POINTS:
        raise InputError(f"decay fit needs at least {MIN_FIT_POINTS} points, got {r.size}")
    if np.any(values <= 0):
        raise InputError("decay fit needs non-zero values")
    fit = stats.linregress(r, np.log(values) + power * np.log(r))
    return DecayFit(rate=-fit.slope, log_prefactor=fit.intercept, r_squared=fit.rvalue ** 2, points=int(r.size))


def propagator_decay(d: int, a: float, n: int = 1, k_values: Sequence[int] = range(4, 21),
                     tol: float = 1e-12, workers: int = 1) -> Tuple[DecayFit, pd.DataFrame]:
    """Decay rate of n·G(x(r))·r^{(d-1)/2} along the lattice diagonal."""
    table = green_infinite_many(d, a, n, [(k,) * d for k in k_values], tol=tol, workers=workers)
    r = [k * math.sqrt(d) for k in k_values]
    values = [table.n_value((k,) * d) for k in k_values]
    frame = pd.DataFrame({'k': list(k_values), 'r': r, 'nG': values})
    return fit_decay_rate(r, values, (d - 1) / 2.0), frame


def _c00_k_max(d: int, a: float, n: int, cap: int = 60) -> int:
    """Largest diagonal k whose predicted |C00| stays above the reliability threshold."""
    ap = asymptotic_params(d, a)
    c2 = abs(c2_from_overlap(GValues.from_infinite(d, a, n)))
    k = 1
    while k < cap:
        r = (k + 1) * math.sqrt(d)
        if c2 * math.exp(-2.0 * r / ap.xi) / r ** (d - 1) < 1e-10:
            break
        k += 1
    return k


def c00_decay(d: int, a: float, n: int = 1, k_max: Optional[int] = None, tol: float = 1e-12,
              workers: int = 1) -> Tuple[DecayFit, pd.DataFrame]:
    """Decay rate of C₀₀(x(r))·r^{d-1} over the upper half of the reliable window."""
    if k_max is None:
        k_max = _c00_k_max(d, a, n)
    model = HeightModel(d, float(a), n)
    needed = set(required_displacements(d))
    for k in range(1, k_max + 1):
        needed |= required_displacements(d, (k,) * d)
    table = green_infinite_many(d, a, n, needed, tol=tol, workers=workers)
    p0 = p0_determinantal(table, model)
    pairs = [p00_c00(table, model, (k,) * d, p0=p0) for k in range(1, k_max + 1)]
    frame = pd.DataFrame({'k': list(range(1, k_max + 1)), 'r': [pr.r for pr in pairs],
                          'C00': [pr.C00 for pr in pairs], 'reliable': [pr.reliable for pr in pairs]})
    reliable = frame[frame['reliable']]
    window = reliable.iloc[len(reliable) // 2:]
    if len(window) < MIN_FIT_POINTS:
        window = reliable.iloc[-MIN_FIT_POINTS:]
    return fit_decay_rate(window['r'].to_numpy(), window['C00'].to_numpy(), d - 1.0), frame


def c00_decay_sweep(spec: SweepSpec, n: int = 1, tol: float = 1e-12, workers: int = 1) -> pd.DataFrame:
    """Cross-check 2/ξ against fitted C₀₀ decay rates for each a of the sweep."""
    rows = []
    for a in spec.fit_values():
        fit, _ = c00_decay(spec.d, a, n, tol=tol, workers=workers)
        expected = 2.0 / asymptotic_params(spec.d, a).xi
        rows.append({'a': a, 'fitted_rate': fit.rate, 'expected_rate': expected,
                     'rel_dev': fit.rate / expected - 1.0, 'points': fit.points})
    return pd.DataFrame(rows)


# --- scaling functions -------------------------------------------------------------

def scaling_function_G(kappa: float, d: int) -> float:
    """ℱ_G(κ) = 2^{-(d+1)/2} π^{-(d-1)/2} κ^{(d-3)/2} e^{-κ}."""
    return 2.0 ** (-(d + 1) / 2.0) * math.pi ** (-(d - 1) / 2.0) * kappa ** ((d - 3) / 2.0) * math.exp(-kappa)


def scaling_function_C(kappa: float, d: int, gbar: float) -> float:
    """ℱ_C(κ) = 2^{-(d+1)} π^{-(d-1)} [(1+(d-1)γ̄)/((d-1)γ̄)]² κ^{d+1} e^{-2κ}; compared with |C₀₀|."""
    bracket = (1 + (d - 1) * gbar) / ((d - 1) * gbar)
    return 2.0 ** (-(d + 1)) * math.pi ** (-(d - 1)) * bracket ** 2 * kappa ** (d + 1) * math.exp(-2 * kappa)


def gbar_variants(d: int, a_small: float = 1e-4, n: int = 1) -> dict:
    """γ̄ from e_1+e_2 and from 2e_1+2e_2; exact lattice-potential values at d = 2."""
    if d == 2:
        exact = GValues.from_potential_2d()
        return {'e1+e2': exact['gbar03'], '2e1+2e2': exact['gbar0_22']}
    gv = GValues.from_infinite(d, a_small, n)
    return {'e1+e2': gv.g0 - gv.g3, '2e1+2e2': gv.g0 - gv.g22}


def scaling_function_check(d: int, kappa_list: Sequence[float], a_values: Sequence[float] = (1e-2, 1e-3, 1e-4),
                           n: int = 1, tol: float = 1e-12, with_c00: bool = True,
                           workers: int = 1) -> pd.DataFrame:
    """Compare r^{d-2}·nG and r^{2d}·|C₀₀| with ℱ_G and ℱ_C at the nearest diagonal lattice point."""
    for kappa in kappa_list:
        if not 0.5 < kappa < 5.0:
            raise InputError(f"kappa must lie in (0.5, 5), got {kappa}")
    gbars = gbar_variants(d, n=n) if with_c00 else {}
    rows = []
    for a in sorted(a_values, reverse=True):
        model = HeightModel(d, float(a), n)
        targets = []
        for kappa in kappa_list:
            r_target = kappa / (math.sqrt(2 * d) * math.sqrt(a))
            k = max(1, int(round(r_target / math.sqrt(d))))
            targets.append((kappa, k))
        needed = set(required_displacements(d))
        for _, k in targets:
            needed |= required_displacements(d, (k,) * d)
        table = green_infinite_many(d, a, n, needed, tol=tol, workers=workers)
        p0 = p0_determinantal(table, model) if with_c00 else None
        for kappa, k in targets:
            r = k * math.sqrt(d)
            achieved = math.sqrt(2 * d * a) * r
            g_scaled = r ** (d - 2) * table.n_value((k,) * d)
            row = {'kappa': kappa, 'a': a, 'k': k, 'r': r, 'kappa_achieved': achieved,
                   'G_scaled': g_scaled, 'F_G': scaling_function_G(achieved, d),
                   'ratio_G': g_scaled / scaling_function_G(achieved, d)}
            if with_c00:
                pair = p00_c00(table, model, (k,) * d, p0=p0)
                c_scaled = r ** (2 * d) * abs(pair.C00)
                row.update(C_scaled=c_scaled, reliable=pair.reliable)
                for name, gbar in gbars.items():
                    f_c = scaling_function_C(achieved, d, gbar)
                    row[f'F_C[{name}]'] = f_c
                    row[f'ratio_C[{name}]'] = c_scaled / f_c
            rows.append(row)
    return pd.DataFrame(rows)


def c2_scaling_prediction(kappa: float, d: int, gbar: float) -> float:
    """|c₂| limit carried to the scaling form: it reproduces ℱ_C(κ)."""
    return abs(c2_small_a_limit(d, gbar)) * (2.0 * d) ** (-(d + 1) / 2.0) * kappa ** (d + 1) * math.exp(-2 * kappa)
