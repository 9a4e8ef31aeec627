"""
Height-zero statistics of the dissipative sandpile

Probabilidades P₀, P₀₀(x) e correlação C₀₀(x) por determinantes reduzidos
(2d+1 e 2(2d+1)), formas fechadas em g₀..g₃, redução na forma R e o fator
assintótico c₂.

Index convention for all (2d+1)-matrices: 0 is the origin, 1..d are +e_1..+e_d,
d+1..2d are -e_1..-e_d, so the last index 2d is the distinguished neighbour -e_d.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import block_diag, lu_factor

from src.Modules.errors import InputError, SingularMatrixError, SizeGuardError
from src.Modules.Lattice.torus import DENSE_SITE_LIMIT, ModelParams, get_lattice
from src.Modules.Propagators.green import (GreenTable, asymptotic_params, green_finite_array,
                                           green_infinite_many)

logger = logging.getLogger(__name__)

LAYOUTS = ("symmetric", "as_printed")
UNRELIABLE_BELOW = 1e-10
SINGULAR_BELOW = 1e-14


# --- geometry ----------------------------------------------------------------

def q_vectors(d: int) -> List[Tuple[int, ...]]:
    """q_0 = 0, q_i = e_i, q_{d+i} = -e_i."""
    vectors = [(0,) * d]
    for sign in (1, -1):
        for i in range(d):
            v = [0] * d
            v[i] = sign
            vectors.append(tuple(v))
    return vectors


def l1_norm(x: Sequence[int]) -> int:
    return sum(abs(int(c)) for c in x)


def required_displacements(d: int, x: Optional[Sequence[int]] = None) -> Set[Tuple[int, ...]]:
    """Every x + q_j - q_i needed by the reduced matrices (x = 0 when omitted)."""
    base = tuple(int(c) for c in x) if x is not None else (0,) * d
    qs = q_vectors(d)
    return {tuple(b + qj - qi for b, qj, qi in zip(base, q_j, q_i)) for q_i in qs for q_j in qs}


@dataclass(frozen=True)
class HeightModel:
    """(d, a, n) triple; a may be any positive real for infinite-volume work."""
    d: int
    a: float
    n: int

    def __post_init__(self):
        if self.d < 2:
            raise InputError(f"dimension d must be >= 2, got {self.d}")
        if not self.a > 0:
            raise InputError(f"dissipation a must be positive, got {self.a}")
        if self.n < 1:
            raise InputError(f"granularity n must be >= 1, got {self.n}")

    @property
    def h_c(self) -> float:
        return 2.0 * self.d * (1.0 + self.a)

    @classmethod
    def from_params(cls, p: ModelParams) -> "HeightModel":
        return cls(p.d, float(p.a), p.n)


ModelLike = Union[HeightModel, ModelParams]


def _as_model(model: ModelLike) -> HeightModel:
    return HeightModel.from_params(model) if isinstance(model, ModelParams) else model


def lu_det(matrix: np.ndarray) -> float:
    """Determinant by LU with partial pivoting."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"determinant needs a square matrix, got shape {matrix.shape}")
    lu, piv = lu_factor(matrix)
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    return float((-1) ** swaps * np.prod(np.diag(lu)))


# --- reduced matrices --------------------------------------------------------

@dataclass
class ReducedGreenMatrix:
    """𝒢(x) with 𝒢_ij = G(x + q_j - q_i)."""
    entries: np.ndarray
    x: Tuple[int, ...]
    method: str

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def reduced_green_matrix(source: GreenTable, x: Optional[Sequence[int]] = None) -> ReducedGreenMatrix:
    d = source.d
    base = tuple(int(c) for c in x) if x is not None else (0,) * d
    if len(base) != d:
        raise InputError(f"displacement must have {d} coordinates")
    qs = q_vectors(d)
    size = len(qs)
    entries = np.empty((size, size))
    for i, q_i in enumerate(qs):
        for j, q_j in enumerate(qs):
            entries[i, j] = source.value(tuple(b + a - c for b, a, c in zip(base, q_j, q_i)))
    return ReducedGreenMatrix(entries, base, source.method)


class DefectMatrix:
    """The defect ℬ for a height-zero site, in one of two layouts.

    "symmetric" mirrors the first row into the first column, which is the
    perturbation Δ' - Δ of the modified toppling matrix. "as_printed" keeps
    the couplings on the first row only.
    """

    def __init__(self, d: int, n: int, a: float, layout: str = "symmetric"):
        if layout not in LAYOUTS:
            raise InputError(f"unknown defect layout {layout!r}; choose from {LAYOUTS}")
        self.d = d
        self.n = n
        self.a = float(a)
        self.layout = layout
        self.B = self._build()

    def _build(self) -> np.ndarray:
        d, n = self.d, self.n
        size = 2 * d + 1
        h_c = 2.0 * d * (1.0 + self.a)
        B = np.zeros((size, size))
        B[0, 0] = -h_c + 1.0 / n
        for j in range(1, size):
            B[j, j] = -1.0
            B[0, j] = 1.0
        B[size - 1, size - 1] = -1.0 + 1.0 / n
        B[0, size - 1] = 1.0 - 1.0 / n
        if self.layout == "symmetric":
            B[1:, 0] = B[0, 1:]
        return B

    def block_diag(self) -> np.ndarray:
        """ℬ̃ for the two-site case."""
        return block_diag(self.B, self.B)

    def full(self, p: ModelParams, centers: Sequence[Sequence[int]]) -> np.ndarray:
        """Dense B_L for height-zero sites at `centers` (sum of one ℬ per center)."""
        lattice = get_lattice(p)
        out = np.zeros((p.sites, p.sites))
        qs = q_vectors(p.d)
        for center in centers:
            idx = [lattice.index(lattice.min_image([c + q for c, q in zip(center, qv)])) for qv in qs]
            out[np.ix_(idx, idx)] += self.B
        return out


def _model_and_defect(source: GreenTable, model: ModelLike, layout: str) -> Tuple[HeightModel, DefectMatrix]:
    model = _as_model(model)
    if source.d != model.d or source.n != model.n or not math.isclose(source.a, model.a, rel_tol=1e-12):
        raise InputError(f"Green table (d={source.d}, a={source.a}, n={source.n}) does not match the model {model}")
    return model, DefectMatrix(model.d, model.n, model.a, layout)


def p0_determinantal(source: GreenTable, model: ModelLike, layout: str = "symmetric") -> float:
    """P₀ = det(E + n𝒢(0)ℬ)."""
    model, defect = _model_and_defect(source, model, layout)
    G0 = reduced_green_matrix(source).entries
    return lu_det(np.eye(G0.shape[0]) + model.n * G0 @ defect.B)


@dataclass
class PairResult:
    x: Tuple[int, ...]
    P00: float
    C00: float
    P0: float
    reliable: bool

    @property
    def r(self) -> float:
        return math.sqrt(sum(c * c for c in self.x))


def p00_c00(source: GreenTable, model: ModelLike, x: Sequence[int], layout: str = "symmetric",
            p0: Optional[float] = None) -> PairResult:
    """P₀₀(x) = det(E + n𝒢̃(0,x)ℬ̃) and C₀₀ = (P₀₀ - P₀²)/P₀²."""
    model, defect = _model_and_defect(source, model, layout)
    x = tuple(int(c) for c in x)
    if len(x) != model.d:
        raise InputError(f"displacement must have {model.d} coordinates")
    if source.L is not None:
        period = 2 * source.L + 1
        x = tuple(((c + source.L) % period) - source.L for c in x)
        if max(abs(c) for c in x) >= source.L:
            raise InputError(f"displacement {x} too close to the torus size L={source.L}")
    if l1_norm(x) < 2:
        raise InputError(f"P00 needs |x| >= 2 (got {x}); nearest neighbours are excluded")

    G0 = reduced_green_matrix(source).entries
    Gx = reduced_green_matrix(source, x).entries
    tilde = np.block([[G0, Gx], [Gx.T, G0]])
    P00 = lu_det(np.eye(tilde.shape[0]) + model.n * tilde @ defect.block_diag())
    if p0 is None:
        p0 = lu_det(np.eye(G0.shape[0]) + model.n * G0 @ defect.B)
    C00 = (P00 - p0 ** 2) / p0 ** 2
    reliable = abs(C00) >= UNRELIABLE_BELOW
    if not reliable:
        logger.debug("C00(%s) = %.3g below the cancellation threshold", x, C00)
    return PairResult(x=x, P00=P00, C00=C00, P0=p0, reliable=reliable)


# --- full lattice ------------------------------------------------------------

def _dense_green(p: ModelParams) -> np.ndarray:
    if p.sites > DENSE_SITE_LIMIT:
        raise SizeGuardError(f"dense G_L refused for {p.sites} sites", p.sites, DENSE_SITE_LIMIT)
    flat = green_finite_array(p).ravel()
    lattice = get_lattice(p)
    coords = np.array([lattice.coords(i) for i in range(p.sites)])
    index = np.zeros((p.sites, p.sites), dtype=np.int64)
    for k in range(p.d):
        stride = p.period ** (p.d - 1 - k)
        index += ((coords[None, :, k] - coords[:, None, k]) % p.period) * stride
    return flat[index]


def p0_full_lattice(p: ModelParams, layout: str = "symmetric") -> float:
    """det(E_L + nG_L B_L) over the whole torus."""
    defect = DefectMatrix(p.d, p.n, float(p.a), layout)
    G = _dense_green(p)
    return lu_det(np.eye(p.sites) + p.n * G @ defect.full(p, [(0,) * p.d]))


def p00_full_lattice(p: ModelParams, x: Sequence[int], layout: str = "symmetric") -> float:
    if l1_norm(x) < 2:
        raise InputError(f"P00 needs |x| >= 2 (got {tuple(x)})")
    defect = DefectMatrix(p.d, p.n, float(p.a), layout)
    G = _dense_green(p)
    return lu_det(np.eye(p.sites) + p.n * G @ defect.full(p, [(0,) * p.d, tuple(x)]))


# --- closed forms --------------------------------------------------------------

@dataclass(frozen=True)
class GValues:
    """g_k = n·G at 0, e_1, 2e_1, e_1+e_2 (and optionally 2e_1+2e_2)."""
    g0: float
    g1: float
    g2: float
    g3: float
    d: int
    a: float
    n: int
    g22: Optional[float] = None
    gbar03: Optional[float] = None
    gbar23: Optional[float] = None

    @classmethod
    def from_table(cls, table: GreenTable) -> "GValues":
        d = table.d

        def unit(*pairs):
            v = [0] * d
            for axis, value in pairs:
                v[axis] = value
            return tuple(v)

        g22 = table.n_value(unit((0, 2), (1, 2))) if unit((0, 2), (1, 2)) in table else None
        return cls(
            g0=table.n_value(unit()),
            g1=table.n_value(unit((0, 1))),
            g2=table.n_value(unit((0, 2))),
            g3=table.n_value(unit((0, 1), (1, 1))),
            d=d, a=table.a, n=table.n, g22=g22,
        )

    @classmethod
    def from_infinite(cls, d: int, a: float, n: int = 1, tol: float = 1e-12) -> "GValues":
        keys = [(0,) * d, (1,) + (0,) * (d - 1), (2,) + (0,) * (d - 1),
                (1, 1) + (0,) * (d - 2), (2, 2) + (0,) * (d - 2)]
        return cls.from_table(green_infinite_many(d, a, n, keys, tol=tol))

    @staticmethod
    def from_potential_2d() -> Dict[str, float]:
        """Exact a → 0 differences of the two-dimensional lattice potential."""
        return {
            'gbar03': 1.0 / math.pi,
            'gbar02': 1.0 - 2.0 / math.pi,
            'gbar23': 3.0 / math.pi - 1.0,
            'gbar0_22': 4.0 / (3.0 * math.pi),
        }

    def identity_residuals(self) -> Tuple[float, float]:
        """Residuals of g1 = (1+a)g0 - 1/(2d) and the g2 relation."""
        d, a = self.d, self.a
        r1 = self.g1 - ((1 + a) * self.g0 - 1.0 / (2 * d))
        r2 = self.g2 - ((2 * d * (1 + a) ** 2 - 1) * self.g0 - 2 * (d - 1) * self.g3 - (1 + a))
        return r1, r2

    def green_matrix_zero(self) -> np.ndarray:
        """n𝒢(0) assembled from g0..g3 by isotropy."""
        qs = q_vectors(self.d)
        size = len(qs)
        out = np.empty((size, size))
        lookup = {0: self.g0, 1: self.g1}
        for i, q_i in enumerate(qs):
            for j, q_j in enumerate(qs):
                diff = [b - a for a, b in zip(q_i, q_j)]
                norm = l1_norm(diff)
                if norm < 2:
                    out[i, j] = lookup[norm]
                else:
                    out[i, j] = self.g2 if max(abs(c) for c in diff) == 2 else self.g3
        return out


def _p0_brackets(g0: float, g3: float, d: int, a: float, middle_a_power: int = 2) -> Tuple[float, float]:
    single = 2 * (1 - d * (g0 - g3)) + (1 - 4 * d * g0) * a - 2 * d * g0 * a ** middle_a_power
    squared = 2 * (d - 1) * (g0 - g3) - (1 - 4 * d * g0) * a + 2 * d * g0 * a ** 2
    return single, squared


def p0_closed_form(gv: GValues, variant: str = "corrected") -> float:
    """P₀ as a product of brackets in g0, g2, g3.

    variant="as_printed" ends the first bracket in -2d·g0·a instead of
    -2d·g0·a²; variant="gamma2_doubled" uses nG(2e_1+2e_2) in place of g3.
    """
    d, a, n = gv.d, gv.a, gv.n
    g0, g2, g3 = gv.g0, gv.g2, gv.g3
    power = 2
    if variant == "as_printed":
        power = 1
    elif variant == "gamma2_doubled":
        if gv.g22 is None:
            raise InputError("gamma2_doubled variant needs nG(2e1+2e2)")
        g3 = gv.g22
        g2 = (2 * d * (1 + a) ** 2 - 1) * g0 - 2 * (d - 1) * g3 - (1 + a)
    elif variant != "corrected":
        raise InputError(f"unknown closed-form variant {variant!r}")
    single, squared = _p0_brackets(g0, g3, d, a, power)
    tail = ((1 - (g0 - g3)) ** 2 - (g2 - g3) ** 2) ** (d - 2)
    return (1 - 2 * d * a * g0) / (2 * d * n) * single * squared ** 2 * tail


def p0_compact(gv: GValues) -> float:
    """(1 - 2da g0)/(2dn) · (1 - g0 + g2)^d · (1 - g0 - g2 + 2g3)^{d-1}."""
    d, a, n = gv.d, gv.a, gv.n
    return ((1 - 2 * d * a * gv.g0) / (2 * d * n)
            * (1 - gv.g0 + gv.g2) ** d * (1 - gv.g0 - gv.g2 + 2 * gv.g3) ** (d - 1))


def p0_small_a_limit(d: int, gbar03: float, gbar23: float, n: int = 1) -> float:
    """Limit of the closed form when a → 0 with the differences g0-g3, g2-g3 fixed."""
    single = 2 * (1 - d * gbar03)
    squared = 2 * (d - 1) * gbar03
    tail = ((1 - gbar03) ** 2 - gbar23 ** 2) ** (d - 2)
    return single * squared ** 2 * tail / (2 * d * n)


# --- R-form reduction ---------------------------------------------------------

R_FORM_KEYS = ('u', 'b', 'c', 'q', 'e', 'f', 'v', 'h', 's', 't', 'k')


def _r_weights(d: int, n: int) -> np.ndarray:
    w = np.ones(2 * d)
    w[-1] = 1.0 - 1.0 / n
    return w


def _r_core(d: int, f: float, v: float, h: float, s: float, t: float, k: float) -> np.ndarray:
    """The 2d x 2d block K before column weights."""
    eye = np.eye(d)
    ones = np.ones((d, d))
    return np.block([
        [f * ones + (v - f) * eye, f * ones + (h - f) * eye],
        [s * ones + (t - s) * eye, s * ones + (k - s) * eye],
    ])


def r_form_matrix(d: int, n: int, u, b, c, q, e, f, v, h, s, t, k) -> np.ndarray:
    size = 2 * d + 1
    w = _r_weights(d, n)
    R = np.empty((size, size))
    R[0, 0] = u
    R[0, 1:d + 1] = b
    R[0, d + 1:] = c * w[d:]
    R[1:d + 1, 0] = q
    R[d + 1:, 0] = e
    R[1:, 1:] = np.eye(2 * d) + _r_core(d, f, v, h, s, t, k) * w[None, :]
    return R


def r_form_parameters(matrix: np.ndarray, d: int, n: int, atol: float = 1e-9) -> Dict[str, float]:
    """Read (u, b, c, q, e, f, v, h, s, t, k) off a matrix with the R pattern."""
    M = np.asarray(matrix, dtype=float)
    if M.shape != (2 * d + 1, 2 * d + 1):
        raise InputError(f"R-form matrix must be {(2 * d + 1,) * 2}, got {M.shape}")
    if d < 2:
        raise InputError("R-form needs d >= 2")
    params = {
        'u': M[0, 0], 'b': M[0, 1], 'c': M[0, d + 1], 'q': M[1, 0], 'e': M[d + 1, 0],
        'f': M[1, 2], 'v': M[1, 1] - 1.0, 'h': M[1, d + 1],
        's': M[d + 1, 2], 't': M[d + 1, 1], 'k': M[d + 1, d + 1] - 1.0,
    }
    rebuilt = r_form_matrix(d, n, *(params[key] for key in R_FORM_KEYS))
    scale = max(1.0, float(np.abs(M).max()))
    if not np.allclose(rebuilt, M, atol=atol * scale, rtol=0.0):
        worst = float(np.abs(rebuilt - M).max())
        raise InputError(f"matrix does not have the R pattern (max deviation {worst:.3g})")
    return {key: float(value) for key, value in params.items()}


def _quotient_basis(d: int) -> np.ndarray:
    """Columns: a basis of the invariant subspace, then 1₊, 1₋, e_d⁺, e_d⁻."""
    columns = []
    for block in range(2):
        for i in range(1, d - 1):
            vec = np.zeros(2 * d)
            vec[block * d + i] = 1.0
            vec[block * d] = -1.0
            columns.append(vec)
    for block in range(2):
        vec = np.zeros(2 * d)
        vec[block * d:(block + 1) * d] = 1.0
        columns.append(vec)
    for block in range(2):
        vec = np.zeros(2 * d)
        vec[block * d + d - 1] = 1.0
        columns.append(vec)
    return np.column_stack(columns)


def reduced_determinant(matrix: np.ndarray, d: int, n: int) -> float:
    """det R = u · [(1+v-f)(1+k-s) - (h-f)(t-s)]^{d-2} · det S.

    After eliminating the first row and column, the vectors that sum to zero
    on each block and vanish on e_d span an invariant subspace where the
    matrix acts as a 2 x 2 block; S is the 4 x 4 action on the quotient.
    """
    rp = r_form_parameters(matrix, d, n)
    if abs(rp['u']) < SINGULAR_BELOW:
        raise SingularMatrixError("pivot u vanishes in the R-form reduction", estimate=rp['u'])
    M = np.asarray(matrix, dtype=float)
    schur = M[1:, 1:] - np.outer(M[1:, 0], M[0, 1:]) / rp['u']
    basis = _quotient_basis(d)
    S = np.linalg.solve(basis, schur @ basis)[-4:, -4:]
    block = (1 + rp['v'] - rp['f']) * (1 + rp['k'] - rp['s']) - (rp['h'] - rp['f']) * (rp['t'] - rp['s'])
    return rp['u'] * block ** (d - 2) * lu_det(S)


def m_matrix(gv: GValues) -> np.ndarray:
    """m in R form with the isotropic substitutions."""
    d, a = gv.d, gv.a
    g0, g1, g2, g3 = gv.g0, gv.g1, gv.g2, gv.g3
    return r_form_matrix(d, gv.n,
                         u=1 - 2 * d * a * g0, b=g0 - g1, c=g0 - g1,
                         q=1 - 2 * d * a * g1, e=1 - 2 * d * a * g1,
                         f=g1 - g3, v=g1 - g0, h=g1 - g2,
                         s=g1 - g3, t=g1 - g2, k=g1 - g0)


def m_from_green(source: GreenTable, model: ModelLike, layout: str = "symmetric") -> np.ndarray:
    """m built literally: E + n𝒢(0)ℬ with all columns added into the first."""
    model, defect = _model_and_defect(source, model, layout)
    G0 = reduced_green_matrix(source).entries
    m1 = np.eye(G0.shape[0]) + model.n * G0 @ defect.B
    m = m1.copy()
    m[:, 0] = m1.sum(axis=1)
    return m


def _gauge(d: int, lam: float) -> np.ndarray:
    """α_i = e^{λ σ(q_i)}, σ the coordinate sum."""
    return np.array([math.exp(lam * sum(qv)) for qv in q_vectors(d)])


def m_prime(gv: GValues, lam: float) -> np.ndarray:
    """Rows i >= 1 of m minus α_i times row 0; det m'(±λ) = det m."""
    m = m_matrix(gv)
    alpha = _gauge(gv.d, lam)
    out = m.copy()
    out[1:] -= alpha[1:, None] * m[0][None, :]
    return out


def m_bar(gv: GValues, lam: float) -> np.ndarray:
    d, n, a = gv.d, gv.n, gv.a
    out = m_prime(gv, lam)
    out[0, 0] = -2 * d * a
    out[0, 1:d + 1] = 1 - math.exp(lam)
    out[0, d + 1:] = (1 - math.exp(-lam)) * _r_weights(d, n)[d:]
    return out


def m_star(gv: GValues, lam: float) -> np.ndarray:
    """m̄ with its first row and column divided by √a, so det m̄ = a det m*."""
    out = m_bar(gv, lam)
    root = math.sqrt(gv.a)
    out[0, :] /= root
    out[:, 0] /= root
    return out


def m_star_r_form(gv: GValues, lam: float) -> np.ndarray:
    """m*(λ) from the R-form substitutions."""
    d, a = gv.d, gv.a
    g0, g1, g2, g3 = gv.g0, gv.g1, gv.g2, gv.g3
    ep, em = math.exp(lam), math.exp(-lam)
    root = math.sqrt(a)
    return r_form_matrix(d, gv.n,
                         u=-2 * d,
                         b=(1 - ep) / root, c=(1 - em) / root,
                         q=(1 - ep) / root - 2 * d * root * (g1 - ep * g0),
                         e=(1 - em) / root - 2 * d * root * (g1 - em * g0),
                         f=(g1 - g3) - ep * (g0 - g1), v=(g1 - g0) - ep * (g0 - g1),
                         h=(g1 - g2) - ep * (g0 - g1),
                         s=(g1 - g3) - em * (g0 - g1), k=(g1 - g0) - em * (g0 - g1),
                         t=(g1 - g2) - em * (g0 - g1))


def _det_m(gv: GValues) -> float:
    det_m = lu_det(m_matrix(gv))
    if abs(det_m) < SINGULAR_BELOW:
        raise SingularMatrixError(f"det m = {det_m:.3g} is numerically zero", estimate=det_m)
    return det_m


def c2_factor(gv: GValues) -> float:
    """c₂ = -(a c₁)² det m*(λ) det m*(-λ) / (det m)².

    C₀₀ is negative at large separation, hence the leading minus sign.
    """
    ap = asymptotic_params(gv.d, gv.a)
    lam = ap.lam
    det_m = _det_m(gv)
    plus = lu_det(m_star(gv, lam))
    minus = lu_det(m_star(gv, -lam))
    return -(gv.a * ap.c1) ** 2 * plus * minus / det_m ** 2


def gauge_overlap(gv: GValues, lam: float, layout: str = "symmetric") -> float:
    """φ(λ) = αᵀℬ m₀⁻¹ α with m₀ = E + n𝒢(0)ℬ."""
    defect = DefectMatrix(gv.d, gv.n, gv.a, layout)
    m0 = np.eye(2 * gv.d + 1) + gv.green_matrix_zero() @ defect.B
    alpha = _gauge(gv.d, lam)
    return float(alpha @ defect.B @ np.linalg.solve(m0, alpha))


def c2_from_overlap(gv: GValues) -> float:
    """c₂ = -c₁² φ(λ) φ(-λ), from the rank-one form of the far blocks."""
    ap = asymptotic_params(gv.d, gv.a)
    return -ap.c1 ** 2 * gauge_overlap(gv, ap.lam) * gauge_overlap(gv, -ap.lam)


def c2_small_a_limit(d: int, gbar: float) -> float:
    """Limit of c₂ / a^{(d+1)/2} as a → 0, with γ̄ = lim (g0 - g3).

    Sign convention: c₂ = -c₁² φ(λ) φ(-λ) carries the sign of C₀₀, which is
    negative at large separation, so the limit is negative. Its magnitude
    is the amplitude of |C₀₀| r^{d-1} e^{2r/ξ}.
    """
    bracket = d * (1 + (d - 1) * gbar) / (2 * math.pi * (d - 1) * gbar)
    return -(d / (2 * math.pi ** 2)) ** ((d - 3) / 2.0) * bracket ** 2


# --- report ----------------------------------------------------------------------

@dataclass
class HeightReport:
    model: HeightModel
    P0_det: float
    P0_closed: Dict[str, float]
    pairs: List[PairResult]
    c2: float
    c2_mstar: float
    xi: float
    lam: float
    c1: float
    provenance: Dict[str, str] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)

    def pairs_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'r': pr.r, 'P00': pr.P00, 'C00': pr.C00, 'reliable_flag': pr.reliable} for pr in self.pairs],
            columns=['r', 'P00', 'C00', 'reliable_flag'])

    def summary(self) -> dict:
        return {
            'P0_det': self.P0_det,
            'P0_closed': self.P0_closed['corrected'],
            'P0_closed_variants': self.P0_closed,
            'c2': self.c2,
            'c2_mstar': self.c2_mstar,
            'xi': self.xi,
            'lambda': self.lam,
            'c1': self.c1,
            'provenance': self.provenance,
            'tolerances': self.tolerances,
        }


def height_report(d: int, a: float, n: int = 1, r_max: int = 12, tol: float = 1e-12,
                  layout: str = "symmetric", workers: int = 1) -> HeightReport:
    """P₀, P₀₀/C₀₀ along the diagonal x = (k, ..., k), k = 1..r_max, and c₂."""
    model = HeightModel(d, float(a), n)
    needed = set(required_displacements(d))
    for k in range(1, r_max + 1):
        needed |= required_displacements(d, (k,) * d)
    needed.add((2, 2) + (0,) * (d - 2))
    table = green_infinite_many(d, a, n, needed, tol=tol, workers=workers)
    logger.info("Height report: %d propagator values for d=%d, a=%g", len(table), d, a)

    P0 = p0_determinantal(table, model, layout)
    gv = GValues.from_table(table)
    closed = {}
    for variant in ("corrected", "as_printed", "gamma2_doubled"):
        closed[variant] = p0_closed_form(gv, variant)
    pairs = [p00_c00(table, model, (k,) * d, layout, p0=P0) for k in range(1, r_max + 1)]
    ap = asymptotic_params(d, a)
    return HeightReport(
        model=model, P0_det=P0, P0_closed=closed, pairs=pairs,
        c2=c2_from_overlap(gv), c2_mstar=c2_factor(gv),
        xi=ap.xi, lam=ap.lam, c1=ap.c1,
        provenance={'P0_det': 'determinantal', 'P0_closed': 'closed_form', 'P00': 'determinantal',
                    'c2': 'gauge_overlap', 'c2_mstar': 'm_star_determinants', 'layout': layout},
        tolerances={'green_abs': tol, 'unreliable_below': UNRELIABLE_BELOW},
    )
