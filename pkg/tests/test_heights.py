"""
Test Heights - Determinantal height probabilities

Testes de P₀ (forma determinantal, forma fechada e rede completa), de
P₀₀/C₀₀, da redução em forma R e do fator de amplitude c₂.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add project root to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.Modules.errors import InputError
from src.Modules.Heights.determinants import (DefectMatrix, GValues, HeightModel, c2_factor, c2_from_overlap,
                                              c2_small_a_limit, height_report, lu_det, m_bar, m_from_green,
                                              m_matrix, m_prime, m_star, m_star_r_form, p00_c00,
                                              p00_full_lattice, p0_closed_form, p0_compact, p0_determinantal,
                                              p0_full_lattice, p0_small_a_limit, q_vectors, r_form_parameters,
                                              reduced_determinant, required_displacements)
from src.Modules.Lattice.torus import ModelParams
from src.Modules.Propagators.green import asymptotic_params, green_finite_table, green_infinite_many

SLOW = os.environ.get("SANDLAB_SLOW") == "1"
P0_BTW_2D = 2.0 / math.pi ** 2 * (1.0 - 2.0 / math.pi)


def _infinite_table(d, a, n, extra=()):
    needed = set(required_displacements(d))
    needed.add((2, 2) + (0,) * (d - 2))
    for x in extra:
        needed |= required_displacements(d, x)
    return green_infinite_many(d, a, n, needed, tol=1e-12)


# ===============================================================================
# DEFECT MATRIX AND GEOMETRY
# ===============================================================================

def test_q_vectors_order():
    assert q_vectors(2) == [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)]


@pytest.mark.parametrize("n", [1, 3])
def test_defect_matrix_layouts(n):
    d, a = 2, 0.25
    sym = DefectMatrix(d, n, a, "symmetric").B
    printed = DefectMatrix(d, n, a, "as_printed").B
    assert np.array_equal(sym, sym.T)
    assert np.array_equal(sym[0], printed[0])
    assert sym[0].sum() == pytest.approx(-2 * d * a)
    assert np.count_nonzero(printed[1:, 0]) == 0
    with pytest.raises(InputError):
        DefectMatrix(d, n, a, "mirrored")


def test_table_model_mismatch():
    table = green_infinite_many(2, 0.25, 1, required_displacements(2), tol=1e-10)
    with pytest.raises(InputError):
        p0_determinantal(table, HeightModel(2, 0.5, 1))
    with pytest.raises(InputError):
        HeightModel(2, 0.0, 1)


# ===============================================================================
# P0
# ===============================================================================

@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("a", [0.05, 0.1, 0.25, 0.5])
@pytest.mark.parametrize("n", [1, 2, 4])
def test_closed_form_matches_determinant(d, a, n):
    table = _infinite_table(d, a, n)
    model = HeightModel(d, a, n)
    gv = GValues.from_table(table)
    det = p0_determinantal(table, model)
    assert p0_closed_form(gv) == pytest.approx(det, abs=1e-8)
    assert p0_compact(gv) == pytest.approx(det, abs=1e-8)
    assert 0 < det < 1


def test_closed_form_variants_differ():
    gv = GValues.from_table(_infinite_table(2, 0.5, 1))
    corrected = p0_closed_form(gv)
    assert abs(p0_closed_form(gv, "as_printed") - corrected) > 1e-3
    assert np.isfinite(p0_closed_form(gv, "gamma2_doubled"))
    with pytest.raises(InputError):
        p0_closed_form(gv, "other")


@pytest.mark.parametrize("L", [3, 4])
@pytest.mark.parametrize("layout", ["symmetric", "as_printed"])
def test_full_lattice_equals_reduced(L, layout):
    p = ModelParams(2, L, 1, 1)
    table = green_finite_table(p)
    assert p0_full_lattice(p, layout) == pytest.approx(p0_determinantal(table, p, layout), abs=1e-9)
    for x in [(1, 1), (2, 0), (2, 1)]:
        pair = p00_c00(table, p, x, layout)
        assert p00_full_lattice(p, x, layout) == pytest.approx(pair.P00, abs=1e-9)


def test_p00_preconditions():
    p = ModelParams(2, 3, 1, 1)
    table = green_finite_table(p)
    with pytest.raises(InputError):
        p00_c00(table, p, (1, 0))
    with pytest.raises(InputError):
        p00_c00(table, p, (3, 0))
    with pytest.raises(InputError):
        p00_full_lattice(p, (0, -1))


def test_btw_limit_value():
    limits = GValues.from_potential_2d()
    assert p0_small_a_limit(2, limits['gbar03'], limits['gbar23']) == pytest.approx(P0_BTW_2D, rel=1e-14)
    assert P0_BTW_2D == pytest.approx(0.073636, abs=1e-6)


def test_p0_extrapolates_to_btw_limit():
    a_values = np.array([1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
    p0 = []
    for a in a_values:
        table = _infinite_table(2, float(a), 1)
        p0.append(p0_determinantal(table, HeightModel(2, float(a), 1)))
    design = np.column_stack([np.ones_like(a_values), a_values, a_values * np.log(a_values)])
    coef, *_ = np.linalg.lstsq(design, np.array(p0), rcond=None)
    assert abs(coef[0] - P0_BTW_2D) <= 1e-3


# ===============================================================================
# R-FORM AND m MATRICES
# ===============================================================================

@pytest.mark.parametrize("d,a,n", [(2, 0.25, 1), (3, 0.1, 2), (4, 0.3, 3)])
def test_m_matrix_and_reduction(d, a, n):
    table = _infinite_table(d, a, n)
    gv = GValues.from_table(table)
    m = m_matrix(gv)
    assert np.allclose(m_from_green(table, HeightModel(d, a, n)), m, atol=1e-12)
    det = lu_det(m)
    assert det == pytest.approx(p0_determinantal(table, HeightModel(d, a, n)), abs=1e-12)
    assert reduced_determinant(m, d, n) == pytest.approx(det, rel=1e-10)

    lam = asymptotic_params(d, a).lam
    for sign in (1, -1):
        assert lu_det(m_prime(gv, sign * lam)) == pytest.approx(det, rel=1e-10)
        star = m_star(gv, sign * lam)
        assert np.allclose(star, m_star_r_form(gv, sign * lam), atol=1e-12)
        assert lu_det(m_bar(gv, sign * lam)) == pytest.approx(a * lu_det(star), rel=1e-10)


def test_r_form_rejects_other_patterns():
    rng = np.random.default_rng(0)
    with pytest.raises(InputError):
        r_form_parameters(rng.normal(size=(5, 5)), 2, 1)
    with pytest.raises(InputError):
        r_form_parameters(np.eye(4), 2, 1)


# ===============================================================================
# C00 AND c2
# ===============================================================================

@pytest.mark.parametrize("d,a", [(2, 0.25), (3, 0.1)])
def test_c2_routes_agree(d, a):
    gv = GValues.from_table(_infinite_table(d, a, 1))
    c2 = c2_factor(gv)
    assert c2 < 0
    assert c2_from_overlap(gv) == pytest.approx(c2, rel=1e-8)


def test_c2_small_a_limit():
    limit = c2_small_a_limit(2, 1.0 / math.pi)
    assert limit == pytest.approx(-(math.pi + 1) ** 2 / math.pi, rel=1e-14)
    deviations = []
    for a in (1e-2, 1e-3, 1e-4):
        gv = GValues.from_table(_infinite_table(2, a, 1))
        primary = c2_from_overlap(gv)
        # same sign as the limit: both follow C00 < 0
        assert primary < 0
        deviations.append(abs(primary / a ** 1.5 / limit - 1.0))
    assert deviations[-1] <= 0.05
    assert deviations[2] < deviations[0]


@pytest.mark.parametrize("d,a", [(2, 0.25), (3, 0.25)])
def test_pair_probability_factorizes_at_large_separation(d, a):
    ks = list(range(2, 11))
    table = _infinite_table(d, a, 1, extra=[(k,) * d for k in ks])
    model = HeightModel(d, a, 1)
    p0 = p0_determinantal(table, model)
    pairs = [p00_c00(table, model, (k,) * d, p0=p0) for k in ks]
    gaps = [abs(pr.P00 - p0 ** 2) for pr in pairs]
    assert all(later < earlier for earlier, later in zip(gaps[1:4], gaps[2:4]))
    assert gaps[-1] <= 1e-8 * p0 ** 2


def test_c00_tail_matches_c2():
    d, a = 2, 0.02
    ks = list(range(6, 19))
    table = _infinite_table(d, a, 1, extra=[(k, k) for k in ks])
    model = HeightModel(d, a, 1)
    p0 = p0_determinantal(table, model)
    ap = asymptotic_params(d, a)
    r = np.array([k * math.sqrt(d) for k in ks])
    c00 = np.array([p00_c00(table, model, (k, k), p0=p0).C00 for k in ks])
    assert np.all(c00 < 0)
    # C00 r^{d-1} e^{2r/ξ} = c2 (1 + O(1/r))
    scaled = c00 * r ** (d - 1) * np.exp(2 * r / ap.xi)
    design = np.column_stack([np.ones_like(r), 1.0 / r])
    coef, *_ = np.linalg.lstsq(design, scaled, rcond=None)
    c2 = c2_factor(GValues.from_table(table))
    assert coef[0] == pytest.approx(c2, rel=0.2)


def test_height_report():
    report = height_report(2, 0.25, 1, r_max=5)
    assert report.P0_det == pytest.approx(report.P0_closed['corrected'], abs=1e-8)
    frame = report.pairs_frame()
    assert list(frame.columns) == ['r', 'P00', 'C00', 'reliable_flag']
    assert len(frame) == 5
    assert frame['r'].tolist() == pytest.approx([k * math.sqrt(2) for k in range(1, 6)])
    summary = report.summary()
    assert summary['xi'] == pytest.approx(1.0 / (math.sqrt(2) * math.log(2)))
    assert summary['c2'] < 0
    assert summary['c2'] == pytest.approx(c2_from_overlap(GValues.from_table(_infinite_table(2, 0.25, 1))), rel=1e-8)
    assert summary['c2_mstar'] == pytest.approx(summary['c2'], rel=1e-8)
    assert 'c2_overlap' not in summary
    assert summary['provenance']['c2'] == 'gauge_overlap'


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
