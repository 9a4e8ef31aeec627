"""
Test Green - Avalanche propagators

Testes das funções de Bessel escaladas, do propagador em volume finito
(soma de Fourier e inversa densa), do volume infinito (quadratura adaptativa
e produto tensorial) e das formas assintóticas.
"""

import math
import os
import sys

import numpy as np
import pytest
from scipy import special

# Add project root to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.Modules.errors import InputError
from src.Modules.Heights.determinants import GValues
from src.Modules.Lattice.torus import ModelParams, delta_dense, get_lattice
from src.Modules.Propagators.bessel import recurrence_start, scaled_bessel, scaled_bessel_table
from src.Modules.Propagators.green import (GreenTable, asymptotic_params, canonical_key, decay_rate, gbar,
                                           gbar_offset, green_finite, green_finite_array, green_finite_table,
                                           green_infinite, green_infinite_many, green_saddle_estimate,
                                           green_tensor_quadrature, keys_within, saddle_point, saddle_residual)


# ===============================================================================
# BESSEL
# ===============================================================================

def test_scaled_bessel_matches_scipy():
    z = np.array([0.0, 1e-3, 0.5, 5.0, 50.0, 500.0, 4e5])
    table = scaled_bessel_table(30, z)
    orders = np.arange(31)
    reference = special.ive(orders[None, :], z[:, None])
    assert table.shape == (7, 31)
    assert np.allclose(table, reference, rtol=1e-10, atol=1e-300)


def test_scaled_bessel_at_zero_and_scalar():
    row = scaled_bessel_table(4, [0.0])[0]
    assert list(row) == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert scaled_bessel(3, 2.5) == pytest.approx(special.ive(3, 2.5), rel=1e-12)


def test_scaled_bessel_normalization():
    z = np.array([0.7, 30.0])
    table = scaled_bessel_table(200, z)
    # e^{-z}(I_0 + 2 Σ I_k) = 1
    assert np.allclose(table[:, 0] + 2 * table[:, 1:].sum(axis=1), 1.0, atol=1e-14)


def test_scaled_bessel_rejects_negative():
    with pytest.raises(InputError):
        scaled_bessel_table(-1, [1.0])
    with pytest.raises(InputError):
        scaled_bessel_table(3, [-1.0])


def test_recurrence_start_grows_with_argument():
    assert recurrence_start(5, 0.0) >= 45
    assert recurrence_start(5, 1e4) > recurrence_start(5, 10.0)


# ===============================================================================
# FINITE VOLUME
# ===============================================================================

@pytest.mark.parametrize("n,m", [(1, 1), (1, 2), (2, 1)])
def test_finite_fourier_matches_dense_inverse(n, m):
    p = ModelParams(2, 3, n, m)
    lattice = get_lattice(p)
    dense = np.linalg.inv(delta_dense(p)) / n
    origin = lattice.index((0, 0))
    grid = green_finite_array(p)
    for x in [(0, 0), (1, 0), (2, 1), (-3, 2), (3, 3)]:
        expected = dense[origin, lattice.index(x)]
        assert abs(green_finite(p, x) - expected) <= 1e-10
        key = tuple(c % p.period for c in x)
        assert abs(grid[key] - expected) <= 1e-10
    # Σ_y G_L(x, y) = 1/m
    assert grid.sum() == pytest.approx(1.0 / m, abs=1e-12)
    assert dense[origin].sum() == pytest.approx(1.0 / m, abs=1e-12)


def test_finite_rejects_non_minimal_displacement():
    p = ModelParams(2, 2)
    with pytest.raises(InputError):
        green_finite(p, (3, 0))
    with pytest.raises(InputError):
        green_finite(p, (1, 0, 0))


def test_finite_table_lookup_uses_minimal_image():
    p = ModelParams(2, 2, 1, 1)
    table = green_finite_table(p)
    assert table.value((1, 2)) == table.value((-2, -1))
    # (4, 0) is (-1, 0) on the 5-periodic torus
    assert table.value((4, 0)) == table.value((1, 0))
    assert len(table) == len(keys_within(2, 2))


# ===============================================================================
# INFINITE VOLUME
# ===============================================================================

@pytest.mark.parametrize("a,n,m", [(0.5, 1, 2), (0.1, 5, 2)])
def test_infinite_matches_large_torus(a, n, m):
    p = ModelParams(2, 64, n, m)
    assert float(p.a) == pytest.approx(a)
    finite = green_finite_table(p)
    keys = keys_within(2, 5)
    table = green_infinite_many(2, a, n, keys, tol=1e-12)
    for key in keys:
        assert abs(table.value(key) - finite.value(key)) <= 1e-6


@pytest.mark.parametrize("x", [(0, 0), (3, 1), (5, 5)])
def test_finite_volume_converges_monotonically(x):
    # a = 1/64: the image sum at period 2L+1 decays like exp(-0.25 (2L+1))
    n, m = 16, 1
    exact, _ = green_infinite(2, 1.0 / 64, n, x, tol=1e-12)
    errors = [abs(green_finite(ModelParams(2, L, n, m), x) - exact) for L in (8, 16, 32, 64)]
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
    assert errors[-1] < 1e-9


@pytest.mark.parametrize("d,a", [(2, 0.1), (2, 0.5), (3, 0.25)])
def test_propagator_identities(d, a):
    gv = GValues.from_infinite(d, a, 1)
    r1, r2 = gv.identity_residuals()
    assert abs(r1) <= 1e-8
    assert abs(r2) <= 1e-8


def test_tensor_quadrature_agrees_with_bessel_route():
    for x in [(0, 0), (1, 0), (2, 1), (3, 3)]:
        bessel_value, err = green_infinite(2, 0.5, 1, x, tol=1e-12)
        tensor_value, tensor_err = green_tensor_quadrature(2, 0.5, 1, x)
        assert err <= 1e-10
        assert abs(bessel_value - tensor_value) <= 1e-8
    with pytest.raises(InputError):
        green_tensor_quadrature(4, 0.5, 1, (0, 0, 0, 0))


def test_infinite_table_symmetry_and_errors():
    table = green_infinite_many(3, 0.3, 2, [(1, 2, 0)], tol=1e-10)
    v = table.value((1, 2, 0))
    assert table.value((0, -1, 2)) == v
    assert table.value((-2, 0, 1)) == v
    assert table.n_value((2, 1, 0)) == pytest.approx(2 * v)
    with pytest.raises(InputError):
        table.value((3, 0, 0))
    with pytest.raises(InputError):
        table.value((1, 2))
    frame = table.to_frame()
    assert list(frame.columns) == ['x1', 'x2', 'x3', 'value', 'est_abs_error', 'method']


def test_infinite_argument_checks():
    with pytest.raises(InputError):
        green_infinite(1, 0.5, 1, (0,))
    with pytest.raises(InputError):
        green_infinite(2, 0.0, 1, (0, 0))
    with pytest.raises(InputError):
        green_infinite(2, 0.5, 1, (0, 0), tol=1e-15)
    with pytest.raises(InputError):
        GreenTable({}, {}, "bogus", 2, 0.5, 1)


def test_parallel_table_matches_serial():
    keys = keys_within(2, 3)
    serial = green_infinite_many(2, 0.2, 1, keys, tol=1e-11)
    parallel = green_infinite_many(2, 0.2, 1, keys, tol=1e-11, workers=2)
    for key in keys:
        assert parallel.value(key) == pytest.approx(serial.value(key), abs=1e-13)


def test_green_decreases_with_distance():
    table = green_infinite_many(2, 0.25, 1, [(k, k) for k in range(6)], tol=1e-12)
    values = [table.value((k, k)) for k in range(6)]
    assert all(b < a for a, b in zip(values, values[1:]))


# ===============================================================================
# ASYMPTOTICS
# ===============================================================================

def test_decay_rate_identity():
    for a in np.logspace(-1, -5, 17):
        assert abs(math.asinh(math.sqrt(a * (a + 2))) - decay_rate(a)) <= 1e-14


def test_asymptotic_params_example():
    ap = asymptotic_params(2, 0.25)
    assert ap.lam == pytest.approx(math.log(2), rel=1e-14)
    assert ap.xi == pytest.approx(1.0 / (math.sqrt(2) * math.log(2)), rel=1e-14)
    assert ap.as_dict()['lambda'] == ap.lam


def test_diagonal_asymptotics():
    a, d = 0.02, 2
    ap = asymptotic_params(d, a)
    k = 12
    value, _ = green_infinite(d, a, 1, (k, k), tol=1e-12)
    r = k * math.sqrt(d)
    assert value / gbar(r, ap) == pytest.approx(1.0, abs=0.05)
    shifted, _ = green_infinite(d, a, 1, (k + 1, k), tol=1e-12)
    assert shifted / gbar_offset(r, (1, 0), ap) == pytest.approx(1.0, abs=0.06)


def test_saddle_point_estimate():
    x = (6, 6)
    s0 = saddle_point(x, 2, 0.25)
    assert abs(saddle_residual(x, 2, 0.25, s0)) <= 1e-10
    value, _ = green_infinite(2, 0.25, 1, x, tol=1e-12)
    assert green_saddle_estimate(x, 2, 0.25) == pytest.approx(value, rel=0.1)
    with pytest.raises(InputError):
        saddle_point((0, 0), 2, 0.25)


def test_canonical_key():
    assert canonical_key((-3, 1, 0)) == (0, 1, 3)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
