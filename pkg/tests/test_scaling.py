"""
Test Scaling - Correlation-length exponent and scaling functions

Testes das varreduras em a, do ajuste de ν_a, dos ajustes de taxas de
decaimento e das funções de escala ℱ_G e ℱ_C.
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
from src.Modules.Heights.determinants import c2_small_a_limit
from src.Modules.Propagators.green import asymptotic_params
from src.Modules.Scaling.sweep import (SweepSpec, c00_decay, c2_scaling_prediction, fit_decay_rate,
                                       fit_power_law, parse_a_grid, propagator_decay, scaling_function_C,
                                       scaling_function_G, scaling_function_check, xi_sweep_and_fit)


def test_parse_a_grid():
    grid = parse_a_grid("1e-1:1e-5:log", 17)
    assert len(grid) == 17
    assert grid[0] == pytest.approx(1e-1)
    assert grid[-1] == pytest.approx(1e-5)
    assert all(b < a for a, b in zip(grid, grid[1:]))
    assert parse_a_grid("0.01,0.1,0.05") == [0.1, 0.05, 0.01]
    with pytest.raises(InputError):
        parse_a_grid("1e-1:-1:log")
    with pytest.raises(InputError):
        parse_a_grid("1e-1:1e-3:cubic")
    with pytest.raises(InputError):
        parse_a_grid("0.1:0.2")
    with pytest.raises(InputError):
        parse_a_grid("0.1,abc")


def test_sweep_spec_validation():
    with pytest.raises(InputError):
        SweepSpec(2, [0.1, 0.0])
    with pytest.raises(InputError):
        SweepSpec(2, [0.1, 0.01], fit_window=(1e-3, 0.1))
    with pytest.raises(InputError):
        SweepSpec(1, [0.1])
    spec = SweepSpec.from_granularities(2, 1, [1, 2, 4, 8])
    assert spec.a_values == [0.25, 0.125, 0.0625, 0.03125]


def test_power_law_fit_recovers_synthetic_exponent():
    a = np.logspace(-1, -5, 9)
    fit = fit_power_law(a, 0.7 * a ** -0.5)
    assert fit.nu_a == pytest.approx(0.5, abs=1e-12)
    assert fit.prefactor == pytest.approx(0.7, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InputError):
        fit_power_law(a[:3], a[:3] ** -0.5)


@pytest.mark.parametrize("d", [2, 3])
def test_nu_a_is_one_half(d):
    spec = SweepSpec(d, parse_a_grid("1e-1:1e-5:log", 17))
    fit = xi_sweep_and_fit(spec)
    assert fit.nu_a == pytest.approx(0.5, abs=0.01)
    assert fit.prefactor == pytest.approx(1.0 / math.sqrt(2 * d), rel=0.02)
    assert fit.lambda_identity_max_dev <= 1e-14
    frame = fit.to_frame()
    assert list(frame.columns) == ['a', 'xi', 'residual']


def test_residuals_shrink_toward_small_a():
    grid = parse_a_grid("1e-1:1e-5:log", 17)
    coarse = xi_sweep_and_fit(SweepSpec(2, grid, fit_window=(1e-3, 1e-1)))
    fine = xi_sweep_and_fit(SweepSpec(2, grid, fit_window=(1e-5, 1e-3)))
    assert np.abs(fine.residuals).max() < np.abs(coarse.residuals).max()
    assert abs(fine.nu_a - 0.5) < abs(coarse.nu_a - 0.5)


def test_fit_decay_rate_on_exact_exponential():
    r = np.linspace(2, 20, 10)
    fit = fit_decay_rate(r, 3.0 * np.exp(-0.4 * r) / r, power=1.0)
    assert fit.rate == pytest.approx(0.4, rel=1e-12)
    with pytest.raises(InputError):
        fit_decay_rate(r[:3], r[:3], 0.0)
    with pytest.raises(InputError):
        fit_decay_rate(r, np.zeros_like(r), 0.0)


def test_propagator_and_c00_decay_rates():
    d, a = 2, 0.02
    xi = asymptotic_params(d, a).xi
    fit, frame = propagator_decay(d, a, k_values=range(6, 21))
    assert fit.rate == pytest.approx(1.0 / xi, rel=0.03)
    assert len(frame) == 15

    c00_fit, pairs = c00_decay(d, a)
    assert c00_fit.rate == pytest.approx(2.0 / xi, rel=0.05)
    assert pairs['reliable'].any()


def test_scaling_function_values():
    assert scaling_function_G(1.0, 2) == pytest.approx(2 ** -1.5 / math.sqrt(math.pi) / math.e, rel=1e-14)
    bracket = (1 + 1 / math.pi) / (1 / math.pi)
    expected = 2 ** -3 / math.pi * bracket ** 2 * math.exp(-2)
    assert scaling_function_C(1.0, 2, 1 / math.pi) == pytest.approx(expected, rel=1e-14)
    for d in (2, 3):
        for kappa in (0.8, 1.0, 2.5):
            gbar = 1 / math.pi if d == 2 else 0.3
            assert c2_scaling_prediction(kappa, d, gbar) == pytest.approx(
                scaling_function_C(kappa, d, gbar), rel=1e-12)
    assert c2_small_a_limit(2, 1 / math.pi) < 0


def test_scaling_function_check_converges():
    table = scaling_function_check(2, [1.0], a_values=(1e-2, 1e-3, 1e-4), with_c00=True)
    assert list(table['a']) == [1e-2, 1e-3, 1e-4]
    last = table.iloc[-1]
    assert abs(last['ratio_G'] - 1.0) < 0.10
    # the lattice result approaches the continuum propagator K0(κ)/(2π)
    continuum = special.k0(last['kappa_achieved']) / (2 * math.pi) / last['F_G']
    assert last['ratio_G'] == pytest.approx(continuum, rel=0.02)
    gaps = [abs(row['ratio_G'] - special.k0(row['kappa_achieved']) / (2 * math.pi) / row['F_G'])
            for _, row in table.iterrows()]
    assert gaps[-1] <= gaps[0]
    assert {'C_scaled', 'reliable', 'F_C[e1+e2]', 'F_C[2e1+2e2]'} <= set(table.columns)


def test_scaling_check_rejects_kappa_range():
    with pytest.raises(InputError):
        scaling_function_check(2, [0.2], a_values=(1e-2,))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
