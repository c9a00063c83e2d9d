import math

import numpy as np
import pytest

from conftest import MA1_CAPACITY, MA2_TABLE, POWER
from fbcap.dualopt import DualSolution
from fbcap.freqgrid import DualPoint, build_grid
from fbcap.spectra import NoiseModel
from fbcap.synthesis import (
    DegenerateDualPointError,
    DegenerateFilterError,
    FirFilter,
    SampledSpectrum,
    achievable_rate,
    conjugate_residue,
    discretized_power,
    fourier_coeffs,
    power_of_filter,
    power_scale,
    primal_objective,
    rate_by_quadrature,
    rate_by_roots,
    recover_ab,
    synthesize,
)

FLAT = NoiseModel(num=(1.0,))


def _solution(point, grid):
    return DualSolution(point=point, value_nats=0.0, iterations=0, certificate=0.0, power=POWER, m=grid.m, h=grid.h)


def test_recover_ab_without_eta_is_real(ma2):
    grid = build_grid(8, 2, ma2)
    spec = recover_ab(_solution(DualPoint(lam=0.4, eta=[0.0, 0.0], eta0=0.1), grid), grid)
    assert np.all(spec.b == 0.0)


def test_recover_ab_rejects_degenerate_nu(ma2):
    grid = build_grid(8, 1, ma2)
    point = DualPoint(lam=0.4, eta=[0.0], eta0=0.0, nu=np.full(grid.size, 1e-16))
    with pytest.raises(DegenerateDualPointError, match="degenerate dual point"):
        recover_ab(_solution(point, grid), grid)


def test_recovered_spectrum_is_conjugate_symmetric(ma2_sweep):
    final = ma2_sweep[-1]
    spec = recover_ab(final.solution, final.grid)
    mirror = final.grid.mirror_index()
    assert np.allclose(spec.a, spec.a[mirror], atol=1e-12)
    assert np.allclose(spec.b, -spec.b[mirror], atol=1e-12)
    assert abs(spec.b[0]) <= 1e-12 and abs(spec.b[final.grid.m]) <= 1e-12


def test_strong_duality_at_every_optimum(ma2_sweep):
    for sweep in ma2_sweep:
        spec = recover_ab(sweep.solution, sweep.grid)
        assert primal_objective(spec) == pytest.approx(-sweep.solution.value_nats, abs=1e-6)
        if sweep.solution.point.lam > 1e-6:
            assert discretized_power(spec) == pytest.approx(POWER, abs=1e-4)
        assert discretized_power(spec) <= POWER + 1e-6


def test_fourier_coeffs_single_delay():
    grid = build_grid(8, 1, FLAT)
    spec = SampledSpectrum(grid=grid, a=np.cos(grid.thetas), b=-np.sin(grid.thetas))
    expected = np.zeros(8)
    expected[0] = 1.0
    assert np.allclose(fourier_coeffs(spec), expected, atol=1e-14)


def test_fourier_coeffs_constant_has_no_causal_part():
    grid = build_grid(8, 1, FLAT)
    spec = SampledSpectrum(grid=grid, a=np.full(grid.size, 0.7), b=np.zeros(grid.size))
    assert np.allclose(fourier_coeffs(spec), 0.0, atol=1e-15)


def test_fourier_coeffs_match_direct_sum():
    rng = np.random.default_rng(3)
    grid = build_grid(12, 1, FLAT)
    a, b = rng.normal(size=grid.size), rng.normal(size=grid.size)
    spec = SampledSpectrum(grid=grid, a=a, b=b)
    n = np.arange(1, grid.m + 1)[:, None]
    direct = (np.cos(n * grid.thetas) @ a - np.sin(n * grid.thetas) @ b) / grid.size
    assert np.allclose(fourier_coeffs(spec), direct, atol=1e-12)


@pytest.mark.parametrize(
    "coeffs, model, expected",
    [
        ([1.0], NoiseModel(num=(1.0,)), 1.0),
        ([0.5], NoiseModel(num=(1.0, 0.1)), 0.2525),
    ],
)
def test_power_of_filter_hand_values(coeffs, model, expected):
    assert power_of_filter(FirFilter(coeffs), model) == pytest.approx(expected, abs=1e-12)


def test_power_of_filter_matches_trapezoid(ma2):
    fir = FirFilter(np.random.default_rng(8).normal(scale=0.3, size=10))
    thetas = np.linspace(-np.pi, np.pi, 2**14, endpoint=False)
    numeric = float(np.mean(np.abs(fir.freqresp(thetas)) ** 2 * np.abs(ma2.freqresp(thetas)) ** 2))
    assert power_of_filter(fir, ma2) == pytest.approx(numeric, abs=1e-8)


def test_power_scale_cases():
    fir = FirFilter([1.0])
    assert power_scale(fir, FLAT, 1.0).alpha == pytest.approx(1.0)
    assert power_scale(FirFilter([2.0]), FLAT, 1.0).alpha == pytest.approx(0.5)
    scaled = power_scale(FirFilter([0.3, -0.2, 0.1]), NoiseModel(num=(1.0, 0.1, 0.5)), POWER)
    assert power_of_filter(scaled, NoiseModel(num=(1.0, 0.1, 0.5))) == pytest.approx(POWER, abs=1e-10)


def test_power_scale_violation_policy_keeps_feasible_filter():
    fir = FirFilter([0.1])
    assert power_scale(fir, FLAT, 1.0, policy="violation") is fir
    assert power_scale(FirFilter([3.0]), FLAT, 1.0, policy="violation").alpha == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize("coeffs", [[0.0, 0.0], [1e-10, -1e-10]])
def test_power_scale_rejects_zero_filter(coeffs):
    with pytest.raises(DegenerateFilterError, match="degenerate filter, no rate"):
        power_scale(FirFilter(coeffs), FLAT, 1.0)


def test_rate_of_zero_filter_is_zero():
    assert achievable_rate(FirFilter([0.0])) == pytest.approx(0.0, abs=1e-12)


def test_rate_of_single_delay_beta_two():
    fir = FirFilter([2.0])
    assert rate_by_roots(fir) == pytest.approx(1.0, abs=1e-12)
    assert rate_by_quadrature(fir) == pytest.approx(1.0, abs=1e-9)
    assert achievable_rate(fir) == pytest.approx(1.0, abs=1e-9)


def test_final_filter_rate_methods_agree(ma2_final):
    fir, rate = ma2_final
    assert abs(rate_by_roots(fir) - rate_by_quadrature(fir)) <= 1e-6
    assert rate == pytest.approx(1.9194, abs=1e-3)


def test_final_filter_is_strictly_causal_and_real(ma2_sweep, ma2_final):
    final = ma2_sweep[-1]
    fir, _ = ma2_final
    assert fir.m == final.grid.m
    assert conjugate_residue(recover_ab(final.solution, final.grid)) <= 1e-12
    assert fir.to_state_space().D[0, 0] == 0.0


def test_synthesize_ma1(ma1, ma1_sweep):
    _, rate = synthesize(ma1_sweep[0].solution, ma1_sweep[0].grid, ma1, POWER)
    assert rate == pytest.approx(MA1_CAPACITY, abs=5e-3)


def test_synthesize_ma2_h2(ma2, ma2_sweep):
    fir, rate = synthesize(ma2_sweep[1].solution, ma2_sweep[1].grid, ma2, POWER)
    assert rate == pytest.approx(MA2_TABLE[2][1], abs=1e-3)
    assert power_of_filter(fir, ma2) <= POWER + 1e-9


def test_synthesized_rate_below_certified_bound(ma2_sweep):
    for sweep in ma2_sweep:
        assert sweep.report.lower_bits <= sweep.report.upper_bits + 1e-6


def test_fir_filter_state_space_matches_polynomial():
    fir = FirFilter([0.4, -0.1, 0.25])
    thetas = np.linspace(-math.pi, math.pi, 13)
    assert np.allclose(fir.to_state_space().freqresp(thetas), fir.freqresp(thetas), atol=1e-13)
