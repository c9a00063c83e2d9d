import numpy as np
import pytest

from fbcap.sandwich import check_sandwich, random_arma_channel, run_suite
from fbcap.spectra import NoiseModel


def test_random_channels_are_stable_minimum_phase_and_not_flat():
    rng = np.random.default_rng(0)
    for _ in range(50):
        model = random_arma_channel(rng)
        assert len(model.num) + len(model.den) > 2
        for coeffs in (model.num, model.den):
            if len(coeffs) > 1:
                assert np.max(np.abs(np.roots(coeffs))) < 1.0


def test_random_channels_are_reproducible():
    first = [random_arma_channel(np.random.default_rng(4)) for _ in range(3)]
    second = [random_arma_channel(np.random.default_rng(4)) for _ in range(3)]
    assert first == second


def test_check_sandwich_on_small_grid():
    result = check_sandwich(NoiseModel(num=(1.0, 0.5)), 1.0, m=12, h_max=2)
    assert result.ok, result.violations
    assert len(result.upper_bits) == len(result.rate_bits) == 2
    assert result.to_dict()["power"] == pytest.approx([1.0, 1.0], abs=1e-9)


@pytest.mark.slow
def test_randomized_sandwich_suite():
    results = run_suite(n_channels=20, powers=(1.0, 10.0), seed=0, m=40, h_max=4)
    assert len(results) == 40
    failures = [(r.model.to_dict(), r.P, r.violations) for r in results if not r.ok]
    assert failures == []
