"""Randomized check that the synthesized rate stays below the certified upper bounds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from fbcap.bounds import DEFAULT_QUAD_TOL, solve_sweep
from fbcap.dualopt import SolverSettings
from fbcap.spectra import NoiseModel, NoiseModelError
from fbcap.synthesis import power_of_filter, synthesize

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-6
RATE_SLACK = 1e-6
POWER_TOL = 1e-9


def _roots_inside(coeffs: np.ndarray) -> bool:
    if coeffs.size <= 1:
        return True
    return bool(np.all(np.abs(np.roots(coeffs)) < 1.0))


def random_arma_channel(
    rng: np.random.Generator,
    max_order: int = 3,
    coeff_bound: float = 0.7,
) -> NoiseModel:
    """Draw a stable, minimum-phase ARMA channel by rejection.

    Coefficients are uniform in [-coeff_bound, coeff_bound]; a draw is kept
    when every root of num and den lies strictly inside the unit disc.
    """
    while True:
        q, p = (int(k) for k in rng.integers(0, max_order + 1, size=2))
        num = np.concatenate([[1.0], rng.uniform(-coeff_bound, coeff_bound, q)])
        den = np.concatenate([[1.0], rng.uniform(-coeff_bound, coeff_bound, p)])
        if q + p == 0:
            continue
        if not (_roots_inside(num) and _roots_inside(den)):
            continue
        try:
            return NoiseModel(num=tuple(num), den=tuple(den))
        except NoiseModelError:
            # pole within the stability margin of the unit circle
            continue


@dataclass
class SandwichResult:
    model: NoiseModel
    P: float
    upper_bits: list[float] = field(default_factory=list)
    rate_bits: list[float] = field(default_factory=list)
    power: list[float] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "channel": self.model.to_dict(),
            "power_budget": self.P,
            "upper_bits": self.upper_bits,
            "rate_bits": self.rate_bits,
            "power": self.power,
            "violations": self.violations,
        }


def check_sandwich(
    model: NoiseModel,
    P: float,
    m: int = 40,
    h_max: int = 4,
    settings: SolverSettings | None = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> SandwichResult:
    """Upper bounds non-increasing in h; every synthesized rate below them at power P."""
    result = SandwichResult(model=model, P=P)
    for sweep in solve_sweep(model, P, m, range(1, h_max + 1), settings, quad_tol):
        h = sweep.report.h
        if not sweep.report.ok or sweep.solution is None:
            result.violations.append(f"h={h}: {sweep.report.error}")
            continue
        upper = sweep.report.upper_bits
        if result.upper_bits and upper > min(result.upper_bits) + MONOTONE_SLACK:
            result.violations.append(f"h={h}: upper bound {upper:.12f} increased")
        result.upper_bits.append(upper)

        try:
            fir, rate = synthesize(sweep.solution, sweep.grid, model, P)
            power = power_of_filter(fir, model)
        except (ValueError, RuntimeError) as e:
            result.violations.append(f"h={h}: synthesis failed: {e}")
            continue
        result.rate_bits.append(rate)
        result.power.append(power)
        if abs(power - P) > POWER_TOL:
            result.violations.append(f"h={h}: filter power {power:.12g} != {P}")

    if result.upper_bits:
        best = min(result.upper_bits)
        for rate in result.rate_bits:
            if rate > best + RATE_SLACK:
                result.violations.append(f"rate {rate:.12f} exceeds upper bound {best:.12f}")
    logger.info("sandwich %s P=%g: %d violation(s)", model.to_dict(), P, len(result.violations))
    return result


def run_suite(
    n_channels: int = 20,
    powers: tuple[float, ...] = (1.0, 10.0),
    seed: int = 0,
    m: int = 40,
    h_max: int = 4,
) -> list[SandwichResult]:
    rng = np.random.default_rng(seed)
    channels = [random_arma_channel(rng) for _ in range(n_channels)]
    return [check_sandwich(model, P, m=m, h_max=h_max) for model in channels for P in powers]
