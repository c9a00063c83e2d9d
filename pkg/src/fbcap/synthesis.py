"""Strictly causal Youla filter synthesis from a dual optimum, and its rate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from fbcap.bounds import QuadratureError, adaptive_quad
from fbcap.dualopt import DualSolution, nu_closed_form
from fbcap.freqgrid import FrequencyGrid, uv_components
from fbcap.spectra import NoiseModel, StateSpace, cascade, h2_norm_sq, to_state_space

logger = logging.getLogger(__name__)

NU_FLOOR = 1e-14
NMP_THRESHOLD = 1.0 + 1e-9
RATE_AGREEMENT_BITS = 1e-6
RATE_QUAD_TOL = 1e-10
# below this share of P the filter is roundoff, e.g. the zero filter of a flat channel
DEGENERATE_POWER_RATIO = 1e-12

ScalePolicy = Literal["exact", "violation"]


class DegenerateDualPointError(ValueError):
    """Raised when a dual point has nu_i too small to recover the spectrum."""


class DegenerateFilterError(ValueError):
    """Raised when a filter carries no power and so no rate."""


@dataclass(frozen=True, eq=False)
class SampledSpectrum:
    """Grid samples Q(e^{i theta_i}) = a_i + i b_i of the Youla parameter."""

    grid: FrequencyGrid
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class FirFilter:
    """Q(z) = sum_{n=1..m} c_n z^-n; alpha is the power scale already applied."""

    coeffs: np.ndarray
    alpha: float = 1.0

    def __post_init__(self) -> None:
        coeffs = np.array(np.atleast_1d(self.coeffs), dtype=float).reshape(-1)
        if coeffs.size == 0:
            raise ValueError("a filter needs at least one coefficient")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def m(self) -> int:
        return self.coeffs.size

    def freqresp(self, theta: np.ndarray | float) -> np.ndarray:
        zinv = np.exp(-1j * np.asarray(theta, dtype=float))
        # sum_n c_n z^-n, evaluated by Horner in z^-1
        return zinv * np.polynomial.polynomial.polyval(zinv, self.coeffs)

    def to_state_space(self) -> StateSpace:
        """Shift-register realization; the state holds the last m inputs."""
        m = self.m
        A = np.eye(m, k=-1)
        B = np.zeros((m, 1))
        B[0, 0] = 1.0
        return StateSpace(A, B, self.coeffs.reshape(1, m), [[0.0]])

    def scaled(self, alpha: float) -> FirFilter:
        return FirFilter(self.coeffs * alpha, alpha=self.alpha * alpha)

    def to_dict(self) -> dict[str, Any]:
        return {"coeffs": self.coeffs.tolist(), "alpha": self.alpha}


def recover_ab(sol: DualSolution, grid: FrequencyGrid) -> SampledSpectrum:
    dp = sol.point
    u, v = uv_components(dp, grid.cos_basis, grid.sin_basis, grid.sw)
    nu = dp.nu if dp.nu is not None else nu_closed_form(u * u + v * v, dp.lam, grid.sw)
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= NU_FLOOR):
        raise DegenerateDualPointError(
            f"degenerate dual point: min nu_i = {float(np.min(nu)):.3g}"
        )
    return SampledSpectrum(grid=grid, a=u / nu - 1.0, b=v / nu)


def primal_objective(spec: SampledSpectrum) -> float:
    """Discretized primal (1/4m) sum log((1+a)^2 + b^2), in nats."""
    return 0.5 * float(np.mean(np.log((1.0 + spec.a) ** 2 + spec.b**2)))


def discretized_power(spec: SampledSpectrum) -> float:
    return float(np.mean((spec.a**2 + spec.b**2) * spec.grid.sw))


def fourier_coeffs(spec: SampledSpectrum) -> np.ndarray:
    """c_n = (1/2m) sum_i a_i cos(n theta_i) - b_i sin(n theta_i), n = 1..m."""
    return _inverse_transform(spec)[1 : spec.grid.m + 1].real


def _inverse_transform(spec: SampledSpectrum) -> np.ndarray:
    # theta_k = -pi + pi k / m, so exp(i n theta_k) = (-1)^n exp(2 pi i n k / 2m)
    n = np.arange(spec.grid.size)
    signs = np.where(n % 2 == 0, 1.0, -1.0)
    return signs * np.fft.ifft(spec.a + 1j * spec.b)


def conjugate_residue(spec: SampledSpectrum) -> float:
    """Largest imaginary part among c_1..c_m; zero for conjugate-symmetric samples."""
    return float(np.max(np.abs(_inverse_transform(spec)[1 : spec.grid.m + 1].imag)))


def power_of_filter(fir: FirFilter, model: NoiseModel) -> float:
    """(1/2pi) integral |Q|^2 S_w, as the squared H2 norm of Q H."""
    return h2_norm_sq(cascade(fir.to_state_space(), to_state_space(model)))


def power_scale(
    fir: FirFilter, model: NoiseModel, P: float, policy: ScalePolicy = "exact"
) -> FirFilter:
    p = power_of_filter(fir, model)
    if p <= DEGENERATE_POWER_RATIO * P:
        raise DegenerateFilterError("degenerate filter, no rate")
    if policy == "violation" and p <= P:
        return fir
    return fir.scaled(math.sqrt(P / p))


def rate_by_quadrature(fir: FirFilter, tol: float = RATE_QUAD_TOL) -> float:
    """(1/2pi) integral log2 |1 + Q(e^{i theta})|, using evenness over [0, pi]."""

    def integrand(theta: float) -> float:
        return math.log2(abs(1.0 + complex(fir.freqresp(theta))))

    value, _ = adaptive_quad(integrand, 0.0, math.pi, tol * math.pi)
    return value / math.pi


def rate_by_roots(fir: FirFilter) -> float:
    """Sum of log2|z_k| over zeros of z^m + c_1 z^(m-1) + ... + c_m outside the unit disc."""
    roots = np.roots(np.concatenate([[1.0], fir.coeffs]))
    outside = np.abs(roots)[np.abs(roots) > NMP_THRESHOLD]
    return float(np.sum(np.log2(outside)))


def achievable_rate(fir: FirFilter) -> float:
    """Rate of the coding scheme built on Q, in bits per channel use."""
    by_roots = rate_by_roots(fir)
    try:
        by_quad = rate_by_quadrature(fir)
    except QuadratureError as e:
        logger.warning("rate quadrature failed, using root sum: %s", e)
        return by_roots
    if not math.isfinite(by_roots) or abs(by_roots - by_quad) > RATE_AGREEMENT_BITS:
        logger.warning(
            "rate by roots (%.12f) disagrees with quadrature (%.12f); using quadrature",
            by_roots,
            by_quad,
        )
        return by_quad
    return by_roots


def synthesize(
    sol: DualSolution,
    grid: FrequencyGrid,
    model: NoiseModel,
    P: float,
    policy: ScalePolicy = "exact",
) -> tuple[FirFilter, float]:
    """Filter construction, causal truncation and power scaling, then the rate."""
    spec = recover_ab(sol, grid)
    fir = power_scale(FirFilter(fourier_coeffs(spec)), model, P, policy)
    rate = achievable_rate(fir)
    logger.debug("synthesized m=%d h=%d filter, alpha=%.12g rate=%.12f", grid.m, grid.h, fir.alpha, rate)
    return fir, rate
