"""Certified continuous upper bounds and sweeps over h and m."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Any, Callable, Iterable

import numpy as np
from scipy import integrate, optimize

from fbcap.dualopt import DualSolution, DualSolverError, SolverSettings, solve_dual
from fbcap.freqgrid import DualPoint, FrequencyGrid, build_grid, trig_basis
from fbcap.spectra import NoiseModel, eval_psd

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
DEFAULT_QUAD_TOL = 1e-10
QUAD_SUBDIVISIONS = 200

LowerBound = Callable[[DualSolution, FrequencyGrid], float]


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot reach its absolute tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class BoundsReport:
    """One row of the convergence table, in bits per channel use."""

    h: int
    m: int
    upper_bits: float | None
    dual_value_bits: float | None
    lower_bits: float | None = None
    gap_bits: float | None = None
    quad_error_estimate: float | None = None
    iterations: int | None = None
    certificate: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.upper_bits is not None

    def with_lower(self, lower_bits: float) -> BoundsReport:
        gap = None if self.upper_bits is None else self.upper_bits - lower_bits
        return replace(self, lower_bits=lower_bits, gap_bits=gap)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SweepResult:
    report: BoundsReport
    grid: FrequencyGrid
    solution: DualSolution | None


def adaptive_quad(func: Callable[[float], float], a: float, b: float, tol: float) -> tuple[float, float]:
    """Integrate func over [a, b] to absolute tolerance tol; return (value, error)."""
    result = integrate.quad(func, a, b, epsabs=tol, epsrel=0.0, limit=QUAD_SUBDIVISIONS, full_output=1)
    value, error = float(result[0]), float(result[1])
    if len(result) > 3 or error > tol:
        message = result[3] if len(result) > 3 else "error estimate above tolerance"
        raise QuadratureError(
            f"quadrature failed on [{a:.6g}, {b:.6g}]: {message} "
            f"(estimate {value:.15g}, error {error:.3g})",
            estimate=value,
            error=error,
        )
    return value, error


def _g_integrand(dp: DualPoint, model: NoiseModel) -> Callable[[float], float]:
    def integrand(theta: float) -> float:
        sw = float(eval_psd(model, theta))
        cos_k, sin_k = trig_basis(dp.h, theta)
        u = 2.0 * dp.lam * sw + float(cos_k @ dp.eta) + dp.eta0
        v = float(sin_k @ dp.eta)
        r = math.hypot(u, v)
        q = dp.lam * sw
        t = (r + math.sqrt(r * r + 8.0 * q)) / (4.0 * q)
        return -math.log(t) - 0.5 * r * t + q

    return integrand


def g_continuous_with_error(
    dp: DualPoint, model: NoiseModel, P: float, quad_tol: float = DEFAULT_QUAD_TOL
) -> tuple[float, float]:
    """Continuous dual g(lambda, eta, eta0) in nats and its quadrature error bound."""
    if not dp.lam > 0:
        raise ValueError("lambda must be > 0 for the continuous dual")
    if not quad_tol > 0:
        raise ValueError("quad_tol must be > 0")
    # the integrand is even in theta
    integral, error = adaptive_quad(_g_integrand(dp, model), 0.0, math.pi, quad_tol * math.pi)
    value = integral / math.pi + 0.5 - dp.lam * P + dp.eta0
    return value, error / math.pi


def eval_g_continuous(
    dp: DualPoint, model: NoiseModel, P: float, quad_tol: float = DEFAULT_QUAD_TOL
) -> float:
    return g_continuous_with_error(dp, model, P, quad_tol)[0]


def certified_upper_bound(
    sol: DualSolution, model: NoiseModel, P: float, quad_tol: float = DEFAULT_QUAD_TOL
) -> float:
    """Upper bound on feedback capacity in bits, quadrature error added."""
    return _certify(sol, model, P, quad_tol)[0]


def _certify(sol: DualSolution, model: NoiseModel, P: float, quad_tol: float) -> tuple[float, float]:
    value, error = g_continuous_with_error(sol.point, model, P, quad_tol)
    return (-value + error) / LN2, error


def _evaluate_h(
    model: NoiseModel,
    P: float,
    m: int,
    h: int,
    settings: SolverSettings | None,
    quad_tol: float,
    lower_bound: LowerBound | None,
) -> SweepResult:
    grid = build_grid(m, h, model)
    try:
        sol = solve_dual(grid, P, settings)
        upper, error = _certify(sol, model, P, quad_tol)
    except (DualSolverError, QuadratureError) as e:
        logger.warning("bounds m=%d h=%d failed: %s", m, h, e)
        report = BoundsReport(h=h, m=m, upper_bits=None, dual_value_bits=None, error=str(e))
        return SweepResult(report=report, grid=grid, solution=None)

    report = BoundsReport(
        h=h,
        m=m,
        upper_bits=upper,
        dual_value_bits=sol.dual_bound_bits,
        quad_error_estimate=error,
        iterations=sol.iterations,
        certificate=sol.certificate,
    )
    if lower_bound is not None:
        try:
            report = report.with_lower(lower_bound(sol, grid))
        except (ValueError, RuntimeError) as e:
            logger.warning("lower bound m=%d h=%d failed: %s", m, h, e)
            report = replace(report, error=f"lower bound: {e}")
    logger.info(
        "m=%d h=%d upper=%.12f lower=%s",
        m,
        h,
        upper,
        "n/a" if report.lower_bits is None else f"{report.lower_bits:.12f}",
    )
    return SweepResult(report=report, grid=grid, solution=sol)


def _run_all(tasks: list[Callable[[], SweepResult]], threads: int) -> list[SweepResult]:
    if threads <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda task: task(), tasks))


def solve_sweep(
    model: NoiseModel,
    P: float,
    m: int,
    hs: Iterable[int],
    settings: SolverSettings | None = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
    lower_bound: LowerBound | None = None,
    threads: int = 1,
) -> list[SweepResult]:
    """Solve and certify every h in `hs`, keeping grids and dual solutions."""
    tasks = [
        (lambda h=h: _evaluate_h(model, P, m, h, settings, quad_tol, lower_bound))
        for h in hs
    ]
    return _run_all(tasks, threads)


def h_sweep(
    model: NoiseModel,
    P: float,
    m: int,
    h_max: int,
    settings: SolverSettings | None = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
    lower_bound: LowerBound | None = None,
    threads: int = 1,
) -> list[BoundsReport]:
    """One report per h = 1..h_max, ordered by h."""
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    results = solve_sweep(model, P, m, range(1, h_max + 1), settings, quad_tol, lower_bound, threads)
    return [r.report for r in results]


def m_sweep(
    model: NoiseModel,
    P: float,
    h: int,
    ms: Iterable[int],
    settings: SolverSettings | None = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
    threads: int = 1,
) -> list[BoundsReport]:
    """The same h at several grid resolutions, ordered as `ms`.

    A grid whose solve fails gives a row with ok False, the error text and
    None bounds; the other grids still run.
    """
    tasks = [
        (lambda m=m: _evaluate_h(model, P, m, h, settings, quad_tol, None)) for m in ms
    ]
    return [r.report for r in _run_all(tasks, threads)]


def nonfeedback_capacity(model: NoiseModel, P: float, n_points: int = 4096) -> float:
    """Water-filling capacity without feedback, in bits per channel use."""
    if not P > 0:
        raise ValueError("P must be > 0")
    thetas = np.linspace(-np.pi, np.pi, n_points, endpoint=False)
    noise = eval_psd(model, thetas)

    def excess(level: float) -> float:
        return float(np.mean(np.maximum(level - noise, 0.0))) - P

    level = optimize.brentq(excess, float(np.min(noise)), float(np.max(noise)) + P + 1.0, xtol=1e-14)
    return float(np.mean(0.5 * np.log2(np.maximum(level, noise) / noise)))
