"""Discretized concave dual g_m and its damped Newton / log-barrier solver.

Everything here works in nats. The dual point is (lambda, eta, eta0, nu_i);
the default solver eliminates nu_i through its closed form and runs Newton on
(lambda, eta, eta0) alone, with a log barrier keeping lambda interior.

The eliminated objective has a kink wherever r_i = 0, which is where the
optimum sits for flat spectra, small powers and any frequency that receives
no input power. The solver replaces r_i by sqrt(r_i^2 + eps^2) and lowers eps
together with the barrier weight, down to SMOOTHING_FLOOR times the scale of u.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from fbcap.freqgrid import DualPoint, FrequencyGrid, uv_components

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12
ARMIJO = 1e-4
SMOOTHING_INIT = 1e-2
SMOOTHING_FLOOR = 1e-6
_BARRIER_FLOOR = 1e-12
_CENTERING_TOL = 1e-10
_ROUNDOFF_SLOPE = 1e-13
_MIN_STEP = 1e-12
_SHIFT_RATIO = 1e-12


class InfeasibleDualPointError(ValueError):
    """Raised when a dual point lies outside the domain of g_m."""


class DualSolverError(RuntimeError):
    """Raised when the dual solver stops before meeting its gradient tolerance."""

    def __init__(self, message: str, best: DualPoint, certificate: float, iterations: int):
        super().__init__(message)
        self.best = best
        self.certificate = certificate
        self.iterations = iterations


@dataclass(frozen=True)
class SolverSettings:
    """Controls for solve_dual. The solver is deterministic; there is no seed."""

    tol_grad: float = 1e-9
    max_iter: int = 500
    barrier_init: float = 1e-3
    barrier_shrink: float = 0.1
    eliminate_nu: bool = True

    def __post_init__(self) -> None:
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.barrier_init < 0:
            raise ValueError("barrier_init must be >= 0")
        if not 0.0 < self.barrier_shrink < 1.0:
            raise ValueError("barrier_shrink must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class DualGradient:
    lam: float
    eta: np.ndarray
    eta0: float
    nu: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.lam], self.eta, [self.eta0], self.nu])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.as_vector())))


@dataclass(frozen=True, eq=False)
class DualSolution:
    """Maximizer of g_m for one (m, h) grid.

    The certificate is the projected gradient sup-norm at the final smoothing
    level. The eliminated solver measures it in (lambda, eta, eta0 + 2 lambda
    mean S); value_nats is the unsmoothed g_m at the returned point.
    """

    point: DualPoint
    value_nats: float
    iterations: int
    certificate: float
    power: float
    m: int
    h: int
    flat_spectrum: bool = False
    parametrization: str = "eliminated"
    smoothing: float = 0.0

    @property
    def dual_bound_bits(self) -> float:
        """C_fb(m, h) = -max g_m, in bits."""
        return -self.value_nats / math.log(2.0)


def nu_closed_form(
    r2: np.ndarray | float, lam: float, sw: np.ndarray | float
) -> np.ndarray | float:
    """Stationary nu = (-r^2 + sqrt(r^4 + 8 lam S r^2)) / 2, conjugate-multiplied."""
    r2 = np.asarray(r2, dtype=float)
    scale = lam * np.asarray(sw, dtype=float)
    denom = r2 + np.sqrt(r2 * r2 + 8.0 * scale * r2)
    positive = denom > 0.0
    nu = np.where(positive, 4.0 * scale * r2 / np.where(positive, denom, 1.0), 0.0)
    if nu.ndim == 0:
        return float(nu)
    return nu


def spectrum_is_flat(grid: FrequencyGrid) -> bool:
    return float(np.ptp(grid.sw)) <= 1e-12 * float(np.max(grid.sw))


def _checked_terms(
    dp: DualPoint, grid: FrequencyGrid
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if dp.nu is None:
        raise InfeasibleDualPointError("infeasible dual point: nu samples are missing")
    if dp.nu.size != grid.size or dp.h != grid.h:
        raise InfeasibleDualPointError(
            f"infeasible dual point: expected {grid.size} nu samples and h={grid.h}, "
            f"got {dp.nu.size} and h={dp.h}"
        )
    u, v = uv_components(dp, grid.cos_basis, grid.sin_basis, grid.sw)
    d = 2.0 * dp.lam * grid.sw - dp.nu
    if not (dp.lam >= 0.0 and np.all(dp.nu > 0.0) and np.all(d > 0.0)):
        raise InfeasibleDualPointError(
            "infeasible dual point: need lambda >= 0 and 0 < nu_i < 2 lambda S_w(theta_i)"
        )
    return u, v, dp.nu, d


def eval_gm(dp: DualPoint, grid: FrequencyGrid, P: float) -> float:
    u, v, nu, d = _checked_terms(dp, grid)
    r2 = u * u + v * v
    terms = 0.5 * np.log(d) + 0.5 - r2 / (2.0 * nu) + dp.lam * grid.sw
    return float(np.mean(terms)) - dp.lam * P + dp.eta0


def grad_gm(dp: DualPoint, grid: FrequencyGrid, P: float) -> DualGradient:
    u, v, nu, d = _checked_terms(dp, grid)
    w = grid.weight
    S = grid.sw
    r2 = u * u + v * v
    return DualGradient(
        lam=w * float(np.sum(S / d - 2.0 * S * u / nu + S)) - P,
        eta=-w * (grid.cos_basis.T @ (u / nu) + grid.sin_basis.T @ (v / nu)),
        eta0=1.0 - w * float(np.sum(u / nu)),
        nu=w * (-0.5 / d + r2 / (2.0 * nu * nu)),
    )


def _split(z: np.ndarray, h: int) -> tuple[float, np.ndarray, float]:
    return float(z[0]), z[1 : h + 1], float(z[h + 1])


def _jacobians(grid: FrequencyGrid, level: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    n = grid.size
    ones = np.ones((n, 1))
    zeros = np.zeros((n, 1))
    ju = np.hstack([2.0 * (grid.sw - level)[:, None], grid.cos_basis, ones])
    jv = np.hstack([zeros, grid.sin_basis, zeros])
    return ju, jv


def _level(grid: FrequencyGrid) -> float:
    return float(np.mean(grid.sw))


def _uvr(z: np.ndarray, grid: FrequencyGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # eliminated coordinates: zeta = eta0 + 2 lam mean(S), so u has no cancellation on flat spectra
    lam, eta, zeta = _split(z, grid.h)
    u = 2.0 * lam * (grid.sw - _level(grid)) + grid.cos_basis @ eta + zeta
    v = grid.sin_basis @ eta
    return u, v, np.hypot(u, v)


def smoothing_scale(grid: FrequencyGrid, P: float) -> float:
    """Typical size of u at the optimum, S / (S + P) at the mean spectrum level."""
    level = _level(grid)
    return level / (level + P)


def _smoothed(
    z: np.ndarray, grid: FrequencyGrid, eps: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    u, v, r = _uvr(z, grid)
    rho = np.sqrt(r * r + eps * eps) if eps > 0.0 else r
    q = float(z[0]) * grid.sw
    s = np.sqrt(rho * rho + 8.0 * q)
    # t = 1/sqrt(2 lam S - nu) = rho / nu at the stationary nu; finite as rho -> 0
    t = (rho + s) / (4.0 * q)
    return u, v, rho, q, s, t


def _linear_part(z: np.ndarray, grid: FrequencyGrid, P: float) -> float:
    # -lam P + eta0 in the zeta coordinates
    return -float(z[0]) * (P + 2.0 * _level(grid)) + float(z[-1])


def _reduced_value(z: np.ndarray, grid: FrequencyGrid, P: float, eps: float = 0.0) -> float:
    _, _, rho, q, _, t = _smoothed(z, grid, eps)
    return float(np.mean(-np.log(t) - 0.5 * rho * t + q + 0.5)) + _linear_part(z, grid, P)


def _reduced_feasible(z: np.ndarray, grid: FrequencyGrid) -> bool:
    return bool(z[0] >= LAMBDA_FLOOR and np.all(np.isfinite(z)))


def _reduced_oracle(
    z: np.ndarray, grid: FrequencyGrid, P: float, eps: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of g_m with r_i replaced by sqrt(r_i^2 + eps^2)."""
    w = grid.weight
    S = grid.sw
    u, v, rho, q, s, t = _smoothed(z, grid, eps)
    level = _level(grid)
    cu, cv = u / rho, v / rho
    ju, jv = _jacobians(grid, level)

    grad = np.empty(grid.h + 2)
    grad[0] = w * float(np.sum(S * t * t - 2.0 * (S - level) * t * cu + S)) - P - 2.0 * level
    grad[1:-1] = -w * (grid.cos_basis.T @ (t * cu) + grid.sin_basis.T @ (t * cv))
    grad[-1] = 1.0 - w * float(np.sum(t * cu))

    # radial curvature -t/s, tangential -t/rho; written without cancellation
    tangential = t / rho**3
    huu = -(t / s) * cu * cu - tangential * (v * v + eps * eps)
    hvv = -(t / s) * cv * cv - tangential * (u * u + eps * eps)
    huv = 2.0 * cu * cv / (rho * s)
    hess = ju.T @ (huu[:, None] * ju) + jv.T @ (hvv[:, None] * jv)
    cross = ju.T @ (huv[:, None] * jv)
    hess += cross + cross.T

    drho = cu[:, None] * ju + cv[:, None] * jv
    column = drho.T @ (2.0 * t * t * S / s)
    hess[:, 0] += column
    hess[0, :] += column
    hess[0, 0] -= 4.0 * float(np.sum(t**3 * S * S / s))
    hess *= w

    value = float(np.mean(-np.log(t) - 0.5 * rho * t + q + 0.5)) + _linear_part(z, grid, P)
    return value, grad, hess


def _joint_point(z: np.ndarray, grid: FrequencyGrid) -> DualPoint:
    lam, eta, eta0 = _split(z, grid.h)
    return DualPoint(lam=lam, eta=eta, eta0=eta0, nu=z[grid.h + 2 :])


def _joint_feasible(z: np.ndarray, grid: FrequencyGrid) -> bool:
    if not z[0] >= LAMBDA_FLOOR or not np.all(np.isfinite(z)):
        return False
    nu = z[grid.h + 2 :]
    return bool(np.all(nu > 0.0) and np.all(2.0 * z[0] * grid.sw - nu > 0.0))


def _joint_oracle(z: np.ndarray, grid: FrequencyGrid, P: float) -> tuple[float, np.ndarray, np.ndarray]:
    dp = _joint_point(z, grid)
    value = eval_gm(dp, grid, P)
    grad = grad_gm(dp, grid, P).as_vector()

    w = grid.weight
    S = grid.sw
    u, v, nu, d = _checked_terms(dp, grid)
    ju, jv = _jacobians(grid)
    k = grid.h + 2
    inv_nu = 1.0 / nu

    hxx = -(ju.T @ (inv_nu[:, None] * ju)) - (jv.T @ (inv_nu[:, None] * jv))
    hxx[0, 0] -= 2.0 * float(np.sum(S * S / (d * d)))
    cross = (u * inv_nu**2)[:, None] * ju + (v * inv_nu**2)[:, None] * jv
    cross[:, 0] += S / (d * d)
    hnn = -0.5 / (d * d) - (u * u + v * v) * inv_nu**3

    hess = np.zeros((k + grid.size, k + grid.size))
    hess[:k, :k] = hxx
    hess[:k, k:] = cross.T
    hess[k:, :k] = cross
    hess[k:, k:] = np.diag(hnn)
    return value, grad, w * hess


@dataclass(frozen=True, eq=False)
class _Problem:
    """One parametrization of the dual handed to the Newton ascent."""

    oracle: Callable[[np.ndarray, float], tuple[float, np.ndarray, np.ndarray]]
    value: Callable[[np.ndarray, float], float]
    feasible: Callable[[np.ndarray], bool]
    to_point: Callable[[np.ndarray], DualPoint]
    # log-barrier weight per coordinate, zero where the coordinate is free
    barrier_weights: np.ndarray
    smoothing: float = 0.0
    smoothing_floor: float = 0.0


def _barrier_terms(
    z: np.ndarray, weights: np.ndarray, mu: float
) -> tuple[float, np.ndarray, np.ndarray]:
    grad = np.zeros_like(z)
    curv = np.zeros_like(z)
    if mu == 0.0:
        return 0.0, grad, curv
    idx = np.flatnonzero(weights)
    grad[idx] = mu * weights[idx] / z[idx]
    curv[idx] = -mu * weights[idx] / z[idx] ** 2
    return mu * float(np.sum(weights[idx] * np.log(z[idx]))), grad, curv


def _projected(grad: np.ndarray, z: np.ndarray) -> np.ndarray:
    projected = grad.copy()
    if z[0] <= LAMBDA_FLOOR * (1.0 + 1e-9) and projected[0] < 0.0:
        projected[0] = 0.0
    return projected


def _projected_sup_norm(grad: np.ndarray, z: np.ndarray) -> float:
    return float(np.max(np.abs(_projected(grad, z))))


def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Ascent step from -hess, Levenberg-shifted where -hess is near singular."""
    try:
        curv, basis = linalg.eigh(-hess)
    except (linalg.LinAlgError, ValueError):
        return grad.copy()
    top = float(np.max(np.abs(curv)))
    if not top > 0.0:
        return grad.copy()
    shift = max(0.0, _SHIFT_RATIO * top - float(np.min(curv)))
    step = basis @ ((basis.T @ grad) / (curv + shift))
    if not np.all(np.isfinite(step)) or float(grad @ step) <= 0.0:
        return grad.copy()
    return step


def _backtrack(
    merit: Callable[[np.ndarray], float],
    feasible: Callable[[np.ndarray], bool],
    z: np.ndarray,
    step: np.ndarray,
    base: float,
    slope: float,
) -> float:
    alpha = 1.0
    while alpha >= _MIN_STEP:
        cand = z + alpha * step
        if feasible(cand):
            if slope < _ROUNDOFF_SLOPE:
                return alpha
            if merit(cand) >= base + ARMIJO * alpha * slope:
                return alpha
        alpha *= 0.5
    return 0.0


def _newton_ascent(problem: _Problem, z0: np.ndarray, settings: SolverSettings) -> tuple[np.ndarray, int, float, float]:
    """Damped Newton ascent over a schedule of barrier and smoothing levels.

    Each level is centered until the Newton decrement is small; the last
    level (no barrier, smallest smoothing) must meet tol_grad.
    """
    z = z0.copy()
    mu = settings.barrier_init
    eps = problem.smoothing
    iterations = 0
    best_z, best_cert = z.copy(), math.inf

    def final() -> bool:
        return mu == 0.0 and eps <= problem.smoothing_floor

    def next_level() -> tuple[float, float]:
        nxt = mu * settings.barrier_shrink
        return (
            nxt if nxt >= _BARRIER_FLOOR else 0.0,
            max(eps * settings.barrier_shrink, problem.smoothing_floor),
        )

    def merit(cand: np.ndarray) -> float:
        return problem.value(cand, eps) + _barrier_terms(cand, problem.barrier_weights, mu)[0]

    while True:
        value, grad, hess = problem.oracle(z, eps)
        certificate = _projected_sup_norm(grad, z)
        if certificate < best_cert:
            best_z, best_cert = z.copy(), certificate
        if final() and certificate <= settings.tol_grad:
            return z, iterations, certificate, eps
        if iterations >= settings.max_iter:
            raise DualSolverError(
                f"dual solver did not converge in {settings.max_iter} iterations "
                f"(gradient sup-norm {best_cert:.3g})",
                best=problem.to_point(best_z),
                certificate=best_cert,
                iterations=iterations,
            )

        barrier, bgrad, bcurv = _barrier_terms(z, problem.barrier_weights, mu)
        value += barrier
        grad = grad + bgrad
        hess = hess + np.diag(bcurv)
        step = _newton_direction(hess, grad)
        slope = float(grad @ step)
        if not final() and slope <= _CENTERING_TOL:
            mu, eps = next_level()
            continue

        alpha = _backtrack(merit, problem.feasible, z, step, value, slope)
        if alpha == 0.0:
            # the Newton model is off; a projected gradient step still ascends
            step = _projected(grad, z)
            slope = float(grad @ step)
            alpha = _backtrack(merit, problem.feasible, z, step, value, slope) if slope > 0.0 else 0.0
        if alpha == 0.0:
            if not final():
                mu, eps = next_level()
                continue
            raise DualSolverError(
                f"dual line search stalled (gradient sup-norm {best_cert:.3g})",
                best=problem.to_point(best_z),
                certificate=best_cert,
                iterations=iterations,
            )
        z = z + alpha * step
        iterations += 1
        logger.debug(
            "dual iter %d: value=%.15g certificate=%.3g mu=%.1e eps=%.1e step=%.3g",
            iterations,
            value,
            certificate,
            mu,
            eps,
            alpha,
        )


def _initial_vector(grid: FrequencyGrid) -> np.ndarray:
    """lam = 1 / (2 mean S), eta = 0, eta0 = 0, in the zeta coordinates."""
    z = np.zeros(grid.h + 2)
    z[0] = 1.0 / (2.0 * _level(grid))
    z[-1] = 1.0
    return z


def _eliminated_point(z: np.ndarray, grid: FrequencyGrid) -> DualPoint:
    lam, eta, zeta = _split(z, grid.h)
    _, _, r = _uvr(z, grid)
    return DualPoint(
        lam=lam,
        eta=eta,
        eta0=zeta - 2.0 * lam * _level(grid),
        nu=nu_closed_form(r * r, lam, grid.sw),
    )


def solve_dual(grid: FrequencyGrid, P: float, settings: SolverSettings | None = None) -> DualSolution:
    """Maximize g_m over the dual domain."""
    if not P > 0:
        raise ValueError("P must be > 0")
    settings = settings or SolverSettings()
    flat = spectrum_is_flat(grid)
    if flat:
        logger.warning(
            "noise spectrum is flat; strong duality assumes a non-flat spectrum, continuing"
        )

    x0 = _initial_vector(grid)
    if settings.eliminate_nu:
        weights = np.zeros(x0.size)
        weights[0] = 1.0
        scale = smoothing_scale(grid, P)
        problem = _Problem(
            oracle=lambda z, eps: _reduced_oracle(z, grid, P, eps),
            value=lambda z, eps: _reduced_value(z, grid, P, eps),
            feasible=lambda z: _reduced_feasible(z, grid),
            to_point=lambda z: _eliminated_point(z, grid),
            barrier_weights=weights,
            smoothing=SMOOTHING_INIT * scale,
            smoothing_floor=SMOOTHING_FLOOR * scale,
        )
        z, iterations, certificate, eps = _newton_ascent(problem, x0, settings)
        point = _eliminated_point(z, grid)
        # the unsmoothed value stays finite where some r_i vanish
        value = _reduced_value(z, grid, P)
        parametrization = "eliminated"
    else:
        start = _eliminated_point(x0, grid)
        z0 = np.concatenate([[start.lam], start.eta, [start.eta0], start.nu])
        weights = np.zeros(z0.size)
        weights[0] = 1.0
        weights[x0.size :] = grid.weight
        problem = _Problem(
            oracle=lambda z, eps: _joint_oracle(z, grid, P),
            value=lambda z, eps: eval_gm(_joint_point(z, grid), grid, P),
            feasible=lambda z: _joint_feasible(z, grid),
            to_point=lambda z: _joint_point(z, grid),
            barrier_weights=weights,
        )
        z, iterations, certificate, eps = _newton_ascent(problem, z0, settings)
        point = _joint_point(z, grid)
        value = eval_gm(point, grid, P)
        parametrization = "joint"

    logger.debug(
        "solved dual m=%d h=%d in %d iterations: g_m=%.15g certificate=%.3g eps=%.1e",
        grid.m,
        grid.h,
        iterations,
        value,
        certificate,
        eps,
    )
    return DualSolution(
        point=point,
        value_nats=value,
        iterations=iterations,
        certificate=certificate,
        power=P,
        m=grid.m,
        h=grid.h,
        flat_spectrum=flat,
        parametrization=parametrization,
        smoothing=eps,
    )
