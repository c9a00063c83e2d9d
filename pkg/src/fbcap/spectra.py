"""Noise-shaping filters, state-space realizations and stationary noise paths."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg, signal

logger = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-8
POSITIVITY_GRID_POINTS = 4096
_ZERO_TOL = 1e-14
_FREQRESP_CHUNK = 512


class NoiseModelError(ValueError):
    """Raised when a noise-shaping filter violates its invariants."""


class NotH2Error(RuntimeError):
    """Raised when an H2 norm is requested for a system that is not stable."""


def _coefficients(values: Any, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise NoiseModelError(f"{name} must be a non-empty list of coefficients")
    if not np.all(np.isfinite(arr)):
        raise NoiseModelError(f"{name} contains non-finite coefficients")
    nonzero = np.flatnonzero(np.abs(arr) > _ZERO_TOL)
    if nonzero.size:
        arr = arr[: nonzero[-1] + 1]
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class NoiseModel:
    """Rational filter H(z) = num(z^-1) / den(z^-1) driven by unit-variance white noise.

    Coefficients are powers of z^-1 with the constant term first. The
    denominator is normalized so its constant term is 1.
    """

    num: tuple[float, ...]
    den: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        num = _coefficients(self.num, "num")
        den = _coefficients(self.den, "den")
        if abs(den[0]) <= _ZERO_TOL:
            raise NoiseModelError("den constant term must be nonzero")
        if den[0] != 1.0:
            num = tuple(x / den[0] for x in num)
            den = tuple(x / den[0] for x in den)
        if abs(num[0]) <= _ZERO_TOL:
            raise NoiseModelError("num constant term must be nonzero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

        poles = self.poles()
        if poles.size and float(np.max(np.abs(poles))) >= 1.0 - STABILITY_MARGIN:
            raise NoiseModelError(
                "den roots must lie strictly inside the unit disc "
                f"(largest modulus {float(np.max(np.abs(poles))):.6g})"
            )
        psd = eval_psd(self, _dense_grid())
        if float(np.min(psd)) <= _ZERO_TOL:
            raise NoiseModelError(
                f"spectral density must be positive (minimum {float(np.min(psd)):.3g})"
            )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NoiseModel:
        if not isinstance(data, dict) or "num" not in data:
            raise NoiseModelError('channel must be an object with "num" and optional "den"')
        return cls(num=data["num"], den=data.get("den", [1.0]))

    def to_dict(self) -> dict[str, list[float]]:
        return {"num": list(self.num), "den": list(self.den)}

    @property
    def order(self) -> int:
        return max(len(self.num), len(self.den)) - 1

    def poles(self) -> np.ndarray:
        # roots of z^n + a1 z^(n-1) + ... + an, via companion eigenvalues
        if len(self.den) == 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.den)

    def freqresp(self, theta: np.ndarray | float) -> np.ndarray:
        zinv = np.exp(-1j * np.asarray(theta, dtype=float))
        return npoly.polyval(zinv, self.num) / npoly.polyval(zinv, self.den)

    @property
    def is_flat(self) -> bool:
        psd = eval_psd(self, _dense_grid())
        return float(np.ptp(psd)) <= 1e-12 * float(np.max(psd))


def _dense_grid() -> np.ndarray:
    return np.linspace(-np.pi, np.pi, POSITIVITY_GRID_POINTS, endpoint=False)


def eval_psd(model: NoiseModel, theta: np.ndarray | float) -> np.ndarray | float:
    """Return S_w(theta) = |H(e^{i theta})|^2."""
    value = np.abs(model.freqresp(theta)) ** 2
    if np.ndim(value) == 0:
        return float(value)
    return value


def _frozen(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Discrete-time realization x[k+1] = A x[k] + B u[k], y[k] = C x[k] + D u[k]."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, 0))
        A = np.atleast_2d(A)
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1) if n else np.zeros((0, _width(self.B, self.D)))
        C = np.asarray(self.C, dtype=float).reshape(-1, n) if n else np.zeros((_height(self.C, self.D), 0))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(
                f"D shape {D.shape} does not match outputs {C.shape[0]} x inputs {B.shape[1]}"
            )
        for name, value in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, _frozen(value))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def poles(self) -> np.ndarray:
        if self.n_states == 0:
            return np.zeros(0, dtype=complex)
        return linalg.eigvals(self.A)

    @property
    def spectral_radius(self) -> float:
        poles = self.poles()
        return float(np.max(np.abs(poles))) if poles.size else 0.0

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0

    def freqresp(self, theta: np.ndarray | float) -> np.ndarray:
        """SISO response C (zI - A)^-1 B + D at z = exp(i*theta)."""
        theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
        d = complex(self.D[0, 0])
        if self.n_states == 0:
            out = np.full(theta_arr.shape, d, dtype=complex)
        else:
            z = np.exp(1j * theta_arr.ravel())
            eye = np.eye(self.n_states)
            b = self.B[:, :1].astype(complex)
            c = self.C[:1, :].astype(complex)
            out = np.empty(z.shape, dtype=complex)
            for start in range(0, z.size, _FREQRESP_CHUNK):
                zs = z[start : start + _FREQRESP_CHUNK]
                pencil = zs[:, None, None] * eye - self.A
                x = np.linalg.solve(pencil, np.broadcast_to(b, (zs.size, *b.shape)))
                out[start : start + zs.size] = (c @ x)[:, 0, 0] + d
            out = out.reshape(theta_arr.shape)
        if np.ndim(theta) == 0:
            return out[0]
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }


def _width(B: Any, D: Any) -> int:
    arr = np.asarray(B, dtype=float)
    if arr.ndim == 2:
        return arr.shape[1]
    return np.atleast_2d(np.asarray(D, dtype=float)).shape[1]


def _height(C: Any, D: Any) -> int:
    arr = np.asarray(C, dtype=float)
    if arr.ndim == 2:
        return arr.shape[0]
    return np.atleast_2d(np.asarray(D, dtype=float)).shape[0]


def to_state_space(model: NoiseModel) -> StateSpace:
    """Controllable canonical realization of H(z)."""
    n = model.order
    b = np.zeros(n + 1)
    a = np.zeros(n + 1)
    b[: len(model.num)] = model.num
    a[: len(model.den)] = model.den
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[b[0]]])
    A = np.zeros((n, n))
    A[0, :] = -a[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (b[1:] - b[0] * a[1:]).reshape(1, n)
    return StateSpace(A, B, C, [[b[0]]])


def impulse_response(ss: StateSpace, length: int) -> np.ndarray:
    """Markov parameters D, CB, CAB, ... of a SISO system."""
    if length < 1:
        raise ValueError("length must be >= 1")
    out = np.empty(length)
    out[0] = ss.D[0, 0]
    x = ss.B[:, 0].copy()
    for k in range(1, length):
        out[k] = float(ss.C[0] @ x) if ss.n_states else 0.0
        x = ss.A @ x
    return out


def h2_norm_sq(ss: StateSpace) -> float:
    """Squared H2 norm from the controllability Gramian."""
    if not ss.is_stable:
        raise NotH2Error(f"not H2: spectral radius {ss.spectral_radius:.6g} >= 1")
    feedthrough = float(np.trace(ss.D @ ss.D.T))
    if ss.n_states == 0:
        return feedthrough
    gramian = linalg.solve_discrete_lyapunov(ss.A, ss.B @ ss.B.T)
    return max(float(np.trace(ss.C @ gramian @ ss.C.T)) + feedthrough, 0.0)


def cascade(first: StateSpace, second: StateSpace) -> StateSpace:
    """Series connection: u drives `first`, whose output drives `second`."""
    n1, n2 = first.n_states, second.n_states
    A = np.block(
        [
            [first.A, np.zeros((n1, n2))],
            [second.B @ first.C, second.A],
        ]
    )
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    return StateSpace(A, B, C, second.D @ first.D)


def parallel(a: StateSpace, b: StateSpace) -> StateSpace:
    """Additive connection a + b sharing one input."""
    A = linalg.block_diag(a.A, b.A)
    return StateSpace(A, np.vstack([a.B, b.B]), np.hstack([a.C, b.C]), a.D + b.D)


@lru_cache(maxsize=32)
def _stationary_factor(model: NoiseModel) -> np.ndarray:
    ss = to_state_space(model)
    cov = linalg.solve_discrete_lyapunov(ss.A, ss.B @ ss.B.T)
    try:
        factor = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        w, v = linalg.eigh(cov)
        factor = v * np.sqrt(np.clip(w, 0.0, None))
    factor.setflags(write=False)
    return factor


def sample_noise(model: NoiseModel, n: int, seed: int) -> np.ndarray:
    """Draw a stationary sample path of length n.

    The initial state is drawn from the stationary state covariance, so the
    path has no start-up transient.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ss = to_state_space(model)
    rng = np.random.default_rng(seed)
    drive = rng.standard_normal(n)
    if ss.n_states == 0:
        return ss.D[0, 0] * drive
    x0 = _stationary_factor(model) @ rng.standard_normal(ss.n_states)
    _, y, _ = signal.dlsim((ss.A, ss.B, ss.C, ss.D, 1), drive, x0=x0)
    return np.asarray(y[:, 0], dtype=float)
