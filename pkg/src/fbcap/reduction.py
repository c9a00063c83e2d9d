"""Hankel singular values and Kung's SVD realization for low-order models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg

from fbcap.control import stable_unstable_split
from fbcap.protocol import FrequencyResponse
from fbcap.spectra import StateSpace, impulse_response, parallel

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12
DEFAULT_ORDER_RATIO = 1e-6
IMPULSE_DECAY = 1e-16
MAX_IMPULSE_LENGTH = 2048
ERROR_POINTS = 64


class ReductionError(RuntimeError):
    """Raised when a requested reduction order cannot be realized."""


@dataclass(frozen=True, eq=False)
class HankelSpectrum:
    singular_values: np.ndarray
    chosen_order: int
    truncation_error_bound: float

    @property
    def numerical_rank(self) -> int:
        sv = self.singular_values
        if sv.size == 0 or sv[0] == 0.0:
            return 0
        return int(np.sum(sv > RANK_TOL * sv[0]))

    def bound_for(self, order: int) -> float:
        """2 * sum of the singular values discarded at `order`."""
        return 2.0 * float(np.sum(self.singular_values[order:]))


def _hankel_pair(impulse: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # H[i, j] = g_{i+j+1} and its one-step shift, zero beyond the data
    return linalg.hankel(impulse), linalg.hankel(np.append(impulse[1:], 0.0))


def _as_impulse(impulse: Any) -> np.ndarray:
    g = np.asarray(impulse, dtype=float).reshape(-1)
    if g.size == 0:
        raise ValueError("impulse response must have at least one sample")
    return g


def select_order(singular_values: np.ndarray, ratio: float = DEFAULT_ORDER_RATIO) -> int:
    """Smallest r with sigma_{r+1} / sigma_1 < ratio."""
    sv = np.asarray(singular_values, dtype=float)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    for r in range(1, sv.size):
        if sv[r] / sv[0] < ratio:
            return r
    return sv.size


def hankel_singular_values(impulse: Any, ratio: float = DEFAULT_ORDER_RATIO) -> HankelSpectrum:
    """Singular values of the Hankel matrix of g_1, g_2, ..."""
    g = _as_impulse(impulse)
    sv = linalg.svdvals(_hankel_pair(g)[0])
    order = select_order(sv, ratio)
    return HankelSpectrum(
        singular_values=sv,
        chosen_order=order,
        truncation_error_bound=2.0 * float(np.sum(sv[order:])),
    )


def _fir_response(g: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    zinv = np.exp(-1j * thetas)
    return zinv * np.polynomial.polynomial.polyval(zinv, g)


def _padded(A: np.ndarray, B: np.ndarray, C: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # decoupled states at z = 0 leave the transfer function unchanged
    extra = order - A.shape[0]
    return (
        linalg.block_diag(A, np.zeros((extra, extra))),
        np.vstack([B, np.zeros((extra, 1))]),
        np.hstack([C, np.zeros((1, extra))]),
    )


def kung_reduce(impulse: Any, order: int, feedthrough: float = 0.0) -> StateSpace:
    """Order-`order` realization of g_1, g_2, ... from the SVD of its Hankel matrix.

    A = S^-1/2 U' H_shift V S^-1/2, B = S^1/2 V' e1, C = e1' U S^1/2, which is
    balanced truncation of the FIR g. A truncation that measures worse against
    the FIR than a lower-order one is replaced by that one, padded with
    decoupled states, so the error never grows with the order.
    """
    g = _as_impulse(impulse)
    H, H_shift = _hankel_pair(g)
    U, s, Vt = linalg.svd(H)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0.0 else 0
    if not 1 <= order <= rank:
        raise ReductionError(f"order {order} must lie in 1..{rank} (numerical rank)")
    shifted = U[:, :order].T @ H_shift @ Vt[:order].T
    thetas = np.linspace(-np.pi, np.pi, ERROR_POINTS, endpoint=False)
    target = _fir_response(g, thetas)

    best: tuple[float, np.ndarray, np.ndarray, np.ndarray] | None = None
    for k in range(1, order + 1):
        root = np.sqrt(s[:k])
        A = shifted[:k, :k] / np.outer(root, root)
        B = (root * Vt[:k, 0]).reshape(k, 1)
        C = (U[0, :k] * root).reshape(1, k)
        error = frequency_error(StateSpace(A, B, C, [[0.0]]), target, ERROR_POINTS)
        if best is None or error <= best[0]:
            best = (error, A, B, C)
    _, A, B, C = best
    if A.shape[0] < order:
        logger.debug("order %d truncation is worse than order %d; padding", order, A.shape[0])
        A, B, C = _padded(A, B, C, order)
    return StateSpace(A, B, C, [[feedthrough]])


def frequency_error(
    a: FrequencyResponse | np.ndarray, b: FrequencyResponse | np.ndarray, n_points: int = ERROR_POINTS
) -> float:
    """Sup-norm of a - b over n_points uniform frequencies; arrays are taken as samples there."""
    thetas = np.linspace(-np.pi, np.pi, n_points, endpoint=False)

    def sampled(x: FrequencyResponse | np.ndarray) -> np.ndarray:
        return np.asarray(x) if isinstance(x, np.ndarray) else x.freqresp(thetas)

    return float(np.max(np.abs(sampled(a) - sampled(b))))


@dataclass(frozen=True, eq=False)
class ReducedController:
    """Low-order controller: exact unstable part plus a reduced stable part."""

    system: StateSpace
    unstable_eigs: np.ndarray
    hankel: HankelSpectrum | None

    @property
    def order(self) -> int:
        return self.system.n_states

    @property
    def rate_bits(self) -> float:
        return float(np.sum(np.log2(np.abs(self.unstable_eigs))))

    def to_dict(self) -> dict[str, Any]:
        return {
            "order": self.order,
            "poles": [[float(p.real), float(p.imag)] for p in self.system.poles()],
            "unstable_poles": [[float(p.real), float(p.imag)] for p in self.unstable_eigs],
            "rate_bits": self.rate_bits,
            "hankel_singular_values": (
                [] if self.hankel is None else self.hankel.singular_values[:16].tolist()
            ),
            "system": self.system.to_dict(),
        }


def _decay_length(ss: StateSpace) -> int:
    rho = ss.spectral_radius
    if rho <= 0.0:
        return ss.n_states + 1
    length = math.ceil(math.log(IMPULSE_DECAY) / math.log(rho))
    return int(min(max(length, 2 * ss.n_states + 2), MAX_IMPULSE_LENGTH))


def reduce_controller(K: StateSpace, order: int, impulse_length: int | None = None) -> ReducedController:
    """Keep the unstable modes of K exactly; Kung-reduce the stable remainder."""
    scheme = stable_unstable_split(K)
    n_unstable = scheme.message_dim
    if order < n_unstable:
        raise ReductionError(f"order {order} cannot keep all {n_unstable} unstable modes")
    unstable = scheme.unstable_part()
    stable = scheme.stable_part()
    budget = order - n_unstable
    if budget == 0 or stable.n_states == 0:
        return ReducedController(system=unstable, unstable_eigs=scheme.unstable_eigs, hankel=None)

    length = impulse_length or _decay_length(stable)
    g = impulse_response(stable, length + 1)[1:]
    spectrum = hankel_singular_values(g)
    budget = min(budget, spectrum.numerical_rank)
    if budget == 0:
        return ReducedController(system=unstable, unstable_eigs=scheme.unstable_eigs, hankel=spectrum)
    reduced = parallel(unstable, kung_reduce(g, budget))
    logger.debug(
        "reduced %d-state controller to %d states (discarded Hankel mass %.3g)",
        K.n_states,
        reduced.n_states,
        spectrum.bound_for(budget),
    )
    return ReducedController(system=reduced, unstable_eigs=scheme.unstable_eigs, hankel=spectrum)
