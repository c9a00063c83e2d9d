"""Youla controller, stable/unstable split and the feedback coding scheme.

The loop closes as u = -K y with y = u + w. With K = -Q (1 + Q)^-1 the
sensitivity (1 + K)^-1 equals 1 + Q and K (1 + K)^-1 equals -Q, so the
channel input is u = Q w and carries exactly the power of Q.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg

from fbcap.spectra import NoiseModel, StateSpace, sample_noise
from fbcap.synthesis import FirFilter

logger = logging.getLogger(__name__)

MARGINAL_BAND = 1e-6
STABILITY_MARGIN = 1e-6
MAX_AXIS_BITS = 52


class MarginalModeError(RuntimeError):
    """Raised when a controller mode sits too close to the unit circle to split."""


def youla_controller(fir: FirFilter) -> StateSpace:
    """K = -Q (1 + Q)^-1 as the feedback realization of the shift register.

    Q is strictly proper, so v = y - Q v closes without an algebraic loop:
    x+ = (A - B C) x + B y and u = -C x.
    """
    q = fir.to_state_space()
    return StateSpace(q.A - q.B @ q.C, q.B, -q.C, [[0.0]])


def closed_loop_maps(K: StateSpace, theta: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
    """Sensitivity (1 + K)^-1 and complementary sensitivity K (1 + K)^-1."""
    k = K.freqresp(theta)
    return 1.0 / (1.0 + k), k / (1.0 + k)


def _axis_weights(Au: np.ndarray) -> np.ndarray:
    # one weight per coordinate of the quasi-triangular real Schur block
    n = Au.shape[0]
    weights = np.empty(n)
    j = 0
    while j < n:
        if j + 1 < n and Au[j + 1, j] != 0.0:
            pair = linalg.eigvals(Au[j : j + 2, j : j + 2])
            weights[j : j + 2] = np.log2(np.abs(pair))
            j += 2
        else:
            weights[j] = np.log2(abs(Au[j, j]))
            j += 1
    return weights


@dataclass(frozen=True, eq=False)
class CodingScheme:
    """K in block-diagonal coordinates: stable part (As, Bs, Cs), unstable part (Au, Bu, Cu)."""

    As: np.ndarray
    Au: np.ndarray
    Bs: np.ndarray
    Bu: np.ndarray
    Cs: np.ndarray
    Cu: np.ndarray
    transform: np.ndarray
    unstable_eigs: np.ndarray

    @property
    def message_dim(self) -> int:
        return self.Au.shape[0]

    @property
    def rate_bits(self) -> float:
        return float(np.sum(np.log2(np.abs(self.unstable_eigs))))

    @property
    def axis_weights(self) -> np.ndarray:
        return _axis_weights(self.Au)

    def as_state_space(self) -> StateSpace:
        return StateSpace(
            linalg.block_diag(self.As, self.Au),
            np.vstack([self.Bs, self.Bu]),
            np.hstack([self.Cs, self.Cu]),
            [[0.0]],
        )

    def stable_part(self) -> StateSpace:
        return StateSpace(self.As, self.Bs, self.Cs, [[0.0]])

    def unstable_part(self) -> StateSpace:
        return StateSpace(self.Au, self.Bu, self.Cu, [[0.0]])

    def closed_loop_poles(self) -> np.ndarray:
        k = self.as_state_space()
        if k.n_states == 0:
            return np.zeros(0, dtype=complex)
        return linalg.eigvals(k.A - k.B @ k.C)

    def is_internally_stable(self, margin: float = STABILITY_MARGIN) -> bool:
        poles = self.closed_loop_poles()
        return bool(np.all(np.abs(poles) < 1.0 - margin))

    def to_dict(self) -> dict[str, Any]:
        return {
            "As": self.As.tolist(),
            "Au": self.Au.tolist(),
            "Bs": self.Bs.tolist(),
            "Bu": self.Bu.tolist(),
            "Cs": self.Cs.tolist(),
            "Cu": self.Cu.tolist(),
            "transform": self.transform.tolist(),
            "unstable_eigs": [[float(z.real), float(z.imag)] for z in self.unstable_eigs],
            "rate_bits": self.rate_bits,
            "message_dim": self.message_dim,
        }


def stable_unstable_split(K: StateSpace) -> CodingScheme:
    """Ordered real Schur form, then a Sylvester solve to zero the coupling block."""
    n = K.n_states
    if n == 0:
        empty = np.zeros((0, 0))
        return CodingScheme(
            As=empty,
            Au=empty,
            Bs=np.zeros((0, 1)),
            Bu=np.zeros((0, 1)),
            Cs=np.zeros((1, 0)),
            Cu=np.zeros((1, 0)),
            transform=empty,
            unstable_eigs=np.zeros(0, dtype=complex),
        )
    moduli = np.abs(K.poles())
    if np.any(np.abs(moduli - 1.0) < MARGINAL_BAND):
        closest = float(moduli[np.argmin(np.abs(moduli - 1.0))])
        raise MarginalModeError(f"marginal mode, cannot split (|pole| = {closest:.9f})")

    T, Z, sdim = linalg.schur(K.A, output="real", sort="iuc")
    T11, T12, T22 = T[:sdim, :sdim], T[:sdim, sdim:], T[sdim:, sdim:]
    coupling = np.zeros((sdim, n - sdim))
    if 0 < sdim < n:
        coupling = linalg.solve_sylvester(T11, -T22, -T12)
    S = np.eye(n)
    S[:sdim, sdim:] = coupling
    S_inv = np.eye(n)
    S_inv[:sdim, sdim:] = -coupling
    V = Z @ S
    B = S_inv @ Z.T @ K.B
    C = K.C @ V
    scheme = CodingScheme(
        As=T11.copy(),
        Au=T22.copy(),
        Bs=B[:sdim],
        Bu=B[sdim:],
        Cs=C[:, :sdim],
        Cu=C[:, sdim:],
        transform=V,
        unstable_eigs=linalg.eigvals(T22) if n > sdim else np.zeros(0, dtype=complex),
    )
    logger.debug(
        "split %d-state controller: %d stable, %d unstable, rate %.12f bits",
        n,
        sdim,
        n - sdim,
        scheme.rate_bits,
    )
    return scheme


def allocate_bits(scheme: CodingScheme, nR_bits: int) -> np.ndarray:
    """Per-axis bit counts proportional to log2|lambda_i(Au)|, summing to nR_bits."""
    if scheme.message_dim == 0:
        raise ValueError("scheme has no unstable modes to carry a message")
    if nR_bits < 1:
        raise ValueError("nR_bits must be >= 1")
    weights = scheme.axis_weights
    raw = nR_bits * weights / float(np.sum(weights))
    bits = np.floor(raw).astype(int)
    order = np.argsort(-(raw - bits), kind="stable")
    bits[order[: nR_bits - int(bits.sum())]] += 1
    if int(bits.max()) > MAX_AXIS_BITS:
        raise ValueError(
            f"nR_bits={nR_bits} needs {int(bits.max())} bits on one axis; "
            f"at most {MAX_AXIS_BITS} are representable"
        )
    return bits


def encode_message(scheme: CodingScheme, M: int, nR_bits: int) -> np.ndarray:
    """Centroid of the M-th dyadic subcube of [-1/2, 1/2]^dim (first axis most significant)."""
    bits = allocate_bits(scheme, nR_bits)
    if not 1 <= M <= 2**nR_bits:
        raise ValueError(f"M must lie in 1..2^{nR_bits}, got {M}")
    index = int(M) - 1
    x = np.empty(bits.size)
    for j in range(bits.size - 1, -1, -1):
        cells = 2 ** int(bits[j])
        index, digit = divmod(index, cells)
        x[j] = -0.5 + (digit + 0.5) / cells
    return x


def decode_message(scheme: CodingScheme, x_estimate: np.ndarray, nR_bits: int) -> int:
    """Nearest subcube centroid to x_estimate, as a message index in 1..2^nR_bits."""
    bits = allocate_bits(scheme, nR_bits)
    x = np.nan_to_num(np.asarray(x_estimate, dtype=float).reshape(-1))
    index = 0
    for j, b in enumerate(bits):
        cells = 2 ** int(b)
        digit = int(np.clip(np.floor((x[j] + 0.5) * cells), 0, cells - 1))
        index = index * cells + digit
    return index + 1


@dataclass(frozen=True, eq=False)
class LoopTrace:
    """Channel output y, input u and the decoder's estimate of -x_u0 after each step."""

    y: np.ndarray
    u: np.ndarray
    x_hat_u0: np.ndarray


@dataclass(frozen=True)
class TransmissionStats:
    trials: int
    n: int
    nR_bits: int
    target_power: float
    empirical_input_power: float
    decode_error_rate: float
    mean_estimate_error: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "trials": self.trials,
            "n": self.n,
            "nR_bits": self.nR_bits,
            "target_power": self.target_power,
            "empirical_input_power": self.empirical_input_power,
            "decode_error_rate": self.decode_error_rate,
            "mean_estimate_error": self.mean_estimate_error,
        }


def _propagate(
    scheme: CodingScheme, x_u0: np.ndarray, noise: np.ndarray, keep_trajectory: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the loop for a batch of trials (columns).

    The encoder state x~_u and the decoder state x^_u are propagated as their
    sum, which obeys the stable closed-loop recursion; the decoder's estimate
    A_u^-k x^_u(k) is accumulated with A_u^-(k+1) B_u built one inverse at a time.
    """
    n, trials = noise.shape
    dim = scheme.message_dim
    xs = np.zeros((scheme.As.shape[0], trials))
    xu = np.array(x_u0, dtype=float).reshape(dim, trials)
    estimate = np.zeros((dim, trials))
    gain = linalg.solve(scheme.Au, scheme.Bu[:, 0]) if dim else np.zeros(0)
    au_inv = linalg.inv(scheme.Au) if dim else np.zeros((0, 0))

    y = np.empty((n, trials))
    u = np.empty((n, trials))
    history = np.empty((n, dim, trials)) if keep_trajectory else np.empty((1, dim, trials))
    for k in range(n):
        u[k] = -(scheme.Cs[0] @ xs + scheme.Cu[0] @ xu)
        y[k] = u[k] + noise[k]
        xs = scheme.As @ xs + np.outer(scheme.Bs[:, 0], y[k])
        xu = scheme.Au @ xu + np.outer(scheme.Bu[:, 0], y[k])
        estimate = estimate + np.outer(gain, y[k])
        gain = au_inv @ gain
        history[k if keep_trajectory else 0] = estimate
    return y, u, history


def run_loop(
    scheme: CodingScheme,
    model: NoiseModel,
    x_u0: np.ndarray,
    n: int,
    seed: int,
    noise_gain: float = 1.0,
) -> LoopTrace:
    """Simulate encoder, channel y = u + w and decoder for n steps from zero decoder state."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x_u0 = np.asarray(x_u0, dtype=float).reshape(-1)
    if x_u0.size != scheme.message_dim:
        raise ValueError(f"x_u0 must have {scheme.message_dim} entries, got {x_u0.size}")
    noise = np.zeros(n) if noise_gain == 0.0 else noise_gain * sample_noise(model, n, seed)
    y, u, history = _propagate(scheme, x_u0[:, None], noise[:, None], keep_trajectory=True)
    return LoopTrace(y=y[:, 0], u=u[:, 0], x_hat_u0=history[:, :, 0])


def simulate_transmission(
    scheme: CodingScheme,
    model: NoiseModel,
    P: float,
    n: int,
    nR_bits: int,
    trials: int,
    seed: int,
    noise_gain: float = 1.0,
) -> TransmissionStats:
    """Monte-Carlo message transmission; trial t uses noise seed `seed + t`."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    if not nR_bits / n < scheme.rate_bits:
        raise ValueError(
            f"nR_bits / n = {nR_bits / n:.6g} must be below the scheme rate {scheme.rate_bits:.6g}"
        )
    if nR_bits > 62:
        raise ValueError("simulated messages are limited to nR_bits <= 62")
    messages = [
        int(np.random.default_rng([seed, t]).integers(1, 2**nR_bits, endpoint=True))
        for t in range(trials)
    ]
    x_u0 = np.column_stack([encode_message(scheme, M, nR_bits) for M in messages])
    if noise_gain == 0.0:
        noise = np.zeros((n, trials))
    else:
        noise = noise_gain * np.column_stack([sample_noise(model, n, seed + t) for t in range(trials)])

    _, u, history = _propagate(scheme, x_u0, noise, keep_trajectory=False)
    final = history[0]
    errors = np.linalg.norm(final + x_u0, axis=0)
    decoded = [decode_message(scheme, -final[:, t], nR_bits) for t in range(trials)]
    failures = sum(1 for got, sent in zip(decoded, messages) if got != sent)
    return TransmissionStats(
        trials=trials,
        n=n,
        nR_bits=nR_bits,
        target_power=P,
        empirical_input_power=float(np.mean(u * u)),
        decode_error_rate=failures / trials,
        mean_estimate_error=float(np.mean(errors)),
    )
