"""Uniform frequency grid, trigonometric basis and dual points."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from fbcap.spectra import NoiseModel, eval_psd


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """2m points theta_i = -pi + (pi/m)(i-1) with cached spectrum and basis."""

    m: int
    h: int
    thetas: np.ndarray
    sw: np.ndarray
    cos_basis: np.ndarray
    sin_basis: np.ndarray
    model: NoiseModel

    @property
    def size(self) -> int:
        return 2 * self.m

    @property
    def weight(self) -> float:
        return 1.0 / (2 * self.m)

    def mirror_index(self) -> np.ndarray:
        """Index of the point at -theta_i for every i."""
        idx = np.arange(self.size)
        return (self.size - idx) % self.size


@dataclass(frozen=True, eq=False)
class DualPoint:
    """Dual variables (lambda, eta, eta0) and, optionally, the sampled nu_i."""

    lam: float
    eta: np.ndarray
    eta0: float
    nu: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "eta0", float(self.eta0))
        object.__setattr__(self, "eta", _frozen(np.atleast_1d(self.eta).reshape(-1)))
        if self.nu is not None:
            object.__setattr__(self, "nu", _frozen(np.atleast_1d(self.nu).reshape(-1)))

    @property
    def h(self) -> int:
        return self.eta.size

    def with_nu(self, nu: np.ndarray | None) -> DualPoint:
        return replace(self, nu=nu)

    def to_dict(self) -> dict[str, object]:
        return {
            "lambda": self.lam,
            "eta": self.eta.tolist(),
            "eta0": self.eta0,
        }


def build_grid(m: int, h: int, model: NoiseModel) -> FrequencyGrid:
    if m < 1:
        raise ValueError("m must be >= 1")
    if h < 0:
        raise ValueError("h must be >= 0")
    # integer offsets keep theta_i and its mirror exact negatives
    thetas = np.pi * (np.arange(2 * m) - m) / m
    cos_basis, sin_basis = trig_basis(h, thetas)
    return FrequencyGrid(
        m=m,
        h=h,
        thetas=_frozen(thetas),
        sw=_frozen(eval_psd(model, thetas)),
        cos_basis=_frozen(cos_basis),
        sin_basis=_frozen(sin_basis),
        model=model,
    )


def trig_basis(h: int, theta: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
    """A_k = cos(k theta), B_k = sin(k theta) for k = 1..h, stacked on the last axis."""
    if h < 0:
        raise ValueError("h must be >= 0")
    angles = np.multiply.outer(np.asarray(theta, dtype=float), np.arange(1, h + 1))
    return np.cos(angles), np.sin(angles)


def uv_components(
    dp: DualPoint, cos_basis: np.ndarray, sin_basis: np.ndarray, sw: np.ndarray | float
) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts u = 2 lambda S + eta'A + eta0, v = eta'B."""
    u = 2.0 * dp.lam * np.asarray(sw) + cos_basis @ dp.eta + dp.eta0
    v = sin_basis @ dp.eta
    return u, v


def r_squared(dp: DualPoint, theta: np.ndarray | float, sw: np.ndarray | float) -> np.ndarray | float:
    """(2 lambda S_w + eta'A + eta0)^2 + (eta'B)^2."""
    cos_basis, sin_basis = trig_basis(dp.h, theta)
    u, v = uv_components(dp, cos_basis, sin_basis, sw)
    value = u * u + v * v
    if np.ndim(value) == 0:
        return float(value)
    return value
