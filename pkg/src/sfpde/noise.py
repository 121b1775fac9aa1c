"""Truncated sine-series (KL-style) additive temporal noise.

The forcing is f(t) = (eps / mu) * sum_k a_k sin(2 pi k t / T) Q_k with
exponentially-correlated spectrum a_k and i.i.d. uniform Q_k on
[-sqrt(3), sqrt(3)] (unit variance).  mu normalizes the maximum-over-time
standard deviation of the truncated series to 1, so eps is the peak
pointwise standard deviation of the realized noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SQRT3",
    "NoiseSpec",
    "kl_coefficients",
    "energy_fraction",
    "normalization",
    "realize",
]

SQRT3 = math.sqrt(3.0)

_ENERGY_TAIL_MODES = 10_000


@dataclass(frozen=True)
class NoiseSpec:
    """Sine-series noise parameters.

    t_end: time horizon T; corr_window: correlation parameter A (the
    correlation length is T/A); n_modes: retained modes M; amplitude:
    peak standard deviation eps.
    """

    t_end: float = 1.0
    corr_window: float = 0.5
    n_modes: int = 4
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not self.t_end > 0.0:
            raise ValueError(f"time horizon must be positive, got {self.t_end}")
        if not self.corr_window > 0.0:
            raise ValueError(f"correlation window must be positive, got {self.corr_window}")
        if self.n_modes < 1:
            raise ValueError(f"mode count must be >= 1, got {self.n_modes}")
        if self.amplitude < 0.0:
            raise ValueError(f"amplitude must be nonnegative, got {self.amplitude}")


def _coefficients(spec: NoiseSpec, count: int) -> np.ndarray:
    t_end = spec.t_end
    corr_len = t_end / spec.corr_window
    k = np.arange(1, count + 1, dtype=float)
    lead = 2.0 / (math.sqrt(t_end) * corr_len**2)
    return lead / (1.0 + (2.0 * math.pi * k / (t_end * corr_len)) ** 2)


def kl_coefficients(spec: NoiseSpec) -> np.ndarray:
    """Spectral coefficients a_1..a_M (positive, strictly decreasing)."""
    return _coefficients(spec, spec.n_modes)


def energy_fraction(spec: NoiseSpec) -> float:
    """Share of sum a_k^2 captured by the first M modes (tail at 10^4 modes)."""
    full = _coefficients(spec, _ENERGY_TAIL_MODES)
    return float(np.sum(full[: spec.n_modes] ** 2) / np.sum(full**2))


def _std_profile_sq(spec: NoiseSpec, t: np.ndarray) -> np.ndarray:
    a = kl_coefficients(spec)
    phase = 2.0 * math.pi * np.outer(np.arange(1, spec.n_modes + 1), t) / spec.t_end
    return np.einsum("k,kt->t", a**2, np.sin(phase) ** 2)


def normalization(spec: NoiseSpec) -> float:
    """max over t of the truncated-series standard deviation (unit-variance Q).

    Coarse 10001-point grid followed by golden-section refinement.
    """
    grid = np.linspace(0.0, spec.t_end, 10_001)
    vals = _std_profile_sq(spec, grid)
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = _std_profile_sq(spec, np.array([c]))[0]
    fd = _std_profile_sq(spec, np.array([d]))[0]
    while hi - lo > 1e-10:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = _std_profile_sq(spec, np.array([c]))[0]
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = _std_profile_sq(spec, np.array([d]))[0]
    return math.sqrt(max(fc, fd, vals[i]))


def realize(spec: NoiseSpec, q: np.ndarray):
    """Noise path t -> (eps/mu) sum_k a_k sin(2 pi k t / T) q_k.

    q must hold M values in [-sqrt(3), sqrt(3)].  The returned callable is
    vectorized over t and vanishes exactly at t = 0 and t = T.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.n_modes,):
        raise ValueError(f"expected {spec.n_modes} mode amplitudes, got shape {q.shape}")
    if np.any(np.abs(q) > SQRT3 + 1e-12):
        raise ValueError("mode amplitudes must lie in [-sqrt(3), sqrt(3)]")
    coeff = kl_coefficients(spec) * q * (spec.amplitude / normalization(spec))
    t_end = spec.t_end
    k = np.arange(1, spec.n_modes + 1, dtype=float)

    def path(t):
        t = np.asarray(t, dtype=float)
        # mod folds t = T to phase 0 so the path is exactly zero there
        phase = 2.0 * math.pi * np.multiply.outer(np.mod(t, t_end), k) / t_end
        return np.sin(phase) @ coeff

    return path
