"""Continuous-time cosine noise schedule and derived quantities.

Time runs over [0, 1]: t=0 is clean data, t=1 is pure noise. The signal and
noise coefficients are

    alpha(t) = cos(pi*t/2),   sigma(t) = sin(pi*t/2),

so alpha^2 + sigma^2 = 1 (variance preserving) and the signal-to-noise
ratio alpha^2/sigma^2 decreases monotonically in t.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

# Samplers start slightly below t=1 so sigma_t > 0 strictly inside the loop;
# the final step may land exactly on t=0 (its formulas are defined at s=0).
DEFAULT_T_MAX = 1.0 - 1e-4


class NoiseLevel(NamedTuple):
    t: float
    alpha: float
    sigma: float


def cosine_level(t: float) -> NoiseLevel:
    """Noise level at time t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time must lie in [0, 1], got {t}")
    return NoiseLevel(t, math.cos(math.pi * t / 2), math.sin(math.pi * t / 2))


def alpha_sigma(t):
    """Vectorized (alpha, sigma) for an array of times."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("times must lie in [0, 1]")
    return np.cos(np.pi * t / 2), np.sin(np.pi * t / 2)


def snr(t: float) -> float:
    """Signal-to-noise ratio alpha^2/sigma^2 (infinite at t=0)."""
    lvl = cosine_level(t)
    if lvl.sigma == 0.0:
        return math.inf
    return lvl.alpha ** 2 / lvl.sigma ** 2


def transition_variance(t: float, s: float) -> float:
    """Reverse-transition variance for a step from time t down to time s.

        var = (sigma_s^2 / sigma_t^2) * (1 - alpha_t^2 / alpha_s^2)

    Requires 0 <= s < t <= 1; t=0 is rejected (sigma_t = 0).
    """
    if not 0.0 <= s < t <= 1.0:
        raise ValueError(f"need 0 <= s < t <= 1, got t={t}, s={s}")
    lt = cosine_level(t)
    ls = cosine_level(s)
    if lt.sigma == 0.0:
        raise ValueError("transition variance undefined at t=0 (sigma_t = 0)")
    return (ls.sigma ** 2 / lt.sigma ** 2) * (1.0 - lt.alpha ** 2 / ls.alpha ** 2)


def uniform_grid(steps: int, t_max: float = DEFAULT_T_MAX, t_min: float = 0.0) -> np.ndarray:
    """steps+1 equally spaced times from t_max down to t_min (both included)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not 0.0 <= t_min < t_max <= 1.0:
        raise ValueError(f"need 0 <= t_min < t_max <= 1, got [{t_min}, {t_max}]")
    return np.linspace(t_max, t_min, steps + 1)
