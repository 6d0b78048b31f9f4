"""Signal container: a finite mono sample vector plus its sample rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Signal:
    """Mono signal. sample_rate=0 marks an abstract vector (no time axis)."""

    samples: np.ndarray
    sample_rate: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise ValueError("empty signal")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal contains non-finite values")
        if self.sample_rate < 0:
            raise ValueError(f"negative sample rate: {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Length in seconds (nan for abstract vectors)."""
        if self.sample_rate == 0:
            return float("nan")
        return self.samples.size / self.sample_rate


def as_samples(x) -> np.ndarray:
    """Accept a Signal or a plain array; return the float64 sample vector."""
    if isinstance(x, Signal):
        return x.samples
    return np.asarray(x, dtype=np.float64)
