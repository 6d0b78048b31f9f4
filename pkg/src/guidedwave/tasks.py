"""Ready-made conditional-generation task constructors.

Each task binds a measurement operator, a distance, a target measurement y
and the recipe for the initial sample:

  continuation        keep a prompt prefix, generate the rest
  infill              keep both contexts, generate the hole
  regenerate          infill whose initial hole blends noise with the original
  transition          regenerate over a constant-power crossfade of two tracks
  embedder_guidance   match a reference embedding (non-linear operator)
  classifier_guidance match target class probabilities (BCE loss)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measure import (BCEDistance, L1Distance, L2Distance, LinearMask,
                      build_transition_target)
from .signals import Signal, as_samples

SELECTION_KINDS = ("continuation", "infill", "regenerate", "transition")
GUIDANCE_KINDS = ("embedder_guidance", "classifier_guidance")
TASK_KINDS = SELECTION_KINDS + GUIDANCE_KINDS


@dataclass(frozen=True)
class TaskSpec:
    """Immutable bundle of everything a sampler needs for one task."""

    kind: str
    operator: object
    distance: object
    y: np.ndarray
    n: int
    xbar: Optional[np.ndarray] = None
    noise_mix: float = 1.0
    sample_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not 0.0 <= self.noise_mix <= 1.0:
            raise ValueError(f"noise_mix must lie in [0, 1], got {self.noise_mix}")
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "y", y)
        if self.kind in SELECTION_KINDS and not self.operator.is_linear_selection:
            raise ValueError(f"{self.kind} task requires a selection mask operator")
        if self.xbar is not None:
            xbar = np.asarray(self.xbar, dtype=np.float64)
            if xbar.size != self.n:
                raise ValueError(f"xbar length {xbar.size} != n {self.n}")
            object.__setattr__(self, "xbar", xbar)
            if not np.array_equal(self.operator.apply(xbar), y):
                raise ValueError("y must equal operator.apply(xbar)")

    @property
    def supports_consistency(self) -> bool:
        return bool(getattr(self.operator, "is_linear_selection", False))


def continuation_task(prompt: Signal, total_len: int) -> TaskSpec:
    """Fix the first len(prompt) samples, generate up to total_len."""
    samples = as_samples(prompt)
    if samples.size >= total_len:
        raise ValueError(f"prompt ({samples.size}) must be shorter than "
                         f"total length ({total_len})")
    mask = LinearMask("left_context", c_left=samples.size, c_right=0, n=total_len)
    rate = prompt.sample_rate if isinstance(prompt, Signal) else 0.0
    return TaskSpec(kind="continuation", operator=mask, distance=L1Distance(),
                    y=samples.copy(), n=total_len, sample_rate=rate)


def infill_task(original: Signal, hole_start: int, hole_len: int) -> TaskSpec:
    """Regenerate original[hole_start : hole_start+hole_len] between contexts."""
    samples = as_samples(original)
    n = samples.size
    if hole_start <= 0 or hole_len <= 0 or hole_start + hole_len >= n:
        raise ValueError("hole must leave non-empty contexts on both sides")
    mask = LinearMask("infill_union", c_left=hole_start,
                      c_right=n - hole_start - hole_len, n=n)
    rate = original.sample_rate if isinstance(original, Signal) else 0.0
    return TaskSpec(kind="infill", operator=mask, distance=L1Distance(),
                    y=mask.apply(samples), n=n, xbar=samples.copy(),
                    sample_rate=rate)


def regenerate_task(original: Signal, hole_start: int, hole_len: int,
                    noise_mix: float = 0.85) -> TaskSpec:
    """Infill whose initial hole is noise_mix*z + (1-noise_mix)*original."""
    base = infill_task(original, hole_start, hole_len)
    return TaskSpec(kind="regenerate", operator=base.operator,
                    distance=base.distance, y=base.y, n=base.n,
                    xbar=base.xbar, noise_mix=noise_mix,
                    sample_rate=base.sample_rate)


def transition_task(track_a: Signal, track_b: Signal, c_left: int, c_right: int,
                    fade_length: int, noise_mix: float = 0.85) -> TaskSpec:
    """Regenerate a constant-power crossfade between two tracks.

    The composed target keeps track A's first c_left samples and track B's
    last c_right samples as contexts; the middle fade_length samples start
    as the crossfade blended with noise.
    """
    a = as_samples(track_a)
    b = as_samples(track_b)
    rate_a = track_a.sample_rate if isinstance(track_a, Signal) else 0.0
    rate_b = track_b.sample_rate if isinstance(track_b, Signal) else 0.0
    if rate_a != rate_b:
        raise ValueError(f"sample-rate mismatch: {rate_a} vs {rate_b}")
    xbar = build_transition_target(a, b, c_left, c_right, fade_length)
    mask = LinearMask("infill_union", c_left=c_left, c_right=c_right, n=xbar.size)
    return TaskSpec(kind="transition", operator=mask, distance=L1Distance(),
                    y=mask.apply(xbar), n=xbar.size, xbar=xbar,
                    noise_mix=noise_mix, sample_rate=rate_a)


def embedder_guidance_task(reference: Signal, embedder) -> TaskSpec:
    """Match the embedding of a reference signal (squared-L2 loss)."""
    samples = as_samples(reference)
    if samples.size != embedder.in_dim:
        raise ValueError(f"embedder expects length {embedder.in_dim}, "
                         f"reference has {samples.size}")
    rate = reference.sample_rate if isinstance(reference, Signal) else 0.0
    return TaskSpec(kind="embedder_guidance", operator=embedder,
                    distance=L2Distance(squared=True),
                    y=embedder.apply(samples), n=samples.size,
                    xbar=samples.copy(), sample_rate=rate)


def classifier_guidance_task(target_labels, classifier) -> TaskSpec:
    """Steer class probabilities toward target labels in [0, 1]^m."""
    labels = np.asarray(target_labels, dtype=np.float64)
    if labels.ndim != 1 or labels.size != classifier.classes:
        raise ValueError(f"expected {classifier.classes} labels, got shape "
                         f"{labels.shape}")
    if np.any(labels < 0.0) or np.any(labels > 1.0):
        raise ValueError("labels must lie in [0, 1]")
    return TaskSpec(kind="classifier_guidance", operator=classifier,
                    distance=BCEDistance(), y=labels.copy(),
                    n=classifier.in_dim)
