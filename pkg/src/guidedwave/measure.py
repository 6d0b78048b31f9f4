"""Measurement operators, distance functions and the data-consistency step.

Selection masks pick left/right context samples (rows of the matrix are
distinct unit vectors, so A A^T = I and the orthogonal projection onto
{x : A x = y} reduces to replacing the selected coordinates with y).
Non-linear operators (embedder, classifier) expose exact VJPs so guidance
gradients can be chained through them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

BCE_CLAMP = 1e-7

MASK_KINDS = ("left_context", "right_context", "infill_union")


@dataclass(frozen=True)
class LinearMask:
    """Row-selection measurement: left context, right context, or both."""

    kind: str
    c_left: int
    c_right: int
    n: int

    is_linear_selection = True

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.kind == "left_context":
            if not 0 < self.c_left < self.n or self.c_right != 0:
                raise ValueError("left_context mask needs 0 < c_left < n, c_right=0")
        elif self.kind == "right_context":
            if not 0 < self.c_right < self.n or self.c_left != 0:
                raise ValueError("right_context mask needs 0 < c_right < n, c_left=0")
        else:
            if self.c_left <= 0 or self.c_right <= 0:
                raise ValueError("infill_union mask needs both contexts non-empty")
            if self.c_left + self.c_right >= self.n:
                raise ValueError("contexts must leave a non-empty hole (C_L + C_R < n)")

    @cached_property
    def indices(self) -> np.ndarray:
        """Selected sample positions, in measurement order (left, then right)."""
        left = np.arange(self.c_left)
        right = np.arange(self.n - self.c_right, self.n)
        return np.concatenate([left, right])

    @cached_property
    def complement(self) -> np.ndarray:
        """Unmeasured sample positions (the region being generated)."""
        mask = np.ones(self.n, dtype=bool)
        mask[self.indices] = False
        return np.nonzero(mask)[0]

    @property
    def rows(self) -> int:
        return self.c_left + self.c_right

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected length {self.n}, got {x.shape[-1]}")
        return x[..., self.indices]

    def vjp(self, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """A^T applied to the cotangent (scatter into selected positions)."""
        out = np.zeros(self.n)
        out[self.indices] = np.asarray(cotangent, dtype=np.float64)
        return out


def apply_mask(mask: LinearMask, x: np.ndarray) -> np.ndarray:
    return mask.apply(x)


def consistency_project(x: np.ndarray, y: np.ndarray, mask) -> np.ndarray:
    """Exact orthogonal projection onto {x : A x = y} for selection masks.

    For row-selection operators A A^T = I, so the projection is coordinate
    replacement: measured positions take y, the rest are untouched.
    """
    if not getattr(mask, "is_linear_selection", False):
        raise ValueError("data consistency requires a linear selection operator")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size != mask.rows:
        raise ValueError(f"measurement length {y.size} != mask rows {mask.rows}")
    out = x.copy()
    out[mask.indices] = y
    return out


@dataclass(frozen=True)
class CrossfadeSpec:
    """Constant-power fade pair: fade_in ascending 0->1, fade_out descending."""

    fade_in: np.ndarray
    fade_out: np.ndarray

    @property
    def length(self) -> int:
        return self.fade_in.size


def crossfade(fade_length: int) -> CrossfadeSpec:
    """Quarter-sine constant-power fades: in = sin, out = cos of the ramp.

    fade_in[i]^2 + fade_out[i]^2 = 1 at every index. A single-sample fade
    uses the midpoint (both coefficients sqrt(1/2)).
    """
    if fade_length < 1:
        raise ValueError("fade_length must be >= 1")
    if fade_length == 1:
        ramp = np.array([0.5])
    else:
        ramp = np.arange(fade_length) / (fade_length - 1)
    ang = 0.5 * np.pi * ramp
    return CrossfadeSpec(fade_in=np.sin(ang), fade_out=np.cos(ang))


def build_transition_target(left: np.ndarray, right: np.ndarray,
                            c_left: int, c_right: int,
                            fade_length: int) -> np.ndarray:
    """Compose a transition target of length c_left + fade_length + c_right.

    The left track contributes its first c_left + fade_length samples
    (context, then fading out); the right track contributes its last
    fade_length + c_right samples (fading in, then context).
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if c_left < 1 or c_right < 1 or fade_length < 1:
        raise ValueError("contexts and fade must be non-empty")
    if left.size < c_left + fade_length:
        raise ValueError(f"left track too short: {left.size} < {c_left + fade_length}")
    if right.size < fade_length + c_right:
        raise ValueError(f"right track too short: {right.size} < {fade_length + c_right}")
    fades = crossfade(fade_length)
    out_a = left[c_left:c_left + fade_length]
    in_b = right[right.size - c_right - fade_length:right.size - c_right]
    return np.concatenate([
        left[:c_left],
        fades.fade_out * out_a + fades.fade_in * in_b,
        right[right.size - c_right:],
    ])


# ---- distance functions ----------------------------------------------------


class L1Distance:
    """Sum of absolute errors; subgradient sign(yhat - y) with sign(0) = 0."""

    def eval(self, y, yhat) -> float:
        y, yhat = _pair(y, yhat)
        return float(np.sum(np.abs(y - yhat)))

    def grad(self, y, yhat) -> np.ndarray:
        y, yhat = _pair(y, yhat)
        return np.sign(yhat - y)


class L2Distance:
    """Squared L2 by default; set squared=False for the plain norm."""

    def __init__(self, squared: bool = True):
        self.squared = squared

    def eval(self, y, yhat) -> float:
        y, yhat = _pair(y, yhat)
        sq = float(np.sum((y - yhat) ** 2))
        return sq if self.squared else math.sqrt(sq)

    def grad(self, y, yhat) -> np.ndarray:
        y, yhat = _pair(y, yhat)
        diff = yhat - y
        if self.squared:
            return 2.0 * diff
        norm = math.sqrt(float(np.sum(diff * diff)))
        if norm == 0.0:
            return np.zeros_like(diff)
        return diff / norm


class BCEDistance:
    """Binary cross-entropy summed over labels.

    Predicted probabilities are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before
    the logs; the gradient is evaluated at the clamped values.
    """

    def __init__(self, clamp: float = BCE_CLAMP):
        self.clamp = clamp

    def _clamped(self, yhat):
        return np.clip(yhat, self.clamp, 1.0 - self.clamp)

    def eval(self, y, yhat) -> float:
        y, yhat = _pair(y, yhat)
        p = self._clamped(yhat)
        return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))

    def grad(self, y, yhat) -> np.ndarray:
        y, yhat = _pair(y, yhat)
        p = self._clamped(yhat)
        return -y / p + (1.0 - y) / (1.0 - p)


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    return y, yhat


def l1_distance(y, yhat) -> float:
    return L1Distance().eval(y, yhat)


def l2_distance(y, yhat, squared: bool = True) -> float:
    return L2Distance(squared=squared).eval(y, yhat)


def bce_distance(y, yhat) -> float:
    return BCEDistance().eval(y, yhat)


# ---- differentiable toy operators ------------------------------------------


class RandomProjectionEmbedder:
    """Fixed seeded embedding map x -> tanh(W x); stands in for a pretrained
    audio embedder at desk scale."""

    is_linear_selection = False

    def __init__(self, seed: int, in_dim: int, emb_dim: int):
        if emb_dim > in_dim:
            raise ValueError("emb_dim must not exceed in_dim")
        rng = np.random.default_rng(seed)
        self.in_dim = in_dim
        self.emb_dim = emb_dim
        self.weight = rng.standard_normal((emb_dim, in_dim)) / np.sqrt(in_dim)

    @property
    def rows(self) -> int:
        return self.emb_dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected length {self.in_dim}, got {x.shape[-1]}")
        return np.tanh(x @ self.weight.T)

    def vjp(self, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        z = self.weight @ np.asarray(x, dtype=np.float64)
        u = np.asarray(cotangent, dtype=np.float64)
        return self.weight.T @ (u * (1.0 - np.tanh(z) ** 2))


class SigmoidClassifier:
    """Fixed seeded multi-label classifier: per-class sigmoid of linear
    features, outputs in (0, 1)^m."""

    is_linear_selection = False

    def __init__(self, seed: int, in_dim: int, classes: int):
        if classes < 1:
            raise ValueError("classes must be >= 1")
        rng = np.random.default_rng(seed)
        self.in_dim = in_dim
        self.classes = classes
        self.weight = rng.standard_normal((classes, in_dim)) / np.sqrt(in_dim)

    @property
    def rows(self) -> int:
        return self.classes

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected length {self.in_dim}, got {x.shape[-1]}")
        return 1.0 / (1.0 + np.exp(-(x @ self.weight.T)))

    def vjp(self, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        p = self.apply(x)
        u = np.asarray(cotangent, dtype=np.float64)
        return self.weight.T @ (u * p * (1.0 - p))


def toy_embedder(seed: int, in_dim: int, emb_dim: int) -> RandomProjectionEmbedder:
    return RandomProjectionEmbedder(seed, in_dim, emb_dim)


def toy_classifier(seed: int, in_dim: int, classes: int) -> SigmoidClassifier:
    return SigmoidClassifier(seed, in_dim, classes)
