"""Desk-scale generative evaluation metrics.

Frechet distance between Gaussian fits of embedding sets, per-class
Bernoulli KL divergence over multi-label classifier outputs, log-mel
reconstruction distance, and a k-NN manifold realism score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .signals import as_samples

KLD_CLAMP = 1e-7
REALISM_FLOOR = 1e-9


@dataclass(frozen=True)
class EmbeddingStats:
    """Sample mean and unbiased covariance of an embedding set."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("need at least 2 samples")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")


def embedding_stats(embeddings) -> EmbeddingStats:
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 2:
        raise ValueError("need a (count, dim) array with count >= 2")
    mean = emb.mean(axis=0)
    centered = emb - mean
    cov = centered.T @ centered / (emb.shape[0] - 1)
    return EmbeddingStats(mean=mean, cov=cov, count=emb.shape[0])


def merge_stats(a: EmbeddingStats, b: EmbeddingStats) -> EmbeddingStats:
    """Exact count-weighted merge: equals stats over the concatenated sets."""
    n = a.count + b.count
    mean = (a.count * a.mean + b.count * b.mean) / n
    delta = (b.mean - a.mean)[:, None]
    scatter = (a.cov * (a.count - 1) + b.cov * (b.count - 1)
               + (a.count * b.count / n) * (delta @ delta.T))
    return EmbeddingStats(mean=mean, cov=scatter / (n - 1), count=n)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if np.any(vals < -1e-10 * max(1.0, abs(vals).max())):
        warnings.warn("clamping negative eigenvalues in covariance square root")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: EmbeddingStats, b: EmbeddingStats) -> float:
    """||mu_a - mu_b||^2 + Tr(Ca + Cb - 2 (Ca Cb)^{1/2}).

    The cross term uses the symmetrized product Ca^{1/2} Cb Ca^{1/2}, whose
    eigendecomposition is numerically stable; its trace square root equals
    Tr((Ca Cb)^{1/2}).
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError("dimension mismatch")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    inner = 0.5 * (inner + inner.T)
    vals = np.linalg.eigvalsh(inner)
    if np.any(vals < -1e-10 * max(1.0, abs(vals).max())):
        warnings.warn("clamping negative eigenvalues in covariance square root")
    cross = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    return float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross)


def class_kld(p_set, q_set) -> float:
    """Mean per-class Bernoulli KL(p || q) over paired probability rows.

    q is clamped to [KLD_CLAMP, 1 - KLD_CLAMP]; p enters exactly, with the
    0*log(0) = 0 convention, so KL(p, p) = 0 and KL(1, 0.5) = log 2 hold
    without clamping error.
    """
    p = np.atleast_2d(np.asarray(p_set, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q_set, dtype=np.float64))
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(p > 1) or np.any(q < 0) or np.any(q > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    qc = np.clip(q, KLD_CLAMP, 1.0 - KLD_CLAMP)
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = np.where(p > 0, p * (np.log(p) - np.log(qc)), 0.0)
        term2 = np.where(p < 1, (1 - p) * (np.log1p(-p) - np.log1p(-qc)), 0.0)
    return float(np.mean(term1 + term2))


# ---- log-mel spectrogram ----------------------------------------------------


@dataclass(frozen=True)
class MelConfig:
    fft_size: int = 1024
    hop: int = 256
    mel_bands: int = 64
    sample_rate: float = 16000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.hop > self.fft_size:
            raise ValueError("hop must not exceed fft_size")
        if self.mel_bands < 1:
            raise ValueError("mel_bands must be >= 1")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular filters, mel-spaced over [0, sample_rate/2]."""
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    points = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2.0),
                                   cfg.mel_bands + 2))
    bank = np.zeros((cfg.mel_bands, n_bins))
    for b in range(cfg.mel_bands):
        lo, center, hi = points[b], points[b + 1], points[b + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def log_mel_spectrogram(x, cfg: MelConfig) -> np.ndarray:
    """(frames, mel_bands) log-power mel spectrogram; Hann-windowed frames."""
    x = as_samples(x)
    if x.size < cfg.fft_size:
        raise ValueError(f"signal shorter than one frame ({x.size} < {cfg.fft_size})")
    n_frames = (x.size - cfg.fft_size) // cfg.hop + 1
    starts = np.arange(n_frames) * cfg.hop
    frames = x[starts[:, None] + np.arange(cfg.fft_size)[None, :]]
    frames = frames * np.hanning(cfg.fft_size)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    mel = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.log_floor))


def mel_reconstruction_distance(a, b, cfg: MelConfig) -> float:
    """Mean absolute log-mel difference between two equal-length signals."""
    a = as_samples(a)
    b = as_samples(b)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean(np.abs(log_mel_spectrogram(a, cfg)
                                - log_mel_spectrogram(b, cfg))))


# ---- realism score -----------------------------------------------------------


def _knn_radii(reference: np.ndarray, k: int) -> np.ndarray:
    """Distance from each reference point to its k-th nearest other point."""
    diffs = reference[:, None, :] - reference[None, :, :]
    dists = np.sqrt(np.sum(diffs * diffs, axis=-1))
    np.fill_diagonal(dists, np.inf)
    return np.sort(dists, axis=1)[:, k - 1]


def realism_score(query, reference_set, k: int = 3) -> float:
    """max_r ||ref_r - NN_k(ref_r)|| / ||query - ref_r||.

    High when the query sits deep inside the reference manifold. The
    denominator is floored at REALISM_FLOOR; a query coinciding with a
    reference point triggers a warning and yields the floored (huge) score.
    """
    query = np.asarray(query, dtype=np.float64)
    ref = np.asarray(reference_set, dtype=np.float64)
    if ref.ndim != 2:
        raise ValueError("reference_set must be (count, dim)")
    if not 1 <= k < ref.shape[0]:
        raise ValueError("need reference set size > k >= 1")
    radii = _knn_radii(ref, k)
    diffs = ref - query
    dist = np.sqrt(np.sum(diffs * diffs, axis=-1))
    if np.any(dist <= REALISM_FLOOR):
        warnings.warn("query coincides with a reference point; "
                      "realism score saturated")
    return float(np.max(radii / np.maximum(dist, REALISM_FLOOR)))


def _windowed_embedding(x: np.ndarray, embedder, window: int | None,
                        hop: int | None) -> np.ndarray:
    if window is None:
        return embedder.apply(x)
    hop = hop or window
    n_win = (x.size - window) // hop + 1
    if n_win < 1:
        raise ValueError("signal shorter than the embedding window")
    embs = [embedder.apply(x[i * hop:i * hop + window]) for i in range(n_win)]
    return np.mean(embs, axis=0)


def normalized_transition_realism(generated, crossfade_baseline, reference_set,
                                  embedder, k: int = 3,
                                  window: int | None = None,
                                  hop: int | None = None) -> float:
    """Realism of the generated transition divided by the realism of the
    plain constant-power crossfade (track-by-track normalization).

    Signals are embedded whole by default; pass window/hop to average
    embeddings over sliding windows instead.
    """
    gen = as_samples(generated)
    base = as_samples(crossfade_baseline)
    if gen.size != base.size:
        raise ValueError("generated and baseline lengths differ")
    ref = np.asarray(reference_set, dtype=np.float64)
    score_gen = realism_score(_windowed_embedding(gen, embedder, window, hop),
                              ref, k)
    score_base = realism_score(_windowed_embedding(base, embedder, window, hop),
                               ref, k)
    return score_gen / score_base


def transition_mel_curve(generated, reference, window: int, hop: int,
                         cfg: MelConfig) -> np.ndarray:
    """Per-window mel distance of a transition against the first track.

    Returns an array of (time_seconds, distance) rows, one per window
    position; window/hop are in samples.
    """
    gen = as_samples(generated)
    ref = as_samples(reference)
    if gen.size != ref.size:
        raise ValueError(f"length mismatch: {gen.size} vs {ref.size}")
    if window < cfg.fft_size:
        raise ValueError("window must cover at least one mel frame")
    n_win = (gen.size - window) // hop + 1
    if n_win < 1:
        raise ValueError("signal shorter than one window")
    rows = np.empty((n_win, 2))
    for i in range(n_win):
        lo = i * hop
        rows[i, 0] = lo / cfg.sample_rate
        rows[i, 1] = mel_reconstruction_distance(gen[lo:lo + window],
                                                 ref[lo:lo + window], cfg)
    return rows
