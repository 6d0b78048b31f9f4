import math
import warnings

import numpy as np
import pytest

from guidedwave.measure import toy_embedder
from guidedwave.metrics import (EmbeddingStats, MelConfig, class_kld,
                                embedding_stats, frechet_distance,
                                log_mel_spectrogram,
                                mel_reconstruction_distance, merge_stats,
                                normalized_transition_realism, realism_score,
                                transition_mel_curve)


def test_embedding_stats_basics():
    same = np.tile([1.0, 2.0], (5, 1))
    stats = embedding_stats(same)
    np.testing.assert_allclose(stats.cov, np.zeros((2, 2)), atol=1e-15)

    v = np.array([0.3, -1.0, 2.0])
    stats = embedding_stats(np.stack([v, -v]))
    np.testing.assert_allclose(stats.mean, np.zeros(3), atol=1e-15)

    pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    stats = embedding_stats(pts)
    np.testing.assert_allclose(stats.mean, [1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(stats.cov, np.diag([4 / 3, 4 / 3]), atol=1e-12)


def test_embedding_stats_needs_two():
    with pytest.raises(ValueError):
        embedding_stats(np.ones((1, 3)))


def test_merge_stats_exact():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 3))
    b = rng.standard_normal((12, 3))
    merged = merge_stats(embedding_stats(a), embedding_stats(b))
    direct = embedding_stats(np.vstack([a, b]))
    np.testing.assert_allclose(merged.mean, direct.mean, atol=1e-12)
    np.testing.assert_allclose(merged.cov, direct.cov, atol=1e-12)
    assert merged.count == 19


def _random_stats(rng, dim):
    raw = rng.standard_normal((dim, dim))
    return EmbeddingStats(mean=rng.standard_normal(dim),
                          cov=raw @ raw.T / dim + 0.1 * np.eye(dim),
                          count=10)


def test_frechet_self_distance_zero():
    rng = np.random.default_rng(1)
    for _ in range(10):
        stats = _random_stats(rng, 4)
        assert abs(frechet_distance(stats, stats)) < 1e-10


def test_frechet_equal_covariance_closed_form():
    cov = np.eye(2)
    a = EmbeddingStats(mean=np.zeros(2), cov=cov, count=5)
    b = EmbeddingStats(mean=np.array([3.0, 4.0]), cov=cov, count=5)
    assert frechet_distance(a, b) == pytest.approx(25.0, abs=1e-10)


def test_frechet_diagonal_closed_form():
    # per-coordinate form: sum (mu1-mu2)^2 + (sqrt(v1)-sqrt(v2))^2
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = 5
        m1, m2 = rng.standard_normal(d), rng.standard_normal(d)
        v1, v2 = rng.uniform(0.1, 2.0, d), rng.uniform(0.1, 2.0, d)
        a = EmbeddingStats(mean=m1, cov=np.diag(v1), count=9)
        b = EmbeddingStats(mean=m2, cov=np.diag(v2), count=9)
        oracle = np.sum((m1 - m2) ** 2 + (np.sqrt(v1) - np.sqrt(v2)) ** 2)
        assert abs(frechet_distance(a, b) - oracle) < 1e-8


def test_frechet_symmetric():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = _random_stats(rng, 4), _random_stats(rng, 4)
        assert abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8


def test_frechet_warns_on_indefinite_input():
    bad = EmbeddingStats(mean=np.zeros(2), cov=np.diag([1.0, -0.5]), count=4)
    good = EmbeddingStats(mean=np.zeros(2), cov=np.eye(2), count=4)
    with pytest.warns(UserWarning, match="clamping"):
        frechet_distance(bad, good)


def test_class_kld_identity_and_log_two():
    rng = np.random.default_rng(4)
    p = rng.uniform(0.05, 0.95, (20, 4))
    assert class_kld(p, p) == 0.0
    assert class_kld(np.ones((1, 1)), np.full((1, 1), 0.5)) == pytest.approx(
        math.log(2), abs=1e-10)


def test_class_kld_non_negative():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        p = rng.uniform(0.001, 0.999, 4)
        q = rng.uniform(0.001, 0.999, 4)
        assert class_kld(p, q) >= 0.0


def test_class_kld_validation():
    with pytest.raises(ValueError):
        class_kld(np.ones((2, 2)), np.ones((3, 2)))
    with pytest.raises(ValueError):
        class_kld(np.full((1, 1), 1.5), np.full((1, 1), 0.5))


# ---- mel --------------------------------------------------------------------


def _naive_log_mel(x, cfg):
    """Frame-by-frame DFT reference implementation (no FFT)."""
    n_frames = (len(x) - cfg.fft_size) // cfg.hop + 1
    win = np.hanning(cfg.fft_size)
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.arange(cfg.fft_size)
    out = np.empty((n_frames, cfg.mel_bands))
    from guidedwave.metrics import mel_filterbank
    bank = mel_filterbank(cfg)
    for k in range(n_frames):
        frame = x[k * cfg.hop:k * cfg.hop + cfg.fft_size] * win
        power = np.empty(n_bins)
        for b in range(n_bins):
            ang = -2.0 * np.pi * b * freqs / cfg.fft_size
            power[b] = (np.dot(frame, np.cos(ang)) ** 2
                        + np.dot(frame, np.sin(ang)) ** 2)
        out[k] = np.log(np.maximum(bank @ power, cfg.log_floor))
    return out


def test_mel_distance_identity_and_silence():
    cfg = MelConfig(fft_size=256, hop=128, mel_bands=20, sample_rate=8000.0)
    rng = np.random.default_rng(6)
    x = rng.standard_normal(1024)
    assert mel_reconstruction_distance(x, x, cfg) == 0.0
    silence = np.zeros(1024)
    assert mel_reconstruction_distance(silence, silence, cfg) == 0.0


def test_mel_matches_naive_dft_implementation():
    cfg = MelConfig(fft_size=128, hop=64, mel_bands=12, sample_rate=8000.0)
    rate = cfg.sample_rate
    t = np.arange(640) / rate
    a = 0.7 * np.sin(2 * np.pi * 440.0 * t)
    b = 0.7 * np.sin(2 * np.pi * 880.0 * t)
    dist = mel_reconstruction_distance(a, b, cfg)
    assert dist > 0.0
    oracle = float(np.mean(np.abs(_naive_log_mel(a, cfg) - _naive_log_mel(b, cfg))))
    assert abs(dist - oracle) < 1e-6


def test_mel_distance_symmetric():
    cfg = MelConfig(fft_size=256, hop=64, mel_bands=24, sample_rate=8000.0)
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal((2, 2048))
    d1 = mel_reconstruction_distance(a, b, cfg)
    d2 = mel_reconstruction_distance(b, a, cfg)
    assert abs(d1 - d2) < 1e-12


def test_mel_validation():
    cfg = MelConfig(fft_size=256, hop=128, mel_bands=8, sample_rate=8000.0)
    with pytest.raises(ValueError):
        mel_reconstruction_distance(np.zeros(512), np.zeros(500), cfg)
    with pytest.raises(ValueError):
        log_mel_spectrogram(np.zeros(100), cfg)
    with pytest.raises(ValueError):
        MelConfig(fft_size=128, hop=256)


# ---- realism ----------------------------------------------------------------


def _realism_bruteforce(query, reference, k):
    n = len(reference)
    best = -np.inf
    for r in range(n):
        dists = []
        for other in range(n):
            if other == r:
                continue
            diff = reference[r] - reference[other]
            dists.append(np.sqrt(np.sum(diff * diff)))
        radius = sorted(dists)[k - 1]
        diff = reference[r] - query
        denom = max(np.sqrt(np.sum(diff * diff)), 1e-9)
        best = max(best, radius / denom)
    return best


def test_realism_matches_bruteforce_exactly():
    rng = np.random.default_rng(8)
    for _ in range(20):
        ref = rng.standard_normal((rng.integers(5, 12), 2))
        query = rng.standard_normal(2)
        k = int(rng.integers(1, 4))
        assert realism_score(query, ref, k) == _realism_bruteforce(query, ref, k)


def test_realism_far_query_vanishes():
    rng = np.random.default_rng(9)
    ref = rng.standard_normal((10, 3))
    near = realism_score(np.zeros(3), ref, 3)
    far = realism_score(np.full(3, 1e6), ref, 3)
    assert far < 1e-4 * near


def test_realism_scale_invariance():
    rng = np.random.default_rng(10)
    ref = rng.standard_normal((8, 2))
    q = rng.standard_normal(2)
    s1 = realism_score(q, ref, 2)
    s2 = realism_score(3.7 * q, 3.7 * ref, 2)
    assert s2 == pytest.approx(s1, rel=1e-9)


def test_realism_coincident_query_warns():
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.warns(UserWarning, match="saturated"):
        score = realism_score(np.array([1.0, 0.0]), ref, 1)
    assert score > 1e8


def test_realism_validation():
    ref = np.zeros((3, 2))
    with pytest.raises(ValueError):
        realism_score(np.zeros(2), ref, 3)
    with pytest.raises(ValueError):
        realism_score(np.zeros(2), ref, 0)


def test_normalized_transition_realism_self_is_one():
    rng = np.random.default_rng(11)
    n = 64
    emb = toy_embedder(0, n, 8)
    ref_embs = rng.standard_normal((20, 8))
    x = rng.standard_normal(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ratio = normalized_transition_realism(x, x, ref_embs, emb, k=3)
    assert ratio == 1.0
    other = rng.standard_normal(n)
    assert normalized_transition_realism(x, other, ref_embs, emb, k=3) > 0.0


def test_normalized_realism_windowed_mode():
    rng = np.random.default_rng(12)
    emb = toy_embedder(1, 32, 4)
    ref_embs = rng.standard_normal((10, 4))
    x = rng.standard_normal(128)
    ratio = normalized_transition_realism(x, x, ref_embs, emb, k=2,
                                          window=32, hop=16)
    assert ratio == 1.0


# ---- transition curve ----------------------------------------------------------


def test_transition_curve_zero_for_identical_inputs():
    cfg = MelConfig(fft_size=128, hop=64, mel_bands=10, sample_rate=8000.0)
    rng = np.random.default_rng(13)
    x = rng.standard_normal(1024)
    curve = transition_mel_curve(x, x, window=256, hop=128, cfg=cfg)
    assert np.all(curve[:, 1] == 0.0)


def test_transition_curve_window_count_and_times():
    cfg = MelConfig(fft_size=128, hop=64, mel_bands=10, sample_rate=1000.0)
    n, window, hop = 1500, 256, 100
    rng = np.random.default_rng(14)
    gen, ref = rng.standard_normal((2, n))
    curve = transition_mel_curve(gen, ref, window=window, hop=hop, cfg=cfg)
    assert curve.shape[0] == (n - window) // hop + 1
    np.testing.assert_allclose(np.diff(curve[:, 0]), hop / cfg.sample_rate,
                               atol=1e-12)
