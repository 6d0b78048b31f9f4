"""Seeded synthetic corpora with reproducible manifests.

Three kinds:
  sine_mix      sums of random sinusoids (audio-like; frequencies logged)
  ar1_gaussian  stationary AR(1) sequences with unit marginal variance
  gmm           draws from an isotropic Gaussian mixture (training data)

Items are stored as float64 .npy files next to a manifest.json holding
kind, parameters, seed and count; the manifest is byte-deterministic for a
given (kind, params, seed, count).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .signals import Signal

DATASET_KINDS = ("sine_mix", "ar1_gaussian", "gmm")


def ar1_sequence(n: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) with lag-1 correlation rho and unit marginal variance."""
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    eps = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = eps[0]
    scale = np.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        out[i] = rho * out[i - 1] + scale * eps[i]
    return out


def ar1_covariance(n: int, rho: float) -> np.ndarray:
    """Covariance matrix of the stationary AR(1): Sigma_ij = rho^|i-j|."""
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _gen_sine_mix(params: dict, rng: np.random.Generator):
    n = int(params.get("n", 8192))
    rate = float(params.get("sample_rate", 16000.0))
    n_tones = int(params.get("n_tones", 3))
    f_lo, f_hi = params.get("freq_range", (100.0, 4000.0))
    amp = float(params.get("amp", 0.3))
    t = np.arange(n) / rate
    freqs = np.sort(rng.uniform(f_lo, f_hi, n_tones))
    phases = rng.uniform(0.0, 2.0 * np.pi, n_tones)
    amps = amp * rng.uniform(0.5, 1.0, n_tones)
    x = np.zeros(n)
    for f, ph, a in zip(freqs, phases, amps):
        x += a * np.sin(2.0 * np.pi * f * t + ph)
    return x, {"freqs": [float(f) for f in freqs]}


def _gen_ar1(params: dict, rng: np.random.Generator):
    n = int(params.get("n", 1024))
    rho = float(params.get("rho", 0.9))
    return ar1_sequence(n, rho, rng), {}


def _gen_gmm(params: dict, rng: np.random.Generator):
    weights = np.asarray(params.get("weights", [0.5, 0.5]), dtype=np.float64)
    means = np.atleast_2d(np.asarray(params.get("means", [[-1.0], [1.0]]),
                                     dtype=np.float64))
    var = float(params.get("var", 0.01))
    comp = rng.choice(len(weights), p=weights / weights.sum())
    x = means[comp] + np.sqrt(var) * rng.standard_normal(means.shape[1])
    return x, {"component": int(comp)}


_GENERATORS = {"sine_mix": _gen_sine_mix, "ar1_gaussian": _gen_ar1,
               "gmm": _gen_gmm}


def synth_dataset(kind: str, params: dict, count: int, out_dir,
                  seed: int) -> dict:
    """Generate count items and a manifest under out_dir; returns the manifest."""
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    gen = _GENERATORS[kind]
    items = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        x, extra = gen(params, rng)
        name = f"item_{i:05d}.npy"
        np.save(os.path.join(out_dir, name), np.asarray(x, dtype=np.float64))
        items.append({"file": name, **extra})
    manifest = {
        "kind": kind,
        "params": params,
        "seed": seed,
        "count": count,
        "sample_rate": float(params.get("sample_rate", 0.0)),
        "items": items,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(path) -> tuple[list[Signal], dict]:
    """Read a synth_dataset directory back into Signal objects."""
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    rate = float(manifest.get("sample_rate", 0.0))
    signals = [
        Signal(np.load(os.path.join(path, item["file"])), sample_rate=rate)
        for item in manifest["items"]
    ]
    return signals, manifest
