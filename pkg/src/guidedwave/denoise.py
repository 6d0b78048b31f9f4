"""v-prediction denoisers and parameterization conversions.

A denoiser predicts v = alpha*eps - sigma*x0 from a noised sample
x_t = alpha*x0 + sigma*eps. Conversions between (x0, eps, v) follow from
alpha^2 + sigma^2 = 1:

    x0_hat = alpha*x_t - sigma*v
    eps_hat = (x_t - alpha*x0_hat) / sigma

Two exact analytic denoisers are provided as oracles: a Gaussian prior
(closed-form posterior mean) and an isotropic Gaussian mixture. Both also
expose an exact vector-Jacobian product for guidance gradients. Denoisers
are immutable after construction and safe to share across concurrent
sampler runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import backend
from .schedule import cosine_level


@runtime_checkable
class Denoiser(Protocol):
    """Contract: deterministic v-prediction plus input-side VJP."""

    def predict_v(self, x_t: np.ndarray, t: float) -> np.ndarray: ...

    def vjp(self, x_t: np.ndarray, t: float, cotangent: np.ndarray) -> np.ndarray: ...


def _check_lengths(*arrays):
    n = arrays[0].shape[-1]
    for a in arrays[1:]:
        if a.shape[-1] != n:
            raise ValueError(f"length mismatch: {a.shape[-1]} vs {n}")


def forward_noise(x0: np.ndarray, t: float, noise: np.ndarray) -> np.ndarray:
    """x_t = alpha*x0 + sigma*noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    _check_lengths(x0, noise)
    lvl = cosine_level(t)
    return backend.lincomb(lvl.alpha, x0, lvl.sigma, noise)


def v_target(x0: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    """Training target v = alpha*eps - sigma*x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_lengths(x0, eps)
    lvl = cosine_level(t)
    return backend.lincomb(lvl.alpha, eps, -lvl.sigma, x0)


def x0_from_v(x_t: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """Denoised estimate x0_hat = alpha*x_t - sigma*v."""
    x_t = np.asarray(x_t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_lengths(x_t, v)
    lvl = cosine_level(t)
    return backend.lincomb(lvl.alpha, x_t, -lvl.sigma, v)


def eps_from_x0(x_t: np.ndarray, x0_hat: np.ndarray, t: float) -> np.ndarray:
    """Noise estimate eps_hat = (x_t - alpha*x0_hat)/sigma; requires t > 0."""
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    _check_lengths(x_t, x0_hat)
    lvl = cosine_level(t)
    if lvl.sigma == 0.0:
        raise ValueError("eps_from_x0 undefined at t=0 (sigma = 0)")
    return backend.scaled_diff(x_t, x0_hat, lvl.alpha, lvl.sigma)


def _v_from_x0_hat(x_t, x0_hat, alpha, sigma):
    # invert x0_hat = alpha*x_t - sigma*v
    return (alpha * x_t - x0_hat) / sigma


@dataclass(frozen=True)
class GaussianPrior:
    """N(mean, cov); cov may be a diagonal vector or a full symmetric matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError("mean must be 1-D")
        if cov.ndim == 1:
            if cov.shape != mean.shape:
                raise ValueError("diagonal cov must match mean length")
            if np.any(cov < 0):
                raise ValueError("negative diagonal covariance")
        elif cov.ndim == 2:
            if cov.shape != (mean.size, mean.size):
                raise ValueError("cov shape must be (n, n)")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
        else:
            raise ValueError("cov must be 1-D (diagonal) or 2-D (full)")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


class GaussianDenoiser:
    """Exact denoiser for a Gaussian prior.

    Posterior mean under x_t = alpha*x0 + sigma*eps:

        E[x0 | x_t] = m + alpha*Cov (alpha^2*Cov + sigma^2 I)^{-1} (x_t - alpha*m)

    Full covariances are eigendecomposed once at construction; diagonal
    priors use an elementwise fast path. predict_v accepts a single sample
    (n,) or a batch (B, n).
    """

    def __init__(self, prior: GaussianPrior):
        self.prior = prior
        self.mean = prior.mean
        if prior.cov.ndim == 1:
            self._diag = True
            self._lam = prior.cov
            self._basis = None
        else:
            self._diag = False
            lam, basis = np.linalg.eigh(prior.cov)
            self._lam = np.clip(lam, 0.0, None)
            self._basis = basis

    def _gain(self, alpha, sigma):
        return alpha * self._lam / (alpha * alpha * self._lam + sigma * sigma)

    def posterior_mean(self, x_t: np.ndarray, t: float) -> np.ndarray:
        """E[x0 | x_t] at time t > 0."""
        lvl = cosine_level(t)
        if lvl.sigma == 0.0:
            raise ValueError("posterior undefined at t=0")
        x_t = np.asarray(x_t, dtype=np.float64)
        g = self._gain(lvl.alpha, lvl.sigma)
        if self._diag:
            if x_t.ndim == 1:
                return backend.diag_posterior(x_t, self.mean, g, lvl.alpha)
            return self.mean + g * (x_t - lvl.alpha * self.mean)
        centered = x_t - lvl.alpha * self.mean
        if x_t.ndim == 1:
            return self.mean + self._basis @ (g * (self._basis.T @ centered))
        return self.mean + (centered @ self._basis) * g @ self._basis.T

    def predict_v(self, x_t: np.ndarray, t: float) -> np.ndarray:
        lvl = cosine_level(t)
        if lvl.sigma == 0.0:
            raise ValueError("predict_v undefined at t=0")
        return _v_from_x0_hat(np.asarray(x_t, dtype=np.float64),
                              self.posterior_mean(x_t, t), lvl.alpha, lvl.sigma)

    def vjp(self, x_t: np.ndarray, t: float, cotangent: np.ndarray) -> np.ndarray:
        """cotangent^T d(predict_v)/d(x_t); the Jacobian is symmetric here."""
        lvl = cosine_level(t)
        if lvl.sigma == 0.0:
            raise ValueError("vjp undefined at t=0")
        u = np.asarray(cotangent, dtype=np.float64)
        g = self._gain(lvl.alpha, lvl.sigma)
        if self._diag:
            ju = g * u
        else:
            ju = self._basis @ (g * (self._basis.T @ u))
        # d(v)/d(x_t) = (alpha*I - d(x0_hat)/d(x_t)) / sigma
        return (lvl.alpha * u - ju) / lvl.sigma


def gaussian_denoiser(prior: GaussianPrior) -> GaussianDenoiser:
    return GaussianDenoiser(prior)


class GmmDenoiser:
    """Exact denoiser for an isotropic Gaussian mixture prior.

    Prior: sum_k w_k N(mu_k, var*I). The posterior mean is the
    responsibility-weighted blend of per-component posterior means, with
    responsibilities computed from the component marginals of x_t. The VJP
    is the exact Jacobian transpose, including the responsibility term.
    """

    def __init__(self, weights, means, var: float):
        weights = np.asarray(weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        if weights.size == 0:
            raise ValueError("empty mixture")
        if weights.ndim != 1 or weights.shape[0] != means.shape[0]:
            raise ValueError("weights and means disagree on component count")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-9):
            raise ValueError("weights must be a probability vector")
        if var <= 0:
            raise ValueError("component variance must be positive")
        self.weights = weights / weights.sum()
        self.means = means
        self.var = float(var)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _posterior_parts(self, x_t, alpha, sigma):
        c = alpha * alpha * self.var + sigma * sigma
        r = alpha * self.var / c
        centered = x_t[..., None, :] - alpha * self.means       # (..., K, n)
        sq = np.sum(centered * centered, axis=-1)               # (..., K)
        logits = np.log(self.weights) - 0.5 * sq / c
        logits -= logits.max(axis=-1, keepdims=True)
        resp = np.exp(logits)
        resp /= resp.sum(axis=-1, keepdims=True)
        comp_mean = self.means + r * centered                   # (..., K, n)
        return resp, comp_mean, centered, c, r

    def posterior_mean(self, x_t: np.ndarray, t: float) -> np.ndarray:
        lvl = cosine_level(t)
        if lvl.sigma == 0.0:
            raise ValueError("posterior undefined at t=0")
        x_t = np.asarray(x_t, dtype=np.float64)
        resp, comp_mean, _, _, _ = self._posterior_parts(x_t, lvl.alpha, lvl.sigma)
        return np.sum(resp[..., None] * comp_mean, axis=-2)

    def predict_v(self, x_t: np.ndarray, t: float) -> np.ndarray:
        lvl = cosine_level(t)
        if lvl.sigma == 0.0:
            raise ValueError("predict_v undefined at t=0")
        return _v_from_x0_hat(np.asarray(x_t, dtype=np.float64),
                              self.posterior_mean(x_t, t), lvl.alpha, lvl.sigma)

    def vjp(self, x_t: np.ndarray, t: float, cotangent: np.ndarray) -> np.ndarray:
        lvl = cosine_level(t)
        if lvl.sigma == 0.0:
            raise ValueError("vjp undefined at t=0")
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.ndim != 1:
            raise ValueError("vjp expects a single sample")
        u = np.asarray(cotangent, dtype=np.float64)
        resp, comp_mean, centered, c, r = self._posterior_parts(
            x_t, lvl.alpha, lvl.sigma)
        mbar = resp @ centered                                   # (n,)
        # J^T u for x0_hat: r*u + sum_k resp_k (mbar - m_k) (g_k . u) / c
        gu = comp_mean @ u                                       # (K,)
        ju = r * u + ((mbar[None, :] - centered) * (resp * gu)[:, None]).sum(axis=0) / c
        return (lvl.alpha * u - ju) / lvl.sigma


def gmm_denoiser(weights, means, var: float) -> GmmDenoiser:
    return GmmDenoiser(weights, means, var)
