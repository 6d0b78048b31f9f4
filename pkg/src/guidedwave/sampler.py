"""Guided DDPM and DDIM samplers.

Both samplers iterate a timestep grid t_N > ... > t_0, refining x_t from
pure noise down to a sample. Per iteration (t -> s):

  DDPM:  x0_hat = alpha_t*x_t - sigma_t*v(x_t, t)
         x_s = c0*x0_hat + c1*x_t + std*eps,  eps ~ N(0, I)
         with c0 = alpha_s*(sigma_t^2 - (alpha_t/alpha_s)^2*sigma_s^2)/sigma_t^2,
              c1 = alpha_t*sigma_s^2/(alpha_s*sigma_t^2),
              std^2 the reverse-transition variance
  DDIM:  eps_hat = (x_t - alpha_t*x0_hat)/sigma_t
         x_s = alpha_s*x0_hat + sigma_s*eps_hat      (deterministic)

Guidance subtracts step_size times the gradient of the measurement loss
d(y, A(x_t)) (or d(y, A(x0_hat)) in denoised mode). The gradient is
computed at x_t and, by default, applied to the freshly produced x_s for
DDPM and to eps_hat (scaled by sigma_t) for DDIM; an ablation flag applies
it to x_t before the update instead. When the operator is a selection
mask, an optional data-consistency projection pins the measured samples to
y at the end of every iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import backend
from .measure import consistency_project
from .schedule import DEFAULT_T_MAX, alpha_sigma, uniform_grid
from .tasks import TaskSpec

GRAD_TARGETS = ("direct", "denoised")
SAMPLER_KINDS = ("ddpm", "ddim")


class SamplingError(RuntimeError):
    """Non-finite state or gradient encountered mid-run."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class GuidanceConfig:
    """Sampler settings.

    step_size is the gradient-descent step applied to the measurement loss
    (0 disables guidance); steps is the number of sampler iterations. seed
    identifies the run for config-driven frontends; the sampler functions
    themselves consume the Generator passed by the caller.
    """

    step_size: float = 0.0
    grad_target: str = "direct"
    data_consistency: bool = False
    steps: int = 50
    sampler: str = "ddpm"
    seed: int = 0
    t_max: float = DEFAULT_T_MAX
    t_min: float = 0.0
    guidance_pre_step: bool = False
    store_denoised: bool = False

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.grad_target not in GRAD_TARGETS:
            raise ValueError(f"grad_target must be one of {GRAD_TARGETS}")
        if self.sampler not in SAMPLER_KINDS:
            raise ValueError(f"sampler must be one of {SAMPLER_KINDS}")


@dataclass
class SamplerTrace:
    """One record per iteration: (step index, time of the produced state,
    measurement loss of the produced state, gradient norm of the guidance
    step). Optional denoised-estimate snapshots when requested."""

    steps: list = field(default_factory=list)
    denoised: list = field(default_factory=list)

    CSV_HEADER = "step,t,guidance_loss,grad_norm"

    def append(self, step: int, t: float, loss: float, grad_norm: float):
        self.steps.append((step, t, loss, grad_norm))

    def losses(self) -> np.ndarray:
        return np.array([rec[2] for rec in self.steps])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for step, t, loss, grad in self.steps:
                fh.write(f"{step},{t!r},{loss!r},{grad!r}\n")


def validate_run(task: Optional[TaskSpec], cfg: GuidanceConfig,
                 denoiser=None) -> None:
    """Reject task/config combinations before any compute starts."""
    if cfg.data_consistency:
        if task is None:
            raise ValueError("data consistency requires a task")
        if not task.supports_consistency:
            raise ValueError(f"data consistency is not available for "
                             f"{task.kind} (non-selection operator)")
    if (task is not None and cfg.step_size > 0 and cfg.grad_target == "denoised"
            and denoiser is not None and not hasattr(denoiser, "vjp")):
        raise ValueError("denoised-mode guidance needs a denoiser with vjp")


def init_sample(task: Optional[TaskSpec], rng: np.random.Generator,
                n: Optional[int] = None) -> np.ndarray:
    """Initial sample per task recipe.

    Selection tasks fill the measured positions with y; the free region is
    pure noise for continuation/infill and noise_mix*z + (1-noise_mix)*xbar
    for regenerate/transition. Guidance tasks (and task=None) start from
    pure noise.
    """
    if task is None:
        if n is None:
            raise ValueError("need n for unconditional sampling")
        return rng.standard_normal(n)
    z = rng.standard_normal(task.n)
    if task.kind in ("embedder_guidance", "classifier_guidance"):
        return z
    x = np.empty(task.n)
    mask = task.operator
    x[mask.indices] = task.y
    free = mask.complement
    if task.kind in ("regenerate", "transition"):
        k = task.noise_mix
        x[free] = k * z[free] + (1.0 - k) * task.xbar[free]
    else:
        x[free] = z[free]
    return x


def guidance_gradient(x_t: np.ndarray, t: float, denoiser,
                      task: TaskSpec, grad_target: str = "direct"):
    """Gradient of the measurement loss w.r.t. x_t, plus the loss value.

    direct:   d(y, A(x_t)); gradient via the operator VJP.
    denoised: d(y, A(x0_hat(x_t))) with x0_hat = alpha*x_t - sigma*v(x_t);
              the chain rule uses the denoiser VJP:
              grad = alpha*g - sigma*denoiser.vjp(x_t, t, g),
              where g is the operator VJP at x0_hat.
    """
    if grad_target not in GRAD_TARGETS:
        raise ValueError(f"grad_target must be one of {GRAD_TARGETS}")
    op, dist = task.operator, task.distance
    if grad_target == "direct":
        meas = op.apply(x_t)
        loss = dist.eval(task.y, meas)
        grad = op.vjp(x_t, dist.grad(task.y, meas))
        return grad, loss
    if not hasattr(denoiser, "vjp"):
        raise ValueError("denoised-mode guidance needs a denoiser with vjp")
    a, s = alpha_sigma(t)
    x0_hat = backend.lincomb(float(a), x_t, -float(s), denoiser.predict_v(x_t, t))
    meas = op.apply(x0_hat)
    loss = dist.eval(task.y, meas)
    g = op.vjp(x0_hat, dist.grad(task.y, meas))
    grad = float(a) * g - float(s) * denoiser.vjp(x_t, t, g)
    return grad, loss


def _step_coeffs(alpha_t, sigma_t, alpha_s, sigma_s):
    """DDPM reverse-step coefficients (c0, c1, noise std).

    Written so the final step (s=0: alpha_s=1, sigma_s=0) yields exactly
    (1, 0, 0) in floating point, making x_0 = x0_hat without residue.
    """
    s2t = sigma_t * sigma_t
    s2s = sigma_s * sigma_s
    ratio = alpha_t / alpha_s
    c0 = alpha_s * (s2t - ratio * ratio * s2s) / s2t
    c1 = alpha_t * s2s / (alpha_s * s2t)
    var = (s2s / s2t) * (1.0 - ratio * ratio)
    return c0, c1, math.sqrt(max(var, 0.0))


def _measurement_loss(x: np.ndarray, task: Optional[TaskSpec]) -> float:
    if task is None:
        return math.nan
    return task.distance.eval(task.y, task.operator.apply(x))


def ddpm_guided(denoiser, task: Optional[TaskSpec], cfg: GuidanceConfig,
                rng: np.random.Generator, n: Optional[int] = None,
                step_callback: Optional[Callable] = None):
    """Stochastic guided sampler; returns (x_0, trace).

    rng drives the initial sample and the per-step noise. step_callback, if
    given, is invoked as callback(step, t_s, x_s) after every iteration.
    """
    validate_run(task, cfg, denoiser)
    ts = uniform_grid(cfg.steps, cfg.t_max, cfg.t_min)
    alphas, sigmas = alpha_sigma(ts)
    x = init_sample(task, rng, n)
    trace = SamplerTrace()
    use_grad = task is not None and cfg.step_size > 0
    for i in range(cfg.steps):
        t, s = ts[i], ts[i + 1]
        grad = None
        grad_norm = 0.0
        if use_grad:
            grad, _ = guidance_gradient(x, t, denoiser, task, cfg.grad_target)
            if not np.all(np.isfinite(grad)):
                raise SamplingError("non-finite guidance gradient "
                                    "(step_size too large?)", i)
            grad_norm = float(np.linalg.norm(grad))
            if cfg.guidance_pre_step:
                x = x - cfg.step_size * grad
        x0_hat = backend.lincomb(alphas[i], x, -sigmas[i], denoiser.predict_v(x, t))
        if cfg.store_denoised:
            trace.denoised.append(x0_hat.copy())
        eps = rng.standard_normal(x.size)
        c0, c1, std = _step_coeffs(alphas[i], sigmas[i], alphas[i + 1], sigmas[i + 1])
        x = backend.ddpm_update(x, x0_hat, eps, c0, c1, std)
        if use_grad and not cfg.guidance_pre_step:
            x = x - cfg.step_size * grad
        if cfg.data_consistency:
            x = consistency_project(x, task.y, task.operator)
        if not np.all(np.isfinite(x)):
            raise SamplingError("non-finite sampler state", i)
        trace.append(i, float(s), _measurement_loss(x, task), grad_norm)
        if step_callback is not None:
            step_callback(i, float(s), x)
    return x, trace


def ddim_guided(denoiser, task: Optional[TaskSpec], cfg: GuidanceConfig,
                rng: np.random.Generator, n: Optional[int] = None,
                x_init: Optional[np.ndarray] = None,
                step_callback: Optional[Callable] = None):
    """Deterministic guided sampler; returns (x_0, trace).

    rng is consumed only for the initial sample; pass x_init to bypass it
    entirely, making the run a pure function of (x_init, task, cfg).
    """
    validate_run(task, cfg, denoiser)
    ts = uniform_grid(cfg.steps, cfg.t_max, cfg.t_min)
    alphas, sigmas = alpha_sigma(ts)
    if x_init is not None:
        x = np.array(x_init, dtype=np.float64)
    else:
        x = init_sample(task, rng, n)
    trace = SamplerTrace()
    use_grad = task is not None and cfg.step_size > 0
    for i in range(cfg.steps):
        t, s = ts[i], ts[i + 1]
        grad = None
        grad_norm = 0.0
        if use_grad:
            grad, _ = guidance_gradient(x, t, denoiser, task, cfg.grad_target)
            if not np.all(np.isfinite(grad)):
                raise SamplingError("non-finite guidance gradient "
                                    "(step_size too large?)", i)
            grad_norm = float(np.linalg.norm(grad))
            if cfg.guidance_pre_step:
                x = x - cfg.step_size * grad
        x0_hat = backend.lincomb(alphas[i], x, -sigmas[i], denoiser.predict_v(x, t))
        if cfg.store_denoised:
            trace.denoised.append(x0_hat.copy())
        eps_hat = backend.scaled_diff(x, x0_hat, alphas[i], sigmas[i])
        if use_grad and not cfg.guidance_pre_step:
            eps_hat = eps_hat - (cfg.step_size * sigmas[i]) * grad
        x = backend.lincomb(alphas[i + 1], x0_hat, sigmas[i + 1], eps_hat)
        if cfg.data_consistency:
            x = consistency_project(x, task.y, task.operator)
        if not np.all(np.isfinite(x)):
            raise SamplingError("non-finite sampler state", i)
        trace.append(i, float(s), _measurement_loss(x, task), grad_norm)
        if step_callback is not None:
            step_callback(i, float(s), x)
    return x, trace


def run_sampler(denoiser, task: Optional[TaskSpec], cfg: GuidanceConfig,
                rng: np.random.Generator, n: Optional[int] = None,
                step_callback: Optional[Callable] = None):
    """Dispatch on cfg.sampler."""
    fn = ddpm_guided if cfg.sampler == "ddpm" else ddim_guided
    return fn(denoiser, task, cfg, rng, n=n, step_callback=step_callback)


def sample_unconditional_batch(denoiser, n: int, count: int,
                               cfg: GuidanceConfig,
                               rng: np.random.Generator) -> np.ndarray:
    """count unconditional DDPM samples drawn in one batched pass.

    The denoiser must accept a (count, n) batch with a shared scalar t
    (the analytic denoisers and the MLP all do).
    """
    ts = uniform_grid(cfg.steps, cfg.t_max, cfg.t_min)
    alphas, sigmas = alpha_sigma(ts)
    x = rng.standard_normal((count, n))
    for i in range(cfg.steps):
        v = denoiser.predict_v(x, float(ts[i]))
        x0_hat = alphas[i] * x - sigmas[i] * v
        c0, c1, std = _step_coeffs(alphas[i], sigmas[i], alphas[i + 1], sigmas[i + 1])
        x = c0 * x0_hat + c1 * x + std * rng.standard_normal((count, n))
        if not np.all(np.isfinite(x)):
            raise SamplingError("non-finite sampler state", i)
    return x
