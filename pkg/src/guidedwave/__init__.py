"""Guidance-gradient diffusion sampling for conditional audio generation."""

from .backend import BACKEND, HAVE_COMPILED
from .denoise import (Denoiser, GaussianPrior, eps_from_x0, forward_noise,
                      gaussian_denoiser, gmm_denoiser, v_target, x0_from_v)
from .measure import (BCEDistance, CrossfadeSpec, L1Distance, L2Distance,
                      LinearMask, apply_mask, bce_distance,
                      build_transition_target, consistency_project, crossfade,
                      l1_distance, l2_distance, toy_classifier, toy_embedder)
from .metrics import (EmbeddingStats, MelConfig, class_kld, embedding_stats,
                      frechet_distance, mel_reconstruction_distance,
                      merge_stats, normalized_transition_realism,
                      realism_score, transition_mel_curve)
from .mlp import MlpDenoiser, TrainingDiverged, train_toy, v_loss, v_loss_at
from .sampler import (GuidanceConfig, SamplerTrace, SamplingError, ddim_guided,
                      ddpm_guided, guidance_gradient, init_sample, run_sampler,
                      sample_unconditional_batch)
from .schedule import (DEFAULT_T_MAX, NoiseLevel, cosine_level, snr,
                       transition_variance, uniform_grid)
from .signals import Signal
from .tasks import (TaskSpec, classifier_guidance_task, continuation_task,
                    embedder_guidance_task, infill_task, regenerate_task,
                    transition_task)
from .wavio import WavFormatError, read_wav, write_wav

__version__ = "0.1.0"
