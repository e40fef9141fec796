"""Desk-scale latent-diffusion audio pipeline with analytic oracles.

Every stochastic path in the pipeline (forward corruption, ancestral
sampling, guidance, mixing augmentation, metrics) is small enough to verify
against closed-form or brute-force ground truth; the test suite does
exactly that.
"""

from audiodiff.autodiff import Tensor, Tape, grad, finite_diff_check
from audiodiff.schedule import (NoiseSchedule, build_linear_schedule,
                                snr_weight, schedule_hash)
from audiodiff.diffusion import (LatentTensor, GuidanceConfig, forward_sample,
                                 cfg_combine, training_loss, reverse_step,
                                 sample, sample_chains)
from audiodiff.denoiser import (NoiseEstimator, AnalyticGaussianDenoiser,
                                TinyCondDenoiser, DenoiserConfig,
                                OptimizerConfig, train)
from audiodiff.conditioning import (ToyVocabulary, ConditioningSequence,
                                    concat_captions, classify_temporal)
from audiodiff.dsp import (Waveform, MelSpectrogram, stft_magnitude,
                           mel_spectrogram, pressure_level_db, griffin_lim,
                           read_wav, write_wav)
from audiodiff.augment import relative_weight, mix_pair, augment_manifest
from audiodiff.codec import (CodecConfig, patch_encode, patch_decode,
                             LinearVae, vae_elbo)
from audiodiff.metrics import (GaussianStats, fit_gaussian, frechet_distance,
                               label_kl, evaluate_suite)
from audiodiff.kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
