"""Zero-reference low-light image enhancement.

A wavelet-domain conditional diffusion model, bidirectionally trained
with a lightweight illumination estimator on dark images only, guided by
semantic-embedding and frequency-domain appearance losses.
"""

from .diffusion import (
    NoisePredictor,
    NoiseSchedule,
    default_schedule,
    enhance,
    make_schedule,
    p_sample_step,
    q_sample,
    respace_schedule,
    sample_illumination,
)
from .estimator import LowLightEnhancer
from .frequency import Spectrum, WaveletPyramid, dft_amp_pha, dwt2, idwt2, laplacian
from .guidance import PromptPair, StubEncoder, clip_loss, make_backend, prob_loss
from .illumination import IlluminationNet, estimate_illumination, retinex_decompose
from .imaging import DatasetSpec, load_image, sample_batch, save_image
from .losses import (
    LossWeights,
    color_loss,
    content_loss,
    diffusion_loss,
    rec_loss,
    smooth_loss,
    spa_loss,
    spectral_loss,
    ssim_index,
    total_loss,
)
from .metrics import NiqeModel, evaluate_pairs, fit_niqe_model, loe, niqe, psnr, ssim
from .pipeline import Checkpoint, TrainConfig, enhance_image, train, train_step

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "DatasetSpec",
    "IlluminationNet",
    "LossWeights",
    "LowLightEnhancer",
    "NiqeModel",
    "NoisePredictor",
    "NoiseSchedule",
    "PromptPair",
    "Spectrum",
    "StubEncoder",
    "TrainConfig",
    "WaveletPyramid",
    "clip_loss",
    "color_loss",
    "content_loss",
    "default_schedule",
    "dft_amp_pha",
    "diffusion_loss",
    "dwt2",
    "enhance",
    "enhance_image",
    "estimate_illumination",
    "evaluate_pairs",
    "fit_niqe_model",
    "idwt2",
    "laplacian",
    "load_image",
    "loe",
    "make_backend",
    "make_schedule",
    "niqe",
    "p_sample_step",
    "prob_loss",
    "psnr",
    "q_sample",
    "rec_loss",
    "respace_schedule",
    "retinex_decompose",
    "sample_batch",
    "sample_illumination",
    "save_image",
    "smooth_loss",
    "spa_loss",
    "spectral_loss",
    "ssim",
    "ssim_index",
    "total_loss",
    "train",
    "train_step",
]
