"""Map-conditioned denoising diffusion over trajectory rasters."""

from .checkpoint import load_checkpoint, save_checkpoint
from .denoiser import Denoiser, DenoiserConfig, build_denoiser, denoiser_apply
from .sampling import generate, sample_step
from .schedule import (
    NoiseSchedule,
    estimate_x0,
    forward_marginal,
    forward_step,
    make_schedule,
    posterior_params,
    reverse_mean,
    scaled_schedule,
)
from .training import OptConfig, TrainBatch, TrainingSet, loss_and_grad, train

__all__ = [
    "Denoiser",
    "DenoiserConfig",
    "NoiseSchedule",
    "OptConfig",
    "TrainBatch",
    "TrainingSet",
    "build_denoiser",
    "denoiser_apply",
    "estimate_x0",
    "forward_marginal",
    "forward_step",
    "generate",
    "load_checkpoint",
    "loss_and_grad",
    "make_schedule",
    "posterior_params",
    "reverse_mean",
    "sample_step",
    "scaled_schedule",
    "save_checkpoint",
    "train",
]
