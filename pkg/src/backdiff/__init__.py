"""Backdoored denoising diffusion at desk scale."""

from .dataset import MixtureSpec, ToyDataset, circle_mixture, synth_dataset
from .denoiser import Adam, GaussianOracle, MlpDenoiser, PointMassOracle, load_checkpoint, save_checkpoint
from .metrics import assignment_rate, gaussian_frechet, knn_precision, mse_to_target
from .process import BENIGN, ChainMode, GaussianKernel, diffuse, marginal, posterior, ddim_posterior, transition_step, trojan_mode
from .sampler import SamplerConfig, ddim_step, ddpm_step, sample
from .schedule import (
    DdimSchedule,
    NoiseSchedule,
    TrojanCoefficients,
    ddim_sigma,
    ddim_subsequence,
    drift_sum_residuals,
    linear_beta_schedule,
    solve_trojan_coefficients,
)
from .trainer import AttackSpec, TrainConfig, train, training_step
from .trigger import Trigger, make_blend_trigger, make_patch_trigger, sample_trojan_noise

__all__ = [
    "Adam",
    "AttackSpec",
    "BENIGN",
    "ChainMode",
    "DdimSchedule",
    "GaussianKernel",
    "GaussianOracle",
    "MixtureSpec",
    "MlpDenoiser",
    "NoiseSchedule",
    "PointMassOracle",
    "SamplerConfig",
    "ToyDataset",
    "TrainConfig",
    "Trigger",
    "TrojanCoefficients",
    "assignment_rate",
    "circle_mixture",
    "ddim_posterior",
    "ddim_sigma",
    "ddim_step",
    "ddim_subsequence",
    "ddpm_step",
    "diffuse",
    "drift_sum_residuals",
    "gaussian_frechet",
    "knn_precision",
    "linear_beta_schedule",
    "load_checkpoint",
    "make_blend_trigger",
    "make_patch_trigger",
    "marginal",
    "mse_to_target",
    "posterior",
    "sample",
    "sample_trojan_noise",
    "save_checkpoint",
    "solve_trojan_coefficients",
    "synth_dataset",
    "train",
    "training_step",
    "transition_step",
    "trojan_mode",
]
