"""Diffusion schedule, guidance, samplers and training"""

from app.diffusion.guidance import (
    GuidanceConfig,
    cfg_combine,
    dropout_condition,
    dropout_conditions,
    implied_condition_gradient,
)
from app.diffusion.process import DiffusionProcess, NoisePredictor, SamplerKind, guided_noise
from app.diffusion.schedule import VarianceSchedule, make_linear_schedule, subsequence
from app.diffusion.trainer import DiffusionTrainer, DiffusionTrainingConfig, EpochStats

__all__ = [
    "DiffusionProcess",
    "DiffusionTrainer",
    "DiffusionTrainingConfig",
    "EpochStats",
    "GuidanceConfig",
    "NoisePredictor",
    "SamplerKind",
    "VarianceSchedule",
    "cfg_combine",
    "dropout_condition",
    "dropout_conditions",
    "guided_noise",
    "implied_condition_gradient",
    "make_linear_schedule",
    "subsequence",
]
