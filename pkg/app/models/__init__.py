"""Denoiser and classifier networks"""

from app.models.classifier import ClassifierConfig, ClassifierOutput, ToolClassifier
from app.models.embeddings import ConditionEmbedder, ConditionEmbedding, embed_condition
from app.models.unet import DenoiserConfig, DenoiserNetwork, condition_sensitivity

__all__ = [
    "ClassifierConfig",
    "ClassifierOutput",
    "ConditionEmbedder",
    "ConditionEmbedding",
    "DenoiserConfig",
    "DenoiserNetwork",
    "ToolClassifier",
    "condition_sensitivity",
    "embed_condition",
]
