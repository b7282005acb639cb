"""Configuration module using Pydantic Settings"""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.conditions.joint_table import ConditionMode
from app.data.dataset import Split
from app.data.syntheye import SynthEyeConfig
from app.diffusion.guidance import GuidanceConfig
from app.diffusion.process import SamplerKind
from app.diffusion.trainer import DiffusionTrainingConfig
from app.errors import UserInputError
from app.harness.training import ClassifierTrainingConfig
from app.hashing import sha256_json
from app.metrics.report import MetricSettings
from app.models.classifier import ClassifierConfig
from app.models.unet import DenoiserConfig

__all__ = [
    "ConditionMode",
    "Precision",
    "SamplerKind",
    "Settings",
    "Split",
    "load_settings",
    "parse_overrides",
]


class Precision(str, Enum):
    """Floating point type of network parameters and activations"""

    FLOAT64 = "float64"
    FLOAT32 = "float32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.value)


class DataSettings(BaseModel):
    """Split sizes and the SynthEye generator"""

    train_count: int = Field(default=5000, ge=1, description="[assumption] desk-scale train split")
    test_count: int = Field(default=1000, ge=1, description="[assumption] desk-scale test split")
    generator: SynthEyeConfig = Field(default_factory=SynthEyeConfig, description="SynthEye generator")


class ScheduleSettings(BaseModel):
    """Linear variance schedule"""

    num_steps: int = Field(default=200, ge=1, description="[assumption] desk-scale T")
    beta_start: float = Field(default=5e-4, gt=0.0, lt=1.0, description="[assumption] 1e-4 rescaled to T=200")
    beta_end: float = Field(default=0.1, gt=0.0, lt=1.0, description="[assumption] 0.02 rescaled to T=200")


class SamplingSettings(BaseModel):
    """Synthetic set generation"""

    count: int | None = Field(default=None, ge=0, description="[assumption] images; default is the test split size")
    num_inference_steps: int = Field(default=200, ge=1, description="[reference] DDIM steps S")
    sampler: SamplerKind = Field(default=SamplerKind.DDIM, description="[reference] DDIM for inference")
    mode: ConditionMode = Field(default=ConditionMode.JOINT_INVERSE, description="[reference] rare-condition draw mode")
    phase: int | None = Field(default=None, ge=0, description="phase for phase_conditioned mode; none spreads over all")
    batch_size: int = Field(default=64, ge=1, description="[assumption] images per sampling chunk")
    grid_phases: int = Field(default=2, ge=1, description="[assumption] rows of the qualitative grid")
    grid_toolsets: int = Field(default=4, ge=1, description="[assumption] columns of the qualitative grid")


class ExperimentSettings(BaseModel):
    """Retraining comparison"""

    worst_n: int = Field(default=2, ge=1, description="[assumption] critical phases in the delta table")
    include_oversampling: bool = Field(default=False, description="also train on inverse-weighted real frames")


class Settings(BaseSettings):
    """Application settings"""

    seed: int = Field(default=0, description="Global seed")
    output_dir: Path = Field(default=Path("runs"), description="Root directory of run outputs")
    log_level: str = Field(default="INFO", description="Logging level")
    precision: Precision = Field(default=Precision.FLOAT64, description="Network float type")
    show_progress: bool = Field(default=True, description="Show tqdm progress bars")
    num_workers: int = Field(default=1, ge=1, description="Threads for sampling, generation and experiment arms")

    data: DataSettings = Field(default_factory=DataSettings)
    schedule: ScheduleSettings = Field(default_factory=ScheduleSettings)
    model: DenoiserConfig = Field(default_factory=DenoiserConfig)
    training: DiffusionTrainingConfig = Field(default_factory=DiffusionTrainingConfig)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    sampling: SamplingSettings = Field(default_factory=SamplingSettings)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    classifier_training: ClassifierTrainingConfig = Field(default_factory=ClassifierTrainingConfig)
    metrics: MetricSettings = Field(default_factory=MetricSettings)
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",
        protected_namespaces=(),
    )

    def resolved(self) -> dict[str, Any]:
        """Every setting after layering, as JSON-compatible values"""
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        return sha256_json(self.resolved())


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(overrides: list[str]) -> dict[str, Any]:
    """Turn ``section.key=value`` strings into a nested dict; values are JSON when they parse as JSON"""
    result: dict[str, Any] = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UserInputError(f"override {item!r} is not of the form key=value")
        *parents, leaf = key.strip().lower().split(".")
        node = result
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise UserInputError(f"override {item!r} conflicts with an earlier value for {part}")
            node = child
        node[leaf] = _parse_value(value.strip())
    return result


def load_settings(config_file: Path | None = None, overrides: list[str] | None = None) -> Settings:
    """
    Defaults, then the key-value config file, then the environment, then
    ``--set`` overrides (highest priority).
    """
    if config_file is not None and not config_file.is_file():
        raise UserInputError(f"config file {config_file} does not exist")
    try:
        return Settings(_env_file=config_file or ".env", **parse_overrides(overrides or []))
    except ValidationError as exc:
        raise UserInputError(f"invalid configuration: {exc}") from exc
