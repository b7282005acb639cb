"""Multi-label tool classifier with an auxiliary phase head"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit, softmax

from app.autodiff import Conv2d, GroupNorm, Linear, Module, Tensor, no_grad
from app.autodiff import functional as F
from app.autodiff.nn import groups_for
from app.errors import NumericalError, ShapeError, UserInputError


class ClassifierConfig(BaseModel):
    """Architecture of the tool classifier"""

    model_config = ConfigDict(frozen=True)

    image_channels: int = Field(default=3, ge=1, description="[assumption] RGB SynthEye frames")
    image_size: int = Field(default=32, ge=8, description="[assumption] desk-scale resolution")
    num_tools: int = Field(default=6, ge=1, description="[assumption] SynthEye default")
    num_phases: int = Field(default=5, ge=1, description="[assumption] SynthEye default")
    widths: tuple[int, ...] = Field(
        default=(16, 32, 64, 64), description="[assumption] four conv blocks; the last width is the feature size F"
    )
    num_groups: int = Field(default=8, ge=1, description="[assumption] group normalization groups")

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]


@dataclass(frozen=True)
class ClassifierOutput:
    """Per-image tool probabilities, phase distribution and penultimate features"""

    tool_probabilities: np.ndarray
    phase_probabilities: np.ndarray
    features: np.ndarray

    def tool_predictions(self, threshold: float = 0.5) -> np.ndarray:
        return (self.tool_probabilities > threshold).astype(np.int64)


class ToolClassifier(Module):
    """
    Conv blocks (conv, group norm, ReLU, 2x pooling on all but the last)
    followed by global average pooling and two linear heads.
    """

    def __init__(self, config: ClassifierConfig, seed: int = 0, dtype: np.dtype = np.float64) -> None:
        pools = len(config.widths) - 1
        if config.image_size % (2**pools):
            raise UserInputError(f"image size {config.image_size} does not halve {pools} times")
        rng = np.random.default_rng(seed)
        self.config = config
        self.dtype = np.dtype(dtype)
        self.convs: list[Conv2d] = []
        self.norms: list[GroupNorm] = []
        channels = config.image_channels
        for width in config.widths:
            self.convs.append(Conv2d(channels, width, 3, rng, dtype=dtype))
            self.norms.append(GroupNorm(groups_for(width, config.num_groups), width, dtype))
            channels = width
        self.tool_head = Linear(channels, config.num_tools, rng, dtype)
        self.phase_head = Linear(channels, config.num_phases, rng, dtype)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.config.image_channels, self.config.image_size, self.config.image_size)

    def forward(self, x: Tensor | np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
        """Return tool logits ``[N, K]``, phase logits ``[N, P]`` and features ``[N, F]``"""
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 4 or x.shape[1:] != self.image_shape:
            raise ShapeError("classifier input", x.shape, (x.shape[0], *self.image_shape))
        h = x
        last = len(self.convs) - 1
        for index, (conv, norm) in enumerate(zip(self.convs, self.norms)):
            h = F.relu(norm(conv(h)))
            if index < last:
                h = F.avg_pool2d(h)
        features = h.mean(axis=(2, 3))
        return self.tool_head(features), self.phase_head(features), features

    def classify(self, images: np.ndarray, batch_size: int = 256) -> ClassifierOutput:
        """
        Probabilities and features for every image, computed in batches.

        Returns:
            ClassifierOutput; tool probabilities are independent sigmoids and
            each phase row sums to one
        """
        if images.ndim != 4 or images.shape[1:] != self.image_shape:
            raise ShapeError("classifier input", images.shape, (images.shape[0], *self.image_shape))
        tools, phases, features = [], [], []
        with no_grad():
            for start in range(0, images.shape[0], batch_size):
                tool_logits, phase_logits, feats = self.forward(images[start : start + batch_size])
                tools.append(expit(tool_logits.data))
                phases.append(softmax(phase_logits.data, axis=1))
                features.append(feats.data)
        if not tools:
            k, p, f = self.config.num_tools, self.config.num_phases, self.config.feature_dim
            return ClassifierOutput(np.zeros((0, k)), np.zeros((0, p)), np.zeros((0, f)))
        output = ClassifierOutput(np.concatenate(tools), np.concatenate(phases), np.concatenate(features))
        if not np.all(np.isfinite(output.features)):
            raise NumericalError("classifier features contain NaN or Inf")
        return output
