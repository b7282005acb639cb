"""Conditional denoising UNet"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.autodiff import Conv2d, GroupNorm, Linear, Module, Tensor, no_grad
from app.autodiff import functional as F
from app.autodiff.nn import groups_for
from app.conditions.labels import ConditionBatch
from app.errors import NumericalError, ShapeError, UserInputError
from app.models.embeddings import ConditionEmbedder

logger = logging.getLogger(__name__)


class DenoiserConfig(BaseModel):
    """Architecture of the denoiser; data-dependent fields are filled from the dataset"""

    model_config = ConfigDict(frozen=True)

    image_channels: int = Field(default=3, ge=1, description="[assumption] RGB SynthEye frames")
    image_size: int = Field(default=32, ge=4, description="[assumption] desk-scale resolution")
    num_phases: int = Field(default=5, ge=1, description="[assumption] SynthEye default")
    num_tools: int = Field(default=6, ge=1, description="[assumption] SynthEye default")
    num_steps: int = Field(default=200, ge=1, description="[assumption] diffusion steps T the network accepts")
    base_width: int = Field(default=32, ge=1, description="[assumption] channels at full resolution")
    channel_mults: tuple[int, ...] = Field(default=(1, 2), description="[assumption] two resolutions, 32 -> 16")
    blocks_per_level: int = Field(default=2, ge=1, description="[assumption] residual blocks per level")
    embedding_dim: int = Field(default=64, ge=2, description="[assumption] D of each of the three embeddings")
    num_groups: int = Field(default=8, ge=1, description="[assumption] group normalization groups")


class ResidualBlock(Module):
    """GroupNorm-SiLU-conv twice, with the projected condition embedding added in between"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        embedding_dim: int,
        num_groups: int,
        rng: np.random.Generator,
        dtype: np.dtype,
    ) -> None:
        self.out_channels = out_channels
        self.norm1 = GroupNorm(groups_for(in_channels, num_groups), in_channels, dtype)
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng, dtype=dtype)
        self.inject = Linear(embedding_dim, out_channels, rng, dtype)
        self.norm2 = GroupNorm(groups_for(out_channels, num_groups), out_channels, dtype)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, dtype=dtype)
        self.skip = Conv2d(in_channels, out_channels, 1, rng, dtype=dtype) if in_channels != out_channels else None

    def forward(self, x: Tensor, embedding: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.inject(embedding).reshape(x.shape[0], self.out_channels, 1, 1)
        h = self.conv2(F.silu(self.norm2(h)))
        return h + (x if self.skip is None else self.skip(x))


class DenoiserNetwork(Module):
    """
    Noise predictor eps(x_t, t, phase, toolset).

    The concatenated (time, phase, toolset) embedding feeds every residual
    block of the down path, the bottleneck and the up path.
    """

    def __init__(self, config: DenoiserConfig, seed: int = 0, dtype: np.dtype = np.float64) -> None:
        levels = len(config.channel_mults)
        if config.image_size % (2 ** (levels - 1)):
            raise UserInputError(f"image size {config.image_size} does not halve {levels - 1} times")
        rng = np.random.default_rng(seed)
        self.config = config
        self.dtype = np.dtype(dtype)
        self.embedder = ConditionEmbedder(config.num_phases, config.num_tools, config.embedding_dim, rng, dtype)
        emb_dim = self.embedder.output_dim
        widths = [config.base_width * mult for mult in config.channel_mults]

        self.conv_in = Conv2d(config.image_channels, config.base_width, 3, rng, dtype=dtype)
        self.down_blocks: list[ResidualBlock] = []
        channels = config.base_width
        for width in widths:
            for _ in range(config.blocks_per_level):
                self.down_blocks.append(ResidualBlock(channels, width, emb_dim, config.num_groups, rng, dtype))
                channels = width
        self.middle = ResidualBlock(channels, channels, emb_dim, config.num_groups, rng, dtype)
        self.up_blocks: list[ResidualBlock] = []
        for width in reversed(widths):
            for _ in range(config.blocks_per_level):
                self.up_blocks.append(
                    ResidualBlock(channels + width, width, emb_dim, config.num_groups, rng, dtype)
                )
                channels = width
        self.norm_out = GroupNorm(groups_for(channels, config.num_groups), channels, dtype)
        self.conv_out = Conv2d(channels, config.image_channels, 3, rng, dtype=dtype)
        logger.debug(f"Denoiser with {self.num_parameters()} parameters")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        c = self.config
        return (c.image_channels, c.image_size, c.image_size)

    def _check_inputs(self, x: np.ndarray, steps: np.ndarray, conditions: ConditionBatch) -> None:
        if x.ndim != 4 or x.shape[1:] != self.image_shape:
            raise ShapeError("denoiser input", x.shape, (x.shape[0], *self.image_shape))
        if steps.shape != (x.shape[0],) or len(conditions) != x.shape[0]:
            raise ShapeError("steps/conditions per image", steps.shape, (x.shape[0],))
        if steps.min() < 1 or steps.max() > self.config.num_steps:
            raise UserInputError(f"diffusion step outside [1, {self.config.num_steps}]")
        if not np.all(np.isfinite(x)):
            raise NumericalError("denoiser input contains NaN or Inf")

    def forward(self, x: Tensor | np.ndarray, steps: np.ndarray, conditions: ConditionBatch | None = None) -> Tensor:
        """
        Predict the noise in ``x``.

        Args:
            x: Noisy images ``[N, C, H, W]``
            steps: 1-based diffusion step per image
            conditions: Per-image conditions; ``None`` means all null

        Returns:
            Tensor of the same shape as ``x``
        """
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), (x.shape[0],))
        if conditions is None:
            conditions = ConditionBatch.null(x.shape[0], self.config.num_tools)
        self._check_inputs(x.data, steps, conditions)

        embedding = self.embedder(steps, conditions)
        per_level = self.config.blocks_per_level
        levels = len(self.config.channel_mults)

        h = self.conv_in(x)
        skips = []
        for index, block in enumerate(self.down_blocks):
            h = block(h, embedding)
            skips.append(h)
            level, position = divmod(index, per_level)
            if position == per_level - 1 and level < levels - 1:
                h = F.avg_pool2d(h)
        h = self.middle(h, embedding)
        for index, block in enumerate(self.up_blocks):
            h = block(F.concat([h, skips.pop()], axis=1), embedding)
            level, position = divmod(index, per_level)
            if position == per_level - 1 and level < levels - 1:
                h = F.upsample_nearest2d(h)
        return self.conv_out(F.silu(self.norm_out(h)))

    def predict_noise(
        self, x: np.ndarray, steps: np.ndarray | int, conditions: ConditionBatch | None = None
    ) -> np.ndarray:
        """Inference-only forward pass returning a plain array"""
        with no_grad():
            out = self.forward(x, np.asarray(steps), conditions).data
        if not np.all(np.isfinite(out)):
            raise NumericalError("denoiser produced NaN or Inf")
        return out


def condition_sensitivity(
    denoiser: DenoiserNetwork,
    x: np.ndarray,
    steps: np.ndarray,
    conditions: ConditionBatch,
    swapped: ConditionBatch,
) -> tuple[float, float]:
    """
    Mean absolute output change under swapped toolsets vs a repeated call.

    Returns:
        ``(swapped_difference, repeated_difference)``; the second is zero for
        a deterministic network
    """
    base = denoiser.predict_noise(x, steps, conditions)
    repeated = denoiser.predict_noise(x, steps, conditions)
    changed = denoiser.predict_noise(x, steps, swapped)
    return float(np.abs(changed - base).mean()), float(np.abs(repeated - base).mean())
