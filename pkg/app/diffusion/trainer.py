"""Epoch loop for the conditional denoiser with condition dropout"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from app.autodiff import Adam
from app.conditions.labels import ConditionBatch
from app.diffusion.guidance import GuidanceConfig, dropout_conditions
from app.diffusion.process import DiffusionProcess
from app.errors import NumericalError, ShapeError, UserInputError
from app.models.checkpoint import DENOISER, Checkpoint, save_checkpoint
from app.models.unet import DenoiserNetwork
from app.training_log import LossLog

logger = logging.getLogger(__name__)


class DiffusionTrainingConfig(BaseModel):
    """Optimisation settings of ``train-diffusion``"""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=30, ge=1, description="[assumption] desk-scale epoch count")
    batch_size: int = Field(default=64, ge=1, description="[assumption] images per step")
    learning_rate: float = Field(default=2e-3, gt=0.0, description="[assumption] Adam step size")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0, description="[assumption] Adam first-moment decay")
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0, description="[assumption] Adam second-moment decay")
    epsilon: float = Field(default=1e-8, gt=0.0, description="[assumption] Adam denominator offset")
    checkpoint_every: int = Field(default=5, ge=1, description="[assumption] epochs between checkpoints")


@dataclass(frozen=True)
class EpochStats:
    """Mean loss of one epoch and how many rows trained each guidance path"""

    epoch: int
    mean_loss: float
    conditional_rows: int
    null_rows: int


class DiffusionTrainer:
    """
    Trains a :class:`DenoiserNetwork` on images with their conditions.

    The trainer owns its RNG; the generator state is written into every
    checkpoint so a resumed run continues with the same draws.
    """

    def __init__(
        self,
        model: DenoiserNetwork,
        process: DiffusionProcess,
        guidance: GuidanceConfig,
        config: DiffusionTrainingConfig,
        seed: int = 0,
        output_dir: Path | None = None,
        run_config: dict[str, Any] | None = None,
        show_progress: bool = False,
    ) -> None:
        self.model = model
        self.process = process
        self.guidance = guidance
        self.config = config
        self.optimizer = Adam(
            model.parameters(), config.learning_rate, config.beta1, config.beta2, config.epsilon
        )
        self.rng = np.random.default_rng(seed)
        self.epoch = 0
        self.step = 0
        self.output_dir = output_dir
        self.run_config = run_config or {}
        self.show_progress = show_progress
        self.loss_log = LossLog(output_dir / "loss_log.tsv" if output_dir else None)
        self.last_checkpoint: Path | None = None

    def checkpoint_path(self, epoch: int) -> Path:
        if self.output_dir is None:
            raise UserInputError("trainer has no output directory for checkpoints")
        return self.output_dir / f"denoiser_epoch{epoch:04d}.npz"

    def save(self, path: Path | None = None) -> Path:
        path = path or self.checkpoint_path(self.epoch)
        save_checkpoint(
            path,
            DENOISER,
            self.model,
            self.model.config.model_dump(mode="json"),
            optimizer=self.optimizer,
            meta={
                "epoch": self.epoch,
                "step": self.step,
                "rng_state": self.rng.bit_generator.state,
                "config": self.run_config,
            },
        )
        self.last_checkpoint = path
        if self.output_dir is not None:
            latest = self.output_dir / "denoiser.npz"
            if path != latest:
                latest.write_bytes(path.read_bytes())
        return path

    def restore(self, checkpoint: Checkpoint) -> None:
        """Continue from a checkpoint whose parameters are already loaded into the model"""
        self.optimizer.load_state_dict(checkpoint.optimizer)
        self.epoch = int(checkpoint.meta.get("epoch", 0))
        self.step = int(checkpoint.meta.get("step", 0))
        if "rng_state" in checkpoint.meta:
            self.rng.bit_generator.state = checkpoint.meta["rng_state"]
        logger.info(f"Resumed denoiser training at epoch {self.epoch}, step {self.step}")

    def train_epoch(self, images: np.ndarray, conditions: ConditionBatch) -> EpochStats:
        count = images.shape[0]
        order = self.rng.permutation(count)
        batch_size = self.config.batch_size
        total, batches, conditional_rows, null_rows = 0.0, 0, 0, 0
        batch_starts = range(0, count, batch_size)
        for start in tqdm(batch_starts, desc=f"epoch {self.epoch + 1}", disable=not self.show_progress, leave=False):
            indices = order[start : start + batch_size]
            batch_conditions = dropout_conditions(
                conditions.take(indices), self.rng, self.guidance.dropout_probability
            )
            dropped = int(batch_conditions.is_null.sum())
            null_rows += dropped
            conditional_rows += len(indices) - dropped

            x0 = images[indices].astype(self.model.dtype, copy=False)
            try:
                loss = self.process.training_loss(self.model, x0, batch_conditions, self.rng)
            except NumericalError as exc:
                raise NumericalError(
                    f"diffusion loss failed at epoch {self.epoch + 1}, step {self.step + 1} ({exc}); "
                    f"last good checkpoint: {self.last_checkpoint}"
                ) from exc
            value = loss.item()
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            self.step += 1
            self.loss_log.append(self.epoch + 1, self.step, value)
            logger.debug(f"step {self.step} loss {value:.5f}")
            total += value
            batches += 1
        self.epoch += 1
        return EpochStats(self.epoch, total / max(batches, 1), conditional_rows, null_rows)

    def fit(self, images: np.ndarray, conditions: ConditionBatch, epochs: int | None = None) -> list[EpochStats]:
        """
        Train until ``epochs`` (default: the configured count) have run in total.

        Checkpoints are written every ``checkpoint_every`` epochs and after the
        last one. A NaN loss raises :class:`NumericalError`; checkpoints
        written before it stay on disk untouched.
        """
        if images.shape[0] == 0:
            raise UserInputError("cannot train the denoiser on an empty dataset")
        if images.shape[0] != len(conditions):
            raise ShapeError("images/conditions", images.shape[:1], (len(conditions),))
        target = epochs or self.config.epochs
        history = []
        logger.info(f"Training denoiser on {images.shape[0]} images from epoch {self.epoch} to {target}")
        while self.epoch < target:
            stats = self.train_epoch(images, conditions)
            history.append(stats)
            logger.info(
                f"Epoch {stats.epoch}/{target}: loss {stats.mean_loss:.5f} "
                f"({stats.conditional_rows} conditional, {stats.null_rows} null rows)"
            )
            if self.output_dir is not None and (
                stats.epoch % self.config.checkpoint_every == 0 or stats.epoch == target
            ):
                self.save()
        return history
