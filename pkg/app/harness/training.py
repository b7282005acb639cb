"""Tool classifier training"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from app.autodiff import Adam, Tensor
from app.autodiff import functional as F
from app.conditions.joint_table import build_joint_table, inverse_distribution
from app.data.dataset import LabeledImageSet
from app.errors import NumericalError, UserInputError
from app.models.classifier import ClassifierConfig, ToolClassifier
from app.training_log import LossLog

logger = logging.getLogger(__name__)


class ClassifierTrainingConfig(BaseModel):
    """Optimisation settings of the tool classifier"""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=8, ge=1, description="[assumption] desk-scale epoch count")
    batch_size: int = Field(default=64, ge=1, description="[assumption] images per step")
    learning_rate: float = Field(default=2e-3, gt=0.0, description="[assumption] Adam step size")
    phase_loss_weight: float = Field(default=0.5, ge=0.0, description="[assumption] weight of the phase head loss")


def classifier_loss(
    model: ToolClassifier, images: np.ndarray, toolsets: np.ndarray, phases: np.ndarray, phase_weight: float
) -> Tensor:
    tool_logits, phase_logits, _ = model(images.astype(model.dtype, copy=False))
    loss = F.binary_cross_entropy_with_logits(tool_logits, toolsets.astype(model.dtype, copy=False))
    if phase_weight > 0:
        loss = loss + phase_weight * F.cross_entropy(phase_logits, phases)
    return loss


def train_classifier(
    dataset: LabeledImageSet,
    config: ClassifierTrainingConfig,
    architecture: ClassifierConfig | None = None,
    seed: int = 0,
    dtype: np.dtype = np.float64,
    loss_log: Path | None = None,
    show_progress: bool = False,
) -> tuple[ToolClassifier, list[float]]:
    """
    Fit a fresh classifier on ``dataset``.

    The objective is binary cross-entropy on the tool head plus the weighted
    categorical cross-entropy on the phase head. Initialisation and batch
    order both come from ``seed``.

    Returns:
        The trained classifier and the mean loss of every epoch
    """
    if len(dataset) == 0:
        raise UserInputError("cannot train the classifier on an empty dataset")
    channels, size, _ = dataset.image_shape
    architecture = architecture or ClassifierConfig()
    architecture = architecture.model_copy(
        update={
            "image_channels": channels,
            "image_size": size,
            "num_tools": dataset.num_tools,
            "num_phases": dataset.num_phases,
        }
    )
    model = ToolClassifier(architecture, seed=seed, dtype=dtype)
    optimizer = Adam(model.parameters(), config.learning_rate)
    rng = np.random.default_rng(seed)
    log = LossLog(loss_log)

    history = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        losses = []
        batches = range(0, len(dataset), config.batch_size)
        for start in tqdm(batches, desc=f"classifier {epoch}", disable=not show_progress, leave=False):
            idx = order[start : start + config.batch_size]
            try:
                loss = classifier_loss(
                    model, dataset.images[idx], dataset.toolsets[idx], dataset.phases[idx], config.phase_loss_weight
                )
            except NumericalError as exc:
                raise NumericalError(
                    f"classifier loss failed at epoch {epoch}, step {step + 1} ({exc}; "
                    f"previous epoch mean {history[-1] if history else 'n/a'}, batch of {len(idx)})"
                ) from exc
            value = loss.item()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            log.append(epoch, step, value)
            losses.append(value)
        history.append(float(np.mean(losses)))
        logger.info(f"Classifier epoch {epoch}/{config.epochs}: loss {history[-1]:.5f}")
    return model, history


def oversample(dataset: LabeledImageSet, rng: np.random.Generator) -> LabeledImageSet:
    """
    Redraw the frames of ``dataset`` so each (toolset, phase) cell is picked
    with its inverse joint probability; no new images are created.
    """
    labels = dataset.labels()
    table = build_joint_table(labels)
    inverse = inverse_distribution(table)
    weights = np.array([inverse[label.key] / table.counts[label.key] for label in labels])
    picks = np.sort(rng.choice(len(dataset), size=len(dataset), p=weights / weights.sum()))
    return dataset.take(picks)
