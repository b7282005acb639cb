"""Conditioning fidelity and sample diversity"""

import numpy as np

from app.data.dataset import LabeledImageSet
from app.errors import ShapeError, UserInputError
from app.harness.scores import micro_f1
from app.models.classifier import ClassifierOutput, ToolClassifier


def conditional_f1(
    classifier: ToolClassifier, generated: LabeledImageSet, output: ClassifierOutput | None = None
) -> float:
    """Micro F1 of the classifier's tool predictions against the conditioning toolsets"""
    if len(generated) == 0:
        raise UserInputError("conditional F1 needs at least one generated image")
    output = output or classifier.classify(generated.images)
    return micro_f1(generated.toolsets.astype(np.int64), output.tool_predictions())


def feature_diversity(features: np.ndarray, pair_count: int, rng: np.random.Generator) -> tuple[float, float]:
    """
    Mean and deviation of ``1 - cosine similarity`` over random distinct pairs.

    Pairs involving a zero feature vector count as distance 0.
    """
    if features.ndim != 2:
        raise ShapeError("diversity features must be [N, F]", features.shape)
    if features.shape[0] < 2 or pair_count < 1:
        raise UserInputError(f"diversity needs 2 samples and 1 pair, got {features.shape[0]} and {pair_count}")
    first = rng.integers(0, features.shape[0], size=pair_count)
    second = (first + rng.integers(1, features.shape[0], size=pair_count)) % features.shape[0]
    a, b = features[first], features[second]
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    distance = np.where(norms > 0, 1.0 - (a * b).sum(axis=1) / safe, 0.0)
    return float(distance.mean()), float(distance.std())
