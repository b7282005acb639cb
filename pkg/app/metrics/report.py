"""Metric suite over one real and one generated set"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from app.data.dataset import LabeledImageSet, Split
from app.errors import UserInputError
from app.metrics.conditional import conditional_f1, feature_diversity
from app.metrics.distribution import FeatureStatistics, fid, inception_score, kid
from app.models.classifier import ToolClassifier

logger = logging.getLogger(__name__)

METRIC_NAMES = ("fid", "kid", "inception_score", "cf1", "diversity")


class MetricSettings(BaseModel):
    """Sample sizes of the metric estimators"""

    kid_subsets: int = Field(default=50, ge=1, description="[assumption] KID subset count")
    kid_subset_size: int = Field(default=1000, ge=2, description="[assumption] KID subset size")
    is_splits: int = Field(default=10, ge=1, description="[assumption] Inception Score splits")
    diversity_pairs: int = Field(default=2000, ge=1, description="[assumption] random pairs for diversity")


class MetricValue(BaseModel):
    name: str
    value: float
    deviation: float | None = None
    real_count: int
    generated_count: int


class MetricReport(BaseModel):
    """Machine-readable metric summary; ``metrics`` holds each metric exactly once"""

    metrics: list[MetricValue]
    feature_extractor_sha256: str
    baselines: dict[str, list[MetricValue]] = Field(default_factory=dict)

    def value(self, name: str) -> float:
        for metric in self.metrics:
            if metric.name == name:
                return metric.value
        raise KeyError(name)

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path


def metric_values(
    classifier: ToolClassifier,
    real: LabeledImageSet,
    generated: LabeledImageSet,
    settings: MetricSettings,
    rng: np.random.Generator,
) -> list[MetricValue]:
    """
    FID, KID, Inception Score, CF1 and feature diversity of ``generated`` against ``real``.

    All five live in the classifier's feature space; IS reads its phase head.
    """
    if len(real) < 2 or len(generated) < 2:
        raise UserInputError(f"metrics need at least 2 images per set, got {len(real)} and {len(generated)}")
    real_out = classifier.classify(real.images)
    gen_out = classifier.classify(generated.images)
    n_real, n_gen = len(real), len(generated)

    real_stats = FeatureStatistics.from_features(real_out.features)
    fid_value = fid(real_stats, FeatureStatistics.from_features(gen_out.features))
    kid_value, kid_dev = kid(real_out.features, gen_out.features, rng, settings.kid_subsets, settings.kid_subset_size)
    splits = min(settings.is_splits, n_gen)
    if splits < settings.is_splits:
        logger.warning(f"Only {n_gen} generated images; Inception Score uses {splits} splits")
    is_value, is_dev = inception_score(gen_out.phase_probabilities, splits)
    cf1 = conditional_f1(classifier, generated, gen_out)
    div_value, div_dev = feature_diversity(gen_out.features, settings.diversity_pairs, rng)

    def entry(name: str, value: float, deviation: float | None = None) -> MetricValue:
        return MetricValue(name=name, value=value, deviation=deviation, real_count=n_real, generated_count=n_gen)

    values = [
        entry("fid", fid_value),
        entry("kid", kid_value, kid_dev),
        entry("inception_score", is_value, is_dev),
        entry("cf1", cf1),
        entry("diversity", div_value, div_dev),
    ]
    logger.info("Metrics: " + ", ".join(f"{v.name}={v.value:.4f}" for v in values))
    return values


def noise_like(dataset: LabeledImageSet, rng: np.random.Generator) -> LabeledImageSet:
    """Uniform noise images in [-1, 1] carrying the labels of ``dataset``"""
    images = rng.uniform(-1.0, 1.0, size=dataset.images.shape)
    return LabeledImageSet(
        images, dataset.conditions, Split.SYNTHETIC, dataset.tool_names, dataset.phase_names, list(dataset.frame_ids)
    )


def compute_metric_report(
    classifier: ToolClassifier,
    real: LabeledImageSet,
    generated: LabeledImageSet,
    extractor_sha256: str,
    settings: MetricSettings | None = None,
    seed: int = 0,
    noise_baseline: bool = False,
) -> MetricReport:
    """
    Score ``generated`` and optionally a uniform-noise set of the same size
    and labels, so orderings against the noise floor are recorded together.
    """
    settings = settings or MetricSettings()
    rng = np.random.default_rng(seed)
    report = MetricReport(
        metrics=metric_values(classifier, real, generated, settings, rng),
        feature_extractor_sha256=extractor_sha256,
    )
    if noise_baseline:
        noise = noise_like(generated, np.random.default_rng([seed, 1]))
        report.baselines["noise"] = metric_values(classifier, real, noise, settings, rng)
    return report
