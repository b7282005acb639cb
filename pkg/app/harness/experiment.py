"""Original / Extended / synthetic-only retraining comparison"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from app.data.dataset import LabeledImageSet, Split
from app.errors import DataError
from app.harness.report import ClassifierReport, evaluate_classifier, worst_phases
from app.harness.training import ClassifierTrainingConfig, oversample, train_classifier
from app.hashing import sha256_array
from app.models.classifier import ClassifierConfig

logger = logging.getLogger(__name__)

ORIGINAL = "original"
EXTENDED = "extended"
SYNTHETIC_ONLY = "cas"
OVERSAMPLED = "oversampled"


@dataclass
class ExperimentResult:
    """Reports per arm plus the per-phase changes for the worst phases"""

    reports: dict[str, ClassifierReport]
    worst: list[int]
    deltas: pd.DataFrame
    audit: dict[str, object] = field(default_factory=dict)

    @property
    def improved(self) -> int:
        """How many of the worst phases gained F1 with the extended set"""
        return int((self.deltas["delta"] > 0).sum()) if len(self.deltas) else 0

    def overall_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "arm": arm,
                    "f1": r.f1,
                    "auroc": r.auroc,
                    "accuracy": r.accuracy,
                    "train_count": r.metadata.get("train_count"),
                }
                for arm, r in self.reports.items()
            ]
        )

    def export(self, directory: Path) -> list[Path]:
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for arm, report in self.reports.items():
            paths.extend(report.export(directory, prefix=f"{arm}_"))
        overall = directory / "overall.csv"
        self.overall_frame().to_csv(overall, index=False)
        deltas = directory / "phase_deltas.csv"
        self.deltas.to_csv(deltas, index=False)
        summary = directory / "experiment.json"
        summary.write_text(
            json.dumps(
                {
                    "overall": {arm: r.summary() for arm, r in self.reports.items()},
                    "worst_phases": self.worst,
                    "improved_phases": self.improved,
                    "audit": self.audit,
                },
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )
        return [*paths, overall, deltas, summary]


def audit_disjoint(train: LabeledImageSet, test: LabeledImageSet, synthetic: LabeledImageSet) -> dict[str, object]:
    """Abort when any training image also appears in the test set"""
    test_hashes = set(test.image_hashes())
    for name, dataset in (("train", train), ("synthetic", synthetic)):
        shared = test_hashes.intersection(dataset.image_hashes())
        if shared:
            raise DataError(f"{len(shared)} {name} images also appear in the test set")
    return {
        "train_hash": train.content_hash(),
        "test_hash": test.content_hash(),
        "synthetic_hash": synthetic.content_hash(),
    }


def phase_deltas(reports: dict[str, ClassifierReport], phases: list[int]) -> pd.DataFrame:
    original = reports[ORIGINAL]
    rows = []
    for phase in phases:
        row = {"phase": phase, "phase_name": original.phase_name(phase)}
        for arm, report in reports.items():
            row[f"{arm}_f1"] = report.per_phase_f1.get(phase, float("nan"))
        row["delta"] = row[f"{EXTENDED}_f1"] - row[f"{ORIGINAL}_f1"]
        rows.append(row)
    return pd.DataFrame(rows)


def retraining_experiment(
    train: LabeledImageSet,
    test: LabeledImageSet,
    synthetic: LabeledImageSet,
    training: ClassifierTrainingConfig,
    architecture: ClassifierConfig | None = None,
    seed: int = 0,
    worst_n: int = 2,
    include_oversampling: bool = False,
    num_workers: int = 1,
    dtype: np.dtype = np.float64,
    show_progress: bool = False,
) -> ExperimentResult:
    """
    Retrain the tool classifier per data composition and compare on one test set.

    Arms: Original (real train), Extended (real + synthetic), synthetic-only
    (skipped when ``synthetic`` is empty) and optionally an oversampled
    real set. Every arm trains from ``seed`` with the same configuration.
    The worst phases are taken from the Original report.

    Raises:
        DataError: a training image also appears in the test set, or the
            test set changed while the arms ran
    """
    audit = audit_disjoint(train, test, synthetic)
    test_digest = sha256_array(test.images)
    arms = {ORIGINAL: train, EXTENDED: train.concat(synthetic, Split.TRAIN)}
    if len(synthetic):
        arms[SYNTHETIC_ONLY] = synthetic
    if include_oversampling:
        arms[OVERSAMPLED] = oversample(train, np.random.default_rng([seed, 1]))

    def run(arm: str) -> ClassifierReport:
        data = arms[arm]
        logger.info(f"Training the {arm} arm on {len(data)} frames")
        model, history = train_classifier(
            data, training, architecture, seed=seed, dtype=dtype, show_progress=show_progress
        )
        return evaluate_classifier(
            model,
            test,
            metadata={"arm": arm, "seed": seed, "train_count": len(data), "final_loss": history[-1]},
        )

    if num_workers > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            reports = dict(zip(arms, pool.map(run, arms)))
    else:
        reports = {arm: run(arm) for arm in arms}

    if sha256_array(test.images) != test_digest:
        raise DataError("test images changed during the experiment")
    worst = worst_phases(reports[ORIGINAL], worst_n)
    result = ExperimentResult(reports, worst, phase_deltas(reports, worst), audit)
    logger.info(
        "Overall F1: " + ", ".join(f"{arm} {r.f1:.4f}" for arm, r in reports.items())
        + f"; {result.improved} of {len(worst)} worst phases improved"
    )
    return result
