"""Classifier evaluation reports"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from app.conditions.labels import CellKey, toolset_name
from app.data.dataset import LabeledImageSet
from app.errors import DataError, UserInputError
from app.harness.scores import flag_accuracy, macro_auroc, micro_f1
from app.models.classifier import ToolClassifier

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass(frozen=True)
class ClassifierReport:
    """Overall and broken-down tool scores of one classifier on one set"""

    f1: float
    auroc: float
    accuracy: float
    per_phase_f1: dict[int, float]
    per_cell_f1: dict[CellKey, float]
    count: int
    phase_names: list[str] = field(default_factory=list)
    tool_names: list[str] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def phase_name(self, phase: int) -> str:
        return self.phase_names[phase] if phase < len(self.phase_names) else f"phase_{phase}"

    def phase_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "phase": list(self.per_phase_f1),
                "phase_name": [self.phase_name(p) for p in self.per_phase_f1],
                "f1": list(self.per_phase_f1.values()),
            }
        )

    def cell_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "phase": phase,
                    "phase_name": self.phase_name(phase),
                    "toolset": "".join(str(f) for f in toolset),
                    "toolset_name": toolset_name(toolset, self.tool_names),
                    "f1": score,
                }
                for (toolset, phase), score in self.per_cell_f1.items()
            ]
        )

    def summary(self) -> dict[str, Any]:
        return {
            "f1": self.f1,
            "auroc": self.auroc,
            "accuracy": self.accuracy,
            "count": self.count,
            "per_phase_f1": {str(p): v for p, v in self.per_phase_f1.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_summary(cls, path: Path) -> ClassifierReport:
        """Read the overall and per-phase scores back from ``report.json``; cell scores are not stored there"""
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
            return cls(
                f1=float(document["f1"]),
                auroc=float(document["auroc"]),
                accuracy=float(document["accuracy"]),
                per_phase_f1={int(p): float(v) for p, v in document["per_phase_f1"].items()},
                per_cell_f1={},
                count=int(document["count"]),
                metadata=document.get("metadata", {}),
            )
        except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"cannot read classifier report {path}: {exc}") from exc

    def export(self, directory: Path, prefix: str = "") -> list[Path]:
        """Write ``<prefix>report.json``, ``<prefix>per_phase.csv`` and ``<prefix>per_cell.csv``"""
        directory.mkdir(parents=True, exist_ok=True)
        summary = directory / f"{prefix}report.json"
        summary.write_text(json.dumps(self.summary(), indent=2, sort_keys=True), encoding="utf-8")
        phases = directory / f"{prefix}per_phase.csv"
        self.phase_frame().to_csv(phases, index=False)
        cells = directory / f"{prefix}per_cell.csv"
        self.cell_frame().to_csv(cells, index=False)
        return [summary, phases, cells]


def score_predictions(
    toolsets: np.ndarray,
    phases: np.ndarray,
    probabilities: np.ndarray,
    phase_names: list[str] | None = None,
    tool_names: list[str] | None = None,
    metadata: dict[str, Any] | None = None,
) -> ClassifierReport:
    """
    Build a report from tool probabilities and the true labels.

    Per-phase and per-cell F1 cover exactly the phases and cells present in
    ``phases``/``toolsets``.
    """
    if toolsets.shape[0] == 0:
        raise UserInputError("cannot evaluate on an empty set")
    truth = toolsets.astype(np.int64)
    predictions = (probabilities > THRESHOLD).astype(np.int64)

    per_phase = {int(p): micro_f1(truth[phases == p], predictions[phases == p]) for p in np.unique(phases)}
    codes = {}
    for row, (phase, toolset) in enumerate(zip(phases, truth)):
        codes.setdefault((tuple(int(f) for f in toolset), int(phase)), []).append(row)
    per_cell = {key: micro_f1(truth[rows], predictions[rows]) for key, rows in sorted(codes.items())}

    return ClassifierReport(
        f1=micro_f1(truth, predictions),
        auroc=macro_auroc(truth, probabilities),
        accuracy=flag_accuracy(truth, predictions),
        per_phase_f1=per_phase,
        per_cell_f1=per_cell,
        count=int(truth.shape[0]),
        phase_names=list(phase_names or []),
        tool_names=list(tool_names or []),
        metadata=dict(metadata or {}),
    )


def evaluate_classifier(
    classifier: ToolClassifier, dataset: LabeledImageSet, metadata: dict[str, Any] | None = None
) -> ClassifierReport:
    """Score thresholded (0.5) tool predictions on ``dataset``"""
    if len(dataset) == 0:
        raise UserInputError("cannot evaluate on an empty set")
    output = classifier.classify(dataset.images)
    report = score_predictions(
        dataset.toolsets, dataset.phases, output.tool_probabilities, dataset.phase_names, dataset.tool_names, metadata
    )
    logger.info(
        f"Evaluated {report.count} frames: F1 {report.f1:.4f}, AUROC {report.auroc:.4f}, acc {report.accuracy:.4f}"
    )
    return report


def worst_phases(report: ClassifierReport, n: int) -> list[int]:
    """Phases by ascending F1, ties broken by phase id; ``n`` past the phase count returns all"""
    if n < 0:
        raise UserInputError(f"n must be non-negative, got {n}")
    return [phase for phase, _ in sorted(report.per_phase_f1.items(), key=lambda item: (item[1], item[0]))][:n]
