"""Phase/toolset condition labels and the annotation table format"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from app.errors import DataError, ShapeError, UserInputError

logger = logging.getLogger(__name__)

NULL_PHASE = -1

Toolset = tuple[int, ...]
CellKey = tuple[Toolset, int]

_PHASE_HEADER = re.compile(r"^phase\[(?P<names>.*)\]$")


@dataclass(frozen=True, order=True)
class ConditionLabel:
    """A surgical phase (0-based) and the binary vector of tools present"""

    phase: int
    toolset: Toolset

    def __post_init__(self) -> None:
        if self.phase < 0:
            raise UserInputError(f"phase must be non-negative, got {self.phase}")
        if any(flag not in (0, 1) for flag in self.toolset):
            raise UserInputError(f"toolset flags must be 0 or 1, got {self.toolset}")

    @property
    def key(self) -> CellKey:
        return (self.toolset, self.phase)

    def validate(self, num_phases: int, num_tools: int) -> None:
        if self.phase >= num_phases:
            raise UserInputError(f"phase {self.phase} outside [0, {num_phases})")
        if len(self.toolset) != num_tools:
            raise ShapeError("toolset length", (len(self.toolset),), (num_tools,))


def toolset_name(toolset: Toolset, tool_names: Sequence[str] | None = None) -> str:
    """Readable toolset, e.g. ``(Bonn Forceps, Cannula)``; ``()`` when empty"""
    present = [
        tool_names[i] if tool_names else str(i) for i, flag in enumerate(toolset) if flag
    ]
    return "(" + ", ".join(present) + ")"


@dataclass(frozen=True)
class ConditionBatch:
    """
    Conditions of a batch as arrays.

    Rows whose phase is ``NULL_PHASE`` carry the joint null token; their
    toolset row is all zeros and is never read as a real toolset.
    """

    phases: np.ndarray
    toolsets: np.ndarray

    def __post_init__(self) -> None:
        if self.phases.ndim != 1 or self.toolsets.ndim != 2 or self.toolsets.shape[0] != self.phases.shape[0]:
            raise ShapeError("condition batch phases/toolsets", self.phases.shape, self.toolsets.shape)

    def __len__(self) -> int:
        return int(self.phases.shape[0])

    @property
    def num_tools(self) -> int:
        return int(self.toolsets.shape[1])

    @property
    def is_null(self) -> np.ndarray:
        return self.phases == NULL_PHASE

    @classmethod
    def from_labels(cls, labels: Sequence[ConditionLabel | None], num_tools: int) -> ConditionBatch:
        phases = np.full(len(labels), NULL_PHASE, dtype=np.int64)
        toolsets = np.zeros((len(labels), num_tools), dtype=np.float64)
        for row, label in enumerate(labels):
            if label is None:
                continue
            if len(label.toolset) != num_tools:
                raise ShapeError("toolset length", (len(label.toolset),), (num_tools,))
            phases[row] = label.phase
            toolsets[row] = label.toolset
        return cls(phases, toolsets)

    @classmethod
    def null(cls, count: int, num_tools: int) -> ConditionBatch:
        return cls(np.full(count, NULL_PHASE, dtype=np.int64), np.zeros((count, num_tools)))

    def nullify(self, mask: np.ndarray) -> ConditionBatch:
        """Replace the rows selected by ``mask`` with the null token"""
        phases = np.where(mask, NULL_PHASE, self.phases)
        toolsets = np.where(mask[:, None], 0.0, self.toolsets)
        return ConditionBatch(phases, toolsets)

    def take(self, indices: np.ndarray | slice) -> ConditionBatch:
        return ConditionBatch(self.phases[indices], self.toolsets[indices])

    def concat(self, other: ConditionBatch) -> ConditionBatch:
        return ConditionBatch(
            np.concatenate([self.phases, other.phases]),
            np.concatenate([self.toolsets, other.toolsets]),
        )

    def labels(self) -> list[ConditionLabel | None]:
        return [
            None if phase == NULL_PHASE else ConditionLabel(int(phase), tuple(int(f) for f in row))
            for phase, row in zip(self.phases, self.toolsets)
        ]


@dataclass(frozen=True)
class AnnotationTable:
    """Rows of the annotation file plus the tool and phase names from its header"""

    frame_ids: list[str]
    labels: list[ConditionLabel]
    tool_names: list[str]
    phase_names: list[str]

    def __post_init__(self) -> None:
        if len(self.frame_ids) != len(self.labels):
            raise ShapeError("frame ids/labels", (len(self.frame_ids),), (len(self.labels),))
        for label in self.labels:
            label.validate(len(self.phase_names), len(self.tool_names))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_phases(self) -> int:
        return len(self.phase_names)

    @property
    def num_tools(self) -> int:
        return len(self.tool_names)


def write_annotations(path: Path, table: AnnotationTable) -> None:
    """
    Write one row per frame: frame id, phase id, K binary tool flags.

    The phase column header lists the phase names, e.g. ``phase[Idle;Incision]``.
    """
    for name in table.phase_names:
        if ";" in name or "]" in name:
            raise UserInputError(f"phase name {name!r} may not contain ';' or ']'")
    columns = ["frame_id", f"phase[{';'.join(table.phase_names)}]", *table.tool_names]
    rows = [[fid, label.phase, *label.toolset] for fid, label in zip(table.frame_ids, table.labels)]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)


def read_annotations(path: Path) -> AnnotationTable:
    """Parse an annotation file; malformed rows are reported with their line number"""
    try:
        frame = pd.read_csv(path, dtype={"frame_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read annotations {path}: {exc}") from exc

    if frame.shape[1] < 2 or frame.columns[0] != "frame_id":
        raise DataError(f"{path}: header must start with frame_id and a phase column")
    match = _PHASE_HEADER.match(str(frame.columns[1]))
    if match is None:
        raise DataError(f"{path}: second column must be phase[<names>], got {frame.columns[1]!r}")
    phase_names = match.group("names").split(";") if match.group("names") else []
    tool_names = [str(c) for c in frame.columns[2:]]

    values = frame.iloc[:, 1:]
    bad = values.isna().any(axis=1) | ~values.apply(pd.to_numeric, errors="coerce").notna().all(axis=1)
    if bad.any():
        first = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"{path} line {first + 2}: missing or non-numeric fields")
    numeric = values.to_numpy(dtype=np.int64)

    labels: list[ConditionLabel] = []
    for offset, row in enumerate(numeric):
        try:
            label = ConditionLabel(int(row[0]), tuple(int(f) for f in row[1:]))
            label.validate(len(phase_names), len(tool_names))
        except UserInputError as exc:
            raise DataError(f"{path} line {offset + 2}: {exc}") from exc
        labels.append(label)

    logger.debug(f"Read {len(labels)} annotations from {path}")
    return AnnotationTable(frame["frame_id"].tolist(), labels, tool_names, phase_names)


def labels_from_arrays(phases: np.ndarray, toolsets: np.ndarray) -> list[ConditionLabel]:
    return [ConditionLabel(int(p), tuple(int(f) for f in row)) for p, row in zip(phases, toolsets)]


def require_labels(labels: Iterable[ConditionLabel]) -> list[ConditionLabel]:
    """Materialize ``labels``; an empty sequence is a data error"""
    materialized = list(labels)
    if not materialized:
        raise DataError("annotations are empty")
    return materialized
