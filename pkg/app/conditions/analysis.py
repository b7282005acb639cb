"""Phase and toolset imbalance analysis of an annotation set"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from app.conditions.joint_table import build_joint_table
from app.conditions.labels import ConditionLabel, require_labels, toolset_name

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImbalanceReport:
    """Per-phase frame counts, tool histograms, toolset cells and tool co-occurrence"""

    phase_frames: pd.DataFrame
    tool_histogram: pd.DataFrame
    toolset_counts: pd.DataFrame
    cooccurrence: dict[int, pd.DataFrame]
    total: int

    def export(self, directory: Path) -> list[Path]:
        """Write every table as CSV; co-occurrence matrices go one file per phase"""
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, table in (
            ("phase_frames.csv", self.phase_frames),
            ("toolset_counts.csv", self.toolset_counts),
        ):
            table.to_csv(directory / name, index=False)
            written.append(directory / name)
        self.tool_histogram.to_csv(directory / "tool_histogram.csv")
        written.append(directory / "tool_histogram.csv")
        for phase, matrix in self.cooccurrence.items():
            path = directory / f"cooccurrence_phase{phase}.csv"
            matrix.to_csv(path)
            written.append(path)
        return written

    def summary_lines(self) -> list[str]:
        lines = [f"{self.total} frames"]
        for row in self.phase_frames.itertuples(index=False):
            lines.append(f"  phase {row.phase} {row.phase_name}: {row.frames} frames ({row.fraction:.1%})")
        return lines


def imbalance_report(
    annotations: Sequence[ConditionLabel],
    tool_names: Sequence[str] | None = None,
    phase_names: Sequence[str] | None = None,
) -> ImbalanceReport:
    """
    Tabulate how frames, tools and toolsets are spread over phases.

    Args:
        annotations: Condition labels of every frame
        tool_names: Column names for tools (defaults to ``tool_<k>``)
        phase_names: Names for phase ids; when given, phases without frames
            are listed with a zero count

    Returns:
        ImbalanceReport whose counts partition the annotations
    """
    labels = require_labels(annotations)
    num_tools = len(labels[0].toolset)
    tools = list(tool_names) if tool_names else [f"tool_{k}" for k in range(num_tools)]
    observed = sorted({label.phase for label in labels})
    phases = list(range(len(phase_names))) if phase_names else observed
    names = {p: (phase_names[p] if phase_names else f"phase_{p}") for p in phases}

    phase_ids = np.array([label.phase for label in labels])
    flags = np.array([label.toolset for label in labels], dtype=np.int64).reshape(len(labels), num_tools)
    total = len(labels)

    frames = [int((phase_ids == p).sum()) for p in phases]
    phase_frames = pd.DataFrame(
        {
            "phase": phases,
            "phase_name": [names[p] for p in phases],
            "frames": frames,
            "fraction": [f / total for f in frames],
        }
    )

    histogram = pd.DataFrame(
        [flags[phase_ids == p].sum(axis=0) for p in phases], index=pd.Index(phases, name="phase"), columns=tools
    )

    table = build_joint_table(labels)
    rows = []
    for toolset, phase in table.cells:
        in_phase = int((phase_ids == phase).sum())
        count = table.counts[(toolset, phase)]
        rows.append(
            {
                "phase": phase,
                "phase_name": names.get(phase, f"phase_{phase}"),
                "toolset": "".join(str(f) for f in toolset),
                "toolset_name": toolset_name(toolset, tools),
                "frames": count,
                "fraction_of_phase": count / in_phase,
                "joint_probability": count / total,
            }
        )
    toolset_counts = pd.DataFrame(rows).sort_values(["phase", "frames", "toolset"], ascending=[True, False, True])

    cooccurrence = {}
    for p in observed:
        selected = flags[phase_ids == p]
        cooccurrence[p] = pd.DataFrame(selected.T @ selected, index=tools, columns=tools)

    logger.info(f"Imbalance report: {total} frames, {len(observed)} phases, {len(table.cells)} toolset cells")
    return ImbalanceReport(
        phase_frames=phase_frames,
        tool_histogram=histogram,
        toolset_counts=toolset_counts.reset_index(drop=True),
        cooccurrence=cooccurrence,
        total=total,
    )
