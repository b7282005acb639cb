"""Empirical joint (toolset, phase) probabilities and inverse rare-case sampling"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from app.conditions.labels import CellKey, ConditionLabel, Toolset, require_labels
from app.errors import DataError, UserInputError

logger = logging.getLogger(__name__)


class ConditionMode(str, Enum):
    """How rare conditions are drawn"""

    JOINT_INVERSE = "joint_inverse"  # inverse of the full joint p(y_s, y_p)
    PHASE_CONDITIONED = "phase_conditioned"  # fixed phase, inverse of p(y_s | y_p)


@dataclass(frozen=True)
class JointConditionTable:
    """
    Empirical probabilities of the observed (toolset, phase) cells.

    Cells are kept in lexicographic key order; unobserved cells are absent.
    """

    counts: dict[CellKey, int]
    total: int

    @property
    def cells(self) -> list[CellKey]:
        return sorted(self.counts)

    @property
    def probabilities(self) -> dict[CellKey, float]:
        return {key: self.counts[key] / self.total for key in self.cells}

    @property
    def phases(self) -> list[int]:
        return sorted({phase for _, phase in self.counts})

    def probability(self, toolset: Toolset, phase: int) -> float:
        return self.counts.get((toolset, phase), 0) / self.total

    def phase_marginals(self) -> dict[int, float]:
        """p(y_p) over observed phases"""
        marginals: Counter[int] = Counter()
        for (_, phase), count in self.counts.items():
            marginals[phase] += count
        return {phase: marginals[phase] / self.total for phase in sorted(marginals)}

    def conditional(self, phase: int) -> dict[Toolset, float]:
        """p(y_s | y_p) for one observed phase"""
        in_phase = {toolset: count for (toolset, p), count in self.counts.items() if p == phase}
        if not in_phase:
            raise UserInputError(f"phase {phase} has no observed annotations")
        phase_total = sum(in_phase.values())
        return {toolset: in_phase[toolset] / phase_total for toolset in sorted(in_phase)}


def build_joint_table(annotations: Sequence[ConditionLabel]) -> JointConditionTable:
    """Count every observed (toolset, phase) cell"""
    labels = require_labels(annotations)
    counts = Counter(label.key for label in labels)
    logger.debug(f"Joint table: {len(counts)} cells from {len(labels)} annotations")
    return JointConditionTable(counts=dict(counts), total=len(labels))


def _inverse_weights(probabilities: np.ndarray) -> np.ndarray:
    complement = 1.0 - probabilities
    return complement / complement.sum()


def inverse_distribution(table: JointConditionTable) -> dict[CellKey, float]:
    """
    Oversampling distribution ``(1 - p) / sum(1 - p)`` over the observed cells.

    Raises:
        DataError: The table has a single cell, whose complement mass is zero
    """
    cells = table.cells
    if len(cells) < 2:
        raise DataError("inverse distribution needs at least two observed cells")
    probabilities = np.array([table.counts[key] / table.total for key in cells])
    return dict(zip(cells, _inverse_weights(probabilities).tolist()))


def rarest_cells(table: JointConditionTable, phase: int, n: int) -> list[Toolset]:
    """The ``n`` least frequent toolsets observed in ``phase``; ties by toolset key"""
    conditional = table.conditional(phase)
    ranked = sorted(conditional, key=lambda toolset: (conditional[toolset], toolset))
    return ranked[:n]


def sample_rare_conditions(
    table: JointConditionTable,
    count: int,
    rng: np.random.Generator,
    mode: ConditionMode = ConditionMode.JOINT_INVERSE,
    phase: int | None = None,
) -> list[ConditionLabel]:
    """
    Draw conditions that favour rare cells; only observed cells are emitted.

    Args:
        table: Joint table built from the real annotations
        count: Number of conditions to draw
        rng: Random generator owned by the caller
        mode: JOINT_INVERSE draws cells from the inverse joint distribution;
            PHASE_CONDITIONED draws toolsets from the inverse of p(y_s | y_p)
        phase: Phase to condition on in PHASE_CONDITIONED mode; ``None``
            spreads ``count`` evenly over all observed phases

    Returns:
        List of ConditionLabel in draw order
    """
    if count < 0:
        raise UserInputError(f"count must be non-negative, got {count}")
    if count == 0:
        return []

    if mode == ConditionMode.JOINT_INVERSE:
        inverse = inverse_distribution(table)
        cells = list(inverse)
        picks = rng.choice(len(cells), size=count, p=np.array(list(inverse.values())))
        return [ConditionLabel(cells[i][1], cells[i][0]) for i in picks]

    if phase is not None:
        if phase not in table.phases:
            raise UserInputError(f"phase {phase} is not present in the annotations")
        per_phase = {phase: count}
    else:
        phases = table.phases
        base, extra = divmod(count, len(phases))
        per_phase = {p: base + (1 if i < extra else 0) for i, p in enumerate(phases)}

    labels: list[ConditionLabel] = []
    for current, amount in per_phase.items():
        if amount == 0:
            continue
        conditional = table.conditional(current)
        toolsets = list(conditional)
        if len(toolsets) == 1:
            labels.extend(ConditionLabel(current, toolsets[0]) for _ in range(amount))
            continue
        weights = _inverse_weights(np.array(list(conditional.values())))
        picks = rng.choice(len(toolsets), size=amount, p=weights)
        labels.extend(ConditionLabel(current, toolsets[i]) for i in picks)
    return labels
