"""Condition labels, joint tables and imbalance analysis"""

from app.conditions.analysis import ImbalanceReport, imbalance_report
from app.conditions.joint_table import (
    ConditionMode,
    JointConditionTable,
    build_joint_table,
    inverse_distribution,
    rarest_cells,
    sample_rare_conditions,
)
from app.conditions.labels import (
    NULL_PHASE,
    AnnotationTable,
    ConditionBatch,
    ConditionLabel,
    read_annotations,
    write_annotations,
)

__all__ = [
    "NULL_PHASE",
    "AnnotationTable",
    "ConditionBatch",
    "ConditionLabel",
    "ConditionMode",
    "ImbalanceReport",
    "JointConditionTable",
    "build_joint_table",
    "imbalance_report",
    "inverse_distribution",
    "rarest_cells",
    "read_annotations",
    "sample_rare_conditions",
    "write_annotations",
]
