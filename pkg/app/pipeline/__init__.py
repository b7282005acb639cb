"""Pipeline stages and run manifests"""

from app.pipeline.commands import (
    analyze_stage,
    evaluate_stage,
    gen_data,
    sample_stage,
    train_classifier_stage,
    train_diffusion,
)
from app.pipeline.manifest import RUN_MANIFEST, content_hash, prepare_output, write_run_manifest

__all__ = [
    "RUN_MANIFEST",
    "analyze_stage",
    "content_hash",
    "evaluate_stage",
    "gen_data",
    "prepare_output",
    "sample_stage",
    "train_classifier_stage",
    "train_diffusion",
    "write_run_manifest",
]
