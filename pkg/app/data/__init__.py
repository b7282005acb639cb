"""SynthEye generator and dataset persistence"""

from app.data.dataset import (
    LabeledImageSet,
    Split,
    export_png,
    load_dataset,
    read_manifest,
    save_dataset,
    save_grid,
)
from app.data.syntheye import GLYPHS, SynthEyeConfig, generate_dataset, render_frame

__all__ = [
    "GLYPHS",
    "LabeledImageSet",
    "Split",
    "SynthEyeConfig",
    "export_png",
    "generate_dataset",
    "load_dataset",
    "read_manifest",
    "render_frame",
    "save_dataset",
    "save_grid",
]
