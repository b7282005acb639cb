"""Checkpoint container for denoisers and classifiers"""

from __future__ import annotations

import json
import logging
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from app.autodiff import Adam, Module
from app.errors import DataError, ShapeError
from app.models.classifier import ClassifierConfig, ToolClassifier
from app.models.unet import DenoiserConfig, DenoiserNetwork

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DENOISER = "denoiser"
CLASSIFIER = "classifier"


@dataclass
class Checkpoint:
    """Parameters, optional optimizer state and metadata read from one file"""

    kind: str
    architecture: dict[str, Any]
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    path: Path,
    kind: str,
    model: Module,
    architecture: dict[str, Any],
    optimizer: Adam | None = None,
    meta: dict[str, Any] | None = None,
) -> Path:
    """
    Write a checkpoint atomically (temporary file, then rename).

    Arrays are stored under ``param/<name>`` and ``optim/<key>``; ``__meta__``
    holds a JSON document with the format version, kind, architecture and
    any run metadata such as epoch counters and RNG state.
    """
    document = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "architecture": architecture,
        **(meta or {}),
    }
    arrays: dict[str, np.ndarray] = {"__meta__": np.array(json.dumps(document, sort_keys=True))}
    arrays.update({f"param/{name}": value for name, value in model.state_dict().items()})
    if optimizer is not None:
        arrays.update({f"optim/{key}": value for key, value in optimizer.state_dict().items()})

    path.parent.mkdir(parents=True, exist_ok=True)
    temporary = path.with_name(path.name + ".partial")
    with open(temporary, "wb") as handle:
        np.savez(handle, **arrays)
    os.replace(temporary, path)
    logger.debug(f"Saved {kind} checkpoint to {path}")
    return path


def load_checkpoint(path: Path, expected_kind: str | None = None) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as archive:
            contents = {key: archive[key] for key in archive.files}
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in contents:
        raise DataError(f"{path} has no metadata entry")
    document = json.loads(str(contents.pop("__meta__")))
    if document.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {document.get('format_version')}")
    kind = document.pop("kind")
    if expected_kind is not None and kind != expected_kind:
        raise DataError(f"{path} holds a {kind}, expected a {expected_kind}")
    document.pop("format_version")
    architecture = document.pop("architecture")
    params = {k.removeprefix("param/"): v for k, v in contents.items() if k.startswith("param/")}
    optimizer = {k.removeprefix("optim/"): v for k, v in contents.items() if k.startswith("optim/")}
    return Checkpoint(kind, architecture, params, optimizer, document)


def _restore(model: Module, checkpoint: Checkpoint, path: Path) -> None:
    try:
        model.load_state_dict(checkpoint.params)
    except ShapeError as exc:
        raise DataError(f"{path} does not fit the architecture: {exc}") from exc


def load_denoiser(path: Path, dtype: np.dtype = np.float64) -> tuple[DenoiserNetwork, Checkpoint]:
    checkpoint = load_checkpoint(path, DENOISER)
    model = DenoiserNetwork(DenoiserConfig(**checkpoint.architecture), dtype=dtype)
    _restore(model, checkpoint, path)
    return model, checkpoint


def load_classifier(path: Path, dtype: np.dtype = np.float64) -> tuple[ToolClassifier, Checkpoint]:
    checkpoint = load_checkpoint(path, CLASSIFIER)
    model = ToolClassifier(ClassifierConfig(**checkpoint.architecture), dtype=dtype)
    _restore(model, checkpoint, path)
    return model, checkpoint
