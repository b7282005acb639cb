"""Run manifests: resolved configuration plus input and output hashes"""

from __future__ import annotations

import json
import logging
import shutil
from pathlib import Path
from typing import Any

from app import __version__
from app.config import Settings
from app.data.dataset import MANIFEST as DATASET_MANIFEST
from app.data.dataset import read_manifest
from app.errors import UserInputError
from app.hashing import sha256_file, sha256_json, sha256_npz

logger = logging.getLogger(__name__)

RUN_MANIFEST = "run_manifest.json"


def content_hash(path: Path) -> str:
    """Dataset directories and npz archives hash by content, other files by bytes"""
    if path.is_dir():
        if (path / DATASET_MANIFEST).exists():
            return str(read_manifest(path)["content_hash"])
        digests = {str(p.relative_to(path)): sha256_file(p) for p in sorted(path.rglob("*")) if p.is_file()}
        return sha256_json(digests)
    if path.suffix == ".npz":
        return sha256_npz(path)
    return sha256_file(path)


def prepare_output(directory: Path, overwrite: bool, keep: bool = False) -> Path:
    """
    Make sure ``directory`` can receive outputs.

    An existing non-empty directory is an error unless ``overwrite`` is set,
    in which case it is cleared (``keep`` leaves its files in place).
    """
    if directory.exists() and any(directory.iterdir()):
        if not overwrite:
            raise UserInputError(f"{directory} already exists; pass --overwrite to replace it")
        if not keep:
            shutil.rmtree(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_run_manifest(
    directory: Path,
    command: str,
    settings: Settings,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    extra: dict[str, Any] | None = None,
) -> Path:
    """Record everything needed to rerun ``command`` without its command line"""
    document = {
        "command": command,
        "version": __version__,
        "seed": settings.seed,
        "config": settings.resolved(),
        "config_hash": settings.config_hash(),
        "inputs": {name: {"path": str(p), "sha256": content_hash(p)} for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "sha256": content_hash(p)} for name, p in outputs.items()},
        **(extra or {}),
    }
    path = directory / RUN_MANIFEST
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str), encoding="utf-8")
    logger.info(f"Wrote run manifest {path}")
    return path
