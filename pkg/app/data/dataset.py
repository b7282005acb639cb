"""Labeled image sets and their on-disk directory format"""

from __future__ import annotations

import json
import logging
import os
import shutil
import zipfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from app.conditions.labels import (
    AnnotationTable,
    ConditionBatch,
    ConditionLabel,
    read_annotations,
    write_annotations,
)
from app.errors import DataError, ShapeError, UserInputError
from app.hashing import sha256_array, sha256_file, sha256_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
IMAGES = "images.npz"
ANNOTATIONS = "annotations.csv"


class Split(str, Enum):
    """Role of a dataset in the pipeline"""

    TRAIN = "train"
    TEST = "test"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class LabeledImageSet:
    """
    Images in [-1, 1] with one condition label each.

    ``conditions`` never holds null rows; synthetic sets carry the
    conditions they were generated from.
    """

    images: np.ndarray
    conditions: ConditionBatch
    split: Split
    tool_names: list[str]
    phase_names: list[str]
    frame_ids: list[str]

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ShapeError("dataset images must be [N, C, H, W]", self.images.shape)
        if self.images.shape[0] != len(self.conditions) or len(self.frame_ids) != len(self.conditions):
            raise ShapeError("images/labels/frame ids", self.images.shape[:1], (len(self.conditions),))
        if self.conditions.num_tools != len(self.tool_names):
            raise ShapeError("toolset width/tool names", (self.conditions.num_tools,), (len(self.tool_names),))
        if len(self) and self.conditions.is_null.any():
            raise UserInputError("dataset labels may not contain the null condition")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def num_tools(self) -> int:
        return len(self.tool_names)

    @property
    def num_phases(self) -> int:
        return len(self.phase_names)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])  # type: ignore[return-value]

    @property
    def phases(self) -> np.ndarray:
        return self.conditions.phases

    @property
    def toolsets(self) -> np.ndarray:
        return self.conditions.toolsets

    def labels(self) -> list[ConditionLabel]:
        return [label for label in self.conditions.labels() if label is not None]

    def annotation_table(self) -> AnnotationTable:
        return AnnotationTable(list(self.frame_ids), self.labels(), list(self.tool_names), list(self.phase_names))

    def take(self, indices: np.ndarray | slice) -> LabeledImageSet:
        ids = np.asarray(self.frame_ids, dtype=object)[indices].tolist()
        return LabeledImageSet(
            self.images[indices], self.conditions.take(indices), self.split, self.tool_names, self.phase_names, ids
        )

    def concat(self, other: LabeledImageSet, split: Split | None = None) -> LabeledImageSet:
        """Join two sets with the same image shape and label vocabulary"""
        if other.image_shape != self.image_shape or other.tool_names != self.tool_names:
            raise ShapeError("concatenated datasets", self.image_shape, other.image_shape)
        if other.num_phases != self.num_phases:
            raise ShapeError("concatenated phase vocabularies", (self.num_phases,), (other.num_phases,))
        return LabeledImageSet(
            np.concatenate([self.images, other.images]),
            self.conditions.concat(other.conditions),
            split or self.split,
            self.tool_names,
            self.phase_names,
            [*self.frame_ids, *other.frame_ids],
        )

    def content_hash(self) -> str:
        """SHA-256 over the image buffer and the labels"""
        return sha256_json(
            {
                "images": sha256_array(self.images),
                "phases": sha256_array(self.conditions.phases),
                "toolsets": sha256_array(self.conditions.toolsets.astype(np.int64)),
            }
        )

    def image_hashes(self) -> list[str]:
        return [sha256_array(image) for image in self.images]


def empty_like(dataset: LabeledImageSet, split: Split) -> LabeledImageSet:
    return LabeledImageSet(
        np.zeros((0, *dataset.image_shape), dtype=dataset.images.dtype),
        ConditionBatch.null(0, dataset.num_tools),
        split,
        dataset.tool_names,
        dataset.phase_names,
        [],
    )


def from_labels(
    images: np.ndarray,
    labels: list[ConditionLabel],
    split: Split,
    tool_names: list[str],
    phase_names: list[str],
    frame_ids: list[str] | None = None,
) -> LabeledImageSet:
    ids = frame_ids or [f"{split.value}-{i:06d}" for i in range(len(labels))]
    return LabeledImageSet(
        images, ConditionBatch.from_labels(labels, len(tool_names)), split, tool_names, phase_names, ids
    )


def save_dataset(
    path: Path,
    dataset: LabeledImageSet,
    generator: dict[str, Any] | None = None,
    overwrite: bool = False,
) -> dict[str, Any]:
    """
    Write ``dataset`` into directory ``path``.

    Files are staged in a sibling directory and moved into place at the end,
    so a failure never leaves a half-written dataset behind.

    Returns:
        The manifest document that was written
    """
    if path.exists() and not overwrite:
        raise UserInputError(f"{path} already exists; pass --overwrite to replace it")
    staging = path.with_name(path.name + ".partial")
    shutil.rmtree(staging, ignore_errors=True)
    staging.mkdir(parents=True)

    with open(staging / IMAGES, "wb") as handle:
        np.savez(handle, images=dataset.images)
    write_annotations(staging / ANNOTATIONS, dataset.annotation_table())
    manifest = {
        "format_version": FORMAT_VERSION,
        "split": dataset.split.value,
        "count": len(dataset),
        "image_shape": list(dataset.image_shape),
        "tool_names": dataset.tool_names,
        "phase_names": dataset.phase_names,
        "generator": generator or {},
        "content_hash": dataset.content_hash(),
        "files": {
            name: {"sha256": sha256_file(staging / name), "bytes": (staging / name).stat().st_size}
            for name in (IMAGES, ANNOTATIONS)
        },
    }
    (staging / MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    if path.exists():
        shutil.rmtree(path)
    os.replace(staging, path)
    logger.info(f"Saved {len(dataset)} {dataset.split.value} images to {path}")
    return manifest


def read_manifest(path: Path) -> dict[str, Any]:
    try:
        return json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{path} is not a dataset directory (no {MANIFEST})") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path / MANIFEST}: {exc}") from exc


def _check_file(path: Path, name: str, expected: dict[str, Any]) -> None:
    target = path / name
    if not target.exists():
        raise DataError(f"{target} is missing")
    size = target.stat().st_size
    if size != expected["bytes"]:
        raise DataError(f"{target} is {size} bytes, manifest expects {expected['bytes']} (data ends at offset {size})")
    digest = sha256_file(target)
    if digest != expected["sha256"]:
        raise DataError(f"{target} hash {digest[:12]} does not match manifest {expected['sha256'][:12]}")


def load_dataset(path: Path) -> LabeledImageSet:
    """
    Read a dataset directory written by :func:`save_dataset`.

    Raises:
        DataError: missing, truncated or inconsistent files; nothing is
            returned for a partially valid directory
    """
    manifest = read_manifest(path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported dataset format {manifest.get('format_version')}")
    try:
        files = manifest["files"]
        for name in (IMAGES, ANNOTATIONS):
            _check_file(path, name, files[name])
    except KeyError as exc:
        raise DataError(f"{path / MANIFEST} lacks entry {exc}") from exc

    try:
        with np.load(path / IMAGES, allow_pickle=False) as archive:
            images = archive["images"]
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
        raise DataError(f"cannot read {path / IMAGES}: {exc}") from exc
    table = read_annotations(path / ANNOTATIONS)

    if images.shape[0] != manifest["count"] or len(table) != manifest["count"]:
        raise DataError(
            f"{path}: manifest count {manifest['count']}, images {images.shape[0]}, annotations {len(table)}"
        )
    dataset = LabeledImageSet(
        images,
        ConditionBatch.from_labels(table.labels, table.num_tools),
        Split(manifest["split"]),
        table.tool_names,
        table.phase_names,
        table.frame_ids,
    )
    if dataset.content_hash() != manifest["content_hash"]:
        raise DataError(f"{path}: content hash does not match the manifest")
    logger.info(f"Loaded {len(dataset)} {dataset.split.value} images from {path}")
    return dataset


def to_uint8(images: np.ndarray) -> np.ndarray:
    """Map [-1, 1] images ``[N, C, H, W]`` to 8-bit ``[N, H, W, C]``"""
    scaled = (np.clip(images, -1.0, 1.0) + 1.0) * 127.5
    return np.rint(scaled).astype(np.uint8).transpose(0, 2, 3, 1)


def _to_pil(image: np.ndarray) -> Image.Image:
    return Image.fromarray(image[..., 0] if image.shape[-1] == 1 else image)


def export_png(dataset: LabeledImageSet, directory: Path, scale: int = 1) -> list[Path]:
    """Write every image as a lossless PNG, optionally upscaled with nearest neighbour"""
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for frame_id, pixels in zip(dataset.frame_ids, to_uint8(dataset.images)):
        image = _to_pil(pixels)
        if scale > 1:
            image = image.resize((image.width * scale, image.height * scale), Image.Resampling.NEAREST)
        target = directory / f"{frame_id}.png"
        image.save(target)
        paths.append(target)
    return paths


def save_grid(images: np.ndarray, rows: int, cols: int, path: Path, scale: int = 4) -> Path:
    """Tile ``rows * cols`` images row-major into one PNG; missing cells stay black"""
    if images.shape[0] > rows * cols:
        raise ShapeError("grid cells", (images.shape[0],), (rows * cols,))
    pixels = to_uint8(images)
    _, height, width, channels = pixels.shape if len(pixels) else (0, 1, 1, 3)
    canvas = np.zeros((rows * height, cols * width, channels), dtype=np.uint8)
    for index, tile in enumerate(pixels):
        row, col = divmod(index, cols)
        canvas[row * height : (row + 1) * height, col * width : (col + 1) * width] = tile
    grid = _to_pil(canvas)
    grid = grid.resize((grid.width * scale, grid.height * scale), Image.Resampling.NEAREST)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid.save(path)
    return path
