"""Content hashes used by manifests and audits"""

import hashlib
import json
from pathlib import Path

import numpy as np


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def sha256_array(array: np.ndarray) -> str:
    """Hash of dtype, shape and the C-ordered bytes"""
    contiguous = np.ascontiguousarray(array)
    digest = hashlib.sha256(f"{contiguous.dtype.str}{contiguous.shape}".encode())
    digest.update(contiguous.tobytes())
    return digest.hexdigest()


def sha256_json(document: object) -> str:
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_npz(path: Path) -> str:
    """Hash of the arrays in an ``.npz`` archive; independent of zip timestamps"""
    with np.load(path, allow_pickle=False) as archive:
        return sha256_json({name: sha256_array(archive[name]) for name in sorted(archive.files)})
