"""Checkpoint persistence: JSON manifest + little-endian float64 blob.

A checkpoint is a pair of files sharing a base path: ``<base>.json`` holds
the manifest (arbitrary metadata plus the array shapes in order) and
``<base>.bin`` the concatenated parameters as little-endian float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint"]


def save_checkpoint(base, manifest: dict, arrays) -> None:
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    arrays = [np.ascontiguousarray(a, dtype="<f8") for a in arrays]
    manifest = dict(manifest)
    manifest["shapes"] = [list(a.shape) for a in arrays]
    manifest["dtype"] = "<f8"
    blob = b"".join(a.tobytes() for a in arrays)
    base.with_suffix(".bin").write_bytes(blob)
    base.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(base):
    base = Path(base)
    manifest = json.loads(base.with_suffix(".json").read_text())
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    arrays = []
    pos = 0
    for shape in manifest["shapes"]:
        n = int(np.prod(shape)) if shape else 1
        arrays.append(raw[pos : pos + n].reshape(shape).astype(float))
        pos += n
    if pos != raw.size:
        raise ValueError("checkpoint blob size does not match manifest shapes")
    return manifest, arrays
