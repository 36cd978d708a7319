"""Float32 array containers: a directory of raw arrays plus a JSON manifest.

Layout::

    <path>/manifest.json      format tag, kind, per-array file/shape/sha256, metadata
    <path>/<name>.f32         little-endian float32, row-major

Manifests are written with sorted keys and carry no timestamps, so writing the
same arrays twice gives byte-identical directories.
"""

import hashlib
import json
import logging
from collections.abc import Mapping
from typing import Any

import fsspec
import numpy as np
import torch

logger = logging.getLogger(__name__)

FORMAT_TAG = "immune-face-defense/float32-container/v1"
MANIFEST_NAME = "manifest.json"


def _as_array(value: np.ndarray | torch.Tensor) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    return np.ascontiguousarray(value, dtype="<f4")


def _join(path: str, name: str) -> str:
    return f"{path.rstrip('/')}/{name}"


def write_container(
    path: str,
    arrays: Mapping[str, np.ndarray | torch.Tensor],
    kind: str,
    metadata: Mapping[str, Any] | None = None,
    fs: fsspec.AbstractFileSystem | None = None,
) -> None:
    """Write ``arrays`` as float32 files under ``path`` with a manifest."""
    fs = fs or fsspec.filesystem("file")
    fs.makedirs(path, exist_ok=True)
    entries = {}
    for name in sorted(arrays):
        data = _as_array(arrays[name])
        raw = data.tobytes(order="C")
        file_name = f"{name}.f32"
        with fs.open(_join(path, file_name), "wb") as stream:
            stream.write(raw)
        entries[name] = {
            "file": file_name,
            "shape": list(data.shape),
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
    manifest = {
        "format": FORMAT_TAG,
        "kind": kind,
        "dtype": "float32",
        "byte_order": "little",
        "order": "row-major",
        "arrays": entries,
        "metadata": dict(metadata or {}),
    }
    with fs.open(_join(path, MANIFEST_NAME), "w") as stream:
        stream.write(json.dumps(manifest, indent=2, sort_keys=True))
    logger.debug("Wrote %s container with %d arrays to %s", kind, len(entries), path)


def read_manifest(path: str, fs: fsspec.AbstractFileSystem | None = None) -> dict:
    fs = fs or fsspec.filesystem("file")
    with fs.open(_join(path, MANIFEST_NAME), "r") as stream:
        manifest = json.load(stream)
    if manifest.get("format") != FORMAT_TAG:
        raise ValueError(f"{path} is not a float32 container (format {manifest.get('format')!r})")
    return manifest


def read_container(
    path: str,
    kind: str | None = None,
    fs: fsspec.AbstractFileSystem | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """Read every array of a container and verify its checksum.

    Returns:
        tuple of (arrays by name, metadata)

    Raises:
        ValueError: On a wrong container kind or a checksum mismatch
    """
    fs = fs or fsspec.filesystem("file")
    manifest = read_manifest(path, fs)
    if kind is not None and manifest["kind"] != kind:
        raise ValueError(f"{path} holds a '{manifest['kind']}' container, expected '{kind}'")
    arrays = {}
    for name, entry in manifest["arrays"].items():
        with fs.open(_join(path, entry["file"]), "rb") as stream:
            raw = stream.read()
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise ValueError(f"Checksum mismatch for array '{name}' in {path}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
    return arrays, manifest["metadata"]


def container_exists(path: str, fs: fsspec.AbstractFileSystem | None = None) -> bool:
    fs = fs or fsspec.filesystem("file")
    return fs.exists(_join(path, MANIFEST_NAME))


def path_checksum(path: str, fs: fsspec.AbstractFileSystem | None = None) -> str | None:
    """SHA-256 over a file, or over the sorted relative names and contents of a directory.

    Returns None when ``path`` does not exist.
    """
    fs = fs or fsspec.filesystem("file")
    if not fs.exists(path):
        return None
    digest = hashlib.sha256()
    if not fs.isdir(path):
        with fs.open(path, "rb") as stream:
            digest.update(stream.read())
        return digest.hexdigest()
    root = fs._strip_protocol(path).rstrip("/")
    for file_path in sorted(fs.find(root)):
        digest.update(file_path[len(root) :].lstrip("/").encode())
        with fs.open(file_path, "rb") as stream:
            digest.update(stream.read())
    return digest.hexdigest()
