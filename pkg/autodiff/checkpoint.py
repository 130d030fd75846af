"""
Checkpoint file: named float32 tensors in one file.

Layout:
    8 bytes   magic b"TRKCKPT1"
    8 bytes   little-endian uint64 manifest length N
    N bytes   JSON manifest {"tensors": {name: {"shape", "offset", "count"}}, "meta": {...}}
    ...       raw little-endian float32 values, offsets relative to this region

Files are written to a temporary name and renamed, so readers never see a
partial checkpoint.
"""

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from errors import CheckpointError

MAGIC = b"TRKCKPT1"
_DTYPE = np.dtype("<f4")


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {"tensors": {}, "meta": meta or {}}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=_DTYPE)
        manifest["tensors"][name] = {"shape": list(arr.shape), "offset": offset, "count": int(arr.size)}
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)
    return path


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (length,) = struct.unpack("<Q", raw[8:16])
    try:
        manifest = json.loads(raw[16:16 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from exc
    data = raw[16 + length:]
    tensors = {}
    for name, entry in manifest["tensors"].items():
        start = entry["offset"]
        end = start + entry["count"] * _DTYPE.itemsize
        if end > len(data):
            raise CheckpointError(f"{path}: tensor {name} is truncated")
        tensors[name] = np.frombuffer(data[start:end], dtype=_DTYPE).reshape(entry["shape"]).astype(np.float32)
    return tensors, manifest.get("meta", {})


def blob_hash(path: str | Path) -> str:
    """Git-style content hash: sha1 over "blob <size>\\0" + content."""
    content = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\x00" % len(content) + content).hexdigest()
