"""Checkpoint files.

Layout::

    TSPD1\\n
    config <canonical json>\\n
    config_hash <sha256 of the canonical json>\\n
    meta <json>\\n
    count <K>\\n
    tensor <name> <dtype> <d0,d1,...|scalar>\\n   (K lines)
    end\\n
    <raw little-endian value blocks, manifest order>
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"TSPD1\n"


class CheckpointError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    cfg = canonical_json(config)
    lines = [
        f"config {cfg}",
        f"config_hash {config_hash(config)}",
        f"meta {canonical_json(meta or {})}",
        f"count {len(arrays)}",
    ]
    blobs = []
    for name, arr in arrays.items():
        if any(c.isspace() for c in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        shape = ",".join(map(str, arr.shape)) if arr.ndim else "scalar"
        lines.append(f"tensor {name} {np.dtype(dt).str} {shape}")
        blobs.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    lines.append("end")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(("\n".join(lines) + "\n").encode())
        for b in blobs:
            fh.write(b)
    tmp.replace(path)
    return path


def load_checkpoint(path, expected_config: dict | None = None):
    """Return ``(arrays, config, meta)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: missing TSPD1 header")
    pos = len(MAGIC)
    header = {}
    specs = []
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: truncated manifest")
        line = raw[pos:nl].decode()
        pos = nl + 1
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        if key == "tensor":
            name, dtype, shape = rest.split(" ")
            dims = () if shape == "scalar" else tuple(int(d) for d in shape.split(","))
            specs.append((name, np.dtype(dtype), dims))
        else:
            header[key] = rest
    config = json.loads(header["config"])
    if config_hash(config) != header.get("config_hash"):
        raise CheckpointError(f"{path}: config hash mismatch")
    if int(header.get("count", -1)) != len(specs):
        raise CheckpointError(f"{path}: tensor count mismatch")
    if expected_config is not None and config_hash(expected_config) != header["config_hash"]:
        raise CheckpointError(f"{path}: checkpoint config does not match the requested model")
    arrays = {}
    for name, dt, dims in specs:
        nbytes = dt.itemsize * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated data for {name}")
        arrays[name] = np.frombuffer(raw, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(dims).astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return arrays, config, json.loads(header.get("meta", "{}"))
