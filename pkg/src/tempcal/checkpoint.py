"""Checkpoint container: a human-readable manifest plus a flat binary blob.

The manifest is UTF-8 ``key: value`` lines carrying the format tag, epoch,
a flattened echo of the run configuration, and one line per tensor with its
shape and offset into the blob. The blob is every value as little-endian
float64 in manifest order. Save -> load -> save is bit-identical.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BlobSizeMismatch, ManifestMismatch

FORMAT_TAG = "tempcal-checkpoint-v1"


@dataclass
class Checkpoint:
    tensors: dict          # name -> float64 ndarray, insertion order == blob order
    config_echo: dict = field(default_factory=dict)  # flat config key -> string
    epoch: int = 0

    @property
    def value_count(self):
        return int(sum(arr.size for arr in self.tensors.values()))


def save(ckpt, base_path):
    """Write ``<base>.manifest`` and ``<base>.blob``; returns the two paths."""
    manifest_path = base_path + ".manifest"
    blob_path = base_path + ".blob"
    lines = [f"format: {FORMAT_TAG}", f"epoch: {ckpt.epoch}", f"values: {ckpt.value_count}"]
    for key in sorted(ckpt.config_echo):
        lines.append(f"config.{key}: {ckpt.config_echo[key]}")
    offset = 0
    chunks = []
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = "x".join(str(n) for n in arr.shape) if arr.ndim else "scalar"
        lines.append(f"tensor.{name}: shape={shape} offset={offset}")
        offset += arr.size
        chunks.append(arr.astype("<f8").tobytes())
    with open(manifest_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    with open(blob_path, "wb") as f:
        f.write(b"".join(chunks))
    return manifest_path, blob_path


def load(base_path):
    """Read a checkpoint written by :func:`save`, verifying sizes and offsets."""
    manifest_path = base_path + ".manifest"
    blob_path = base_path + ".blob"
    meta = {"epoch": 0}
    config_echo = {}
    specs = []  # (name, shape tuple, offset)
    with open(manifest_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if ":" not in line:
                raise ManifestMismatch(f"{manifest_path}:{lineno}: not a key: value line")
            key, value = line.split(":", 1)
            key, value = key.strip(), value.strip()
            if key == "format":
                if value != FORMAT_TAG:
                    raise ManifestMismatch(f"unknown checkpoint format {value!r}")
            elif key in ("epoch", "values"):
                meta[key] = int(value)
            elif key.startswith("config."):
                config_echo[key[len("config."):]] = value
            elif key.startswith("tensor."):
                specs.append((key[len("tensor."):], *_parse_tensor_spec(value, lineno)))
            else:
                raise ManifestMismatch(f"{manifest_path}:{lineno}: unknown key {key!r}")
    if "values" not in meta:
        raise ManifestMismatch("manifest has no values line")
    expected = 0
    for name, shape, offset in specs:
        if offset != expected:
            raise ManifestMismatch(f"tensor {name}: offset {offset}, expected {expected}")
        expected += int(np.prod(shape, dtype=np.int64)) if shape else 1
    if expected != meta["values"]:
        raise ManifestMismatch(f"declared {meta['values']} values, tensors sum to {expected}")
    size = os.path.getsize(blob_path)
    if size != expected * 8:
        raise BlobSizeMismatch(f"blob holds {size} bytes, expected {expected * 8}")
    with open(blob_path, "rb") as f:
        flat = np.frombuffer(f.read(), dtype="<f8")
    tensors = {}
    for name, shape, offset in specs:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = flat[offset:offset + count].astype(np.float64)
        tensors[name] = arr.reshape(shape) if shape else arr.reshape(())
    return Checkpoint(tensors=tensors, config_echo=config_echo, epoch=meta["epoch"])


def _parse_tensor_spec(value, lineno):
    fields = dict(part.split("=", 1) for part in value.split() if "=" in part)
    if "shape" not in fields or "offset" not in fields:
        raise ManifestMismatch(f"line {lineno}: tensor spec needs shape= and offset=")
    shape = () if fields["shape"] == "scalar" else tuple(int(n) for n in fields["shape"].split("x"))
    return shape, int(fields["offset"])
