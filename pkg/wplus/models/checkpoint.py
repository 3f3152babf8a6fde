"""
The ``lsg-ckpt`` container: a directory holding ``manifest.json`` and one raw
little-endian float32 blob. The manifest carries the producing config and a
tensor table ``name -> {shape, dtype, file, byte_offset}``.
"""

import json
from pathlib import Path
from typing import Any

import numpy as np
import torch
from loguru import logger

from wplus.core.exceptions import CheckpointError

CHECKPOINT_FORMAT = "lsg-ckpt"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"


def write_checkpoint(path: Path, kind: str, config: dict[str, Any], tensors: dict[str, torch.Tensor]) -> None:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        table = {}
        offset = 0
        with open(path / BLOB_NAME, "wb") as blob:
            for name, tensor in tensors.items():
                data = np.ascontiguousarray(tensor.detach().cpu().to(torch.float32).numpy(), dtype="<f4")
                blob.write(data.tobytes())
                table[name] = {
                    "shape": list(data.shape),
                    "dtype": "f32",
                    "file": BLOB_NAME,
                    "byte_offset": offset,
                }
                offset += data.nbytes
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": kind,
            "config": config,
            "tensors": table,
        }
        (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}")
    logger.info(f"Wrote {kind} checkpoint with {len(table)} tensors to {path}")


def read_manifest(path: Path) -> dict[str, Any]:
    manifest_path = Path(path) / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise CheckpointError(f"Corrupt checkpoint {path}: {MANIFEST_NAME} not found")
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt manifest in {path}: {e}")

    if not isinstance(manifest, dict) or manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Corrupt manifest in {path}: format is not {CHECKPOINT_FORMAT!r}")
    version = manifest.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {version} in {path} (reader supports version {CHECKPOINT_VERSION})"
        )
    if not isinstance(manifest.get("tensors"), dict) or not isinstance(manifest.get("config"), dict):
        raise CheckpointError(f"Corrupt manifest in {path}: missing config or tensor table")
    return manifest


def read_checkpoint(path: Path, kind: str) -> tuple[dict[str, Any], dict[str, torch.Tensor]]:
    """
    Returns (config, tensors). Tensors come back as float32 CPU tensors.
    """
    path = Path(path)
    manifest = read_manifest(path)
    if manifest.get("kind", kind) != kind:
        raise CheckpointError(f"Checkpoint {path} holds a {manifest['kind']!r}, expected {kind!r}")

    blobs: dict[str, bytes] = {}
    tensors = {}
    for name, entry in manifest["tensors"].items():
        try:
            shape = [int(s) for s in entry["shape"]]
            offset = int(entry["byte_offset"])
            file_name = entry["file"]
            if entry.get("dtype") != "f32":
                raise CheckpointError(f"Corrupt manifest in {path}: tensor {name} has dtype {entry.get('dtype')}")
        except (KeyError, TypeError, ValueError):
            raise CheckpointError(f"Corrupt manifest in {path}: bad entry for tensor {name}")

        if file_name not in blobs:
            try:
                blobs[file_name] = (path / file_name).read_bytes()
            except OSError:
                raise CheckpointError(f"Missing tensor {name}: blob file {file_name} not readable")
        count = int(np.prod(shape, dtype=np.int64))
        if offset < 0 or offset + 4 * count > len(blobs[file_name]):
            raise CheckpointError(f"Missing tensor {name}: blob {file_name} is truncated")
        data = np.frombuffer(blobs[file_name], dtype="<f4", count=count, offset=offset)
        tensors[name] = torch.from_numpy(data.astype(np.float32).reshape(shape))

    return manifest["config"], tensors


def check_tensor_names(path: Path, expected: list[str], found: dict[str, torch.Tensor]) -> None:
    for name in expected:
        if name not in found:
            raise CheckpointError(f"Missing tensor {name} in checkpoint {path}")
    unexpected = sorted(set(found) - set(expected))
    if unexpected:
        raise CheckpointError(f"Corrupt manifest in {path}: unexpected tensors {unexpected}")
