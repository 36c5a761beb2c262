"""Versioned binary checkpoints.

Layout: magic, u32 version, u64 header length, JSON header (sorted keys),
then raw little-endian float64 blobs in header order. No timestamps or
other ambient state anywhere, so identical training runs produce identical
files byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, OutfitModel

MAGIC = b"OFKC"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    phase: str                      # "cp" | "cir"
    params: list                    # [(name, ndarray)]
    epoch: int = 0                  # epochs completed
    best_metric: float = float("-inf")
    train_config: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)   # {"step": int, "m": {...}, "v": {...}}

    def param_dict(self) -> dict:
        return dict(self.params)


def snapshot(model: OutfitModel, phase: str, epoch: int = 0,
             best_metric: float = float("-inf"), train_config: dict | None = None,
             optimizer: dict | None = None) -> Checkpoint:
    return Checkpoint(
        config=model.config,
        phase=phase,
        params=[(n, a.copy()) for n, a in model.state_arrays()],
        epoch=epoch,
        best_metric=best_metric,
        train_config=dict(train_config or {}),
        optimizer=_copy_opt(optimizer),
    )


def _copy_opt(opt) -> dict:
    if not opt:
        return {}
    return {
        "step": opt["step"],
        "m": {k: v.copy() for k, v in opt["m"].items()},
        "v": {k: v.copy() for k, v in opt["v"].items()},
    }


def restore_model(ckpt: Checkpoint) -> OutfitModel:
    """Build a model carrying exactly the checkpoint's parameters."""
    model = OutfitModel(ckpt.config, np.random.default_rng(0))
    model.load_state_arrays(ckpt.params)
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    blobs = []
    manifest = []
    for name, arr in ckpt.params:
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        manifest.append({"name": name, "shape": list(arr.shape)})
    opt_manifest = []
    if ckpt.optimizer:
        for slot in ("m", "v"):
            for name in sorted(ckpt.optimizer[slot]):
                arr = ckpt.optimizer[slot][name]
                blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
                opt_manifest.append({"slot": slot, "name": name, "shape": list(arr.shape)})
    header = {
        "config": ckpt.config.to_dict(),
        "phase": ckpt.phase,
        "epoch": ckpt.epoch,
        "best_metric": ckpt.best_metric,
        "train_config": ckpt.train_config,
        "opt_step": ckpt.optimizer.get("step", 0) if ckpt.optimizer else None,
        "params": manifest,
        "opt_params": opt_manifest,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    try:
        header = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {e}") from None

    manifests = list(header["params"]) + list(header.get("opt_params") or [])
    blob_floats = sum(int(np.prod(e["shape"])) if e["shape"] else 1 for e in manifests)
    if len(raw) != 16 + hlen + blob_floats * 8:
        raise CheckpointError(f"checkpoint size mismatch in {path}: "
                              f"{len(raw)} != {16 + hlen + blob_floats * 8}")

    offset = 16 + hlen
    params = []
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape)
        params.append((entry["name"], arr.astype(np.float64)))
        offset += n * 8
    optimizer: dict = {}
    if header.get("opt_params"):
        optimizer = {"step": header["opt_step"], "m": {}, "v": {}}
        for entry in header["opt_params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape)
            optimizer[entry["slot"]][entry["name"]] = arr.astype(np.float64)
            offset += n * 8

    return Checkpoint(
        config=ModelConfig.from_dict(header["config"]),
        phase=header["phase"],
        params=params,
        epoch=header["epoch"],
        best_metric=header["best_metric"],
        train_config=header.get("train_config") or {},
        optimizer=optimizer,
    )
