"""Versioned binary checkpoints.

Layout: 8-byte magic, uint32 format version, uint32 metadata length, a JSON
metadata block (config snapshot, vocabulary size, epoch reached), uint32
tensor count, then one record per tensor: uint32 name length, utf-8 name,
uint32 rank, uint64 dims, and the row-major little-endian float64 payload.
Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig, config_from_dict, config_to_dict
from .model import Approximator, GruParams, TransformerParams

MAGIC = b"SEQDIF01"
FORMAT_VERSION = 1

_MAX_RANK = 8
_MAX_DIM = 1 << 40


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """Magic bytes or container structure are wrong."""


class CheckpointVersionError(CheckpointError):
    """File was written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before a declared record is complete."""


class CheckpointShapeError(CheckpointError):
    """A tensor record declares an inconsistent shape table."""


@dataclass
class ModelCheckpoint:
    config: TrainConfig
    vocab_size: int
    epoch: int
    tensors: dict[str, np.ndarray]


def checkpoint_from_params(params, cfg: TrainConfig, vocab_size: int,
                           epoch: int) -> ModelCheckpoint:
    tensors = {name: t.data.copy() for name, t in params.named()}
    return ModelCheckpoint(config=cfg, vocab_size=vocab_size, epoch=epoch,
                           tensors=tensors)


def model_from_checkpoint(ckpt: ModelCheckpoint) -> Approximator:
    """Rebuild an Approximator whose parameters are the checkpoint tensors."""
    from .rng import RngStream

    cfg = ckpt.config
    cls = GruParams if cfg.approximator == "gru" else TransformerParams
    params = cls(ckpt.vocab_size, cfg, RngStream(0))
    for name, tensor in params.named():
        if name not in ckpt.tensors:
            raise CheckpointShapeError(f"checkpoint is missing tensor {name!r}")
        stored = ckpt.tensors[name]
        if stored.shape != tensor.data.shape:
            raise CheckpointShapeError(
                f"tensor {name!r} has shape {stored.shape}, expected {tensor.data.shape}")
        tensor.data = stored.astype(tensor.data.dtype, copy=True)
    return Approximator(params, cfg)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    meta = json.dumps({
        "config": config_to_dict(ckpt.config),
        "vocab_size": ckpt.vocab_size,
        "epoch": ckpt.epoch,
    }).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(ckpt.tensors)))
        for name, arr in ckpt.tensors.items():
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(f"file ends inside {what}")
    return buf


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad magic bytes {magic!r}")
        version = struct.unpack("<I", _read_exact(fh, 4, "version field"))[0]
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"format version {version}, this build reads {FORMAT_VERSION}")
        meta_len = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))[0]
        try:
            meta = json.loads(_read_exact(fh, meta_len, "metadata block"))
        except json.JSONDecodeError as exc:
            raise CheckpointFormatError(f"metadata is not valid JSON: {exc}") from None
        n_tensors = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))[0]
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            name_len = struct.unpack("<I", _read_exact(fh, 4, "tensor name length"))[0]
            name = _read_exact(fh, name_len, "tensor name").decode()
            rank = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name!r}"))[0]
            if rank > _MAX_RANK:
                raise CheckpointShapeError(f"tensor {name!r} declares rank {rank}")
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, f"dims of {name!r}"))
            if any(d == 0 or d > _MAX_DIM for d in dims):
                raise CheckpointShapeError(f"tensor {name!r} declares dims {dims}")
            if name in tensors:
                raise CheckpointShapeError(f"duplicate tensor name {name!r}")
            count = int(np.prod(dims, dtype=np.int64)) if dims else 1
            payload = _read_exact(fh, 8 * count, f"data of {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    try:
        cfg = config_from_dict(meta["config"])
        vocab_size = int(meta["vocab_size"])
        epoch = int(meta["epoch"])
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"metadata missing field: {exc}") from None
    return ModelCheckpoint(config=cfg, vocab_size=vocab_size, epoch=epoch,
                           tensors=tensors)
