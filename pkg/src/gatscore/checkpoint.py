"""TGMC model checkpoint format.

Single little-endian binary file: magic "TGMC", format version u32, a
length-prefixed JSON config block, tensor count u32, then each parameter as
(name length u16 + UTF-8 bytes, rank u32, dims u64 each, f32 row-major
data). Parameters are stored as f32; loading restores float64 tensors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import InputError
from .model import GatConfig, ModelParams, init_model_params

MAGIC = b"TGMC"
VERSION = 1


class CheckpointFormatError(InputError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class Checkpoint:
    """A trained model: architecture config, input width, and parameters."""

    config: GatConfig
    d_in: int
    params: ModelParams

    @classmethod
    def from_params(cls, params: ModelParams, config: GatConfig, d_in: int) -> "Checkpoint":
        return cls(config=config, d_in=d_in, params=params)


def _config_json(config: GatConfig, d_in: int) -> bytes:
    obj = {
        "num_layers": config.num_layers,
        "num_heads": config.num_heads,
        "d_head": config.d_head,
        "attention_slope": config.attention_slope,
        "activation_slope": config.activation_slope,
        "head_combine": list(config.head_combine),
        "d_in": d_in,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def serialize_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = _config_json(ckpt.config, ckpt.d_in)
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    named = ckpt.params.named_parameters()
    parts.append(struct.pack("<I", len(named)))
    for name, tensor in named:
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def write_checkpoint(ckpt: Checkpoint, path: Path | str) -> None:
    Path(path).write_bytes(serialize_checkpoint(ckpt))


class _Reader:
    def __init__(self, buf: bytes, where: str):
        self.buf = buf
        self.pos = 0
        self.where = where

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(f"{self.where}: truncated file while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def deserialize_checkpoint(buf: bytes, where: str = "checkpoint") -> Checkpoint:
    r = _Reader(buf, where)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError(f"{where}: bad checkpoint magic")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointFormatError(f"{where}: unsupported checkpoint version {version}")
    (cfg_len,) = r.unpack("<I", "config length")
    try:
        cfg = json.loads(r.take(cfg_len, "config block").decode("utf-8"))
        config = GatConfig(
            num_layers=int(cfg["num_layers"]),
            num_heads=int(cfg["num_heads"]),
            d_head=int(cfg["d_head"]),
            attention_slope=float(cfg["attention_slope"]),
            activation_slope=float(cfg["activation_slope"]),
            head_combine=tuple(cfg["head_combine"]),
        )
        d_in = int(cfg["d_in"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{where}: invalid config block ({exc})") from exc

    (count,) = r.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        (rank,) = r.unpack("<I", "rank")
        dims = r.unpack(f"<{rank}Q", "dims") if rank else ()
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = r.take(4 * size, f"data of {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)
    if r.pos != len(buf):
        raise CheckpointFormatError(f"{where}: {len(buf) - r.pos} trailing bytes")

    # Rebuild the parameter tree and check that names and shapes line up.
    params = init_model_params(config, d_in, seed=0)
    expected = params.named_parameters()
    expected_names = [n for n, _ in expected]
    if sorted(tensors) != sorted(expected_names):
        raise CheckpointFormatError(
            f"{where}: parameter names do not match architecture config")
    for name, tensor in expected:
        loaded = tensors[name]
        if loaded.shape != tensor.data.shape:
            raise CheckpointFormatError(
                f"{where}: tensor {name} has shape {loaded.shape}, expected {tensor.data.shape}")
        tensor.data = loaded
    return Checkpoint(config=config, d_in=d_in, params=params)


def read_checkpoint(path: Path | str) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"{path}: cannot read checkpoint ({exc})") from exc
    return deserialize_checkpoint(buf, where=str(path))
