"""TGEB embedding binary format.

Little-endian layout: magic "TGEB", version u32, essay count u64, dim u32;
then per essay: id length u16 + UTF-8 bytes, d f32 essay vector, token count
u32, n*d f32 token matrix (row-major).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import EmbeddingBundle, InputError

MAGIC = b"TGEB"
VERSION = 1


class TgebFormatError(InputError):
    """Unreadable or inconsistent embedding file."""


def serialize_tgeb(bundles: Iterable[EmbeddingBundle]) -> bytes:
    items = list(bundles)
    if not items:
        raise ValueError("cannot write an empty embedding file")
    dim = items[0].dim
    parts = [MAGIC, struct.pack("<IQI", VERSION, len(items), dim)]
    for bundle in items:
        if bundle.dim != dim:
            raise ValueError(f"bundle {bundle.essay_id!r} has dim {bundle.dim}, expected {dim}")
        encoded = bundle.essay_id.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(np.ascontiguousarray(bundle.essay_vec, dtype="<f4").tobytes())
        parts.append(struct.pack("<I", bundle.num_tokens))
        parts.append(np.ascontiguousarray(bundle.token_matrix, dtype="<f4").tobytes())
    return b"".join(parts)


def write_tgeb(bundles: Iterable[EmbeddingBundle], path: Path | str) -> None:
    Path(path).write_bytes(serialize_tgeb(bundles))


def deserialize_tgeb(buf: bytes, where: str = "embeddings") -> dict[str, EmbeddingBundle]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise TgebFormatError(f"{where}: truncated file while reading {what}")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise TgebFormatError(f"{where}: bad embedding magic")
    version, count, dim = struct.unpack("<IQI", take(16, "header"))
    if version != VERSION:
        raise TgebFormatError(f"{where}: unsupported embedding version {version}")
    if dim < 1:
        raise TgebFormatError(f"{where}: invalid embedding dim {dim}")

    bundles: dict[str, EmbeddingBundle] = {}
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2, "id length"))
        essay_id = take(id_len, "essay id").decode("utf-8")
        vec = np.frombuffer(take(4 * dim, f"essay vector of {essay_id}"), dtype="<f4")
        (n_tokens,) = struct.unpack("<I", take(4, "token count"))
        mat = np.frombuffer(take(4 * dim * n_tokens, f"token matrix of {essay_id}"),
                            dtype="<f4").reshape(n_tokens, dim)
        if essay_id in bundles:
            raise TgebFormatError(f"{where}: duplicate essay id {essay_id!r}")
        bundles[essay_id] = EmbeddingBundle(essay_id=essay_id, essay_vec=vec, token_matrix=mat)
    if pos != len(buf):
        raise TgebFormatError(f"{where}: {len(buf) - pos} trailing bytes")
    return bundles


def read_tgeb(path: Path | str) -> dict[str, EmbeddingBundle]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise TgebFormatError(f"{path}: cannot read embeddings ({exc})") from exc
    return deserialize_tgeb(buf, where=str(path))
