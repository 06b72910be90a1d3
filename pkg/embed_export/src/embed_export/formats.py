"""The scoring engine's file interfaces, implemented against their documented
layouts: essay JSONL in, TGEB embedding binary out.

Kept self-contained on purpose: this package talks to the engine only
through files and its CLI, never through its Python API.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

TGEB_MAGIC = b"TGEB"
TGEB_VERSION = 1


class FormatError(Exception):
    """Malformed input file."""


@dataclass(frozen=True)
class Essay:
    """The slice of an essay record this exporter needs."""

    id: str
    tokens: tuple[str, ...]


def read_essays_jsonl(path: Path | str) -> list[Essay]:
    """Read id + tokens from the engine's JSONL essay file."""
    essays = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "tokens" not in obj:
                raise FormatError(f"{path}: line {lineno}: missing id/tokens")
            essay_id = str(obj["id"])
            tokens = tuple(str(t) for t in obj["tokens"])
            if not tokens:
                raise FormatError(f"{path}: line {lineno}: essay {essay_id!r} has no tokens")
            if essay_id in seen:
                raise FormatError(f"{path}: line {lineno}: duplicate essay id {essay_id!r}")
            seen.add(essay_id)
            essays.append(Essay(id=essay_id, tokens=tokens))
    if not essays:
        raise FormatError(f"{path}: no essays")
    return essays


@dataclass(frozen=True)
class EmbeddedEssay:
    id: str
    essay_vec: np.ndarray    # (d,) float32
    token_matrix: np.ndarray  # (n, d) float32


def write_tgeb(entries: Iterable[EmbeddedEssay], path: Path | str) -> None:
    """Write the little-endian TGEB layout: magic, version u32, count u64,
    dim u32, then per essay: id(u16 len + bytes), d f32 vector, token count
    u32, n*d f32 matrix."""
    items = list(entries)
    if not items:
        raise ValueError("nothing to write")
    dim = int(items[0].essay_vec.shape[0])
    parts = [TGEB_MAGIC, struct.pack("<IQI", TGEB_VERSION, len(items), dim)]
    for entry in items:
        if entry.essay_vec.shape != (dim,) or entry.token_matrix.shape[1:] != (dim,):
            raise ValueError(f"essay {entry.id!r}: inconsistent embedding dim")
        encoded = entry.id.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(np.ascontiguousarray(entry.essay_vec, dtype="<f4").tobytes())
        parts.append(struct.pack("<I", entry.token_matrix.shape[0]))
        parts.append(np.ascontiguousarray(entry.token_matrix, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))
