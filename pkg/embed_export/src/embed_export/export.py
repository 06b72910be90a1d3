"""Frozen-transformer embedding extraction with subword-to-word pooling.

Each essay's words are fed pre-split to a fast tokenizer; every word's vector
is the arithmetic mean of its subword hidden states from the final layer, and
the essay vector is the first-token (summary) hidden state. Words that fall
beyond the truncation window receive the mean of all in-window word vectors
and the essay is flagged in the sidecar report. Inference runs with gradients
off and the model in eval mode, so output is bit-stable for a fixed model
revision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .formats import EmbeddedEssay, Essay, read_essays_jsonl, write_tgeb


class ExportError(Exception):
    """Model loading or alignment failure; messages name the essay involved."""


@dataclass(frozen=True)
class ExportConfig:
    model: str
    max_length: int = 512  # long-input models can take 1024
    device: str = "cpu"


@dataclass
class ExportReport:
    model: str
    max_length: int
    num_essays: int
    dim: int
    truncated_essays: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "model": self.model,
            "max_length": self.max_length,
            "num_essays": self.num_essays,
            "dim": self.dim,
            "truncated_essays": self.truncated_essays,
        }, indent=2)


def load_model(config: ExportConfig):
    from transformers import AutoModel, AutoTokenizer
    try:
        tokenizer = AutoTokenizer.from_pretrained(config.model)
        model = AutoModel.from_pretrained(config.model)
    except Exception as exc:
        raise ExportError(f"cannot load model {config.model!r}: {exc}") from exc
    if not getattr(tokenizer, "is_fast", False):
        raise ExportError(f"model {config.model!r} has no fast tokenizer "
                          "(word alignment needs one)")
    model.eval()
    model.to(config.device)
    return tokenizer, model


def embed_essay(essay: Essay, tokenizer, model,
                config: ExportConfig) -> tuple[EmbeddedEssay, bool]:
    """Embed one essay; returns the entry and whether truncation hit it."""
    encoding = tokenizer(list(essay.tokens), is_split_into_words=True,
                         truncation=True, max_length=config.max_length,
                         return_tensors="pt")
    with torch.no_grad():
        hidden = model(**{k: v.to(config.device) for k, v in encoding.items()})
        hidden = hidden.last_hidden_state[0].cpu().numpy().astype(np.float32)

    word_ids = encoding.word_ids(0)
    positions: dict[int, list[int]] = {}
    for pos, word in enumerate(word_ids):
        if word is not None:
            positions.setdefault(word, []).append(pos)
    if not positions:
        raise ExportError(f"essay {essay.id!r}: no word made it into the window")

    in_window = sorted(p for group in positions.values() for p in group)
    fallback = hidden[in_window].mean(axis=0)

    rows = np.empty((len(essay.tokens), hidden.shape[1]), dtype=np.float32)
    truncated = False
    for w in range(len(essay.tokens)):
        group = positions.get(w)
        if group:
            rows[w] = hidden[group].mean(axis=0)
        else:
            rows[w] = fallback
            truncated = True

    essay_vec = hidden[0].copy()
    if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(essay_vec))):
        raise ExportError(f"essay {essay.id!r}: model produced non-finite values")
    return EmbeddedEssay(id=essay.id, essay_vec=essay_vec, token_matrix=rows), truncated


def export(essays_path: Path | str, out_path: Path | str, config: ExportConfig,
           report_path: Path | str | None = None) -> ExportReport:
    """Export every essay in a JSONL file to one TGEB file plus a sidecar report."""
    essays = read_essays_jsonl(essays_path)
    tokenizer, model = load_model(config)

    entries = []
    truncated_ids = []
    for essay in essays:
        try:
            entry, truncated = embed_essay(essay, tokenizer, model, config)
        except ExportError:
            raise
        except Exception as exc:
            raise ExportError(f"essay {essay.id!r}: {exc}") from exc
        entries.append(entry)
        if truncated:
            truncated_ids.append(essay.id)

    write_tgeb(entries, out_path)
    report = ExportReport(model=config.model, max_length=config.max_length,
                          num_essays=len(entries), dim=int(entries[0].essay_vec.shape[0]),
                          truncated_essays=truncated_ids)
    sidecar = Path(report_path) if report_path else Path(str(out_path) + ".report.json")
    sidecar.write_text(report.to_json() + "\n", encoding="utf-8")
    return report
