"""Deterministic synthetic essay generator for desk-scale training and tests.

Each essay plants a latent vector whose affine image is exactly the six gold
scores (noiseless by design, so a small dataset has a zero-loss optimum).
Token embeddings are seeded Gaussians around the projected latent; the essay
vector is their mean plus a little noise. Dependency trees use uniform
random recursive attachment per sentence. Linguistic realism is a non-goal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (SCORE_MIN, SCORE_STEP, NUM_CATEGORIES, TRAIT_COUNT,
                   EmbeddingBundle, EssayRecord, TraitScores, discretize_score,
                   write_essays_jsonl)
from .tgeb import write_tgeb

LATENT_DIM = TRAIT_COUNT
SCORE_INTERCEPT = 3.0


@dataclass(frozen=True)
class SynthConfig:
    num_essays: int = 64
    min_tokens: int = 10
    max_tokens: int = 30
    dim: int = 16
    seed: int = 0
    #: Diagonal coefficient of the latent -> score linear map.
    score_scale: float = 1.0
    token_noise: float = 0.25
    essay_noise: float = 0.01

    def __post_init__(self) -> None:
        if self.dim < 4:
            raise ValueError("embedding dim must be >= 4")
        if self.min_tokens < 2 or self.max_tokens < self.min_tokens:
            raise ValueError("token range must satisfy 2 <= min <= max")
        if self.num_essays < 1:
            raise ValueError("num_essays must be positive")


@dataclass
class SynthDataset:
    records: list[EssayRecord]
    bundles: dict[str, EmbeddingBundle]
    latents: np.ndarray
    metadata: dict


def _sentence_lengths(rng: np.random.Generator, total: int) -> list[int]:
    lengths = []
    remaining = total
    while remaining > 0:
        take = min(remaining, int(rng.integers(3, 9)))
        lengths.append(take)
        remaining -= take
    return lengths


def _sentence_tree(rng: np.random.Generator, offset: int, size: int) -> list[tuple[int, int]]:
    # Random recursive attachment: token k hangs off a uniform earlier token.
    deps = [(-1, offset)]
    for k in range(1, size):
        head = int(rng.integers(0, k))
        deps.append((offset + head, offset + k))
    return deps


def gen_synthetic(config: SynthConfig) -> SynthDataset:
    """Generate records and embedding bundles, fully deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    projection = rng.normal(0.0, 1.0 / np.sqrt(LATENT_DIM), size=(config.dim, LATENT_DIM))

    records: list[EssayRecord] = []
    bundles: dict[str, EmbeddingBundle] = {}
    latents = np.zeros((config.num_essays, LATENT_DIM))

    for i in range(config.num_essays):
        essay_id = f"synth-{i:04d}"
        n_tokens = int(rng.integers(config.min_tokens, config.max_tokens + 1))

        tokens = [f"w{int(rng.integers(0, 400)):03d}" for _ in range(n_tokens)]
        spans: list[tuple[int, int]] = []
        deps: list[tuple[int, int]] = []
        offset = 0
        for size in _sentence_lengths(rng, n_tokens):
            spans.append((offset, offset + size))
            deps.extend(_sentence_tree(rng, offset, size))
            offset += size

        # Gold scores are drawn on the rubric grid; the latent is their exact
        # affine preimage, so discretize(affine(latent)) reproduces them.
        categories = rng.integers(0, NUM_CATEGORIES, size=TRAIT_COUNT)
        gold_values = SCORE_MIN + SCORE_STEP * categories.astype(np.float64)
        latent = (gold_values - SCORE_INTERCEPT) / config.score_scale
        scores = [discretize_score(v)
                  for v in SCORE_INTERCEPT + config.score_scale * latent]
        gold = TraitScores(*scores)
        latents[i] = latent

        center = projection @ latent
        token_matrix = center[None, :] + rng.normal(
            0.0, config.token_noise, size=(n_tokens, config.dim))
        essay_vec = token_matrix.mean(axis=0) + rng.normal(
            0.0, config.essay_noise, size=config.dim)

        records.append(EssayRecord.make(essay_id, tokens, spans, deps, gold))
        bundles[essay_id] = EmbeddingBundle(
            essay_id=essay_id, essay_vec=essay_vec, token_matrix=token_matrix)

    coefficients = (config.score_scale * np.eye(TRAIT_COUNT)).tolist()
    metadata = {
        "num_essays": config.num_essays,
        "min_tokens": config.min_tokens,
        "max_tokens": config.max_tokens,
        "dim": config.dim,
        "seed": config.seed,
        "latent_dim": LATENT_DIM,
        "score_rule": {
            "coefficients": coefficients,
            "intercept": [SCORE_INTERCEPT] * TRAIT_COUNT,
        },
        "token_noise": config.token_noise,
        "essay_noise": config.essay_noise,
    }
    return SynthDataset(records=records, bundles=bundles, latents=latents,
                        metadata=metadata)


def write_synth_dataset(dataset: SynthDataset, out_dir: Path | str) -> tuple[Path, Path, Path]:
    """Write essays.jsonl, embeddings.tgeb, and synth_meta.json into a directory."""
    base = Path(out_dir)
    base.mkdir(parents=True, exist_ok=True)
    essays_path = base / "essays.jsonl"
    embeddings_path = base / "embeddings.tgeb"
    meta_path = base / "synth_meta.json"
    write_essays_jsonl(dataset.records, essays_path)
    write_tgeb([dataset.bundles[r.id] for r in dataset.records], embeddings_path)
    meta_path.write_text(json.dumps(dataset.metadata, sort_keys=True, indent=2) + "\n",
                         encoding="utf-8")
    return essays_path, embeddings_path, meta_path
