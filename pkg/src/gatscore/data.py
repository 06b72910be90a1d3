"""Core data model: trait scores, essay records, embedding bundles, dataset splits.

Essays are scored on six writing traits on a 1.0-5.0 rubric in 0.5-point
increments. All types here are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

TRAIT_NAMES = ("cohesion", "syntax", "vocabulary", "phraseology", "grammar", "conventions")
TRAIT_COUNT = len(TRAIT_NAMES)

SCORE_MIN = 1.0
SCORE_MAX = 5.0
SCORE_STEP = 0.5
#: Number of distinct rubric levels (1.0, 1.5, ..., 5.0).
NUM_CATEGORIES = 9

SPLIT_ROLES = ("train", "validation", "test")


class InputError(Exception):
    """Malformed user-supplied input (files, CLI arguments). Maps to exit code 2."""


@dataclass(frozen=True)
class TraitScores:
    """One score per writing trait, each within the rubric range [1.0, 5.0]."""

    cohesion: float
    syntax: float
    vocabulary: float
    phraseology: float
    grammar: float
    conventions: float

    def __post_init__(self) -> None:
        for name, value in zip(TRAIT_NAMES, self.as_tuple()):
            if not math.isfinite(value):
                raise ValueError(f"trait {name} is not finite: {value!r}")
            if not (SCORE_MIN <= value <= SCORE_MAX):
                raise ValueError(f"trait {name} out of range [1.0, 5.0]: {value!r}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.cohesion, self.syntax, self.vocabulary,
                self.phraseology, self.grammar, self.conventions)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    def is_on_grid(self) -> bool:
        """True when every score is a multiple of 0.5 (a valid gold score)."""
        return all(abs(v * 2.0 - round(v * 2.0)) < 1e-9 for v in self.as_tuple())

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> "TraitScores":
        missing = [t for t in TRAIT_NAMES if t not in values]
        if missing:
            raise ValueError(f"missing trait keys: {missing}")
        return cls(**{t: float(values[t]) for t in TRAIT_NAMES})

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "TraitScores":
        vals = [float(v) for v in arr]
        if len(vals) != TRAIT_COUNT:
            raise ValueError(f"expected {TRAIT_COUNT} scores, got {len(vals)}")
        return cls(*vals)


@dataclass(frozen=True)
class EssayRecord:
    """One essay: tokens, sentence spans, dependency pairs, optional gold scores.

    ``deps`` holds (head_index, dependent_index) pairs with 0-based word
    indices; head_index -1 marks a sentence root and produces no graph edge.
    ``sentence_spans`` are (start, end) token ranges, end exclusive.
    """

    id: str
    tokens: tuple[str, ...]
    sentence_spans: tuple[tuple[int, int], ...]
    deps: tuple[tuple[int, int], ...]
    gold: Optional[TraitScores] = None

    @classmethod
    def make(cls, id: str, tokens: Iterable[str],
             sentence_spans: Iterable[Sequence[int]],
             deps: Iterable[Sequence[int]],
             gold: Optional[TraitScores] = None) -> "EssayRecord":
        """Build a record, normalizing list inputs to tuples."""
        return cls(
            id=str(id),
            tokens=tuple(str(t) for t in tokens),
            sentence_spans=tuple((int(s), int(e)) for s, e in sentence_spans),
            deps=tuple((int(h), int(d)) for h, d in deps),
            gold=gold,
        )

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, eq=False)
class EmbeddingBundle:
    """Per-essay pooled vector (d,) plus per-token matrix (n, d)."""

    essay_id: str
    essay_vec: np.ndarray
    token_matrix: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.essay_vec, dtype=np.float64)
        mat = np.asarray(self.token_matrix, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError(f"essay_vec must be 1-D, got shape {vec.shape}")
        if mat.ndim != 2:
            raise ValueError(f"token_matrix must be 2-D, got shape {mat.shape}")
        object.__setattr__(self, "essay_vec", vec)
        object.__setattr__(self, "token_matrix", mat)

    @property
    def dim(self) -> int:
        return int(self.essay_vec.shape[0])

    @property
    def num_tokens(self) -> int:
        return int(self.token_matrix.shape[0])


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of record/bundle validation; violations are data, not faults."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_record(record: EssayRecord, bundle: Optional[EmbeddingBundle] = None) -> ValidationResult:
    """Check record (and optionally bundle) invariants, returning all violations.

    With ``bundle=None`` only the record-side invariants are checked, which is
    what ingestion does before any embeddings exist.
    """
    problems: list[str] = []
    n = record.num_tokens
    if n == 0:
        problems.append("record has no tokens")

    # Sentence spans must be disjoint, ordered, and cover [0, n).
    cursor = 0
    spans_ok = True
    for k, (start, end) in enumerate(record.sentence_spans):
        if start != cursor or end <= start:
            problems.append(f"sentence span {k} = ({start}, {end}) does not continue coverage at {cursor}")
            spans_ok = False
            break
        cursor = end
    if spans_ok and cursor != n:
        problems.append(f"sentence spans cover [0, {cursor}) but record has {n} tokens")
        spans_ok = False

    def sentence_of(tok: int) -> int:
        for k, (start, end) in enumerate(record.sentence_spans):
            if start <= tok < end:
                return k
        return -1

    head_counts = [0] * n
    for head, dep in record.deps:
        if not (0 <= dep < n):
            problems.append(f"dependent index {dep} out of range")
            continue
        if not (-1 <= head < n):
            problems.append(f"head index {head} out of range")
            continue
        head_counts[dep] += 1
        if head == dep:
            problems.append(f"token {dep} is its own head")
        elif head >= 0 and spans_ok and sentence_of(head) != sentence_of(dep):
            problems.append(f"dep ({head}, {dep}) crosses sentence boundaries")

    for tok, count in enumerate(head_counts):
        if count == 0:
            problems.append(f"token {tok} has no head entry")
        elif count > 1:
            problems.append(f"token {tok} has {count} head entries")

    # Per-sentence tree check: walking up heads must reach a root.
    if spans_ok and all(c == 1 for c in head_counts):
        head_of = {dep: head for head, dep in record.deps}
        for tok in range(n):
            steps = 0
            cur = tok
            while cur != -1 and steps <= n:
                cur = head_of[cur]
                steps += 1
            if cur != -1:
                problems.append(f"token {tok} is part of a head cycle")

    if bundle is not None:
        if bundle.essay_id != record.id:
            problems.append(f"bundle id {bundle.essay_id!r} != record id {record.id!r}")
        if bundle.num_tokens != n:
            problems.append(f"row count {bundle.num_tokens} != token count {n}")
        if bundle.token_matrix.shape[1] != bundle.dim:
            problems.append(
                f"token matrix width {bundle.token_matrix.shape[1]} != essay vector length {bundle.dim}")
        if not np.all(np.isfinite(bundle.essay_vec)):
            problems.append("essay_vec contains non-finite values")
        if not np.all(np.isfinite(bundle.token_matrix)):
            problems.append("token_matrix contains non-finite values")

    return ValidationResult(tuple(problems))


def discretize_score(x: float) -> float:
    """Map a continuous prediction to the nearest rubric value in [1.0, 5.0].

    Exact midpoints (e.g. 3.25) round upward so the mapping is deterministic.
    """
    if not math.isfinite(x):
        raise ValueError(f"cannot discretize non-finite score {x!r}")
    clamped = min(max(x, SCORE_MIN), SCORE_MAX)
    return math.floor(clamped * 2.0 + 0.5) / 2.0


def score_to_category(x: float) -> int:
    """Map a discretized rubric score to its 0-based category index (0..8)."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite score {x!r}")
    c = (x - SCORE_MIN) / SCORE_STEP
    r = round(c)
    if abs(c - r) > 1e-9 or not (0 <= r < NUM_CATEGORIES):
        raise ValueError(f"score {x!r} is not on the rubric grid")
    return int(r)


def category_to_score(c: int) -> float:
    """Inverse of :func:`score_to_category`."""
    if not (0 <= c < NUM_CATEGORIES):
        raise ValueError(f"category {c!r} out of range [0, {NUM_CATEGORIES})")
    return SCORE_MIN + SCORE_STEP * c


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    """Records plus their embedding bundles for one split role."""

    records: tuple[EssayRecord, ...]
    bundles: Mapping[str, EmbeddingBundle]
    role: str

    def __post_init__(self) -> None:
        if self.role not in SPLIT_ROLES:
            raise ValueError(f"unknown split role {self.role!r}")
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise ValueError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if rec.id not in self.bundles:
                raise ValueError(f"record {rec.id!r} has no embedding bundle")

    def __len__(self) -> int:
        return len(self.records)

    def bundle_for(self, record: EssayRecord) -> EmbeddingBundle:
        return self.bundles[record.id]


# --- JSON-lines essay file -------------------------------------------------
#
# One object per line: {"id": str, "tokens": [str], "sentences": [[s, e]],
# "deps": [[head, dependent]], "scores": {trait: float}?}. UTF-8, LF endings.

def record_to_json_obj(record: EssayRecord) -> dict:
    obj: dict = {
        "id": record.id,
        "tokens": list(record.tokens),
        "sentences": [[s, e] for s, e in record.sentence_spans],
        "deps": [[h, d] for h, d in record.deps],
    }
    if record.gold is not None:
        obj["scores"] = {t: v for t, v in zip(TRAIT_NAMES, record.gold.as_tuple())}
    return obj


def record_from_json_obj(obj: dict, where: str = "") -> EssayRecord:
    prefix = f"{where}: " if where else ""
    if not isinstance(obj, dict):
        raise InputError(f"{prefix}expected a JSON object")
    for key in ("id", "tokens", "sentences", "deps"):
        if key not in obj:
            raise InputError(f"{prefix}missing key {key!r}")
    try:
        gold = None
        if "scores" in obj and obj["scores"] is not None:
            gold = TraitScores.from_mapping(obj["scores"])
            if not gold.is_on_grid():
                raise ValueError("gold scores must be multiples of 0.5")
        return EssayRecord.make(obj["id"], obj["tokens"], obj["sentences"], obj["deps"], gold)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{prefix}{exc}") from exc


def write_essays_jsonl(records: Iterable[EssayRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json_obj(record)))
            fh.write("\n")


def read_essays_jsonl(path: Path | str) -> list[EssayRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            records.append(record_from_json_obj(obj, where=f"{path}: line {lineno}"))
    return records


# --- Scores CSV (ingest input) ---------------------------------------------

SCORES_CSV_HEADER = ("id",) + TRAIT_NAMES


def read_scores_csv(path: Path | str) -> dict[str, TraitScores]:
    """Read the per-essay gold score table (header: id,cohesion,...,conventions)."""
    scores: dict[str, TraitScores] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty scores file") from None
        if tuple(h.strip() for h in header) != SCORES_CSV_HEADER:
            raise InputError(
                f"{path}: expected header {','.join(SCORES_CSV_HEADER)!r}, got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(SCORES_CSV_HEADER):
                raise InputError(f"{path}: line {lineno}: expected {len(SCORES_CSV_HEADER)} fields, got {len(row)}")
            essay_id = row[0].strip()
            if essay_id in scores:
                raise InputError(f"{path}: line {lineno}: duplicate id {essay_id!r}")
            try:
                values = [float(v) for v in row[1:]]
                gold = TraitScores(*values)
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
            if not gold.is_on_grid():
                raise InputError(f"{path}: line {lineno}: scores must be multiples of 0.5")
            scores[essay_id] = gold
    return scores
