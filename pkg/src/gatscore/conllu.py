"""CoNLL-U ingestion: standard 10-column dependency parses to essay records.

Parsing itself happens in an external tool; this module only consumes its
output. Multiword-token ranges (ids like ``3-4``) and empty nodes (``5.1``)
are skipped, comment lines are ignored, and a blank line ends a sentence.
"""

from __future__ import annotations

import re

from .data import EssayRecord, InputError, TraitScores

NUM_COLUMNS = 10

_RANGE_ID = re.compile(r"^\d+-\d+$")
_EMPTY_ID = re.compile(r"^\d+\.\d+$")
_NEWDOC = re.compile(r"^#\s*newdoc\s+id\s*=\s*(\S.*?)\s*$")


class ConlluParseError(InputError):
    """Malformed CoNLL-U input; message names the offending line."""


def conllu_to_record(text: str, id: str, gold: TraitScores | None = None,
                     line_offset: int = 0) -> EssayRecord:
    """Convert one CoNLL-U document into an :class:`EssayRecord`.

    Tokens are concatenated across sentences in order. A HEAD value h > 0 on
    the k-th word of a sentence becomes the dep (offset + h - 1, offset + k - 1);
    HEAD 0 becomes (-1, offset + k - 1). ``line_offset`` shifts reported line
    numbers when the text is a slice of a larger file.
    """
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    deps: list[tuple[int, int]] = []

    # Pending sentence: (line_no, form, head) per word token.
    sentence: list[tuple[int, str, int]] = []

    def flush_sentence() -> None:
        if not sentence:
            return
        offset = len(tokens)
        count = len(sentence)
        for k, (lineno, form, head) in enumerate(sentence):
            if head > count:
                raise ConlluParseError(
                    f"line {lineno}: head index {head} out of range (sentence has {count} tokens)")
            tokens.append(form)
            if head == 0:
                deps.append((-1, offset + k))
            else:
                deps.append((offset + head - 1, offset + k))
        spans.append((offset, offset + count))
        sentence.clear()

    for rel_lineno, raw in enumerate(text.split("\n"), start=1):
        lineno = rel_lineno + line_offset
        line = raw.rstrip("\r")
        if not line.strip():
            flush_sentence()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != NUM_COLUMNS:
            raise ConlluParseError(f"line {lineno}: expected {NUM_COLUMNS} columns, got {len(cols)}")
        token_id = cols[0]
        if _RANGE_ID.match(token_id) or _EMPTY_ID.match(token_id):
            continue
        if not token_id.isdigit() or int(token_id) < 1:
            raise ConlluParseError(f"line {lineno}: unparsable token id {token_id!r}")
        expected_id = len(sentence) + 1
        if int(token_id) != expected_id:
            raise ConlluParseError(
                f"line {lineno}: token id {token_id} out of sequence (expected {expected_id})")
        head_col = cols[6]
        try:
            head = int(head_col)
        except ValueError:
            raise ConlluParseError(f"line {lineno}: unparsable head index {head_col!r}") from None
        if head < 0:
            raise ConlluParseError(f"line {lineno}: negative head index {head}")
        sentence.append((lineno, cols[1], head))
    flush_sentence()

    return EssayRecord.make(id, tokens, spans, deps, gold)


def split_documents(text: str) -> list[tuple[str, str, int]]:
    """Split a CoNLL-U file on ``# newdoc id = X`` markers.

    Returns (doc_id, doc_text, line_offset) triples. A file without markers
    yields a single entry with doc_id "".
    """
    lines = text.split("\n")
    markers: list[tuple[int, str]] = []
    for idx, line in enumerate(lines):
        m = _NEWDOC.match(line)
        if m:
            markers.append((idx, m.group(1)))

    if not markers:
        return [("", text, 0)]

    # Only blank lines and comments may precede the first marker.
    for idx in range(markers[0][0]):
        stripped = lines[idx].strip()
        if stripped and not stripped.startswith("#"):
            raise ConlluParseError(f"line {idx + 1}: token data before first '# newdoc id' marker")

    docs: list[tuple[str, str, int]] = []
    for j, (start, doc_id) in enumerate(markers):
        end = markers[j + 1][0] if j + 1 < len(markers) else len(lines)
        docs.append((doc_id, "\n".join(lines[start:end]), start))
    return docs
