"""Deterministic rule-based sentence segmentation for clinical notes."""

from __future__ import annotations

# A period directly after one of these tokens never ends a sentence. The list
# is deliberately short and clinical-note flavored; being conservative here
# only merges sentences, which mean pooling tolerates.
ABBREVIATIONS = (
    "dr.",
    "mr.",
    "mrs.",
    "ms.",
    "prof.",
    "vs.",
    "e.g.",
    "i.e.",
    "etc.",
    "fig.",
    "approx.",
    "pt.",
    "rx.",
    "hx.",
)

_TERMINATORS = ".!?"


def _is_abbreviation(text: str, period_index: int) -> bool:
    head = text[: period_index + 1].lower()
    return any(head.endswith(abbr) for abbr in ABBREVIATIONS)


def segment_sentences(text: str) -> list[str]:
    """Split on '.', '!' or '?' followed by whitespace.

    Decimal points sit between digits, so they never match the
    followed-by-whitespace rule; a protected abbreviation list guards common
    title/latin shorthand. Non-empty text always yields at least one
    sentence; empty (or all-whitespace) text yields an empty list.
    """
    stripped = text.strip()
    if not stripped:
        return []
    sentences: list[str] = []
    start = 0
    for i, char in enumerate(stripped):
        if char not in _TERMINATORS:
            continue
        at_end = i + 1 == len(stripped)
        if not at_end and not stripped[i + 1].isspace():
            continue
        if char == "." and _is_abbreviation(stripped, i):
            continue
        piece = stripped[start : i + 1].strip()
        if piece:
            sentences.append(piece)
        start = i + 1
    tail = stripped[start:].strip()
    if tail:
        sentences.append(tail)
    if not sentences:
        sentences.append(stripped)
    return sentences
