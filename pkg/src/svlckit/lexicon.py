"""SVLC word lists and the rule-based negative caption generator.

A negative is made by finding a caption word that belongs to one of the
structured-concept vocabularies (color, material, size, state, action) and
swapping it for a different word from the same vocabulary: a one-word edit
that flips the caption's meaning relative to its image.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import IO, Iterable

from .corpus import METHOD_RB, CaptionRecord, GeneratedText
from .parser import tokenize_with_spans

SVLC_TYPES = ("color", "material", "size", "state", "action")

MATCH_FIRST = "first"
MATCH_RANDOM = "random"


@dataclass(frozen=True)
class SvlcLexicon:
    """A named SVLC type with its ordered substitution word list."""

    svlc_type: str
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.words) < 2:
            raise ValueError("a lexicon needs at least 2 words to substitute")
        seen = set()
        for word in self.words:
            if word != word.lower() or not word or any(ch.isspace() for ch in word):
                raise ValueError(f"lexicon words must be lowercase single tokens: {word!r}")
            if word in seen:
                raise ValueError(f"duplicate lexicon word: {word!r}")
            seen.add(word)

    @property
    def word_set(self) -> frozenset[str]:
        return frozenset(self.words)


def parse_lexicon_lines(lines: Iterable[str], svlc_type: str) -> SvlcLexicon:
    """Build a lexicon from a one-word-per-line stream; ``#`` starts a comment."""
    words: list[str] = []
    seen: set[str] = set()
    for raw in lines:
        word = raw.split("#", 1)[0].strip().lower()
        if word and word not in seen:
            words.append(word)
            seen.add(word)
    return SvlcLexicon(svlc_type=svlc_type, words=tuple(words))


def load_lexicon(path: str | Path | IO[str], svlc_type: str) -> SvlcLexicon:
    """Load a lexicon from a word-list file."""
    if hasattr(path, "read"):
        return parse_lexicon_lines(path, svlc_type)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_lexicon_lines(fh, svlc_type)


def _load_builtin(svlc_type: str) -> SvlcLexicon:
    root = resources.files("svlckit")
    text = (root / "data" / "lexicons" / f"{svlc_type}.txt").read_text(encoding="utf-8")
    return parse_lexicon_lines(text.splitlines(), svlc_type)


def builtin_lexicons() -> list[SvlcLexicon]:
    """The five bundled lexicons, in canonical type order.

    The color list is fixed and pinned by tests; the material, size, state
    and action lists are curated samples meant to be extended or replaced
    via ``--lexicon type=path``.
    """
    return [_load_builtin(svlc_type) for svlc_type in SVLC_TYPES]


def _apply_case_pattern(template: str, replacement: str) -> str:
    """Give ``replacement`` the capitalization pattern of ``template``."""
    if template.isupper() and len(template) > 1:
        return replacement.upper()
    if template[:1].isupper() and template[1:].islower():
        return replacement.capitalize()
    return replacement


def rb_negative(
    record: CaptionRecord,
    lexicon: SvlcLexicon,
    rng: random.Random,
    match_mode: str = MATCH_FIRST,
) -> GeneratedText | None:
    """Replace one lexicon word in the caption with a different one.

    Scans tokens in order with case-insensitive whole-word matching. In
    ``first`` mode (the default) the first matching token is edited; in
    ``random`` mode the edit site is drawn uniformly from all matches.
    The replacement is drawn uniformly from the lexicon excluding the
    matched word and inherits its capitalization pattern. Returns ``None``
    when no token matches.
    """
    if match_mode not in (MATCH_FIRST, MATCH_RANDOM):
        raise ValueError(f"unknown match mode: {match_mode!r}")

    tokens = tokenize_with_spans(record.caption)
    matches = [
        (index, text, start, end)
        for index, (text, start, end) in enumerate(tokens)
        if text.lower() in lexicon.word_set
    ]
    if not matches:
        return None
    if match_mode == MATCH_FIRST:
        index, text, start, end = matches[0]
    else:
        index, text, start, end = matches[rng.randrange(len(matches))]

    candidates = [w for w in lexicon.words if w != text.lower()]
    replacement = _apply_case_pattern(text, candidates[rng.randrange(len(candidates))])
    negative = record.caption[:start] + replacement + record.caption[end:]
    return GeneratedText(
        text=negative,
        method=METHOD_RB,
        svlc_type=lexicon.svlc_type,
        replaced_word=text,
        replacement_word=replacement,
        token_index=index,
    )
