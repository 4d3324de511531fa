"""Tokenization and part-of-speech tagging for caption manipulation.

Tagging is a pluggable backend. The builtin tagger is a crude heuristic
(closed-class tables, suffix rules, attribute-lexicon lookup, default NOUN):
the downstream generators only need a plausible partition of content words
to choose a substitution site, not linguistically exact tags. An external
tagging service speaking ``POST /tag`` can replace it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

NOUN = "NOUN"
VERB = "VERB"
ADJ = "ADJ"
ADV = "ADV"
ADP = "ADP"
DET = "DET"
OTHER = "OTHER"

POS_TAGS = frozenset({NOUN, VERB, ADJ, ADV, ADP, DET, OTHER})

# Punctuation detached from the end of whitespace tokens.
_TRAILING_PUNCT = ".,!?;:"

_DETERMINERS = frozenset(
    """a an the this that these those my your his her its our their some any
    each every no both either neither another all""".split()
)

_ADPOSITIONS = frozenset(
    """in on at by for with within about against between among into through
    during before after above below to from up down under over of off near
    beside behind across along around onto upon toward towards inside outside
    beneath without underneath atop amid amidst""".split()
)

# Conjunctions, copulas, pronouns, number words: never substitution targets.
_FUNCTION_WORDS = frozenset(
    """and or but nor so yet if because while when where who whom which what
    as than not is are was were be been being am do does did has have had
    it he she they them we us you i me him there here
    one two three four five six seven eight nine ten zero hundred thousand""".split()
)


@dataclass(frozen=True)
class TaggedToken:
    """A token with its POS tag and character span into the caption."""

    text: str
    pos: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.pos not in POS_TAGS:
            raise ValueError(f"unknown POS tag: {self.pos!r}")

    @property
    def char_span(self) -> tuple[int, int]:
        return (self.start, self.end)


class PosTaggerBackend(Protocol):
    """Anything that maps a caption to tagged tokens, deterministically."""

    def tag(self, caption: str) -> list[TaggedToken]: ...


def tokenize_with_spans(caption: str) -> list[tuple[str, int, int]]:
    """Split on whitespace, detaching trailing ``.,!?;:`` characters.

    Returns ``(text, start, end)`` triples; ``caption[start:end] == text``
    for every token, spans strictly increasing and non-overlapping.
    """
    tokens: list[tuple[str, int, int]] = []
    i = 0
    n = len(caption)
    while i < n:
        if caption[i].isspace():
            i += 1
            continue
        start = i
        while i < n and not caption[i].isspace():
            i += 1
        end = i
        word_end = end
        while word_end > start and caption[word_end - 1] in _TRAILING_PUNCT:
            word_end -= 1
        if word_end > start:
            tokens.append((caption[start:word_end], start, word_end))
        for j in range(word_end, end):
            tokens.append((caption[j], j, j + 1))
    return tokens


def tokenize(caption: str) -> list[str]:
    """Token texts of :func:`tokenize_with_spans`."""
    return [text for text, _, _ in tokenize_with_spans(caption)]


def _attribute_words() -> frozenset[str]:
    # Deferred import: lexicon builds on this module's tokenizer.
    from .lexicon import builtin_lexicons

    words: set[str] = set()
    for lex in builtin_lexicons():
        if lex.svlc_type != "action":  # action words are verbs, not adjectives
            words.update(lex.words)
    return frozenset(words)


_ATTRIBUTE_WORDS: frozenset[str] | None = None


def _classify(token: str) -> str:
    lower = token.lower()
    if all(ch in _TRAILING_PUNCT for ch in token):
        return OTHER
    if not any(ch.isalpha() for ch in token):
        return OTHER
    if lower in _DETERMINERS:
        return DET
    if lower in _ADPOSITIONS:
        return ADP
    if lower in _FUNCTION_WORDS:
        return OTHER
    if len(lower) >= 5 and lower.endswith("ing"):
        return VERB
    if len(lower) >= 4 and lower.endswith("ed"):
        return VERB
    if len(lower) >= 4 and lower.endswith("ly"):
        return ADV
    global _ATTRIBUTE_WORDS
    if _ATTRIBUTE_WORDS is None:
        _ATTRIBUTE_WORDS = _attribute_words()
    if lower in _ATTRIBUTE_WORDS:
        return ADJ
    return NOUN


def builtin_tag(caption: str) -> list[TaggedToken]:
    """Heuristic POS tagging over :func:`tokenize` output. Deterministic."""
    return [
        TaggedToken(text=text, pos=_classify(text), start=start, end=end)
        for text, start, end in tokenize_with_spans(caption)
    ]


class BuiltinTagger:
    """Backend wrapper around :func:`builtin_tag`."""

    def tag(self, caption: str) -> list[TaggedToken]:
        return builtin_tag(caption)


class HttpPosTagger:
    """Tagging backend over ``POST /tag``; spans are realigned locally."""

    def __init__(self, client) -> None:
        self._client = client

    def tag(self, caption: str) -> list[TaggedToken]:
        body = self._client.post("/tag", {"text": caption})
        pairs = [(str(t["text"]), str(t["pos"])) for t in body.get("tokens", [])]
        return align_tagged(caption, pairs)


def align_tagged(caption: str, tokens: Iterable[tuple[str, str]]) -> list[TaggedToken]:
    """Attach character spans to externally tagged ``(text, pos)`` pairs.

    Tokens must occur left to right in the caption; raises ``ValueError``
    when a token cannot be located past the previous one.
    """
    out: list[TaggedToken] = []
    cursor = 0
    for text, pos in tokens:
        idx = caption.find(text, cursor)
        if idx < 0:
            raise ValueError(f"token {text!r} not found in caption after offset {cursor}")
        out.append(TaggedToken(text=text, pos=pos, start=idx, end=idx + len(text)))
        cursor = idx + len(text)
    return out
