"""Negative caption generation by masking one content word and unmasking it.

Picks a content word (noun, verb, adjective or adverb), replaces it with a
``<mask>`` placeholder, asks a fill-mask service for candidate words, drops
the original word and subword junk, and substitutes one surviving candidate.
No vocabulary prior is needed, unlike the rule-based generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Protocol

from ._http import JsonServiceClient
from .corpus import METHOD_LLM_UNMASK, CaptionRecord, GeneratedText
from .parser import ADJ, ADV, NOUN, VERB, PosTaggerBackend, TaggedToken

MASK_PLACEHOLDER = "<mask>"
DEFAULT_TOP_K = 10

# Content classes eligible for masking, in canonical selection order.
MASKABLE_POS = (NOUN, VERB, ADJ, ADV)


@dataclass(frozen=True)
class UnmaskCandidate:
    """One fill-mask proposal with its model score."""

    token: str
    score: float

    def __post_init__(self) -> None:
        if not self.token:
            raise ValueError("candidate token must be nonempty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"candidate score out of [0, 1]: {self.score}")


class FillMaskClient(Protocol):
    """Anything that proposes words for a single masked position."""

    def unmask(self, masked_text: str, top_k: int) -> list[UnmaskCandidate]: ...


class HttpFillMaskClient:
    """Fill-mask client over ``POST /unmask`` (see the wire contract in README)."""

    def __init__(self, client: JsonServiceClient) -> None:
        self._client = client

    def unmask(self, masked_text: str, top_k: int) -> list[UnmaskCandidate]:
        body = self._client.post("/unmask", {"text": masked_text, "top_k": top_k})
        candidates = [
            UnmaskCandidate(token=str(c["token"]), score=float(c["score"]))
            for c in body.get("candidates", [])
        ]
        candidates.sort(key=lambda c: -c.score)
        return candidates[:top_k]


def _surviving_candidates(
    candidates: list[UnmaskCandidate], original: str
) -> list[str]:
    """Drop the original word (case-insensitive) and non-alphabetic tokens.

    Unmasking models emit subword fragments and punctuation; stripping to
    purely alphabetic whole words keeps substitutions grammatical.
    """
    survivors: list[str] = []
    seen: set[str] = set()
    for cand in candidates:
        token = cand.token.strip()
        if not token or not token.isalpha():
            continue
        if token.lower() == original.lower():
            continue
        if token in seen:
            continue
        seen.add(token)
        survivors.append(token)
    return survivors


def mask_token(caption: str, token: TaggedToken) -> str:
    """Splice the mask placeholder over one token's span."""
    return caption[: token.start] + MASK_PLACEHOLDER + caption[token.end :]


def llm_negative(
    record: CaptionRecord,
    tagger: PosTaggerBackend,
    client: FillMaskClient,
    rng: random.Random,
    top_k: int = DEFAULT_TOP_K,
) -> GeneratedText | None:
    """Generate one unmasking negative for the caption, or ``None``.

    Selection is uniform at each stage: first over the content POS classes
    present in the caption, then over that class's tokens, then over the
    candidates that survive filtering. Returns ``None`` when the caption
    has no content token or every candidate is filtered out. Service
    transport failures propagate as :class:`~svlckit.errors.ServiceError`.
    """
    if top_k < 2:
        raise ValueError("top_k must be >= 2 (the original word is always filtered)")

    tagged = tagger.tag(record.caption)
    by_class: dict[str, list[tuple[int, TaggedToken]]] = {}
    for index, token in enumerate(tagged):
        if token.pos in MASKABLE_POS:
            by_class.setdefault(token.pos, []).append((index, token))

    present = [pos for pos in MASKABLE_POS if pos in by_class]
    if not present:
        return None
    pos_class = present[rng.randrange(len(present))]
    token_index, token = by_class[pos_class][rng.randrange(len(by_class[pos_class]))]

    masked = mask_token(record.caption, token)
    candidates = client.unmask(masked, top_k)
    survivors = _surviving_candidates(candidates, token.text)
    if not survivors:
        return None
    replacement = survivors[rng.randrange(len(survivors))]

    negative = record.caption[: token.start] + replacement + record.caption[token.end :]
    return GeneratedText(
        text=negative,
        method=METHOD_LLM_UNMASK,
        svlc_type=None,
        replaced_word=token.text,
        replacement_word=replacement,
        token_index=token_index,
    )
