"""Positive caption generation: heavily reworded, meaning-preserving analogies.

A completion model is prompted with four fixed in-context example pairs and
asked to continue ``<caption> is semantic similar to ``. The continuation up
to the first period becomes the analogy, after degenerate-output filtering.
"""

from __future__ import annotations

from typing import Protocol

from ._http import JsonServiceClient
from .corpus import METHOD_LLM_PROMPT, CaptionRecord, GeneratedText

DEFAULT_MAX_TOKENS = 40

# One-word "analogies" are rewordings in name only; require a few tokens.
MIN_ANALOGY_TOKENS = 3

# Fixed in-context example pairs, in prompt order.
PROMPT_EXAMPLES = (
    ("a woman standing left to a sitting cat", "a cat standing right to a woman"),
    ("a baby crying to the right of a box", "a box placed to the left of a crying baby"),
    ("a man sitting to the right of a dog", "a dog sitting to the left of a man"),
    ("a blue boat", "a boat that is blue"),
)

_PROMPT_CONNECTIVE = " is semantic similar to "


class CompletionClient(Protocol):
    """Anything that continues a prompt; returns the continuation only."""

    def complete(self, prompt: str, max_tokens: int) -> str: ...


class HttpCompletionClient:
    """Completion client over ``POST /complete``."""

    def __init__(self, client: JsonServiceClient) -> None:
        self._client = client

    def complete(self, prompt: str, max_tokens: int) -> str:
        body = self._client.post("/complete", {"prompt": prompt, "max_tokens": max_tokens})
        return str(body.get("completion", ""))


def build_prompt(caption: str) -> str:
    """The in-context prompt ending with ``<caption> is semantic similar to ``."""
    if not caption:
        raise ValueError("caption must be nonempty")
    parts = [
        source + _PROMPT_CONNECTIVE + target + ". " for source, target in PROMPT_EXAMPLES
    ]
    return "".join(parts) + caption + _PROMPT_CONNECTIVE


def parse_completion(raw: str, original_caption: str) -> GeneratedText | None:
    """Truncate a completion at the first period and filter degenerate outputs.

    Returns ``None`` when the truncated text is empty, equals the original
    caption up to case, or is shorter than ``MIN_ANALOGY_TOKENS`` words.
    """
    text = raw.split(".", 1)[0].strip()
    if not text:
        return None
    if text.lower() == original_caption.lower():
        return None
    if len(text.split()) < MIN_ANALOGY_TOKENS:
        return None
    return GeneratedText(text=text, method=METHOD_LLM_PROMPT)


def llm_positive(
    record: CaptionRecord,
    client: CompletionClient,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> GeneratedText | None:
    """Generate one analogy positive for the caption, or ``None``.

    Service transport failures propagate as
    :class:`~svlckit.errors.ServiceError`; the caller may skip the record.
    """
    raw = client.complete(build_prompt(record.caption), max_tokens)
    return parse_completion(raw, record.caption)
