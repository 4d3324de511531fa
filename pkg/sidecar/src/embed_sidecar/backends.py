"""Model backends behind the HTTP endpoints.

The bundled backends are deterministic and dependency-free so the service
is useful in tests and offline environments out of the box: embeddings are
hashed-feature projections, unmasking draws from a scored word pool, and
completion applies a rule-based rewrite. Each backend is a small class
with one method; pointing an endpoint at a real model means swapping the
class registered for it in ``REGISTRY`` (for example with a
transformers-based implementation) without touching the app layer.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np

DEFAULT_DIM = 256


def _seed(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _unit(vec: np.ndarray) -> list[float]:
    vec = vec / np.linalg.norm(vec)
    return [float(x) for x in vec]


class HashedNgramTextEmbedder:
    """Character trigram feature hashing into a fixed-dimension unit vector.

    Shared trigrams push texts toward similar directions, which is enough
    structure for smoke tests and ranking sanity checks.
    """

    name = "hashed-ngram-v1"

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        self.dim = dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            padded = f"  {text.lower()} "
            acc = np.zeros(self.dim)
            for i in range(len(padded) - 2):
                gram = padded[i : i + 3]
                rng = np.random.default_rng(_seed("gram", gram))
                acc += rng.standard_normal(self.dim)
            if not acc.any():
                acc = np.random.default_rng(_seed("text", text)).standard_normal(self.dim)
            out.append(_unit(acc))
        return out


class ByteHashImageEmbedder:
    """Embeds local image files from a hash of their bytes.

    Identical file contents map to identical vectors regardless of path.
    Refs are local paths only; nothing is ever fetched.
    """

    name = "byte-hash-v1"

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        self.dim = dim

    def embed(self, image_refs: list[str]) -> list[list[float]]:
        out = []
        for ref in image_refs:
            path = Path(ref)
            if not path.is_file():
                raise FileNotFoundError(ref)
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            rng = np.random.default_rng(_seed("image", digest))
            out.append(_unit(rng.standard_normal(self.dim)))
        return out


_WORD_POOL = (
    "sitting standing running walking eating drinking drawing reading sleeping "
    "jumping smiling waiting resting talking singing dancing playing cooking "
    "dog cat bird horse child woman man girl boy table chair boat car tree "
    "house park street garden river beach red blue green yellow white black "
    "small large old young new bright dark quiet happy wooden metal empty full"
).split()

MASK = "<mask>"


class WordPoolUnmasker:
    """Proposes pool words for a masked slot with deterministic scores.

    Scores are a stable hash of (context, word), sorted descending and
    squashed into (0, 1); greedy and reproducible by construction.
    """

    name = "word-pool-v1"

    def unmask(self, text: str, top_k: int) -> list[dict]:
        scored = []
        for word in _WORD_POOL:
            raw = _seed("cand", text, word) % 10_000_000
            scored.append((raw / 10_000_000.0, word))
        scored.sort(reverse=True)
        return [
            {"token": word, "score": round(score, 6)}
            for score, word in scored[: max(0, top_k)]
        ]


_CONNECTIVE = " is semantic similar to "
_DETERMINERS = {"a", "an", "the"}


class RewriteCompleter:
    """Rule-based paraphrase of the final queried caption in the prompt.

    Swaps left/right, moves a leading determiner-attribute-noun pattern
    into a "noun that is attribute" clause, otherwise reverses the word
    order; always terminates the analogy with a period plus filler text so
    clients exercising first-period truncation see a realistic tail.
    """

    name = "rewrite-v1"

    def complete(self, prompt: str, max_tokens: int) -> str:
        head = prompt.rsplit(_CONNECTIVE, 1)[0]
        caption = head.rsplit(". ", 1)[-1].strip()
        tokens = caption.split()
        tokens = [self._flip(t) for t in tokens]
        if len(tokens) >= 3 and tokens[0].lower() in _DETERMINERS:
            rewritten = " ".join([tokens[0], *tokens[2:], "that", "is", tokens[1]])
        elif len(tokens) > 1:
            rewritten = " ".join(reversed(tokens))
        else:
            rewritten = f"something like {caption}"
        words = rewritten.split()[: max(1, max_tokens)]
        return " ".join(words) + ". and then some unrelated text"

    @staticmethod
    def _flip(token: str) -> str:
        swaps = {"left": "right", "right": "left", "above": "below", "below": "above"}
        return swaps.get(token.lower(), token)


_TAG_DETERMINERS = frozenset("a an the this that these those some any each every no".split())
_TAG_ADPOSITIONS = frozenset(
    "in on at by for with of to from under over near behind between into through".split()
)
_TAG_FUNCTION = frozenset(
    "and or but nor is are was were be been am not it he she they we you i "
    "one two three four five six seven eight nine ten".split()
)
_PUNCT_RE = re.compile(r"^[.,!?;:]+$")


class HeuristicTagger:
    """Coarse POS assignment: closed classes, suffixes, default noun."""

    name = "heuristic-v1"

    def tag(self, text: str) -> list[dict]:
        tokens: list[str] = []
        for chunk in text.split():
            trailing = []
            while chunk and chunk[-1] in ".,!?;:":
                trailing.append(chunk[-1])
                chunk = chunk[:-1]
            if chunk:
                tokens.append(chunk)
            tokens.extend(reversed(trailing))
        return [{"text": tok, "pos": self._classify(tok)} for tok in tokens]

    @staticmethod
    def _classify(token: str) -> str:
        lower = token.lower()
        if _PUNCT_RE.match(token) or not any(c.isalpha() for c in token):
            return "OTHER"
        if lower in _TAG_DETERMINERS:
            return "DET"
        if lower in _TAG_ADPOSITIONS:
            return "ADP"
        if lower in _TAG_FUNCTION:
            return "OTHER"
        if len(lower) >= 5 and lower.endswith("ing"):
            return "VERB"
        if len(lower) >= 4 and lower.endswith("ed"):
            return "VERB"
        if len(lower) >= 4 and lower.endswith("ly"):
            return "ADV"
        return "NOUN"


REGISTRY = {
    "text": {HashedNgramTextEmbedder.name: HashedNgramTextEmbedder},
    "image": {ByteHashImageEmbedder.name: ByteHashImageEmbedder},
    "unmask": {WordPoolUnmasker.name: WordPoolUnmasker},
    "complete": {RewriteCompleter.name: RewriteCompleter},
    "tag": {HeuristicTagger.name: HeuristicTagger},
}
