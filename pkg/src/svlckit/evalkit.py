"""Pos/neg caption evaluation: score each image against a matched positive
and negative caption and report per-concept-type accuracy.

An item is correct when the positive caption scores strictly higher than
the negative one for its image. Since the similarity is a monotone
transform of cosine for any fixed positive temperature, accuracy does not
depend on the temperature or on embedding scale; the comparison is still
done on temperature-scaled scores so that degenerate temperatures behave
faithfully (tau = 0 ties everything).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Protocol, Sequence

import numpy as np

SVLC_EVAL_TYPES = (
    "object-location",
    "object-size",
    "attr-color",
    "attr-material",
    "attr-size",
    "attr-state",
    "attr-action",
    "relation-spatial",
    "relation-action",
)

_GROUP_PREFIXES = {"object": "object", "attr": "attribute", "relation": "relation"}

DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True)
class ChecklistItem:
    """One image with its matched positive and negative captions."""

    image_ref: str
    positive: str
    negative: str
    svlc_type: str

    def __post_init__(self) -> None:
        if self.svlc_type not in SVLC_EVAL_TYPES:
            raise ValueError(f"unknown svlc_type {self.svlc_type!r}")
        if self.positive == self.negative:
            raise ValueError("positive and negative captions must differ")


class EmbeddingBackend(Protocol):
    """Deterministic text/image embedding provider with a fixed dimension."""

    def embed_text(self, texts: Sequence[str]) -> np.ndarray: ...

    def embed_image(self, image_refs: Sequence[str]) -> np.ndarray: ...


@dataclass
class TypeStats:
    correct: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass
class EvalReport:
    """Per-type and overall accuracies plus tie/skip accounting.

    ``overall`` pools all scored items; ``overall_macro`` averages the
    per-type accuracies, which weights rare types equally. Both are
    reported because published per-type tables are ambiguous about which
    aggregation they use.
    """

    per_type: dict[str, TypeStats] = field(default_factory=dict)
    ties: int = 0
    skipped: int = 0

    @property
    def total(self) -> int:
        return sum(s.total for s in self.per_type.values())

    @property
    def correct(self) -> int:
        return sum(s.correct for s in self.per_type.values())

    @property
    def overall(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def overall_macro(self) -> float:
        if not self.per_type:
            return 0.0
        return sum(s.accuracy for s in self.per_type.values()) / len(self.per_type)

    def to_json_obj(self) -> dict:
        return {
            "per_type": {
                name: {"correct": s.correct, "total": s.total, "accuracy": s.accuracy}
                for name, s in sorted(self.per_type.items())
            },
            "overall": self.overall,
            "overall_macro": self.overall_macro,
            "ties": self.ties,
            "skipped": self.skipped,
            "total": self.total,
        }


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if not na.all() or not nb.all():
        raise ValueError("zero-norm embedding; cosine undefined")
    return (a * b).sum(axis=1) / (na * nb)


def _collapse(svlc_type: str) -> str:
    return _GROUP_PREFIXES[svlc_type.split("-", 1)[0]]


def evaluate(
    items: Iterable[ChecklistItem],
    backend: EmbeddingBackend,
    tau: float,
    batch_size: int = DEFAULT_BATCH_SIZE,
    collapse_types: bool = False,
) -> EvalReport:
    """Score every item and aggregate per-type accuracy.

    Correct means the log-similarity ``tau * cos`` of the positive strictly
    exceeds the negative's; exact ties count as incorrect and are tallied
    separately. Items whose embedding fails are skipped and counted.
    ``collapse_types`` aggregates under the object/attribute/relation
    groups instead of the fine-grained type labels.
    """
    report = EvalReport()
    batch: list[ChecklistItem] = []

    def flush() -> None:
        if not batch:
            return
        try:
            _score_batch(batch, backend, tau, report, collapse_types)
        except Exception:
            # Isolate the failing item(s): score one by one.
            for item in batch:
                try:
                    _score_batch([item], backend, tau, report, collapse_types)
                except Exception:
                    report.skipped += 1
        batch.clear()

    for item in items:
        batch.append(item)
        if len(batch) >= batch_size:
            flush()
    flush()
    return report


def _score_batch(
    batch: list[ChecklistItem],
    backend: EmbeddingBackend,
    tau: float,
    report: EvalReport,
    collapse_types: bool,
) -> None:
    pos = np.asarray(backend.embed_text([item.positive for item in batch]), dtype=np.float64)
    neg = np.asarray(backend.embed_text([item.negative for item in batch]), dtype=np.float64)
    img = np.asarray(backend.embed_image([item.image_ref for item in batch]), dtype=np.float64)
    if not (len(pos) == len(neg) == len(img) == len(batch)):
        raise ValueError("backend returned a wrong number of vectors")

    pos_score = tau * _cosine_rows(pos, img)
    neg_score = tau * _cosine_rows(neg, img)
    for item, ps, ns in zip(batch, pos_score, neg_score):
        key = _collapse(item.svlc_type) if collapse_types else item.svlc_type
        stats = report.per_type.setdefault(key, TypeStats())
        stats.total += 1
        if ps > ns:
            stats.correct += 1
        elif ps == ns:
            report.ties += 1


def read_items(source: IO[bytes] | IO[str] | Iterable[bytes | str]) -> Iterator[ChecklistItem]:
    """Parse the items JSONL: one object with image_ref/positive/negative/svlc_type per line."""
    for raw in source:
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        yield ChecklistItem(
            image_ref=obj["image_ref"],
            positive=obj["positive"],
            negative=obj["negative"],
            svlc_type=obj["svlc_type"],
        )


class SyntheticBackend:
    """Deterministic stand-in backend: inputs hash to fixed unit vectors.

    Useful for smoke tests and offline runs; two equal strings always map
    to the same vector, distinct strings map to effectively independent
    directions.
    """

    def __init__(self, seed: int, dim: int = 32) -> None:
        self.seed = seed
        self.dim = dim

    def _vector(self, namespace: str, value: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}\x1f{namespace}\x1f{value}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def embed_text(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._vector("text", t) for t in texts])

    def embed_image(self, image_refs: Sequence[str]) -> np.ndarray:
        return np.stack([self._vector("image", r) for r in image_refs])


class HttpEmbeddingBackend:
    """Backend over the ``POST /embed/text`` and ``POST /embed/image`` wire contract."""

    def __init__(self, client) -> None:
        self._client = client

    def embed_text(self, texts: Sequence[str]) -> np.ndarray:
        body = self._client.post("/embed/text", {"texts": list(texts)})
        return np.asarray(body["vectors"], dtype=np.float64)

    def embed_image(self, image_refs: Sequence[str]) -> np.ndarray:
        body = self._client.post("/embed/image", {"image_refs": list(image_refs)})
        return np.asarray(body["vectors"], dtype=np.float64)
