"""Record-level augmentation orchestration with order-preserving workers.

Every record gets its own random substream derived from the global seed and
the record id, so outputs are byte-identical regardless of worker count or
completion order.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .analogy import CompletionClient, llm_positive
from .corpus import AugmentedRecord, CaptionRecord, GeneratedText
from .errors import ServiceError
from .lexicon import MATCH_FIRST, SvlcLexicon, rb_negative
from .parser import BuiltinTagger, PosTaggerBackend
from .unmask import DEFAULT_TOP_K, FillMaskClient, llm_negative

METHOD_CHOICES = ("rb", "llm-neg", "llm-pos")


def record_rng(seed: int, record_id: str) -> random.Random:
    """Per-record random substream, stable across platforms and runs."""
    digest = hashlib.sha256(f"{seed}\x1f{record_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:16], "little"))


@dataclass
class AugmentOptions:
    """What to generate and how, for one augmentation run."""

    methods: tuple[str, ...]
    lexicons: tuple[SvlcLexicon, ...] = ()
    seed: int = 0
    match_mode: str = MATCH_FIRST
    top_k: int = DEFAULT_TOP_K
    max_negatives: int = 0  # 0 means unlimited
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.methods:
            raise ValueError("at least one generation method is required")
        for method in self.methods:
            if method not in METHOD_CHOICES:
                raise ValueError(f"unknown method {method!r}")
        if "rb" in self.methods and not self.lexicons:
            raise ValueError("rb method requires at least one lexicon")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class AugmentSummary:
    records: int = 0
    negatives_by_method: dict[str, int] = field(default_factory=dict)
    positives: int = 0
    skipped: int = 0
    llm_failures: int = 0

    def to_json_obj(self) -> dict:
        return {
            "records": self.records,
            "negatives_by_method": dict(sorted(self.negatives_by_method.items())),
            "positives": self.positives,
            "skipped": self.skipped,
            "llm_failures": self.llm_failures,
        }


def augment_record(
    record: CaptionRecord,
    options: AugmentOptions,
    tagger: PosTaggerBackend | None = None,
    fill_mask: FillMaskClient | None = None,
    completion: CompletionClient | None = None,
) -> tuple[AugmentedRecord, int]:
    """Generate all enabled variants for one record.

    Methods run in a fixed order (rb per lexicon, then llm-neg, then
    llm-pos) against the record's own rng substream. Returns the record
    and the number of service failures (those methods are skipped).
    """
    rng = record_rng(options.seed, record.id)
    negatives: list[GeneratedText] = []
    positives: list[GeneratedText] = []
    failures = 0

    if "rb" in options.methods:
        for lexicon in options.lexicons:
            generated = rb_negative(record, lexicon, rng, match_mode=options.match_mode)
            if generated is not None:
                negatives.append(generated)

    if "llm-neg" in options.methods:
        if fill_mask is None:
            raise ValueError("llm-neg requires a fill-mask client")
        try:
            generated = llm_negative(
                record, tagger or BuiltinTagger(), fill_mask, rng, top_k=options.top_k
            )
            if generated is not None:
                negatives.append(generated)
        except ServiceError:
            failures += 1

    if "llm-pos" in options.methods:
        if completion is None:
            raise ValueError("llm-pos requires a completion client")
        try:
            generated = llm_positive(record, completion)
            if generated is not None:
                positives.append(generated)
        except ServiceError:
            failures += 1

    if options.max_negatives > 0:
        negatives = negatives[: options.max_negatives]

    augmented = AugmentedRecord(
        source=record, negatives=tuple(negatives), positives=tuple(positives)
    )
    return augmented, failures


def augment_stream(
    records: Iterable[CaptionRecord],
    options: AugmentOptions,
    summary: AugmentSummary,
    tagger: PosTaggerBackend | None = None,
    fill_mask: FillMaskClient | None = None,
    completion: CompletionClient | None = None,
) -> Iterator[AugmentedRecord]:
    """Augment records through a worker pool, preserving input order."""

    def work(record: CaptionRecord) -> tuple[AugmentedRecord, int]:
        return augment_record(record, options, tagger, fill_mask, completion)

    def consume(results: Iterable[tuple[AugmentedRecord, int]]) -> Iterator[AugmentedRecord]:
        for augmented, failures in results:
            summary.records += 1
            summary.llm_failures += failures
            for neg in augmented.negatives:
                summary.negatives_by_method[neg.method] = (
                    summary.negatives_by_method.get(neg.method, 0) + 1
                )
            summary.positives += len(augmented.positives)
            yield augmented

    if options.workers == 1:
        yield from consume(map(work, records))
    else:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            yield from consume(pool.map(work, records))
