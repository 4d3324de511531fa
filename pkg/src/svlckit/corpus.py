"""Streaming ingestion of image-caption pair files and augmented-dataset output.

Input formats: TSV (``caption<TAB>image_ref``, no header) and JSONL
(``{"id"?, "caption", "image_ref"}``). Output is one JSON object per line
with a fixed key order so that identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .errors import FormatError

_WHITESPACE_RUN = re.compile(r"\s+")

# Fraction of malformed rows above which ingestion aborts instead of skipping.
MALFORMED_FATAL_FRACTION = 0.5

METHOD_RB = "rb"
METHOD_LLM_UNMASK = "llm-unmask"
METHOD_LLM_PROMPT = "llm-prompt"

_SUBSTITUTION_METHODS = frozenset({METHOD_RB, METHOD_LLM_UNMASK})
_ALL_METHODS = frozenset({METHOD_RB, METHOD_LLM_UNMASK, METHOD_LLM_PROMPT})


def normalize_caption(raw: str) -> str:
    """Trim surrounding whitespace and collapse internal runs to single spaces.

    Web-harvested captions carry stray tabs, newlines and double spaces;
    downstream word matching needs clean single-space token boundaries.
    """
    return _WHITESPACE_RUN.sub(" ", raw).strip()


@dataclass(frozen=True)
class CaptionRecord:
    """One image reference plus its caption, the unit of ingestion.

    ``image_ref`` is an opaque string (URL or path) and is never
    dereferenced here. The caption must already be normalized.
    """

    id: str
    image_ref: str
    caption: str

    def __post_init__(self) -> None:
        if not self.caption:
            raise ValueError("caption must be nonempty")
        if self.caption != normalize_caption(self.caption):
            raise ValueError(
                "caption must be normalized (no surrounding/tab/newline/run whitespace): "
                f"{self.caption!r}"
            )


@dataclass(frozen=True)
class GeneratedText:
    """A generated caption variant with its provenance.

    Substitution methods (``rb``, ``llm-unmask``) must record which word
    was replaced, by what, and at which token index; prompt-generated
    positives carry no provenance fields.
    """

    text: str
    method: str
    svlc_type: str | None = None
    replaced_word: str | None = None
    replacement_word: str | None = None
    token_index: int | None = None

    def __post_init__(self) -> None:
        if self.method not in _ALL_METHODS:
            raise ValueError(f"unknown method: {self.method!r}")
        if self.method in _SUBSTITUTION_METHODS:
            if (
                self.replaced_word is None
                or self.replacement_word is None
                or self.token_index is None
            ):
                raise ValueError(f"method {self.method!r} requires full provenance")
            if self.replaced_word == self.replacement_word:
                raise ValueError("replaced_word must differ from replacement_word")
        else:
            if (
                self.replaced_word is not None
                or self.replacement_word is not None
                or self.token_index is not None
            ):
                raise ValueError("llm-prompt texts carry no provenance fields")


@dataclass(frozen=True)
class AugmentedRecord:
    """A source caption with its generated negatives and positives."""

    source: CaptionRecord
    negatives: tuple[GeneratedText, ...] = ()
    positives: tuple[GeneratedText, ...] = ()

    def __post_init__(self) -> None:
        for neg in self.negatives:
            if neg.method not in _SUBSTITUTION_METHODS:
                raise ValueError(f"negative with non-substitution method {neg.method!r}")
            if neg.text == self.source.caption:
                raise ValueError("negative text equals the source caption")
        for pos in self.positives:
            if pos.method != METHOD_LLM_PROMPT:
                raise ValueError(f"positive with method {pos.method!r}")


@dataclass
class IngestStats:
    """Counts accumulated while reading a pair file."""

    records: int = 0
    malformed: int = 0
    malformed_lines: list[int] = field(default_factory=list)


def _decode_line(raw: bytes | str) -> str | None:
    if isinstance(raw, bytes):
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            return None
    return raw


def _parse_tsv_row(line: str, line_no: int) -> CaptionRecord | None:
    parts = line.split("\t")
    if len(parts) != 2:
        return None
    caption = normalize_caption(parts[0])
    image_ref = parts[1].strip()
    if not caption or not image_ref:
        return None
    return CaptionRecord(id=str(line_no), image_ref=image_ref, caption=caption)


def _parse_jsonl_row(line: str, line_no: int) -> CaptionRecord | None:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    caption = obj.get("caption")
    image_ref = obj.get("image_ref")
    if not isinstance(caption, str) or not isinstance(image_ref, str):
        return None
    caption = normalize_caption(caption)
    image_ref = image_ref.strip()
    if not caption or not image_ref:
        return None
    rec_id = obj.get("id", line_no)
    if not isinstance(rec_id, (str, int)):
        return None
    return CaptionRecord(id=str(rec_id), image_ref=image_ref, caption=caption)


def read_pairs(
    source: IO[bytes] | IO[str] | Iterable[bytes | str],
    format: str = "tsv",
    stats: IngestStats | None = None,
) -> Iterator[CaptionRecord]:
    """Stream caption records from a TSV or JSONL pair file.

    Records are yielded in file order. Missing ids are auto-assigned as
    zero-based line numbers. Malformed rows (bad syntax, empty fields,
    duplicate ids, undecodable bytes) are skipped and counted in ``stats``;
    if more than half of all rows are malformed a :class:`FormatError` is
    raised once the stream is exhausted.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown pair format: {format!r}")
    parse = _parse_tsv_row if format == "tsv" else _parse_jsonl_row
    if stats is None:
        stats = IngestStats()

    seen_ids: set[str] = set()
    total = 0
    for line_no, raw in enumerate(source):
        total += 1
        line = _decode_line(raw)
        record = None
        if line is not None:
            line = line.rstrip("\r\n")
            if line.strip():
                record = parse(line, line_no)
        if record is None or record.id in seen_ids:
            stats.malformed += 1
            stats.malformed_lines.append(line_no)
            continue
        seen_ids.add(record.id)
        stats.records += 1
        yield record

    if total and stats.malformed * 2 > total:
        raise FormatError(
            f"{stats.malformed} of {total} rows malformed (threshold {MALFORMED_FATAL_FRACTION:.0%})"
        )


def _generated_to_obj(gen: GeneratedText) -> dict:
    if gen.method == METHOD_LLM_PROMPT:
        return {"text": gen.text, "method": gen.method}
    return {
        "text": gen.text,
        "method": gen.method,
        "svlc_type": gen.svlc_type,
        "replaced_word": gen.replaced_word,
        "replacement_word": gen.replacement_word,
        "token_index": gen.token_index,
    }


def record_to_json(record: AugmentedRecord) -> str:
    """Serialize one augmented record to its canonical JSON line (no newline)."""
    obj = {
        "id": record.source.id,
        "caption": record.source.caption,
        "image_ref": record.source.image_ref,
        "negatives": [_generated_to_obj(n) for n in record.negatives],
        "positives": [_generated_to_obj(p) for p in record.positives],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_augmented(records: Iterable[AugmentedRecord], sink: IO[bytes]) -> int:
    """Write records as JSONL bytes, one object per line; returns count written.

    Key order is fixed, so identical record streams produce byte-identical
    output.
    """
    count = 0
    for record in records:
        sink.write(record_to_json(record).encode("utf-8"))
        sink.write(b"\n")
        count += 1
    return count


def _generated_from_obj(obj: dict) -> GeneratedText:
    return GeneratedText(
        text=obj["text"],
        method=obj["method"],
        svlc_type=obj.get("svlc_type"),
        replaced_word=obj.get("replaced_word"),
        replacement_word=obj.get("replacement_word"),
        token_index=obj.get("token_index"),
    )


def read_augmented(source: IO[bytes] | IO[str] | Iterable[bytes | str]) -> Iterator[AugmentedRecord]:
    """Parse augmented JSONL back into records (inverse of :func:`write_augmented`)."""
    for raw in source:
        line = _decode_line(raw)
        if line is None:
            raise FormatError("augmented stream is not valid UTF-8")
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        yield AugmentedRecord(
            source=CaptionRecord(
                id=obj["id"], image_ref=obj["image_ref"], caption=obj["caption"]
            ),
            negatives=tuple(_generated_from_obj(n) for n in obj["negatives"]),
            positives=tuple(_generated_from_obj(p) for p in obj["positives"]),
        )
