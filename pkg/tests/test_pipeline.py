"""Record augmentation orchestration: determinism, ordering, failures."""

import io

import pytest

from svlckit.corpus import CaptionRecord, write_augmented
from svlckit.errors import ServiceError
from svlckit.lexicon import builtin_lexicons
from svlckit.pipeline import (
    AugmentOptions,
    AugmentSummary,
    augment_record,
    augment_stream,
    record_rng,
)
from svlckit.stubs import StubCompletionClient, StubFillMaskClient


def records(count=6):
    captions = [
        "A blue car on the road",
        "two kids in the park",
        "a wooden table by the window",
        "an old man reading a book",
        "a red and white boat",
        "children playing with a ball",
    ]
    return [
        CaptionRecord(id=str(i), image_ref=f"http://x/{i}.jpg", caption=captions[i % len(captions)])
        for i in range(count)
    ]


def options(**kwargs):
    defaults = dict(methods=("rb",), lexicons=tuple(builtin_lexicons()), seed=0)
    defaults.update(kwargs)
    return AugmentOptions(**defaults)


class TestRecordRng:
    def test_stable_across_calls(self):
        assert record_rng(1, "a").random() == record_rng(1, "a").random()

    def test_distinct_per_record_and_seed(self):
        assert record_rng(1, "a").random() != record_rng(1, "b").random()
        assert record_rng(1, "a").random() != record_rng(2, "a").random()


class TestAugmentRecord:
    def test_rb_collects_per_lexicon(self):
        augmented, failures = augment_record(records()[0], options())
        assert failures == 0
        # "A blue car on the road": only the color lexicon matches.
        assert [n.svlc_type for n in augmented.negatives] == ["color"]

    def test_max_negatives_caps(self):
        record = CaptionRecord(id="0", image_ref="x", caption="a big blue wooden boat")
        augmented, _ = augment_record(record, options(max_negatives=2))
        assert len(augmented.negatives) == 2

    def test_llm_methods_use_clients(self):
        record = records()[0]
        opts = options(methods=("rb", "llm-neg", "llm-pos"))
        augmented, failures = augment_record(
            record, opts,
            fill_mask=StubFillMaskClient(),
            completion=StubCompletionClient(),
        )
        assert failures == 0
        methods = {n.method for n in augmented.negatives}
        assert "rb" in methods and "llm-unmask" in methods
        assert len(augmented.positives) == 1
        assert augmented.positives[0].method == "llm-prompt"

    def test_service_failure_counted_not_fatal(self):
        class Broken:
            def unmask(self, masked_text, top_k):
                raise ServiceError("down")

            def complete(self, prompt, max_tokens):
                raise ServiceError("down")

        augmented, failures = augment_record(
            records()[0],
            options(methods=("llm-neg", "llm-pos"), lexicons=()),
            fill_mask=Broken(),
            completion=Broken(),
        )
        assert failures == 2
        assert augmented.negatives == () and augmented.positives == ()

    def test_missing_client_is_programming_error(self):
        with pytest.raises(ValueError, match="client"):
            augment_record(records()[0], options(methods=("llm-neg",), lexicons=()))


class TestAugmentStream:
    def run(self, workers):
        summary = AugmentSummary()
        out = list(
            augment_stream(
                records(), options(methods=("rb", "llm-neg", "llm-pos"), workers=workers),
                summary,
                fill_mask=StubFillMaskClient(),
                completion=StubCompletionClient(),
            )
        )
        return out, summary

    def serialize(self, augmented):
        sink = io.BytesIO()
        write_augmented(augmented, sink)
        return sink.getvalue()

    def test_order_preserved(self):
        out, _ = self.run(workers=4)
        assert [a.source.id for a in out] == [r.id for r in records()]

    def test_identical_bytes_across_worker_counts(self):
        byte_outputs = {workers: self.serialize(self.run(workers)[0]) for workers in (1, 4, 8)}
        assert byte_outputs[1] == byte_outputs[4] == byte_outputs[8]

    def test_summary_counts(self):
        out, summary = self.run(workers=2)
        assert summary.records == len(out) == 6
        assert summary.llm_failures == 0
        total_negatives = sum(len(a.negatives) for a in out)
        assert sum(summary.negatives_by_method.values()) == total_negatives
        assert summary.positives == sum(len(a.positives) for a in out)


class TestOptionsValidation:
    def test_empty_methods_rejected(self):
        with pytest.raises(ValueError, match="method"):
            AugmentOptions(methods=())

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown method"):
            AugmentOptions(methods=("rb", "backtranslate"), lexicons=tuple(builtin_lexicons()))

    def test_rb_without_lexicons_rejected(self):
        with pytest.raises(ValueError, match="lexicon"):
            AugmentOptions(methods=("rb",))
