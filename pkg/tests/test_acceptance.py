"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one
``ACCEPTANCE <name>: PASS/FAIL`` line per criterion.
"""

import hashlib
import json
import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest
from click.testing import CliRunner

import oracles
from svlckit import lora
from svlckit.cli import main as cli_main
from svlckit.corpus import CaptionRecord
from svlckit.evalkit import ChecklistItem, evaluate
from svlckit.lexicon import builtin_lexicons, rb_negative
from svlckit.losses import (
    EmbeddingBatch,
    LossConfig,
    analogy_image_loss,
    analogy_text_loss,
    contrastive_loss,
    negatives_loss,
    total_loss,
)
from svlckit.parser import BuiltinTagger, tokenize
from svlckit.stubs import StubFillMaskClient, StubServiceServer
from svlckit.unmask import llm_negative


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS")


def synthetic_corpus(count=1000, seed=99):
    """Captions mixing lexicon and non-lexicon vocabulary, seeded."""
    rng = random.Random(seed)
    lexicons = builtin_lexicons()
    determiners = ["a", "the", "one"]
    plain_attrs = ["nice", "strange", "plain", "ordinary", "simple"]
    nouns = ["dog", "cat", "boat", "car", "table", "house", "bird", "chair", "hat", "lamp"]
    tails = ["by the window", "on the road", "near the river", "in the yard", ""]
    captions = []
    for i in range(count):
        det = rng.choice(determiners)
        if i % 2 == 0:
            lex = lexicons[i % len(lexicons)]
            attr = rng.choice(lex.words)
        else:
            attr = rng.choice(plain_attrs)
        noun = rng.choice(nouns)
        tail = rng.choice(tails)
        caption = f"{det} {attr} {noun} {tail}".strip()
        captions.append(caption)
    return captions


def test_rb_negative_property_suite():
    """Every negative is a one-token lexicon swap; no match means none."""
    with criterion("rb-negative-properties"):
        start = time.monotonic()
        captions = synthetic_corpus()
        assert len(captions) == 1000
        lexicons = builtin_lexicons()
        produced = 0
        for index, caption in enumerate(captions):
            record = CaptionRecord(id=str(index), image_ref="x", caption=caption)
            tokens = tokenize(caption)
            for lexicon in lexicons:
                rng = random.Random(index * 31 + hash(lexicon.svlc_type) % 1000)
                out = rb_negative(record, lexicon, rng)
                matches = [t for t in tokens if t.lower() in lexicon.word_set]
                if not matches:
                    assert out is None
                    continue
                assert out is not None
                produced += 1
                after = tokenize(out.text)
                assert len(after) == len(tokens)
                diffs = [i for i, (a, b) in enumerate(zip(tokens, after)) if a != b]
                assert diffs == [out.token_index]
                replacement = after[out.token_index]
                assert replacement.lower() in lexicon.word_set
                assert replacement.lower() != tokens[out.token_index].lower()
        assert produced >= 400  # half the corpus carries a lexicon word
        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"runtime {elapsed:.2f}s exceeds 5s budget"


def test_worked_examples_reproduce():
    """The documented color-swap and verb-masking examples hold exactly."""
    with criterion("worked-examples"):
        color = builtin_lexicons()[0]
        color_words = set(color.words)
        assert len(color_words) == 34
        record = CaptionRecord(id="0", image_ref="x", caption="A blue car on the road")
        for seed in range(25):
            out = rb_negative(record, color, random.Random(seed))
            assert out is not None and out.svlc_type == "color"
            assert out.replacement_word.lower() in color_words
            assert out.replacement_word.lower() != "blue"

        masked_exact = "Two kids <mask> in the park"
        candidates = ["sitting", "playing", "eating", "drawing", "running"]
        park = CaptionRecord(id="1", image_ref="x", caption="Two kids playing in the park")

        # Seed 0 picks the verb: the wire query must match byte for byte.
        client = StubFillMaskClient(canned={masked_exact: candidates})
        out = llm_negative(park, BuiltinTagger(), client, random.Random(0))
        assert client.queries == [(masked_exact, 10)]
        assert out.text in {f"Two kids {w} in the park" for w in candidates if w != "playing"}

        # Across seeds, the original word is never substituted back.
        saw_verb_mask = 0
        for seed in range(80):
            client = StubFillMaskClient(canned={masked_exact: candidates})
            out = llm_negative(park, BuiltinTagger(), client, random.Random(seed))
            (query, top_k), = client.queries
            assert query.count("<mask>") == 1
            if query == masked_exact:
                saw_verb_mask += 1
                assert out is not None
                assert out.replacement_word != "playing"
                assert out.text != park.caption
        assert saw_verb_mask > 0


def test_loss_oracle_equivalence():
    """All four losses match the brute-force double loops to 1e-12 relative."""
    with criterion("loss-oracle-equivalence"):
        rng = np.random.default_rng(2024)
        checked = 0
        for trial in range(50):
            n = int(rng.integers(1, 9))
            d = int(rng.integers(2, 17))
            tau = float(rng.uniform(0.2, 3.0))
            text = rng.standard_normal((n, d))
            image = rng.standard_normal((n, d))
            neg = rng.standard_normal((n, d))
            pos = rng.standard_normal((n, d))
            has_neg = rng.random(n) < 0.8
            has_pos = rng.random(n) < 0.8
            has_neg[int(rng.integers(n))] = True
            has_pos[int(rng.integers(n))] = True
            batch = EmbeddingBatch(text, image, neg, pos, has_neg, has_pos)
            cfg = LossConfig(tau=tau)

            pairs = [
                (contrastive_loss(batch, cfg).value,
                 oracles.brute_contrastive(text.tolist(), image.tolist(), tau)),
                (negatives_loss(batch, cfg).value,
                 oracles.brute_negatives(text.tolist(), image.tolist(), neg.tolist(),
                                         has_neg.tolist(), tau)),
                (analogy_text_loss(batch, cfg).value,
                 oracles.brute_analogy(pos.tolist(), text.tolist(), has_pos.tolist(), tau)),
                (analogy_image_loss(batch, cfg).value,
                 oracles.brute_analogy(pos.tolist(), image.tolist(), has_pos.tolist(), tau)),
            ]
            for got, want in pairs:
                assert got == pytest.approx(want, rel=1e-12), (trial, got, want)
                checked += 1
        assert checked == 200


def test_gradient_check():
    """Analytic gradients match h=1e-6 central differences to 1e-5 relative.

    atol floors the comparison at the finite-difference roundoff scale
    (about 1e-10 for these loss magnitudes), which only matters for
    entries whose true gradient is itself near zero, including the masked
    rows that are exactly zero on both sides.
    """
    with criterion("gradient-check"):
        start = time.monotonic()
        rng = np.random.default_rng(555)
        h = 1e-6
        for trial in range(20):
            n = int(rng.integers(2, 7))
            d = int(rng.integers(2, 8))
            partial = trial % 2 == 0
            arrays = [rng.standard_normal((n, d)) for _ in range(4)]
            if partial:
                has_neg = rng.random(n) < 0.6
                has_pos = rng.random(n) < 0.6
            else:
                has_neg = np.ones(n, dtype=bool)
                has_pos = np.ones(n, dtype=bool)
            cfg = LossConfig(
                tau=float(rng.uniform(0.5, 2.5)),
                alpha=float(rng.uniform(0.0, 1.5)),
                beta=float(rng.uniform(0.0, 1.5)),
            )

            def build(arrs):
                return EmbeddingBatch(arrs[0], arrs[1], arrs[2], arrs[3], has_neg, has_pos)

            out = total_loss(build(arrays), cfg)
            analytic = [
                out.gradients.text_emb,
                out.gradients.image_emb,
                out.gradients.neg_text_emb,
                out.gradients.pos_text_emb,
            ]
            for target in range(4):
                fd = np.zeros((n, d))
                for idx in np.ndindex(n, d):
                    pert = [a.copy() for a in arrays]
                    pert[target][idx] += h
                    up = total_loss(build(pert), cfg).total
                    pert[target][idx] -= 2 * h
                    down = total_loss(build(pert), cfg).total
                    fd[idx] = (up - down) / (2 * h)
                np.testing.assert_allclose(analytic[target], fd, rtol=1e-5, atol=1e-8)
        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"runtime {elapsed:.2f}s exceeds 30s budget"


def test_analytic_anchor_values():
    """ln 2 at equal odds; zero losses for the n=1 perfect-match batch;
    alpha = beta = 0 reduces the total to the contrastive part exactly."""
    with criterion("analytic-anchors"):
        equal = EmbeddingBatch(
            text_emb=[[2.0, 0.0]], image_emb=[[1.0, 0.0]], neg_text_emb=[[4.0, 0.0]]
        )
        value = negatives_loss(equal, LossConfig(tau=7.3)).value
        assert abs(value - math.log(2.0)) <= 1e-12

        vec = [[0.6, 0.8]]
        perfect = EmbeddingBatch(text_emb=vec, image_emb=vec, pos_text_emb=vec)
        cfg = LossConfig(tau=25.0)
        out = total_loss(perfect, cfg)
        assert out.parts["contrastive"] == 0.0
        assert out.parts["negatives"] == 0.0
        assert out.parts["analogy_text"] == 0.0
        assert out.parts["analogy_image"] == 0.0
        assert out.total == 0.0

        rng = np.random.default_rng(77)
        batch = EmbeddingBatch(
            rng.standard_normal((6, 8)), rng.standard_normal((6, 8)),
            rng.standard_normal((6, 8)), rng.standard_normal((6, 8)),
        )
        cfg0 = LossConfig(tau=1.9, alpha=0.0, beta=0.0)
        out0 = total_loss(batch, cfg0)
        assert out0.total == contrastive_loss(batch, cfg0).value
        assert out0.total == out0.parts["contrastive"]


def test_lora_fold_equivalence():
    """Residual and folded application agree to 1e-10 absolute; fresh
    adapters are neutral; the 512/rank-4 parameter count is exactly 4096."""
    with criterion("lora-fold-equivalence"):
        rng = np.random.default_rng(4096)
        for kind in ("linear", "embedding"):
            for _ in range(100):
                m = int(rng.integers(1, 10))
                l = int(rng.integers(1, 10))
                r = int(rng.integers(1, min(m, l) + 1))
                base = lora.BaseWeight(name="w", kind=kind, W=rng.standard_normal((m, l)))
                adapter = lora.LoraAdapter(
                    name="w", A=rng.standard_normal((m, r)), B=rng.standard_normal((r, l))
                )
                folded = lora.fold(base, adapter)
                if kind == "linear":
                    x = rng.standard_normal(l)
                    residual = lora.apply_linear(base, adapter, x)
                    merged = lora.apply_linear(folded, None, x)
                else:
                    ids = rng.integers(0, l, size=3).tolist()
                    residual = lora.apply_embedding(base, adapter, ids)
                    merged = lora.apply_embedding(folded, None, ids)
                np.testing.assert_allclose(residual, merged, rtol=0, atol=1e-10)

        base = lora.BaseWeight(name="w", kind="linear", W=rng.standard_normal((7, 9)))
        fresh = lora.init_adapter(base, rank=3, rng=rng)
        x = rng.standard_normal(9)
        np.testing.assert_array_equal(
            lora.apply_linear(base, fresh, x), lora.apply_linear(base, None, x)
        )

        big = lora.BaseWeight(name="w", kind="linear", W=np.zeros((512, 512)))
        adapter = lora.init_adapter(big, rank=4, rng=rng)
        assert adapter.param_count == 512 * 4 + 4 * 512 == 4096


def test_eval_harness_oracle():
    """Accuracy equals the hand-counted fraction and is invariant to the
    temperature and to embedding rescaling."""
    with criterion("eval-harness-oracle"):

        class Backend:
            def __init__(self, scale_text=1.0, scale_image=1.0):
                self.scale_text = scale_text
                self.scale_image = scale_image

            def embed_text(self, texts):
                out = []
                for t in texts:
                    kind, i = t.split(":")
                    wins = int(i) < 7
                    if (kind == "p") == wins:
                        out.append([1.0, 0.0])
                    else:
                        out.append([0.0, 1.0])
                return np.asarray(out) * self.scale_text

            def embed_image(self, refs):
                return np.asarray([[1.0, 0.0]] * len(refs)) * self.scale_image

        items = [
            ChecklistItem(
                image_ref=f"img:{i}", positive=f"p:{i}", negative=f"n:{i}",
                svlc_type="attr-color" if i % 2 == 0 else "relation-spatial",
            )
            for i in range(10)
        ]
        accuracies = set()
        for tau in (0.1, 1.0, 100.0):
            for scales in ((1.0, 1.0), (340.0, 0.002)):
                report = evaluate(items, Backend(*scales), tau=tau)
                assert report.total == 10
                accuracies.add(report.overall)
        assert accuracies == {0.7}


def test_augment_determinism():
    """Byte-identical JSONL across repeated runs and worker counts 1 and 8."""
    with criterion("augment-determinism"), StubServiceServer() as server:
        runner = CliRunner()
        with runner.isolated_filesystem():
            rows = [
                "A blue car on the road\thttp://x/0.jpg",
                "two kids playing in the park\thttp://x/1.jpg",
                "a wooden table by the window\thttp://x/2.jpg",
                "an empty street at night\thttp://x/3.jpg",
                "a small dog eating\thttp://x/4.jpg",
            ]
            with open("pairs.tsv", "w", encoding="utf-8") as fh:
                fh.write("".join(r + "\n" for r in rows))
            digests = []
            for run, workers in enumerate(("1", "1", "8")):
                out = f"out{run}.jsonl"
                result = runner.invoke(
                    cli_main,
                    [
                        "augment", "--input", "pairs.tsv", "--output", out,
                        "--methods", "rb,llm-neg,llm-pos", "--seed", "1234",
                        "--workers", workers,
                        "--unmask-endpoint", server.url,
                        "--complete-endpoint", server.url,
                    ],
                )
                assert result.exit_code == 0, result.output
                with open(out, "rb") as fh:
                    content = fh.read()
                assert content, "augment produced no output"
                digests.append(hashlib.sha256(content).hexdigest())
            assert digests[0] == digests[1] == digests[2]
