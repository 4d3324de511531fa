"""Word-list and rule-based negative generator tests."""

import io
import random

import pytest

from svlckit.corpus import CaptionRecord
from svlckit.lexicon import (
    MATCH_RANDOM,
    SVLC_TYPES,
    SvlcLexicon,
    builtin_lexicons,
    load_lexicon,
    rb_negative,
)
from svlckit.parser import tokenize

# The canonical 34-word color vocabulary; pinned, see data/lexicons/color.txt.
COLOR_WORDS = {
    "teal", "brown", "green", "black", "silver", "white", "yellow", "purple",
    "gray", "blue", "orange", "red", "blond", "concrete", "cream", "beige",
    "tan", "pink", "maroon", "olive", "violet", "charcoal", "bronze", "gold",
    "navy", "coral", "burgundy", "mauve", "peach", "rust", "cyan", "clay",
    "ruby", "amber",
}


def record(caption: str) -> CaptionRecord:
    return CaptionRecord(id="t", image_ref="x", caption=caption)


def color_lexicon() -> SvlcLexicon:
    return builtin_lexicons()[0]


class TestBuiltinLexicons:
    def test_five_lexicons_in_order(self):
        lexicons = builtin_lexicons()
        assert [lex.svlc_type for lex in lexicons] == list(SVLC_TYPES)

    def test_color_list_exact(self):
        color = color_lexicon()
        assert set(color.words) == COLOR_WORDS
        assert len(color.words) == 34

    def test_every_lexicon_has_at_least_two_words(self):
        for lex in builtin_lexicons():
            assert len(lex.words) >= 2

    def test_words_lowercase_unique_single_token(self):
        for lex in builtin_lexicons():
            assert len(set(lex.words)) == len(lex.words)
            for word in lex.words:
                assert word == word.lower()
                assert " " not in word


class TestLexiconValidation:
    def test_rejects_single_word(self):
        with pytest.raises(ValueError, match="at least 2"):
            SvlcLexicon(svlc_type="color", words=("blue",))

    def test_rejects_uppercase_and_duplicates(self):
        with pytest.raises(ValueError):
            SvlcLexicon(svlc_type="color", words=("Blue", "red"))
        with pytest.raises(ValueError, match="duplicate"):
            SvlcLexicon(svlc_type="color", words=("blue", "blue"))

    def test_load_from_file_with_comments(self):
        body = io.StringIO("# a comment\nblue\nRED  # trailing comment\n\nblue\n")
        lex = load_lexicon(body, "color")
        assert lex.words == ("blue", "red")


class TestRbNegative:
    def test_worked_color_example(self):
        # "A blue car on the road" with the color list: blue swapped for
        # another color word, everything else untouched.
        out = rb_negative(record("A blue car on the road"), color_lexicon(), random.Random(3))
        assert out is not None
        assert out.method == "rb"
        assert out.svlc_type == "color"
        assert out.replaced_word == "blue"
        assert out.replacement_word.lower() in COLOR_WORDS
        assert out.replacement_word.lower() != "blue"
        assert out.token_index == 1
        assert out.text.split()[0] == "A"
        assert out.text.split()[2:] == ["car", "on", "the", "road"]

    def test_no_match_returns_none(self):
        assert rb_negative(record("two kids in the park"), color_lexicon(), random.Random(0)) is None

    def test_first_of_repeated_matches_replaced(self):
        # Exhaustive over the 3 tokens: only position 0 may change.
        for seed in range(20):
            out = rb_negative(record("red red ball"), color_lexicon(), random.Random(seed))
            tokens = out.text.split()
            assert tokens[1:] == ["red", "ball"]
            assert tokens[0] != "red"
            assert out.token_index == 0

    def test_exactly_one_token_differs(self):
        captions = [
            "A blue car on the road",
            "the old brown dog sleeps",
            "a teal and navy flag",
        ]
        for caption in captions:
            for seed in range(10):
                out = rb_negative(record(caption), color_lexicon(), random.Random(seed))
                before = tokenize(caption)
                after = tokenize(out.text)
                assert len(before) == len(after)
                diffs = [i for i, (a, b) in enumerate(zip(before, after)) if a != b]
                assert diffs == [out.token_index]
                assert after[out.token_index].lower() in COLOR_WORDS
                assert after[out.token_index].lower() != before[out.token_index].lower()

    def test_whole_word_matching_only(self):
        # "blond" must not match inside "blonde".
        assert rb_negative(record("a blonde woman"), color_lexicon(), random.Random(0)) is None

    def test_attached_punctuation_preserved(self):
        out = rb_negative(record("a boat, blue."), color_lexicon(), random.Random(1))
        assert out.text.startswith("a boat, ")
        assert out.text.endswith(".")
        assert out.replaced_word == "blue"

    def test_capitalization_patterns(self):
        upper = rb_negative(record("a BLUE car"), color_lexicon(), random.Random(0))
        assert upper.replacement_word.isupper()
        title = rb_negative(record("Blue car ahead"), color_lexicon(), random.Random(0))
        assert title.replacement_word[0].isupper()
        assert title.replacement_word[1:].islower()

    def test_uniform_support_over_seeds(self):
        # Every non-original color word is eventually chosen.
        seen = set()
        for seed in range(2000):
            out = rb_negative(record("a blue car"), color_lexicon(), random.Random(seed))
            seen.add(out.replacement_word)
        assert seen == COLOR_WORDS - {"blue"}

    def test_pure_function_of_inputs(self):
        rec = record("a blue car")
        a = rb_negative(rec, color_lexicon(), random.Random(99))
        b = rb_negative(rec, color_lexicon(), random.Random(99))
        assert a == b

    def test_random_match_mode_covers_all_sites(self):
        rec = record("red car and blue van")
        sites = set()
        for seed in range(200):
            out = rb_negative(rec, color_lexicon(), random.Random(seed), match_mode=MATCH_RANDOM)
            sites.add(out.token_index)
        assert sites == {0, 3}

    def test_unknown_match_mode_rejected(self):
        with pytest.raises(ValueError, match="match mode"):
            rb_negative(record("a blue car"), color_lexicon(), random.Random(0), match_mode="best")

    def test_nonbuiltin_lexicon(self):
        lex = SvlcLexicon(svlc_type="state", words=("open", "closed"))
        out = rb_negative(record("an open door"), lex, random.Random(0))
        assert out.text == "an closed door"
        assert out.svlc_type == "state"
