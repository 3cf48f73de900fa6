"""Normalization, exact match, and answer containment."""

import string

import pytest
from hypothesis import given, strategies as st

from selectqa import Question, contains_answer, exact_match, normalize_answer
from selectqa.errors import ValidationError

from _fixtures import oracle_contains, oracle_normalize

ascii_text = st.text(alphabet=string.printable, max_size=60)
words = st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=8)


class TestNormalizeAnswer:
    def test_strips_article_and_punctuation(self):
        assert normalize_answer("The Eiffel Tower!") == "eiffel tower"

    def test_empty_input(self):
        assert normalize_answer("") == ""

    def test_collapses_whitespace_and_articles(self):
        assert normalize_answer("An  apple,  a day") == "apple day"

    def test_non_ascii_passes_through_lowercased(self):
        assert normalize_answer("Café Ångström") == "café ångström"

    @given(st.text(max_size=100))
    def test_idempotent(self, text):
        once = normalize_answer(text)
        assert normalize_answer(once) == once

    @given(ascii_text)
    def test_matches_independent_oracle_on_ascii(self, text):
        assert normalize_answer(text) == oracle_normalize(text)


class TestExactMatch:
    def test_identical_after_case_fold(self):
        assert exact_match("Eric Liddell", ["eric liddell"]) is True

    def test_different_name_is_no_match(self):
        assert exact_match("Hugh Hudson", ["Eric Liddell"]) is False

    def test_article_and_punctuation_insensitive(self):
        assert exact_match("the paris", ["Paris!"]) is True

    def test_empty_golds_rejected(self):
        with pytest.raises(ValidationError):
            exact_match("anything", [])

    @given(st.lists(words, min_size=1, max_size=5), st.data())
    def test_invariant_under_gold_permutation(self, golds, data):
        prediction = data.draw(st.sampled_from(golds) | words)
        shuffled = data.draw(st.permutations(golds))
        assert exact_match(prediction, golds) == exact_match(prediction, list(shuffled))

    @given(ascii_text, st.lists(words, min_size=1, max_size=4))
    def test_invariant_under_normalization_preserving_edits(self, prediction, golds):
        edited = "The " + prediction.upper() + "!!"
        assert exact_match(prediction, golds) == exact_match(edited, golds)


class TestContainsAnswer:
    def test_exact_substring(self):
        assert contains_answer(["Eric Liddell won the 400m in 1924"], ["Eric Liddell"]) is True

    def test_absent(self):
        assert contains_answer(["Hugh Hudson directed the film"], ["Eric Liddell"]) is False

    def test_match_across_passage_boundary(self):
        # The space-join makes the span contiguous; confirmed by the
        # independent brute-force scan.
        passages = ["...first half Eric", "Liddell second half..."]
        assert oracle_contains(passages, ["Eric Liddell"]) is True
        assert contains_answer(passages, ["Eric Liddell"]) is True

    def test_per_passage_mode_misses_boundary_spans(self):
        passages = ["...first half Eric", "Liddell second half..."]
        assert contains_answer(passages, ["Eric Liddell"], joint=False) is False
        assert contains_answer(["holds Eric Liddell whole"], ["Eric Liddell"], joint=False) is True

    def test_empty_golds_rejected(self):
        with pytest.raises(ValidationError):
            contains_answer(["text"], [])

    def test_gold_normalizing_to_empty_is_skipped(self):
        assert contains_answer(["some text"], ["the", "!!"]) is False

    @given(
        st.lists(st.lists(words, min_size=1, max_size=6).map(" ".join), min_size=1, max_size=4),
        st.lists(words, min_size=1, max_size=3),
    )
    def test_matches_independent_oracle(self, passages, golds):
        assert contains_answer(passages, golds) == oracle_contains(passages, golds)

    @given(
        st.lists(st.lists(words, min_size=1, max_size=6).map(" ".join), min_size=1, max_size=4),
        st.lists(words, min_size=1, max_size=3),
        st.lists(words, min_size=1, max_size=6).map(" ".join),
    )
    def test_monotone_in_passages(self, passages, golds, extra):
        before = contains_answer(passages, golds)
        after = contains_answer(passages + [extra], golds)
        assert not (before and not after)


class TestQuestion:
    def test_valid(self):
        q = Question("q1", "who?", ["Paris", "the paris"], question_overlap=True)
        assert q.gold_answers == ["Paris", "the paris"]

    def test_empty_gold_list_rejected(self):
        with pytest.raises(ValidationError):
            Question("q1", "who?", [])

    def test_gold_empty_after_normalization_rejected(self):
        with pytest.raises(ValidationError):
            Question("q1", "who?", ["the !!"])
